//! Dense rectifier networks with hand-written reverse mode and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Activation applied to the final affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `fan_in × fan_out`, applied as `input · w + b`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Multilayer perceptron: ReLU after every layer but the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Values recorded by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input to each layer; entry 0 is the network input.
    inputs: Vec<Array2<f64>>,
}

/// Gradients with the same shapes as an [`Mlp`]'s layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-uniform weights for hidden layers, Glorot-uniform for the output
    /// layer, zero biases. `sizes` lists input, hidden and output widths.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if i == last {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in.max(1) as f64).sqrt()
                };
                Dense {
                    w: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..bound)),
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers, output }
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                w: Array2::zeros((w[0], w[1])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Mlp { layers, output }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.ncols())
    }

    /// Final-layer pre-activations for a batch (rows are samples).
    pub fn logits(&self, input: ArrayView2<f64>) -> Array2<f64> {
        self.forward(input).0
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = h.dot(&layer.w);
            a += &layer.b;
            inputs.push(h);
            if i + 1 < self.layers.len() {
                a.mapv_inplace(|v| v.max(0.0));
            }
            h = a;
        }
        (h, MlpCache { inputs })
    }

    /// Output activation applied to `logits`.
    pub fn activate(&self, logits: &Array2<f64>) -> Array2<f64> {
        match self.output {
            OutputActivation::Sigmoid => logits.mapv(sigmoid),
            OutputActivation::Softmax => softmax_rows(logits),
        }
    }

    /// Backpropagates `grad_logits` (∂loss/∂final pre-activation); returns
    /// parameter gradients and ∂loss/∂input.
    pub fn backward(&self, cache: &MlpCache, grad_logits: Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut g = grad_logits;
        for i in (0..n).rev() {
            let input = &cache.inputs[i];
            gw.push(input.t().dot(&g));
            gb.push(g.sum_axis(Axis(0)));
            let mut gi = g.dot(&self.layers[i].w.t());
            if i > 0 {
                // input[i] is the ReLU output of layer i-1: zero where inactive
                Zip::from(&mut gi).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            g = gi;
        }
        gw.reverse();
        gb.reverse();
        (MlpGrads { w: gw, b: gb }, g)
    }

    /// Signs of every hidden pre-activation, for detecting when a
    /// perturbation crosses a ReLU kink.
    pub fn relu_pattern(&self, input: ArrayView2<f64>) -> Vec<bool> {
        let (_, cache) = self.forward(input);
        cache.inputs[1..]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    /// Inverse of [`Mlp::params`]. Panics on a length mismatch.
    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter count mismatch");
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

impl MlpGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn scale(&mut self, k: f64) {
        self.w.iter_mut().for_each(|w| *w *= k);
        self.b.iter_mut().for_each(|b| *b *= k);
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Adam with the usual defaults.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: MlpGrads,
    v: MlpGrads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros = MlpGrads {
            w: net.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            b: net.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        };
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Descent step along `grads`; pass negated gradients to ascend.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let lr_t = self.lr * (1.0 - b2.powi(self.t)).sqrt() / (1.0 - b1.powi(self.t));
        for (i, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.w)
                .and(&mut self.m.w[i])
                .and(&mut self.v.w[i])
                .and(&grads.w[i])
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, b1, b2, lr_t, eps));
            Zip::from(&mut layer.b)
                .and(&mut self.m.b[i])
                .and(&mut self.v.b[i])
                .and(&grads.b[i])
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, b1, b2, lr_t, eps));
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn adam_update(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, b1: f64, b2: f64, lr_t: f64, eps: f64) {
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    *p -= lr_t * *m / (v.sqrt() + eps);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = softmax_rows(&array![[1000.0, 0.0, -5.0], [0.1, 0.2, 0.3]]);
        for row in z.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((z[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 5, 2], OutputActivation::Softmax, &mut rng);
        let mut other = Mlp::zeros(&[3, 5, 2], OutputActivation::Softmax);
        other.set_params(&net.params());
        assert_eq!(net, other);
        assert_eq!(net.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 6, 6, 2], OutputActivation::Sigmoid, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));
        let loss = |n: &Mlp, x: &Array2<f64>| (n.logits(x.view()) * &weights).sum();
        let (_, cache) = net.forward(x.view());
        let (grads, gx) = net.backward(&cache, weights.clone());
        let analytic = grads.flatten();
        let base = net.params();
        let h = 1e-6;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += h;
            let mut up = net.clone();
            up.set_params(&p);
            p[k] -= 2.0 * h;
            let mut down = net.clone();
            down.set_params(&p);
            let fd = (loss(&up, &x) - loss(&down, &x)) / (2.0 * h);
            assert!((fd - analytic[k]).abs() < 1e-6, "param {k}: {fd} vs {}", analytic[k]);
        }
        for i in 0..4 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                assert!((fd - gx[[i, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[2, 1], OutputActivation::Sigmoid, &mut rng);
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let target = array![[2.0], [-3.0]];
        let mut opt = Adam::new(&net, 0.05);
        for _ in 0..2000 {
            let (out, cache) = net.forward(x.view());
            let (g, _) = net.backward(&cache, 2.0 * (out - &target));
            opt.step(&mut net, &g);
        }
        let out = net.logits(x.view());
        assert!((out[[0, 0]] - 2.0).abs() < 1e-3);
        assert!((out[[1, 0]] + 3.0).abs() < 1e-3);
    }
}
