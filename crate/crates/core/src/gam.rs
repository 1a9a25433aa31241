//! Generative adversarial masking: a conditional mask generator trained by
//! gradient descent against a softmax attacker trained by ascent.

use std::io::{Read, Write};

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CmgError, Result};
use crate::eval::{report, Draws, ScoredDraws};
use crate::game::{AttrValue, GameSpec, PriorSampler};
use crate::nn::{softmax_rows, Adam, Mlp, MlpGrads, OutputActivation};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Samples drawn per outer iteration.
    pub batch: usize,
    pub iters: usize,
    pub inner_steps: usize,
    pub lr_defender: f64,
    pub lr_attacker: f64,
    /// Masks are thresholded on every `snap_every`-th outer iteration.
    pub snap_every: usize,
    pub seed: u64,
    /// Hidden widths; `None` means two layers of `max(64, 4·m·n)`.
    pub hidden: Option<Vec<usize>>,
    /// Attacker ascent always sees thresholded masks, as at evaluation.
    pub attacker_sees_snapped: bool,
    /// Weight of the mean softmax entropy added to the attacker's ascent
    /// objective; 0 trains a plain best-responding attacker.
    pub attacker_entropy: f64,
    /// Attacker ascent steps against the initial generator before the
    /// alternating loop starts.
    pub attacker_warmup: usize,
    /// Held-out samples used to keep the best snapped generator seen on
    /// snap iterations; 0 returns the last iterate.
    pub validation: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 5000,
            iters: 500,
            inner_steps: 5,
            lr_defender: 1e-3,
            lr_attacker: 1e-3,
            snap_every: 1,
            seed: 0,
            hidden: None,
            attacker_sees_snapped: true,
            attacker_entropy: 0.2,
            attacker_warmup: 0,
            validation: 5000,
        }
    }
}

impl TrainConfig {
    /// Defaults for generated OS / app / port instances (larger batches).
    pub fn structured() -> Self {
        TrainConfig {
            batch: 10_000,
            validation: 10_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch", self.batch),
            ("iters", self.iters),
            ("inner_steps", self.inner_steps),
            ("snap_every", self.snap_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CmgError::Argument(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [("lr_defender", self.lr_defender), ("lr_attacker", self.lr_attacker)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CmgError::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(h) = &self.hidden {
            if h.contains(&0) {
                return Err(CmgError::Argument("hidden widths must be positive".into()));
            }
        }
        Ok(())
    }

    fn hidden_for(&self, joint_len: usize) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| vec![64.max(4 * joint_len); 2])
    }
}

/// Mask generator `Q(x, r; β)`; the unconditional variant sees only `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet {
    pub mlp: Mlp,
    pub conditional: bool,
}

/// Attacker policy `z(e; x̃; θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackerNet {
    pub mlp: Mlp,
}

impl GeneratorNet {
    pub fn new<R: Rng + ?Sized>(joint_len: usize, hidden: &[usize], conditional: bool, rng: &mut R) -> Self {
        let mut sizes = vec![if conditional { 2 * joint_len } else { joint_len }];
        sizes.extend_from_slice(hidden);
        sizes.push(joint_len);
        GeneratorNet {
            mlp: Mlp::new(&sizes, OutputActivation::Sigmoid, rng),
            conditional,
        }
    }

    pub fn joint_len(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Network input for prior samples `x` and noise `r`.
    pub fn input(&self, x: ArrayView2<f64>, r: ArrayView2<f64>) -> Array2<f64> {
        if self.conditional {
            concatenate(Axis(1), &[x, r]).expect("x and r have matching rows")
        } else {
            r.to_owned()
        }
    }
}

impl AttackerNet {
    pub fn new<R: Rng + ?Sized>(joint_len: usize, hidden: &[usize], num_exploits: usize, rng: &mut R) -> Self {
        let mut sizes = vec![joint_len];
        sizes.extend_from_slice(hidden);
        sizes.push(num_exploits.max(1));
        AttackerNet {
            mlp: Mlp::new(&sizes, OutputActivation::Softmax, rng),
        }
    }

    /// Exploit probabilities for each observation row.
    pub fn probabilities(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        softmax_rows(&self.mlp.logits(obs))
    }
}

/// Prior samples with noise and precomputed per-exploit attack values.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub x: Array2<f64>,
    pub r: Array2<f64>,
    /// `delta[i][e] = Σₖ v(xᵏ) δ(xᵏ ∈ Xᵉ)` for sample `i`.
    pub delta: Array2<f64>,
}

impl SampleBatch {
    pub fn draw<R: Rng + ?Sized>(game: &GameSpec, sampler: &PriorSampler, rng: &mut R, count: usize) -> Self {
        let len = game.joint_len();
        let ne = game.num_exploits();
        let mut x = Array2::zeros((count, len));
        let mut delta = Array2::zeros((count, ne));
        let mut joint = vec![0; len];
        let mut d = vec![0.0; ne];
        for i in 0..count {
            sampler.sample_into(rng, &mut joint);
            game.attack_values_into(&joint, &mut d);
            x.row_mut(i)
                .iter_mut()
                .zip(&joint)
                .for_each(|(a, &b)| *a = f64::from(b));
            delta.row_mut(i).iter_mut().zip(&d).for_each(|(a, &b)| *a = b);
        }
        let r = Array2::from_shape_simple_fn((count, len), || rng.gen::<f64>());
        SampleBatch { x, r, delta }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generator output for a batch: continuous sigmoid values, or thresholded
/// at 0.5 (`≥ 0.5 → 1`) when `snap` is set.
pub fn generator_forward(
    net: &GeneratorNet,
    x: ArrayView2<f64>,
    r: ArrayView2<f64>,
    snap: bool,
) -> Result<Array2<f64>> {
    let logits = net.mlp.logits(net.input(x, r).view());
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(CmgError::Numeric("generator produced a non-finite activation".into()));
    }
    let y = net.mlp.activate(&logits);
    Ok(if snap { y.mapv(snap_value) } else { y })
}

fn snap_value(v: f64) -> f64 {
    if v >= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Loss components on one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub attack: f64,
    pub cost: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.attack + self.cost
    }
}

/// Per-coordinate masking cost `c_{j mod n}` over the joint vector.
pub fn joint_costs(game: &GameSpec) -> Array1<f64> {
    let n = game.n();
    Array1::from_shape_fn(game.joint_len(), |j| game.cost.per_attribute[j % n])
}

/// Batch mean of `Σₑ z(e; x⊙y)·δ[e] + c(y)`.
pub fn gam_loss(
    gen: &GeneratorNet,
    atk: &AttackerNet,
    batch: &SampleBatch,
    game: &GameSpec,
    snap: bool,
) -> Result<LossParts> {
    let y = generator_forward(gen, batch.x.view(), batch.r.view(), snap)?;
    let obs = &batch.x * &y;
    let costs = joint_costs(game);
    Ok(LossParts {
        attack: attack_term(atk, obs.view(), &batch.delta),
        cost: cost_term(&y, &costs),
    })
}

fn attack_term(atk: &AttackerNet, obs: ArrayView2<f64>, delta: &Array2<f64>) -> f64 {
    if delta.ncols() == 0 {
        return 0.0;
    }
    let z = atk.probabilities(obs);
    (&z * delta).sum() / delta.nrows() as f64
}

fn cost_term(y: &Array2<f64>, costs: &Array1<f64>) -> f64 {
    (1.0 - y).dot(costs).sum() / y.nrows() as f64
}

/// ∂(mean attack)/∂logits for softmax outputs `z`.
fn softmax_attack_grad(z: &Array2<f64>, delta: &Array2<f64>) -> Array2<f64> {
    let b = z.nrows() as f64;
    let expected = (z * delta).sum_axis(Axis(1)).insert_axis(Axis(1));
    z * &(delta - &expected) / b
}

/// ∂(mean row entropy)/∂logits: `-z (log z + H) / B`.
fn softmax_entropy_grad(z: &Array2<f64>) -> Array2<f64> {
    let b = z.nrows() as f64;
    let logz = z.mapv(|p| p.max(1e-300).ln());
    let h = -(z * &logz).sum_axis(Axis(1)).insert_axis(Axis(1));
    -(z * &(logz + &h)) / b
}

/// Loss and reverse-mode gradients for both networks.
pub struct GamGradients {
    pub loss: LossParts,
    pub generator: MlpGrads,
    pub attacker: MlpGrads,
}

/// Gradients of [`gam_loss`] with respect to generator and attacker
/// parameters. On snap passes the threshold is treated as the identity.
pub fn gam_gradients(
    gen: &GeneratorNet,
    atk: &AttackerNet,
    batch: &SampleBatch,
    game: &GameSpec,
    snap: bool,
) -> Result<GamGradients> {
    let costs = joint_costs(game);
    let (g_logits, g_cache) = gen.mlp.forward(gen.input(batch.x.view(), batch.r.view()).view());
    if g_logits.iter().any(|v| !v.is_finite()) {
        return Err(CmgError::Numeric("generator produced a non-finite activation".into()));
    }
    let y_cont = gen.mlp.activate(&g_logits);
    let y = if snap { y_cont.mapv(snap_value) } else { y_cont.clone() };
    let obs = &batch.x * &y;
    let b = batch.len() as f64;

    let (a_logits, a_cache) = atk.mlp.forward(obs.view());
    let ne = batch.delta.ncols();
    let (attack, atk_grads, d_obs) = if ne == 0 {
        let zeros = Mlp::zeros(&atk.mlp.sizes(), atk.mlp.output);
        let (g, _) = zeros.backward(&a_cache, Array2::zeros(a_logits.raw_dim()));
        (0.0, g, Array2::zeros(obs.raw_dim()))
    } else {
        let z = softmax_rows(&a_logits);
        let attack = (&z * &batch.delta).sum() / b;
        let (g, d_obs) = atk.mlp.backward(&a_cache, softmax_attack_grad(&z, &batch.delta));
        (attack, g, d_obs)
    };

    // ∂L/∂y = ∂L/∂x̃ ⊙ x − c / B, passed straight through any threshold
    let mut d_logit = d_obs * &batch.x;
    d_logit -= &(&costs / b);
    Zip::from(&mut d_logit)
        .and(&y_cont)
        .for_each(|d, &s| *d *= s * (1.0 - s));
    let (gen_grads, _) = gen.mlp.backward(&g_cache, d_logit);

    Ok(GamGradients {
        loss: LossParts {
            attack,
            cost: cost_term(&y, &costs),
        },
        generator: gen_grads,
        attacker: atk_grads,
    })
}

/// Outcome of a training run.
#[derive(Clone, Debug)]
pub struct GamResult {
    pub generator: GeneratorNet,
    pub attacker: AttackerNet,
    /// Defender loss on each outer iteration's batch, before its update.
    pub loss_history: Vec<f64>,
    /// Loss of the snapped generator against the trained attacker on a fresh batch.
    pub final_loss: f64,
    pub seed: u64,
    pub config: TrainConfig,
}

/// Trains the conditional generator.
pub fn train_gam(game: &GameSpec, cfg: &TrainConfig) -> Result<GamResult> {
    train(game, cfg, true)
}

/// Trains a generator that ignores `x`: a pooling strategy `q(y)`.
pub fn train_unconditional(game: &GameSpec, cfg: &TrainConfig) -> Result<GamResult> {
    train(game, cfg, false)
}

fn train(game: &GameSpec, cfg: &TrainConfig, conditional: bool) -> Result<GamResult> {
    game.validate()?;
    cfg.validate()?;
    let len = game.joint_len();
    let hidden = cfg.hidden_for(len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gen = GeneratorNet::new(len, &hidden, conditional, &mut rng);
    let mut atk = AttackerNet::new(len, &hidden, game.num_exploits(), &mut rng);
    let mut gen_opt = Adam::new(&gen.mlp, cfg.lr_defender);
    let mut atk_opt = Adam::new(&atk.mlp, cfg.lr_attacker);
    let sampler = PriorSampler::new(game)?;
    let has_exploits = game.num_exploits() > 0;

    let validation = (cfg.validation > 0).then(|| Validation::draw(game, &sampler, &mut rng, cfg.validation));
    let mut best: Option<(f64, Mlp)> = None;

    if has_exploits && cfg.attacker_warmup > 0 {
        let batch = SampleBatch::draw(game, &sampler, &mut rng, cfg.batch);
        ascend_attacker(
            &gen,
            &mut atk,
            &mut atk_opt,
            &batch,
            true,
            cfg.attacker_warmup,
            cfg.attacker_entropy,
        )?;
    }

    let mut history = Vec::with_capacity(cfg.iters);
    for t in 1..=cfg.iters {
        let batch = SampleBatch::draw(game, &sampler, &mut rng, cfg.batch);
        let snap = t % cfg.snap_every == 0;

        if has_exploits {
            let atk_snap = snap || cfg.attacker_sees_snapped;
            ascend_attacker(
                &gen,
                &mut atk,
                &mut atk_opt,
                &batch,
                atk_snap,
                cfg.inner_steps,
                cfg.attacker_entropy,
            )?;
        }

        let grads = gam_gradients(&gen, &atk, &batch, game, snap)?;
        let loss = grads.loss.total();
        if !loss.is_finite() || !atk.mlp.is_finite() {
            return Err(CmgError::Training { iteration: t, loss });
        }
        history.push(loss);
        gen_opt.step(&mut gen.mlp, &grads.generator);
        if !gen.mlp.is_finite() {
            return Err(CmgError::Training { iteration: t, loss });
        }
        if let Some(val) = &validation {
            if t % cfg.snap_every == 0 || t == cfg.iters {
                let v = val.loss(&gen, game)?;
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, gen.mlp.clone()));
                }
            }
        }
    }
    if let Some((_, mlp)) = best {
        gen.mlp = mlp;
    }

    let check = SampleBatch::draw(game, &sampler, &mut rng, cfg.batch);
    let final_loss = gam_loss(&gen, &atk, &check, game, true)?.total();
    Ok(GamResult {
        generator: gen,
        attacker: atk,
        loss_history: history,
        final_loss,
        seed: cfg.seed,
        config: cfg.clone(),
    })
}

/// Attacker ascent on the attack term; the generator is fixed meanwhile.
fn ascend_attacker(
    gen: &GeneratorNet,
    atk: &mut AttackerNet,
    opt: &mut Adam,
    batch: &SampleBatch,
    snap: bool,
    steps: usize,
    entropy: f64,
) -> Result<()> {
    let obs = &batch.x * &generator_forward(gen, batch.x.view(), batch.r.view(), snap)?;
    for _ in 0..steps {
        let (logits, cache) = atk.mlp.forward(obs.view());
        let z = softmax_rows(&logits);
        let mut d = softmax_attack_grad(&z, &batch.delta);
        if entropy > 0.0 {
            d += &(softmax_entropy_grad(&z) * entropy);
        }
        let (mut g, _) = atk.mlp.backward(&cache, d);
        g.scale(-1.0);
        opt.step(&mut atk.mlp, &g);
    }
    Ok(())
}

/// Held-out draws for choosing among generator snapshots.
struct Validation {
    x: Array2<f64>,
    r: Array2<f64>,
    x_int: Vec<AttrValue>,
    delta: Vec<f64>,
}

impl Validation {
    fn draw(game: &GameSpec, sampler: &PriorSampler, rng: &mut ChaCha8Rng, count: usize) -> Self {
        let batch = SampleBatch::draw(game, sampler, rng, count);
        Validation {
            x_int: batch.x.iter().map(|&v| v as AttrValue).collect(),
            delta: batch.delta.iter().copied().collect(),
            x: batch.x,
            r: batch.r,
        }
    }

    /// Snapped defender loss against the empirical best response.
    fn loss(&self, gen: &GeneratorNet, game: &GameSpec) -> Result<f64> {
        let y = generator_forward(gen, self.x.view(), self.r.view(), true)?;
        let scored = ScoredDraws {
            draws: Draws {
                joint_len: self.x.ncols(),
                x: self.x_int.clone(),
                y: y.iter().map(|&v| v as u8).collect(),
            },
            num_exploits: game.num_exploits(),
            delta: self.delta.clone(),
        };
        Ok(report(&scored, game, 0).defender_loss)
    }
}

const ARCHIVE_MAGIC: &[u8; 8] = b"CMGNET01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetShape {
    pub sizes: Vec<usize>,
    pub output: OutputActivation,
}

/// JSON header stored ahead of the raw parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub seed: u64,
    pub conditional: bool,
    pub generator: NetShape,
    pub attacker: NetShape,
    pub config: TrainConfig,
}

/// Writes `magic | u64 header length | JSON header | f64 parameters`, all
/// little-endian; generator parameters precede attacker parameters.
pub fn write_archive<W: Write>(result: &GamResult, mut out: W) -> Result<()> {
    let header = ArchiveHeader {
        seed: result.seed,
        conditional: result.generator.conditional,
        generator: NetShape {
            sizes: result.generator.mlp.sizes(),
            output: result.generator.mlp.output,
        },
        attacker: NetShape {
            sizes: result.attacker.mlp.sizes(),
            output: result.attacker.mlp.output,
        },
        config: result.config.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(ARCHIVE_MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for v in result
        .generator
        .mlp
        .params()
        .into_iter()
        .chain(result.attacker.mlp.params())
    {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_archive<R: Read>(mut input: R) -> Result<(ArchiveHeader, GeneratorNet, AttackerNet)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != ARCHIVE_MAGIC {
        return Err(CmgError::Schema("not a network parameter archive".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: ArchiveHeader = serde_json::from_slice(&json)?;
    let mut read_net = |shape: &NetShape| -> Result<Mlp> {
        let mut net = Mlp::zeros(&shape.sizes, shape.output);
        let mut buf = vec![0u8; 8 * net.num_params()];
        input.read_exact(&mut buf)?;
        let flat: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        net.set_params(&flat);
        Ok(net)
    };
    let generator = GeneratorNet {
        mlp: read_net(&header.generator)?,
        conditional: header.conditional,
    };
    let attacker = AttackerNet {
        mlp: read_net(&header.attacker)?,
    };
    Ok((header, generator, attacker))
}
