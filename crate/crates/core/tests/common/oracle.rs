//! Brute-force reference for small games, written against the game
//! definition only: it enumerates configurations, masks and observations
//! itself and never calls the solver code.

use std::collections::HashMap;

use cmg_core::game::{GameSpec, Prior, ValueFn};

pub struct Oracle {
    /// Support configurations with their prior probability.
    pub types: Vec<(Vec<i32>, f64)>,
    /// `delta[t][e]`: value the attacker gains with exploit `e` on type `t`.
    pub delta: Vec<Vec<f64>>,
    /// Masking cost of each joint mask code.
    pub cost: Vec<f64>,
    /// `obs[t][code]`: id of the observation type `t` produces under mask `code`.
    pub obs: Vec<Vec<usize>>,
    pub observations: Vec<Vec<i32>>,
    pub num_exploits: usize,
}

fn device_value(value: &ValueFn, device: &[i32]) -> f64 {
    match value {
        ValueFn::HalfSumPlusOne => device.iter().map(|&v| (v as f64 + 1.0) / 2.0).sum(),
        ValueFn::Table(rows) => rows.iter().find(|(d, _)| d == device).map_or(0.0, |r| r.1),
        ValueFn::OnePlusApps => panic!("oracle handles binary value functions only"),
    }
}

fn product(domains: &[Vec<i32>]) -> Vec<Vec<i32>> {
    let mut out = vec![vec![]];
    for d in domains {
        out = out
            .into_iter()
            .flat_map(|p| {
                d.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

impl Oracle {
    pub fn new(game: &GameSpec) -> Self {
        let n = game.n();
        let len = n * game.m;
        let types: Vec<(Vec<i32>, f64)> = match &game.prior {
            Prior::Table(rows) => rows
                .iter()
                .map(|(x, p)| (x.0.clone(), *p))
                .filter(|r| r.1 > 0.0)
                .collect(),
            Prior::UniformBinary => {
                let domains: Vec<Vec<i32>> = (0..len).map(|j| game.schema.domain(j % n).to_vec()).collect();
                let all = product(&domains);
                let p = 1.0 / all.len() as f64;
                all.into_iter().map(|x| (x, p)).collect()
            }
            Prior::Structured { .. } => panic!("oracle needs an enumerable prior"),
        };
        let delta = types
            .iter()
            .map(|(x, _)| {
                game.exploits
                    .iter()
                    .map(|e| {
                        x.chunks(n)
                            .filter(|dev| e.required.iter().all(|(&i, ok)| ok.contains(&dev[i])))
                            .map(|dev| device_value(&game.value, dev))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let cost = (0..1usize << len)
            .map(|code| {
                (0..len)
                    .filter(|j| (code >> j) & 1 == 0)
                    .map(|j| game.cost.per_attribute[j % n])
                    .sum()
            })
            .collect();
        let mut ids: HashMap<Vec<i32>, usize> = HashMap::new();
        let mut observations = Vec::new();
        let obs = types
            .iter()
            .map(|(x, _)| {
                (0..1usize << len)
                    .map(|code| {
                        let o: Vec<i32> = (0..len).map(|j| if (code >> j) & 1 == 1 { x[j] } else { 0 }).collect();
                        *ids.entry(o.clone()).or_insert_with(|| {
                            observations.push(o);
                            observations.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Oracle {
            types,
            delta,
            cost,
            obs,
            observations,
            num_exploits: game.num_exploits(),
        }
    }

    pub fn num_masks(&self) -> usize {
        self.cost.len()
    }

    /// `w[o][e] = Σ_t p(t) q(code | t) δ[t][e]` over the pairs producing `o`.
    fn weights(&self, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.num_exploits]; self.observations.len()];
        for (t, (_, p)) in self.types.iter().enumerate() {
            for (code, &qv) in q[t].iter().enumerate() {
                let row = &mut w[self.obs[t][code]];
                for (acc, d) in row.iter_mut().zip(&self.delta[t]) {
                    *acc += p * qv * d;
                }
            }
        }
        w
    }

    /// Pure best response (exploit per observation) and its value.
    pub fn best_response(&self, q: &[Vec<f64>]) -> (Vec<usize>, f64) {
        let w = self.weights(q);
        let mut value = 0.0;
        let choice = w
            .iter()
            .map(|row| {
                let (e, v) = row
                    .iter()
                    .enumerate()
                    .fold((0, 0.0), |best, (e, &v)| if v > best.1 { (e, v) } else { best });
                value += v;
                e
            })
            .collect();
        (choice, value)
    }

    /// Attack value of the mixed attacker `z[o][e]`.
    pub fn attack_value(&self, q: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
        self.weights(q)
            .iter()
            .zip(z)
            .map(|(w, z)| w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    pub fn expected_cost(&self, q: &[Vec<f64>]) -> f64 {
        self.types
            .iter()
            .zip(q)
            .map(|((_, p), row)| p * row.iter().zip(&self.cost).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Defender loss `max_z u(q, z)`.
    pub fn loss(&self, q: &[Vec<f64>]) -> f64 {
        self.best_response(q).1 + self.expected_cost(q)
    }

    /// Loss of type `t` masking with `code` against the mixed attacker `z`.
    fn type_loss(&self, t: usize, code: usize, z: &[Vec<f64>]) -> f64 {
        let zo = &z[self.obs[t][code]];
        self.delta[t].iter().zip(zo).map(|(d, p)| d * p).sum::<f64>() + self.cost[code]
    }

    /// `min_q u(q, z)`, attained type by type.
    pub fn defender_best_response(&self, z: &[Vec<f64>]) -> f64 {
        (0..self.types.len())
            .map(|t| {
                let best = (0..self.num_masks())
                    .map(|code| self.type_loss(t, code, z))
                    .fold(f64::INFINITY, f64::min);
                self.types[t].1 * best
            })
            .sum()
    }

    /// Minimax value over defender tables whose entries are multiples of
    /// `step`. Only feasible for a single binary attribute.
    pub fn grid_minimax(&self, step: f64) -> f64 {
        assert_eq!(self.num_masks(), 2, "grid search is limited to one attribute");
        let k = (1.0 / step).round() as usize;
        let points: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        let mut q = vec![vec![0.0, 1.0]; self.types.len()];
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; self.types.len()];
        loop {
            for (row, &i) in q.iter_mut().zip(&idx) {
                *row = vec![points[i], 1.0 - points[i]];
            }
            best = best.min(self.loss(&q));
            let mut t = 0;
            while t < idx.len() {
                idx[t] += 1;
                if idx[t] <= k {
                    break;
                }
                idx[t] = 0;
                t += 1;
            }
            if t == idx.len() {
                return best;
            }
        }
    }

    /// Regret-matching+ self-play with linear averaging. Returns certified
    /// bounds `(lo, hi)` on the minimax value: `hi` is the exact loss of the
    /// averaged defender, `lo` the defender's best response to the averaged
    /// attacker.
    pub fn self_play_bounds(&self, width: f64, max_iters: usize) -> (f64, f64) {
        let nt = self.types.len();
        let nm = self.num_masks();
        let no = self.observations.len();
        let ne = self.num_exploits.max(1);
        let mut regret = vec![vec![0.0; nm]; nt];
        let mut q = vec![vec![1.0 / nm as f64; nm]; nt];
        let mut q_sum = vec![vec![0.0; nm]; nt];
        let mut z_sum = vec![vec![0.0; ne]; no];
        let mut bounds = (f64::NEG_INFINITY, f64::INFINITY);
        for it in 1..=max_iters {
            // tiny floor keeps unreached observations answered sensibly
            let floored: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|v| v + 1e-9).collect()).collect();
            let (choice, _) = self.best_response(&floored);
            let mut z = vec![vec![0.0; ne]; no];
            for (o, &e) in choice.iter().enumerate() {
                if self.num_exploits > 0 {
                    z[o][e] = 1.0;
                }
            }
            let w = it as f64;
            for t in 0..nt {
                for c in 0..nm {
                    q_sum[t][c] += w * q[t][c];
                }
            }
            for (acc, zo) in z_sum.iter_mut().zip(&z) {
                for (a, b) in acc.iter_mut().zip(zo) {
                    *a += w * b;
                }
            }
            for t in 0..nt {
                let losses: Vec<f64> = (0..nm).map(|c| self.type_loss(t, c, &z)).collect();
                let mean: f64 = losses.iter().zip(&q[t]).map(|(l, p)| l * p).sum();
                for c in 0..nm {
                    regret[t][c] = (regret[t][c] + mean - losses[c]).max(0.0);
                }
                let total: f64 = regret[t].iter().sum();
                q[t] = if total > 0.0 {
                    regret[t].iter().map(|r| r / total).collect()
                } else {
                    vec![1.0 / nm as f64; nm]
                };
            }
            if it % 200 == 0 || it == max_iters {
                let q_bar: Vec<Vec<f64>> = q_sum
                    .iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.iter().map(|v| v / s).collect()
                    })
                    .collect();
                let z_bar: Vec<Vec<f64>> = z_sum
                    .iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.iter().map(|v| if s > 0.0 { v / s } else { 0.0 }).collect()
                    })
                    .collect();
                bounds = (self.defender_best_response(&z_bar), self.loss(&q_bar));
                if bounds.1 - bounds.0 <= width {
                    break;
                }
            }
        }
        bounds
    }
}
