//! Exact equilibrium computation for enumerable games.
//!
//! The defender LP has one variable per `(x, y)` pair plus the free attacker
//! value `u`, one simplex equality per support configuration, and one cut
//! `u ≥ Σ p(x) q(y;x) Σₖ v(xᵏ) δ(xᵏ ∈ X^{z(x⊙y)})` per generated pure attack
//! strategy `z`. Cuts are generated by an exact per-observation best response.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CmgError, Result};
use crate::game::{enumerate_support, Configuration, GameSpec, Mask, Observation, ENUMERATION_CAP};
use crate::lp::{BasisEntry, DenseSimplex, LinearProgramSpec, LpBackend, LpStatus, Sense};
use crate::strategy::{DefenderTable, MixedAttackStrategy, PureAttackStrategy};

/// Fully enumerated game: support, masks, observation ids and payoffs.
#[derive(Clone, Debug)]
pub struct EnumeratedGame {
    pub support: Vec<(Configuration, f64)>,
    pub joint_len: usize,
    pub num_masks: usize,
    pub num_exploits: usize,
    /// Observation id of column `s * num_masks + code`.
    obs_of: Vec<u32>,
    observations: Vec<Observation>,
    /// `attack[s][e] = Σₖ v(xᵏ) δ(xᵏ ∈ Xᵉ)` for support entry `s`.
    attack: Vec<Vec<f64>>,
    mask_cost: Vec<f64>,
}

impl EnumeratedGame {
    pub fn new(game: &GameSpec) -> Result<Self> {
        game.validate()?;
        let support = enumerate_support(game)?;
        let joint_len = game.joint_len();
        if joint_len >= 32 {
            return Err(capacity(usize::MAX));
        }
        let num_masks = 1usize << joint_len;
        let cols = support
            .len()
            .checked_mul(num_masks)
            .filter(|&c| c <= ENUMERATION_CAP)
            .ok_or_else(|| capacity(support.len().saturating_mul(num_masks)))?;

        let mut ids: HashMap<Vec<i32>, u32> = HashMap::new();
        let mut observations = Vec::new();
        let mut obs_of = Vec::with_capacity(cols);
        for (x, _) in &support {
            for code in 0..num_masks {
                let o: Vec<i32> =
                    x.0.iter()
                        .enumerate()
                        .map(|(i, &v)| if (code >> i) & 1 == 1 { v } else { 0 })
                        .collect();
                let next = observations.len() as u32;
                let id = *ids.entry(o.clone()).or_insert_with(|| {
                    observations.push(Observation(o));
                    next
                });
                obs_of.push(id);
            }
        }
        let attack = support.iter().map(|(x, _)| game.attack_values(&x.0)).collect();
        let mask_cost = (0..num_masks)
            .map(|code| game.mask_cost(&Mask::from_code(code, joint_len).0))
            .collect();
        Ok(EnumeratedGame {
            support,
            joint_len,
            num_masks,
            num_exploits: game.num_exploits(),
            obs_of,
            observations,
            attack,
            mask_cost,
        })
    }

    pub fn num_columns(&self) -> usize {
        self.support.len() * self.num_masks
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn observation(&self, id: usize) -> &Observation {
        &self.observations[id]
    }

    fn column(&self, s: usize, code: usize) -> usize {
        s * self.num_masks + code
    }

    /// Flattens a defender table into column order.
    pub fn flatten(&self, q: &DefenderTable) -> Result<Vec<f64>> {
        let mut flat = Vec::with_capacity(self.num_columns());
        for (x, _) in &self.support {
            let row = q
                .row(x)
                .ok_or_else(|| CmgError::Domain(format!("defender table has no row for {:?}", x.0)))?;
            flat.extend_from_slice(row);
        }
        Ok(flat)
    }

    fn table(&self, flat: &[f64]) -> Result<DefenderTable> {
        let rows = self
            .support
            .iter()
            .enumerate()
            .map(|(s, (x, _))| {
                let row: Vec<f64> = flat[s * self.num_masks..(s + 1) * self.num_masks]
                    .iter()
                    .map(|&v| v.max(0.0))
                    .collect();
                let total: f64 = row.iter().sum();
                (x.clone(), row.into_iter().map(|v| v / total).collect())
            })
            .collect();
        DefenderTable::new(self.joint_len, rows)
    }

    /// Expected masking cost `Σ p(x) Σ q(y;x) c(y)`.
    pub fn expected_cost(&self, flat_q: &[f64]) -> f64 {
        self.support
            .iter()
            .enumerate()
            .map(|(s, (_, p))| {
                p * (0..self.num_masks)
                    .map(|code| flat_q[self.column(s, code)] * self.mask_cost[code])
                    .sum::<f64>()
            })
            .sum()
    }

    /// Per-observation exploit scores `Σ p(x) q(y;x) attack[x][e]`.
    fn scores(&self, flat_q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ne = self.num_exploits;
        let mut weighted = vec![0.0; self.num_observations() * ne];
        let mut prior_only = vec![0.0; self.num_observations() * ne];
        for (s, (_, p)) in self.support.iter().enumerate() {
            for code in 0..self.num_masks {
                let j = self.column(s, code);
                let o = self.obs_of[j] as usize;
                let w = p * flat_q[j];
                for e in 0..ne {
                    let a = self.attack[s][e];
                    weighted[o * ne + e] += w * a;
                    prior_only[o * ne + e] += p * a;
                }
            }
        }
        (weighted, prior_only)
    }

    /// Exact best response: per observation, the exploit with the largest
    /// posterior-weighted value (smallest index on ties). Observations the
    /// defender never produces get the exploit that would be best under the
    /// prior alone. Returns choices by observation id and the attack value.
    pub fn best_response(&self, flat_q: &[f64]) -> (Vec<usize>, f64) {
        let ne = self.num_exploits;
        if ne == 0 {
            return (Vec::new(), 0.0);
        }
        let (weighted, prior_only) = self.scores(flat_q);
        let mut choice = Vec::with_capacity(self.num_observations());
        let mut value = 0.0;
        for o in 0..self.num_observations() {
            let w = &weighted[o * ne..(o + 1) * ne];
            let reached = w.iter().any(|&v| v > 0.0);
            let scores = if reached { w } else { &prior_only[o * ne..(o + 1) * ne] };
            let best = argmax_first(scores);
            value += w[best];
            choice.push(best);
        }
        (choice, value)
    }

    /// Attack value of a fixed pure strategy against `flat_q`.
    pub fn strategy_value(&self, flat_q: &[f64], choice: &[usize]) -> f64 {
        self.support
            .iter()
            .enumerate()
            .map(|(s, (_, p))| {
                (0..self.num_masks)
                    .map(|code| {
                        let j = self.column(s, code);
                        p * flat_q[j] * self.attack[s][choice[self.obs_of[j] as usize]]
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    fn pure_strategy(&self, choice: &[usize]) -> PureAttackStrategy {
        PureAttackStrategy {
            choice: choice
                .iter()
                .enumerate()
                .map(|(o, &e)| (self.observations[o].clone(), e))
                .collect(),
        }
    }

    fn choices_of(&self, z: &PureAttackStrategy) -> Result<Vec<usize>> {
        self.observations
            .iter()
            .map(|o| match z.choice.get(o) {
                Some(&e) if e < self.num_exploits => Ok(e),
                Some(&e) => Err(CmgError::Domain(format!(
                    "attack strategy picks exploit {e}, but only {} exist",
                    self.num_exploits
                ))),
                None => Err(CmgError::Domain(format!(
                    "attack strategy has no choice for observation {:?}",
                    o.0
                ))),
            })
            .collect()
    }

    /// Index of the free attacker-value variable.
    pub fn value_var(&self) -> usize {
        self.num_columns()
    }

    fn base_lp(&self) -> LinearProgramSpec {
        let mut lp = LinearProgramSpec::new(self.num_columns() + 1);
        for (s, (_, p)) in self.support.iter().enumerate() {
            for code in 0..self.num_masks {
                lp.objective[self.column(s, code)] = p * self.mask_cost[code];
            }
        }
        let u = self.value_var();
        lp.objective[u] = 1.0;
        lp.set_free(u);
        for s in 0..self.support.len() {
            let row = (0..self.num_masks).map(|code| (self.column(s, code), 1.0)).collect();
            lp.add_row(row, Sense::Eq, 1.0);
        }
        lp
    }

    fn add_cut(&self, lp: &mut LinearProgramSpec, choice: &[usize]) {
        let mut row = vec![(self.value_var(), 1.0)];
        for (s, (_, p)) in self.support.iter().enumerate() {
            for code in 0..self.num_masks {
                let j = self.column(s, code);
                let a = p * self.attack[s][choice[self.obs_of[j] as usize]];
                if a != 0.0 {
                    row.push((j, -a));
                }
            }
        }
        lp.add_row(row, Sense::Ge, 0.0);
    }
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (e, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = e;
        }
    }
    best
}

fn capacity(cols: usize) -> CmgError {
    CmgError::Capacity(format!(
        "{} (x, y) pairs exceed the exact-solver cap of {ENUMERATION_CAP}; use the GAM solver",
        if cols == usize::MAX {
            "more than 2^31".to_string()
        } else {
            cols.to_string()
        }
    ))
}

/// Exact attacker best response to `q` and its value.
pub fn attacker_best_response(q: &DefenderTable, game: &GameSpec) -> Result<(PureAttackStrategy, f64)> {
    let model = EnumeratedGame::new(game)?;
    let flat = model.flatten(q)?;
    let (choice, value) = model.best_response(&flat);
    Ok((model.pure_strategy(&choice), value))
}

/// The defender's restricted LP over the attack strategies in `strategies`.
/// Variables are `q(y;x)` in support-major, mask-code-minor order followed by `u`.
pub fn build_defender_lp(game: &GameSpec, strategies: &[PureAttackStrategy]) -> Result<LinearProgramSpec> {
    let model = EnumeratedGame::new(game)?;
    let mut lp = model.base_lp();
    for z in strategies {
        let choice = model.choices_of(z)?;
        model.add_cut(&mut lp, &choice);
    }
    Ok(lp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    pub eps: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            eps: 1e-5,
            max_rounds: 500,
            seed: 0,
        }
    }
}

/// Converged constraint-generation solution.
#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub defender: DefenderTable,
    /// Equilibrium attacker mixture recovered from the cut multipliers.
    pub attacker: MixedAttackStrategy,
    /// LP objective: attacker value plus expected masking cost.
    pub defender_loss: f64,
    /// Attacker value `u` at the LP optimum.
    pub attacker_value: f64,
    pub expected_cost: f64,
    /// Value of the exact best response to the returned defender table.
    pub best_response_value: f64,
    pub iterations: usize,
    pub gap: f64,
    /// LP objective after each round.
    pub objective_history: Vec<f64>,
}

/// Solves the defender LP by constraint generation.
pub fn solve_lp_cg(game: &GameSpec, opts: &CgOptions) -> Result<EquilibriumResult> {
    solve_lp_cg_with(game, opts, &DenseSimplex::default())
}

pub fn solve_lp_cg_with(game: &GameSpec, opts: &CgOptions, backend: &dyn LpBackend) -> Result<EquilibriumResult> {
    let model = EnumeratedGame::new(game)?;
    if model.num_exploits == 0 {
        let no_mask = model.num_masks - 1;
        let mut flat = vec![0.0; model.num_columns()];
        for s in 0..model.support.len() {
            flat[model.column(s, no_mask)] = 1.0;
        }
        return Ok(EquilibriumResult {
            defender: model.table(&flat)?,
            attacker: MixedAttackStrategy::default(),
            defender_loss: 0.0,
            attacker_value: 0.0,
            expected_cost: 0.0,
            best_response_value: 0.0,
            iterations: 0,
            gap: 0.0,
            objective_history: Vec::new(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initial: Vec<usize> = (0..model.num_observations())
        .map(|_| rng.gen_range(0..model.num_exploits))
        .collect();
    let mut lp = model.base_lp();
    model.add_cut(&mut lp, &initial);
    let mut cuts = vec![initial];
    let mut basis: Option<Vec<BasisEntry>> = None;
    let mut history = Vec::new();
    let mut gap = f64::INFINITY;

    for round in 1..=opts.max_rounds {
        let sol = backend.solve(&lp, basis.as_deref())?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(CmgError::Infeasible),
            LpStatus::Unbounded => return Err(CmgError::Unbounded),
        }
        let flat = &sol.x[..model.num_columns()];
        let u = sol.x[model.value_var()];
        let cost = model.expected_cost(flat);
        let (choice, br_value) = model.best_response(flat);
        history.push(sol.objective);
        gap = (sol.objective - cost - br_value).abs();
        if gap <= opts.eps {
            let n_rows = model.support.len();
            let weights: Vec<f64> = sol.duals[n_rows..].iter().map(|d| d.max(0.0)).collect();
            let attacker = mix_strategies(&model, &cuts, &weights);
            return Ok(EquilibriumResult {
                defender: model.table(flat)?,
                attacker,
                defender_loss: sol.objective,
                attacker_value: u,
                expected_cost: cost,
                best_response_value: br_value,
                iterations: round,
                gap,
                objective_history: history,
            });
        }
        if cuts.contains(&choice) {
            return Err(CmgError::Numeric(format!(
                "best response already present but gap is {gap:e}"
            )));
        }
        model.add_cut(&mut lp, &choice);
        cuts.push(choice);
        basis = Some(sol.basis);
    }
    Err(CmgError::IterationLimit {
        rounds: opts.max_rounds,
        gap,
    })
}

fn mix_strategies(model: &EnumeratedGame, cuts: &[Vec<usize>], weights: &[f64]) -> MixedAttackStrategy {
    let total: f64 = weights.iter().sum();
    let ne = model.num_exploits;
    let mut z: Vec<(Observation, Vec<f64>)> = model.observations.iter().map(|o| (o.clone(), vec![0.0; ne])).collect();
    for (choice, &w) in cuts.iter().zip(weights) {
        let w = if total > 0.0 {
            w / total
        } else {
            1.0 / cuts.len() as f64
        };
        for (o, &e) in choice.iter().enumerate() {
            z[o].1[e] += w;
        }
    }
    z.sort_by(|a, b| a.0.cmp(&b.0));
    MixedAttackStrategy { num_exploits: ne, z }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskProb {
    pub y: Vec<u8>,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefenderRowDump {
    pub x: Vec<i32>,
    pub masks: Vec<MaskProb>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackerRowDump {
    pub obs: Vec<i32>,
    pub z: Vec<f64>,
}

/// Serialized form of an [`EquilibriumResult`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyDump {
    pub defender_loss: f64,
    pub attacker_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub defender: Vec<DefenderRowDump>,
    pub attacker: Vec<AttackerRowDump>,
}

impl From<&EquilibriumResult> for StrategyDump {
    fn from(r: &EquilibriumResult) -> Self {
        let len = r.defender.joint_len();
        let defender = r
            .defender
            .rows()
            .map(|(x, q)| DefenderRowDump {
                x: x.0.clone(),
                masks: q
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 1e-6)
                    .map(|(code, &p)| MaskProb {
                        y: Mask::from_code(code, len).0,
                        p,
                    })
                    .collect(),
            })
            .collect();
        let attacker = r
            .attacker
            .z
            .iter()
            .map(|(o, z)| AttackerRowDump {
                obs: o.0.clone(),
                z: z.clone(),
            })
            .collect();
        StrategyDump {
            defender_loss: r.defender_loss,
            attacker_value: r.attacker_value,
            gap: r.gap,
            iterations: r.iterations,
            defender,
            attacker,
        }
    }
}
