//! Sample-based evaluation of defender strategies against an empirical
//! attacker best response.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CmgError, Result};
use crate::gam::{generator_forward, AttackerNet, GeneratorNet};
use crate::game::{AttrValue, GameSpec, Mask, Observation, PriorSampler};
use crate::strategy::{DefenderTable, MixedAttackStrategy, PureAttackStrategy};

/// Joint configurations and the masks a defender chose for them.
#[derive(Clone, Debug, Default)]
pub struct Draws {
    pub joint_len: usize,
    /// Row-major `count × joint_len`.
    pub x: Vec<AttrValue>,
    pub y: Vec<u8>,
}

impl Draws {
    pub fn len(&self) -> usize {
        self.x.len().checked_div(self.joint_len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn config(&self, i: usize) -> &[AttrValue] {
        &self.x[i * self.joint_len..(i + 1) * self.joint_len]
    }

    pub fn mask(&self, i: usize) -> &[u8] {
        &self.y[i * self.joint_len..(i + 1) * self.joint_len]
    }

    pub fn observation(&self, i: usize) -> Vec<AttrValue> {
        self.config(i)
            .iter()
            .zip(self.mask(i))
            .map(|(&x, &y)| if y == 1 { x } else { 0 })
            .collect()
    }
}

/// Anything that can produce `(x, y)` pairs: `x` from the prior, `y` from
/// the defender's strategy.
pub trait DefenderSampler {
    fn draw(&self, rng: &mut ChaCha8Rng, count: usize) -> Result<Draws>;
}

/// Samples masks from an explicit defender table.
pub struct TableSampler<'a> {
    prior: PriorSampler,
    table: &'a DefenderTable,
}

impl<'a> TableSampler<'a> {
    pub fn new(game: &GameSpec, table: &'a DefenderTable) -> Result<Self> {
        if table.joint_len() != game.joint_len() {
            return Err(CmgError::Argument(format!(
                "defender table covers {} attributes, game has {}",
                table.joint_len(),
                game.joint_len()
            )));
        }
        Ok(TableSampler {
            prior: PriorSampler::new(game)?,
            table,
        })
    }
}

impl DefenderSampler for TableSampler<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng, count: usize) -> Result<Draws> {
        let len = self.table.joint_len();
        let mut draws = Draws {
            joint_len: len,
            x: vec![0; count * len],
            y: Vec::with_capacity(count * len),
        };
        for i in 0..count {
            let x = &mut draws.x[i * len..(i + 1) * len];
            self.prior.sample_into(rng, x);
            let config = crate::game::Configuration(x.to_vec());
            let row = self
                .table
                .row(&config)
                .ok_or_else(|| CmgError::Domain(format!("defender table has no row for {:?}", config.0)))?;
            let u: f64 = rng.gen::<f64>() * row.iter().sum::<f64>();
            let mut acc = 0.0;
            let mut code = row.len() - 1;
            for (c, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    code = c;
                    break;
                }
            }
            draws.y.extend(Mask::from_code(code, len).0);
        }
        Ok(draws)
    }
}

/// Applies the same mask to every configuration.
pub struct FixedMaskSampler {
    prior: PriorSampler,
    mask: Vec<u8>,
}

impl FixedMaskSampler {
    pub fn new(game: &GameSpec, mask: &Mask) -> Result<Self> {
        if mask.len() != game.joint_len() {
            return Err(CmgError::Argument(format!(
                "mask has length {}, game needs {}",
                mask.len(),
                game.joint_len()
            )));
        }
        Ok(FixedMaskSampler {
            prior: PriorSampler::new(game)?,
            mask: mask.0.clone(),
        })
    }
}

impl DefenderSampler for FixedMaskSampler {
    fn draw(&self, rng: &mut ChaCha8Rng, count: usize) -> Result<Draws> {
        let len = self.mask.len();
        let mut x = vec![0; count * len];
        for chunk in x.chunks_mut(len.max(1)) {
            self.prior.sample_into(rng, chunk);
        }
        Ok(Draws {
            joint_len: len,
            x,
            y: self.mask.repeat(count),
        })
    }
}

/// Draws snapped masks from a trained generator.
pub struct GeneratorSampler<'a> {
    prior: PriorSampler,
    net: &'a GeneratorNet,
}

impl<'a> GeneratorSampler<'a> {
    pub fn new(game: &GameSpec, net: &'a GeneratorNet) -> Result<Self> {
        if net.joint_len() != game.joint_len() {
            return Err(CmgError::Argument(format!(
                "generator emits {} mask bits, game needs {}",
                net.joint_len(),
                game.joint_len()
            )));
        }
        Ok(GeneratorSampler {
            prior: PriorSampler::new(game)?,
            net,
        })
    }
}

impl DefenderSampler for GeneratorSampler<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng, count: usize) -> Result<Draws> {
        const CHUNK: usize = 8192;
        let len = self.net.joint_len();
        let mut draws = Draws {
            joint_len: len,
            x: vec![0; count * len],
            y: Vec::with_capacity(count * len),
        };
        for chunk in draws.x.chunks_mut(len) {
            self.prior.sample_into(rng, chunk);
        }
        for start in (0..count).step_by(CHUNK) {
            let rows = CHUNK.min(count - start);
            let xs = &draws.x[start * len..(start + rows) * len];
            let x = Array2::from_shape_fn((rows, len), |(i, j)| f64::from(xs[i * len + j]));
            let r = Array2::from_shape_simple_fn((rows, len), || rng.gen::<f64>());
            let y = generator_forward(self.net, x.view(), r.view(), true)?;
            draws.y.extend(y.iter().map(|&v| v as u8));
        }
        Ok(draws)
    }
}

/// Draws and their precomputed per-exploit attack values.
#[derive(Clone, Debug)]
pub struct ScoredDraws {
    pub draws: Draws,
    pub num_exploits: usize,
    /// Row-major `count × |E|`.
    pub delta: Vec<f64>,
}

impl ScoredDraws {
    pub fn new(game: &GameSpec, draws: Draws) -> Self {
        let ne = game.num_exploits();
        let mut delta = vec![0.0; draws.len() * ne];
        if ne > 0 {
            for (i, d) in delta.chunks_mut(ne).enumerate() {
                game.attack_values_into(draws.config(i), d);
            }
        }
        ScoredDraws {
            draws,
            num_exploits: ne,
            delta,
        }
    }

    fn delta(&self, i: usize) -> &[f64] {
        &self.delta[i * self.num_exploits..(i + 1) * self.num_exploits]
    }
}

/// Empirical best response on a fixed set of draws.
#[derive(Clone, Debug)]
pub struct BestResponse {
    pub value: f64,
    pub choice: HashMap<Observation, usize>,
    /// Share of draws on which each exploit is chosen.
    pub frequencies: Vec<f64>,
}

impl BestResponse {
    pub fn strategy(&self) -> PureAttackStrategy {
        PureAttackStrategy {
            choice: self.choice.clone(),
        }
    }
}

/// Groups draws by observation and picks, per group, the exploit with the
/// largest summed attack value (smallest index on ties).
pub fn best_response_on(scored: &ScoredDraws) -> BestResponse {
    group_best_response(scored, |i, out| {
        out.clear();
        out.extend(scored.draws.observation(i));
    })
}

/// Empirical best response when every draw is seen through `mask`,
/// ignoring the masks stored in `scored`.
pub fn fixed_mask_best_response(scored: &ScoredDraws, mask: &[u8]) -> BestResponse {
    group_best_response(scored, |i, out| {
        out.clear();
        out.extend(
            scored
                .draws
                .config(i)
                .iter()
                .zip(mask)
                .map(|(&x, &y)| if y == 1 { x } else { 0 }),
        );
    })
}

fn group_best_response(scored: &ScoredDraws, observe: impl Fn(usize, &mut Vec<AttrValue>)) -> BestResponse {
    let ne = scored.num_exploits;
    let count = scored.draws.len();
    if ne == 0 || count == 0 {
        return BestResponse {
            value: 0.0,
            choice: HashMap::new(),
            frequencies: vec![0.0; ne],
        };
    }
    let mut groups: HashMap<Vec<AttrValue>, usize> = HashMap::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut obs = Vec::with_capacity(scored.draws.joint_len);
    for i in 0..count {
        observe(i, &mut obs);
        let g = match groups.get(&obs) {
            Some(&g) => g,
            None => {
                groups.insert(obs.clone(), sizes.len());
                sums.extend(std::iter::repeat_n(0.0, ne));
                sizes.push(0);
                sizes.len() - 1
            }
        };
        sizes[g] += 1;
        for (s, d) in sums[g * ne..(g + 1) * ne].iter_mut().zip(scored.delta(i)) {
            *s += d;
        }
    }
    let mut best_of = vec![0; sizes.len()];
    let mut total = 0.0;
    let mut frequencies = vec![0.0; ne];
    // reduce in first-seen order so the float sum is reproducible
    for (g, best) in best_of.iter_mut().enumerate() {
        let s = &sums[g * ne..(g + 1) * ne];
        for e in 1..ne {
            if s[e] > s[*best] {
                *best = e;
            }
        }
        total += s[*best];
        frequencies[*best] += sizes[g] as f64;
    }
    let choice = groups.into_iter().map(|(o, g)| (Observation(o), best_of[g])).collect();
    let m = count as f64;
    frequencies.iter_mut().for_each(|f| *f /= m);
    BestResponse {
        value: total / m,
        choice,
        frequencies,
    }
}

fn draw_scored(sampler: &dyn DefenderSampler, game: &GameSpec, samples: usize, seed: u64) -> Result<ScoredDraws> {
    if samples == 0 {
        return Err(CmgError::Argument("evaluation needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ScoredDraws::new(game, sampler.draw(&mut rng, samples)?))
}

/// Attack value of the empirical best response to `sampler`.
pub fn empirical_best_response(
    sampler: &dyn DefenderSampler,
    game: &GameSpec,
    samples: usize,
    seed: u64,
) -> Result<BestResponse> {
    Ok(best_response_on(&draw_scored(sampler, game, samples, seed)?))
}

/// Masks seen in an evaluation and how often each attribute is hidden.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskSupport {
    /// Share of draws in which each joint attribute is masked.
    pub masked_probability: Vec<f64>,
    /// Most frequent masks (1 = visible) with their empirical probability.
    pub masks: Vec<(Vec<u8>, f64)>,
    pub distinct_masks: usize,
}

const SUPPORT_COLUMNS: usize = 50;

fn mask_support(draws: &Draws) -> MaskSupport {
    let len = draws.joint_len;
    let count = draws.len();
    let mut masked = vec![0usize; len];
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for i in 0..count {
        let y = draws.mask(i);
        for (m, &b) in masked.iter_mut().zip(y) {
            *m += usize::from(b == 0);
        }
        *counts.entry(y).or_default() += 1;
    }
    let m = count.max(1) as f64;
    let mut masks: Vec<(Vec<u8>, f64)> = counts.iter().map(|(y, &c)| (y.to_vec(), c as f64 / m)).collect();
    masks.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let distinct_masks = masks.len();
    masks.truncate(SUPPORT_COLUMNS);
    MaskSupport {
        masked_probability: masked.iter().map(|&c| c as f64 / m).collect(),
        masks,
        distinct_masks,
    }
}

/// Defender loss estimate against the empirical best response.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// `attack_value + cost_term`.
    pub defender_loss: f64,
    pub attack_value: f64,
    pub cost_term: f64,
    pub samples: usize,
    pub seed: u64,
    /// Per-exploit selection probability, weighted by observation frequency.
    pub exploit_frequencies: Vec<f64>,
    pub mask_support: MaskSupport,
}

pub fn evaluate(sampler: &dyn DefenderSampler, game: &GameSpec, samples: usize, seed: u64) -> Result<EvalReport> {
    let scored = draw_scored(sampler, game, samples, seed)?;
    Ok(report(&scored, game, seed))
}

/// Evaluation on draws that were already taken.
pub fn report(scored: &ScoredDraws, game: &GameSpec, seed: u64) -> EvalReport {
    let br = best_response_on(scored);
    let draws = &scored.draws;
    let cost_term = (0..draws.len()).map(|i| game.mask_cost(draws.mask(i))).sum::<f64>() / draws.len().max(1) as f64;
    EvalReport {
        defender_loss: br.value + cost_term,
        attack_value: br.value,
        cost_term,
        samples: draws.len(),
        seed,
        exploit_frequencies: br.frequencies,
        mask_support: mask_support(draws),
    }
}

/// An attacker strategy that can be queried on observations.
pub trait AttackerPolicy {
    /// Exploit probabilities for one observation.
    fn probabilities(&self, obs: &[AttrValue], num_exploits: usize) -> Vec<f64>;
}

impl AttackerPolicy for AttackerNet {
    fn probabilities(&self, obs: &[AttrValue], _num_exploits: usize) -> Vec<f64> {
        let x = Array2::from_shape_fn((1, obs.len()), |(_, j)| f64::from(obs[j]));
        AttackerNet::probabilities(self, x.view()).row(0).to_vec()
    }
}

impl AttackerPolicy for MixedAttackStrategy {
    fn probabilities(&self, obs: &[AttrValue], num_exploits: usize) -> Vec<f64> {
        match self.lookup(&Observation(obs.to_vec())) {
            Some(p) => p.to_vec(),
            None => vec![1.0 / num_exploits as f64; num_exploits],
        }
    }
}

impl AttackerPolicy for PureAttackStrategy {
    fn probabilities(&self, obs: &[AttrValue], num_exploits: usize) -> Vec<f64> {
        let mut p = vec![0.0; num_exploits];
        match self.choice.get(&Observation(obs.to_vec())) {
            Some(&e) => p[e] = 1.0,
            None => p.fill(1.0 / num_exploits as f64),
        }
        p
    }
}

/// Plays every exploit with equal probability.
pub struct UniformAttacker;

impl AttackerPolicy for UniformAttacker {
    fn probabilities(&self, _obs: &[AttrValue], num_exploits: usize) -> Vec<f64> {
        vec![1.0 / num_exploits as f64; num_exploits]
    }
}

/// Value of `attacker` on the given draws.
pub fn attacker_value_on(scored: &ScoredDraws, attacker: &dyn AttackerPolicy) -> f64 {
    let ne = scored.num_exploits;
    let count = scored.draws.len();
    if ne == 0 || count == 0 {
        return 0.0;
    }
    let mut cache: HashMap<Vec<AttrValue>, Vec<f64>> = HashMap::new();
    let mut total = 0.0;
    for i in 0..count {
        let obs = scored.draws.observation(i);
        let z = cache.entry(obs).or_insert_with_key(|o| attacker.probabilities(o, ne));
        total += z.iter().zip(scored.delta(i)).map(|(p, d)| p * d).sum::<f64>();
    }
    total / count as f64
}

/// Empirical best-response value minus the value `attacker` achieves on the
/// same draws.
pub fn equilibrium_gap(
    sampler: &dyn DefenderSampler,
    attacker: &dyn AttackerPolicy,
    game: &GameSpec,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let scored = draw_scored(sampler, game, samples, seed)?;
    Ok(best_response_on(&scored).value - attacker_value_on(&scored, attacker))
}
