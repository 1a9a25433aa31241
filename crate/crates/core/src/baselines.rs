//! Configuration-independent masking baselines: a uniformly random mask and
//! forward-greedy attribute masking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::{fixed_mask_best_response, DefenderSampler, Draws, FixedMaskSampler, ScoredDraws};
use crate::game::{GameSpec, Mask};

/// One joint mask over `m` devices of `n` attributes, every bit a fair coin.
pub fn random_mask(n: usize, m: usize, seed: u64) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mask((0..n * m).map(|_| u8::from(rng.gen_bool(0.5))).collect())
}

/// Progress of forward-greedy masking.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyState {
    pub mask: Mask,
    /// Joint attribute indices in the order they were masked.
    pub masked: Vec<usize>,
    /// Estimated defender loss of `mask`.
    pub loss: f64,
}

impl GreedyState {
    fn start(joint_len: usize) -> Self {
        GreedyState {
            mask: Mask::all_visible(joint_len),
            masked: Vec::new(),
            loss: f64::INFINITY,
        }
    }
}

/// Starting from no masking, repeatedly masks the attribute whose masking
/// lowers the estimated loss the most, until no attribute lowers it. Losses
/// are the empirical best-response value plus the mask cost, all candidates
/// scored on the same `eval_budget` prior draws.
pub fn greedy_mask(game: &GameSpec, eval_budget: usize, seed: u64) -> Result<GreedyState> {
    game.validate()?;
    let len = game.joint_len();
    let sampler = FixedMaskSampler::new(game, &Mask::all_visible(len))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Draws = sampler.draw(&mut rng, eval_budget.max(1))?;
    let scored = ScoredDraws::new(game, draws);
    let loss_of = |mask: &Mask| fixed_mask_best_response(&scored, &mask.0).value + game.mask_cost(&mask.0);

    let mut state = GreedyState::start(len);
    state.loss = loss_of(&state.mask);
    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..len).filter(|&j| state.mask.0[j] == 1) {
            let mut candidate = state.mask.clone();
            candidate.0[j] = 0;
            let loss = loss_of(&candidate);
            if best.is_none_or(|(_, b)| loss < b) {
                best = Some((j, loss));
            }
        }
        match best {
            Some((j, loss)) if state.loss - loss > 0.0 => {
                state.mask.0[j] = 0;
                state.masked.push(j);
                state.loss = loss;
            }
            _ => return Ok(state),
        }
    }
}
