//! Invariants checked on randomly drawn small games. Each property takes a
//! seed and builds its inputs from it.

use std::collections::HashMap;

use cmg_core::eval::{
    attacker_value_on, best_response_on, DefenderSampler, ScoredDraws, TableSampler, UniformAttacker,
};
use cmg_core::exact::{solve_lp_cg, CgOptions};
use cmg_core::experiment::{run_method, Method, RunConfig};
use cmg_core::gam::{train_gam, TrainConfig};
use cmg_core::game::{enumerate_support, observe, posterior, Configuration, GameSpec, Mask, Observation};
use cmg_core::strategy::{DefenderTable, PureAttackStrategy};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_binary_game, random_exploit};

type Outcome = Result<(), TestCaseError>;

fn small_game(rng: &mut ChaCha8Rng) -> GameSpec {
    let n = rng.gen_range(1..=3);
    let e = rng.gen_range(1..=2);
    random_binary_game(rng, n, e)
}

fn random_table(rng: &mut ChaCha8Rng, game: &GameSpec) -> DefenderTable {
    let len = game.joint_len();
    let rows = enumerate_support(game)
        .unwrap()
        .into_iter()
        .map(|(x, _)| {
            // some exact zeros so unreachable observations occur
            let mut q: Vec<f64> = (0..1 << len)
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
                .collect();
            let k = rng.gen_range(0..q.len());
            q[k] += 0.1;
            let s: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= s);
            (x, q)
        })
        .collect();
    DefenderTable::new(len, rows).unwrap()
}

/// The attacker's belief after any reachable observation is a distribution
/// over configurations consistent with it.
pub fn posterior_normalization(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = small_game(&mut rng);
    let q = random_table(&mut rng, &game);
    let len = game.joint_len();
    for (x, row) in q.rows() {
        for (code, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let obs = observe(x, &Mask::from_code(code, len)).unwrap();
            let belief = posterior(&q, &game, &obs).unwrap();
            let total: f64 = belief.iter().map(|b| b.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "posterior sums to {total}");
            prop_assert!(belief.iter().all(|(c, w)| *w > 0.0 && obs.is_consistent_with(c)));
            prop_assert!(belief.iter().any(|(c, _)| c == x));
        }
    }
    Ok(())
}

/// Exact solutions are probability tables on both sides.
pub fn simplex_constraints(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = small_game(&mut rng);
    let eq = solve_lp_cg(&game, &CgOptions::default()).unwrap();
    prop_assert!(eq.defender.simplex_violation() <= 1e-7);
    for (_, z) in &eq.attacker.z {
        let total: f64 = z.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-6, "attacker row sums to {total}");
        prop_assert!(z.iter().all(|&p| p >= -1e-9));
    }
    Ok(())
}

/// `x ⊙ y` keeps visible entries, zeroes masked ones and gives back `y`.
pub fn observation_round_trip(x: Vec<i32>, mask_bits: Vec<bool>) -> Outcome {
    let len = x.len().min(mask_bits.len());
    let x = Configuration(x[..len].to_vec());
    let y = Mask(mask_bits[..len].iter().map(|&b| u8::from(b)).collect());
    let obs = observe(&x, &y).unwrap();
    prop_assert_eq!(obs.mask(), y.clone());
    for j in 0..len {
        prop_assert_eq!(obs.0[j], if y.0[j] == 1 { x.0[j] } else { 0 });
    }
    prop_assert!(obs.is_consistent_with(&x));
    prop_assert_eq!(Mask::from_code(y.code(), len), y);
    Ok(())
}

/// No attacker does better on a sample than the empirical best response,
/// which attains exactly its reported value.
pub fn best_response_dominance(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = small_game(&mut rng);
    let q = random_table(&mut rng, &game);
    let sampler = TableSampler::new(&game, &q).unwrap();
    let draws = sampler.draw(&mut rng, 500).unwrap();
    let scored = ScoredDraws::new(&game, draws);
    let br = best_response_on(&scored);
    let ne = game.num_exploits();
    let mut choice = HashMap::new();
    for i in 0..scored.draws.len() {
        choice
            .entry(Observation(scored.draws.observation(i)))
            .or_insert_with(|| rng.gen_range(0..ne));
    }
    let random = PureAttackStrategy { choice };
    let own = attacker_value_on(&scored, &br.strategy());
    prop_assert!((own - br.value).abs() < 1e-9, "{own} vs {}", br.value);
    prop_assert!(br.value >= attacker_value_on(&scored, &UniformAttacker) - 1e-12);
    prop_assert!(br.value >= attacker_value_on(&scored, &random) - 1e-12);
    Ok(())
}

/// Giving the attacker another exploit never lowers the defender's loss.
pub fn lp_monotonicity(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = small_game(&mut rng);
    let mut bigger = game.clone();
    let n = game.n();
    bigger.exploits.push(random_exploit(&mut rng, n));
    let a = solve_lp_cg(&game, &CgOptions::default()).unwrap().defender_loss;
    let b = solve_lp_cg(&bigger, &CgOptions::default()).unwrap().defender_loss;
    prop_assert!(b >= a - 1e-6, "{a} then {b}");
    Ok(())
}

/// Same game and seed give bit-identical training and evaluation.
pub fn determinism(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = small_game(&mut rng);
    let train = TrainConfig {
        batch: 64,
        iters: 6,
        validation: 64,
        hidden: Some(vec![8]),
        seed,
        ..TrainConfig::default()
    };
    let a = train_gam(&game, &train).unwrap();
    let b = train_gam(&game, &train).unwrap();
    prop_assert_eq!(&a.loss_history, &b.loss_history);
    prop_assert_eq!(&a.generator, &b.generator);
    prop_assert_eq!(&a.attacker, &b.attacker);
    let cfg = RunConfig {
        eval_samples: 2000,
        greedy_budget: 2000,
        ..RunConfig::default()
    };
    for method in [Method::Greedy, Method::Random] {
        let x = run_method(&game, method, seed, &cfg).unwrap();
        let y = run_method(&game, method, seed, &cfg).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&x.report).unwrap(),
            serde_json::to_string(&y.report).unwrap()
        );
    }
    Ok(())
}

/// Configurations and masks for the round-trip property.
pub fn observation_inputs() -> impl Strategy<Value = (Vec<i32>, Vec<bool>)> {
    (1usize..12).prop_flat_map(|len| {
        (
            prop::collection::vec(prop_oneof![-1..=-1, 1..=3], len),
            prop::collection::vec(any::<bool>(), len),
        )
    })
}
