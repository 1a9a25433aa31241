//! Helpers shared by the property tests and the acceptance suite.
#![allow(dead_code)]

pub mod oracle;
pub mod properties;

use cmg_core::game::{AttributeSchema, Configuration, CostFn, Exploit, GameSpec, Prior, ValueFn};
use rand::Rng;

/// Small binary game with `m = 1`: each exploit pins a random subset of the
/// attributes to ±1, costs are uniform on `[0, 0.3)` and the prior is either
/// uniform or a random table.
pub fn random_binary_game<R: Rng>(rng: &mut R, n: usize, num_exploits: usize) -> GameSpec {
    let exploits = (0..num_exploits).map(|_| random_exploit(rng, n)).collect();
    let prior = if rng.gen_bool(0.5) {
        Prior::UniformBinary
    } else {
        let mut rows = Vec::new();
        for x in binary_configs(n) {
            if rng.gen_bool(0.6) {
                rows.push((Configuration(x), rng.gen_range(0.1..1.0)));
            }
        }
        if rows.is_empty() {
            rows.push((Configuration(vec![1; n]), 1.0));
        }
        let total: f64 = rows.iter().map(|r| r.1).sum();
        rows.iter_mut().for_each(|r| r.1 /= total);
        Prior::Table(rows)
    };
    GameSpec {
        schema: AttributeSchema::binary(n),
        m: 1,
        prior,
        exploits,
        value: ValueFn::HalfSumPlusOne,
        cost: CostFn {
            per_attribute: (0..n).map(|_| rng.gen_range(0.0..0.3)).collect(),
        },
    }
}

/// Pins each attribute to 1 or -1 with probability one half.
pub fn random_exploit<R: Rng>(rng: &mut R, n: usize) -> Exploit {
    let mut required = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.5) {
            required.push((i, vec![if rng.gen_bool(0.5) { 1 } else { -1 }]));
        }
    }
    Exploit::new(required)
}

/// Every vector in `{-1, 1}^len`, attribute 0 varying fastest.
pub fn binary_configs(len: usize) -> Vec<Vec<i32>> {
    (0..1usize << len)
        .map(|code| (0..len).map(|i| if (code >> i) & 1 == 1 { 1 } else { -1 }).collect())
        .collect()
}
