//! Explicit strategy tables for enumerable games.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CmgError, Result};
use crate::game::{Configuration, Mask, Observation};

/// Defender mixed strategy `q(y; x)`: for each support configuration a
/// probability vector over all `2^(m·n)` joint masks, indexed by [`Mask::code`].
#[derive(Clone, Debug, PartialEq)]
pub struct DefenderTable {
    joint_len: usize,
    configs: Vec<Configuration>,
    probs: Vec<Vec<f64>>,
    index: HashMap<Configuration, usize>,
}

impl DefenderTable {
    pub fn new(joint_len: usize, rows: Vec<(Configuration, Vec<f64>)>) -> Result<Self> {
        let masks = 1usize
            .checked_shl(joint_len as u32)
            .ok_or_else(|| CmgError::Capacity(format!("2^{joint_len} masks")))?;
        let mut configs = Vec::with_capacity(rows.len());
        let mut probs = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        for (x, q) in rows {
            if x.0.len() != joint_len || q.len() != masks {
                return Err(CmgError::Schema(format!(
                    "defender row for {:?} has wrong dimensions",
                    x.0
                )));
            }
            index.insert(x.clone(), configs.len());
            configs.push(x);
            probs.push(q);
        }
        Ok(DefenderTable {
            joint_len,
            configs,
            probs,
            index,
        })
    }

    /// Same mask distribution for every configuration.
    pub fn constant(joint_len: usize, configs: &[Configuration], dist: &[f64]) -> Result<Self> {
        Self::new(joint_len, configs.iter().map(|x| (x.clone(), dist.to_vec())).collect())
    }

    /// Deterministically plays `mask` everywhere.
    pub fn pure(joint_len: usize, configs: &[Configuration], mask: &Mask) -> Result<Self> {
        let mut dist = vec![0.0; 1 << joint_len];
        dist[mask.code()] = 1.0;
        Self::constant(joint_len, configs, &dist)
    }

    pub fn joint_len(&self) -> usize {
        self.joint_len
    }

    pub fn num_masks(&self) -> usize {
        1 << self.joint_len
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn row(&self, x: &Configuration) -> Option<&[f64]> {
        self.index.get(x).map(|&i| self.probs[i].as_slice())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Configuration, &[f64])> {
        self.configs.iter().zip(self.probs.iter().map(Vec::as_slice))
    }

    /// Largest deviation of any row from the probability simplex.
    pub fn simplex_violation(&self) -> f64 {
        self.probs
            .iter()
            .map(|q| {
                let neg = q.iter().map(|&p| (-p).max(0.0)).fold(0.0, f64::max);
                let sum = (q.iter().sum::<f64>() - 1.0).abs();
                neg.max(sum)
            })
            .fold(0.0, f64::max)
    }
}

/// Attacker mixed strategy `z(e; x̃)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixedAttackStrategy {
    pub num_exploits: usize,
    pub z: Vec<(Observation, Vec<f64>)>,
}

impl MixedAttackStrategy {
    pub fn lookup(&self, obs: &Observation) -> Option<&[f64]> {
        self.z.iter().find(|(o, _)| o == obs).map(|(_, p)| p.as_slice())
    }
}

/// Deterministic attacker strategy: one exploit per observation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PureAttackStrategy {
    pub choice: HashMap<Observation, usize>,
}

impl PureAttackStrategy {
    pub fn to_mixed(&self, num_exploits: usize) -> MixedAttackStrategy {
        let mut z: Vec<_> = self
            .choice
            .iter()
            .map(|(o, &e)| {
                let mut p = vec![0.0; num_exploits];
                p[e] = 1.0;
                (o.clone(), p)
            })
            .collect();
        z.sort_by(|a, b| a.0.cmp(&b.0));
        MixedAttackStrategy { num_exploits, z }
    }
}
