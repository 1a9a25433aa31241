use super::model::{Configuration, GameSpec, Observation};
use super::sampling::enumerate_support;
use crate::error::{CmgError, Result};
use crate::strategy::DefenderTable;

/// Attacker belief `b(x; x̃)` over configurations after seeing `obs`.
///
/// The mask is read off the zero entries of `obs`. Returned entries have
/// positive probability and sum to one.
pub fn posterior(q: &DefenderTable, game: &GameSpec, obs: &Observation) -> Result<Vec<(Configuration, f64)>> {
    if obs.0.len() != game.joint_len() {
        return Err(CmgError::Schema(format!(
            "observation has length {}, expected {}",
            obs.0.len(),
            game.joint_len()
        )));
    }
    let mask_code = obs.mask().code();
    let mut weights = Vec::new();
    let mut total = 0.0;
    for (x, p) in enumerate_support(game)? {
        if !obs.is_consistent_with(&x) {
            continue;
        }
        let row = q
            .row(&x)
            .ok_or_else(|| CmgError::Domain(format!("defender table has no row for configuration {:?}", x.0)))?;
        let w = row[mask_code] * p;
        if w > 0.0 {
            total += w;
            weights.push((x, w));
        }
    }
    if total <= 0.0 {
        return Err(CmgError::Domain(format!(
            "observation {:?} has zero probability under the prior and defender strategy",
            obs.0
        )));
    }
    for (_, w) in &mut weights {
        *w /= total;
    }
    Ok(weights)
}
