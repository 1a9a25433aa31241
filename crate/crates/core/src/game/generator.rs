//! Random OS / application / port instances and the case-study game.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{AttrValue, AttributeRole, AttributeSchema, CostFn, Exploit, GameSpec, Prior, ValueFn};
use crate::error::{CmgError, Result};

const OS_COUNT: usize = 3;

/// Parameters of a generated structured instance.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredParams {
    pub n: usize,
    pub m: usize,
    pub num_exploits: usize,
    pub max_version: AttrValue,
    /// Uniform per-attribute masking cost `c`.
    pub cost: f64,
    pub seed: u64,
}

/// Role of each attribute for an `n`-attribute structured device:
/// `[OS flags ×3 | OS versions ×3 | app flag/version pairs | ports]`.
///
/// Ports take the last `⌈n/2⌉` slots; an odd remainder in the application
/// block becomes one extra port.
pub fn structured_roles(n: usize) -> Result<Vec<AttributeRole>> {
    let ports = n.div_ceil(2);
    let middle = n.checked_sub(2 * OS_COUNT + ports).ok_or_else(|| {
        CmgError::Configuration(format!(
            "n = {n} cannot hold 3 OS flags, 3 OS versions and {ports} ports"
        ))
    })?;
    let app_pairs = middle / 2;
    let ports = ports + middle % 2;
    let mut roles = Vec::with_capacity(n);
    roles.extend([AttributeRole::OsFlag; OS_COUNT]);
    roles.extend([AttributeRole::OsVersion; OS_COUNT]);
    for _ in 0..app_pairs {
        roles.push(AttributeRole::AppFlag);
        roles.push(AttributeRole::AppVersion);
    }
    roles.extend(std::iter::repeat_n(AttributeRole::Port, ports));
    Ok(roles)
}

pub(crate) fn domain_for(role: AttributeRole, max_value: AttrValue) -> Vec<AttrValue> {
    match role {
        AttributeRole::OsFlag | AttributeRole::AppFlag | AttributeRole::Port => vec![-1, 1],
        AttributeRole::OsVersion | AttributeRole::AppVersion | AttributeRole::Os | AttributeRole::App => {
            std::iter::once(-1).chain(1..=max_value).collect()
        }
    }
}

fn version_range<R: Rng>(rng: &mut R, max_value: AttrValue) -> Vec<AttrValue> {
    let a = rng.gen_range(1..=max_value);
    let b = rng.gen_range(1..=max_value);
    (a.min(b)..=a.max(b)).collect()
}

/// Samples a structured game: devices i.i.d. from the OS / app / port model,
/// exploits targeting one OS version range, optionally one application
/// version range, and one open port.
pub fn generate_structured_instance(params: &StructuredParams) -> Result<GameSpec> {
    if params.m == 0 {
        return Err(CmgError::Configuration("m must be at least 1".into()));
    }
    if params.max_version < 1 {
        return Err(CmgError::Configuration("V must be at least 1".into()));
    }
    let roles = structured_roles(params.n)?;
    let domains = roles.iter().map(|&r| domain_for(r, params.max_version)).collect();
    let schema = AttributeSchema::new(domains, params.max_version, Some(roles.clone()))?;

    let idx = |role| -> Vec<usize> {
        roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == role)
            .map(|(i, _)| i)
            .collect()
    };
    let os_flags = idx(AttributeRole::OsFlag);
    let os_versions = idx(AttributeRole::OsVersion);
    let app_flags = idx(AttributeRole::AppFlag);
    let app_versions = idx(AttributeRole::AppVersion);
    let ports = idx(AttributeRole::Port);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let exploits = (0..params.num_exploits)
        .map(|_| {
            let mut req = Vec::new();
            let os = rng.gen_range(0..OS_COUNT);
            req.push((os_flags[os], vec![1]));
            req.push((os_versions[os], version_range(&mut rng, params.max_version)));
            if !app_flags.is_empty() && rng.gen_bool(0.5) {
                let app = rng.gen_range(0..app_flags.len());
                req.push((app_flags[app], vec![1]));
                req.push((app_versions[app], version_range(&mut rng, params.max_version)));
            }
            req.push((ports[rng.gen_range(0..ports.len())], vec![-1]));
            Exploit::new(req)
        })
        .collect();

    let game = GameSpec {
        schema,
        m: params.m,
        prior: Prior::Structured {
            seed: Some(params.seed),
        },
        exploits,
        value: ValueFn::OnePlusApps,
        cost: CostFn::uniform(params.n, params.cost),
    };
    game.validate()?;
    Ok(game)
}

/// Parameters of a random binary instance: uniform prior over `{-1, 1}ⁿ`
/// per device and value `1 + ½Σ(xᵢ+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryParams {
    pub n: usize,
    pub m: usize,
    pub num_exploits: usize,
    pub cost: f64,
    pub seed: u64,
}

/// Samples a binary game whose exploits each demand one or two distinct
/// attributes equal to 1.
pub fn generate_binary_instance(params: &BinaryParams) -> Result<GameSpec> {
    if params.n == 0 || params.m == 0 {
        return Err(CmgError::Configuration("n and m must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let exploits = (0..params.num_exploits)
        .map(|_| {
            let k = rng.gen_range(1..=params.n.min(2));
            let attrs = rand::seq::index::sample(&mut rng, params.n, k);
            Exploit::new(attrs.into_iter().map(|i| (i, vec![1])))
        })
        .collect();
    let game = GameSpec {
        schema: AttributeSchema::binary(params.n),
        m: params.m,
        prior: Prior::UniformBinary,
        exploits,
        value: ValueFn::HalfSumPlusOne,
        cost: CostFn::uniform(params.n, params.cost),
    };
    game.validate()?;
    Ok(game)
}

/// One row of the case-study exploit table: OS slot and its versions,
/// optional application slot and its versions, and the required open port.
/// Slot numbers index attributes directly.
pub type CaseStudyExploit = (
    usize,
    &'static [AttrValue],
    Option<(usize, &'static [AttrValue])>,
    usize,
);

pub const CASE_STUDY_EXPLOITS: [CaseStudyExploit; 19] = [
    (0, &[2, 3], Some((3, &[1])), 19),
    (0, &[2], Some((8, &[1, 2, 3])), 14),
    (0, &[2, 3], None, 17),
    (1, &[2, 3], Some((3, &[1, 2])), 14),
    (1, &[1], Some((4, &[1, 2])), 12),
    (1, &[1, 2, 3], Some((4, &[3])), 17),
    (1, &[1, 2, 3], Some((5, &[1, 2, 3])), 14),
    (1, &[3], Some((5, &[3])), 19),
    (1, &[2], Some((6, &[1])), 12),
    (1, &[1, 2], Some((7, &[2])), 11),
    (1, &[2, 3], Some((7, &[1, 2, 3])), 17),
    (1, &[3], None, 16),
    (2, &[2, 3], Some((3, &[1, 2])), 12),
    (2, &[2, 3], Some((5, &[1, 2])), 11),
    (2, &[1, 2], Some((5, &[3])), 12),
    (2, &[1, 2], Some((6, &[1, 2, 3])), 12),
    (2, &[1, 2, 3], Some((8, &[1, 2, 3])), 18),
    (2, &[1, 2, 3], Some((9, &[1, 2, 3])), 13),
    (2, &[1, 2, 3], None, 10),
];

/// The 20-attribute single-device case study: slots 0–2 are operating
/// systems, 3–9 applications, 10–19 ports. OS and application slots read `-1`
/// when absent and their version (1–3) otherwise.
pub fn case_study_game() -> GameSpec {
    const V: AttrValue = 3;
    let mut roles = vec![AttributeRole::Os; 3];
    roles.extend([AttributeRole::App; 7]);
    roles.extend([AttributeRole::Port; 10]);
    let domains = roles.iter().map(|&r| domain_for(r, V)).collect();
    let schema = AttributeSchema::new(domains, V, Some(roles)).expect("static schema is valid");
    let exploits = CASE_STUDY_EXPLOITS
        .iter()
        .map(|&(os, os_versions, app, port)| {
            let mut req = vec![(os, os_versions.to_vec()), (port, vec![-1])];
            if let Some((a, versions)) = app {
                req.push((a, versions.to_vec()));
            }
            Exploit::new(req)
        })
        .collect();
    GameSpec {
        schema,
        m: 1,
        prior: Prior::Structured { seed: None },
        exploits,
        value: ValueFn::OnePlusApps,
        cost: CostFn::uniform(20, 0.01),
    }
}
