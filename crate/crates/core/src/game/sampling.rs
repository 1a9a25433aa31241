use rand::Rng;

use super::model::{AttrValue, AttributeRole, AttributeSchema, Configuration, GameSpec, Prior};
use crate::error::{CmgError, Result};

/// Hard limit on exhaustively enumerated joint states.
pub const ENUMERATION_CAP: usize = 1 << 20;

/// Draws i.i.d. joint configurations from a game's prior.
#[derive(Clone, Debug)]
pub struct PriorSampler {
    kind: SamplerKind,
    m: usize,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Table {
        configs: Vec<Vec<AttrValue>>,
        cumulative: Vec<f64>,
    },
    Uniform {
        domains: Vec<Vec<AttrValue>>,
    },
    Structured(StructuredLayout),
}

/// Attribute positions of a structured device, recovered from schema roles.
#[derive(Clone, Debug)]
pub(crate) struct StructuredLayout {
    n: usize,
    max_value: AttrValue,
    /// `(flag attribute, version attribute)`; the flag is `None` for folded slots.
    os: Vec<(Option<usize>, usize)>,
    apps: Vec<(Option<usize>, usize)>,
    ports: Vec<usize>,
}

impl StructuredLayout {
    pub(crate) fn from_schema(schema: &AttributeSchema) -> Result<Self> {
        let roles = schema
            .roles()
            .ok_or_else(|| CmgError::Configuration("structured prior needs attribute roles".into()))?;
        let of = |role: AttributeRole| -> Vec<usize> {
            roles
                .iter()
                .enumerate()
                .filter(|(_, &r)| r == role)
                .map(|(i, _)| i)
                .collect()
        };
        let pair = |flags: Vec<usize>, versions: Vec<usize>, folded: Vec<usize>, what: &str| {
            if flags.len() != versions.len() {
                return Err(CmgError::Configuration(format!(
                    "{} {what} flags but {} {what} versions",
                    flags.len(),
                    versions.len()
                )));
            }
            let mut out: Vec<(Option<usize>, usize)> = flags.into_iter().map(Some).zip(versions).collect();
            out.extend(folded.into_iter().map(|v| (None, v)));
            Ok(out)
        };
        let os = pair(
            of(AttributeRole::OsFlag),
            of(AttributeRole::OsVersion),
            of(AttributeRole::Os),
            "OS",
        )?;
        let apps = pair(
            of(AttributeRole::AppFlag),
            of(AttributeRole::AppVersion),
            of(AttributeRole::App),
            "app",
        )?;
        let ports = of(AttributeRole::Port);
        if os.is_empty() {
            return Err(CmgError::Configuration("structured layout has no OS attributes".into()));
        }
        if ports.is_empty() {
            return Err(CmgError::Configuration(
                "structured layout has no port attributes".into(),
            ));
        }
        Ok(StructuredLayout {
            n: schema.n(),
            max_value: schema.max_value(),
            os,
            apps,
            ports,
        })
    }

    pub(crate) fn sample_device<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [AttrValue]) {
        debug_assert_eq!(out.len(), self.n);
        out.iter_mut().for_each(|v| *v = -1);
        let installed = rng.gen_range(0..self.os.len());
        let (flag, version) = self.os[installed];
        if let Some(f) = flag {
            out[f] = 1;
        }
        out[version] = rng.gen_range(1..=self.max_value);
        for &(flag, version) in &self.apps {
            if rng.gen_bool(0.5) {
                if let Some(f) = flag {
                    out[f] = 1;
                }
                out[version] = rng.gen_range(1..=self.max_value);
            }
        }
        // Uniform over port patterns with at least one open (-1) port.
        loop {
            let mut any_open = false;
            for &p in &self.ports {
                let open = rng.gen_bool(0.5);
                out[p] = if open { -1 } else { 1 };
                any_open |= open;
            }
            if any_open {
                break;
            }
        }
    }
}

impl PriorSampler {
    pub fn new(game: &GameSpec) -> Result<Self> {
        let kind = match &game.prior {
            Prior::Table(rows) => {
                let mut acc = 0.0;
                let cumulative = rows
                    .iter()
                    .map(|(_, p)| {
                        acc += p;
                        acc
                    })
                    .collect();
                SamplerKind::Table {
                    configs: rows.iter().map(|(x, _)| x.0.clone()).collect(),
                    cumulative,
                }
            }
            Prior::UniformBinary => SamplerKind::Uniform {
                domains: game.schema.domains().to_vec(),
            },
            Prior::Structured { .. } => SamplerKind::Structured(StructuredLayout::from_schema(&game.schema)?),
        };
        Ok(PriorSampler { kind, m: game.m })
    }

    /// Fills `out` (length `m·n`) with one joint configuration.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [AttrValue]) {
        match &self.kind {
            SamplerKind::Table { configs, cumulative } => {
                let total = *cumulative.last().unwrap_or(&1.0);
                let u = rng.gen::<f64>() * total;
                let idx = cumulative.partition_point(|&c| c <= u).min(configs.len() - 1);
                out.copy_from_slice(&configs[idx]);
            }
            SamplerKind::Uniform { domains } => {
                let n = domains.len();
                for (j, slot) in out.iter_mut().enumerate() {
                    let d = &domains[j % n];
                    *slot = d[rng.gen_range(0..d.len())];
                }
            }
            SamplerKind::Structured(layout) => {
                for device in out.chunks_mut(layout.n) {
                    layout.sample_device(rng, device);
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, joint_len: usize) -> Configuration {
        let mut out = vec![0; joint_len];
        self.sample_into(rng, &mut out);
        Configuration(out)
    }

    pub fn devices(&self) -> usize {
        self.m
    }
}

/// Lists every joint configuration with positive prior probability.
pub fn enumerate_support(game: &GameSpec) -> Result<Vec<(Configuration, f64)>> {
    match &game.prior {
        Prior::Table(rows) => {
            if rows.len() > ENUMERATION_CAP {
                return Err(capacity(rows.len()));
            }
            Ok(rows.iter().filter(|(_, p)| *p > 0.0).cloned().collect())
        }
        Prior::UniformBinary => {
            let n = game.n();
            let joint = game.joint_len();
            let mut size: usize = 1;
            for j in 0..joint {
                size = size
                    .checked_mul(game.schema.domain(j % n).len())
                    .filter(|&s| s <= ENUMERATION_CAP)
                    .ok_or_else(|| capacity(usize::MAX))?;
            }
            let p = 1.0 / size as f64;
            let mut out = Vec::with_capacity(size);
            let mut digits = vec![0usize; joint];
            for _ in 0..size {
                let x = digits
                    .iter()
                    .enumerate()
                    .map(|(j, &d)| game.schema.domain(j % n)[d])
                    .collect();
                out.push((Configuration(x), p));
                // odometer, first attribute fastest
                for (j, d) in digits.iter_mut().enumerate() {
                    *d += 1;
                    if *d < game.schema.domain(j % n).len() {
                        break;
                    }
                    *d = 0;
                }
            }
            Ok(out)
        }
        Prior::Structured { .. } => Err(CmgError::Capacity(
            "structured priors are sample-only; use the GAM solver".into(),
        )),
    }
}

fn capacity(size: usize) -> CmgError {
    let shown = if size == usize::MAX {
        "more than 2^20".to_string()
    } else {
        size.to_string()
    };
    CmgError::Capacity(format!(
        "support has {shown} joint configurations, above the exact-solver cap of {ENUMERATION_CAP}; use the GAM solver"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::model::{CostFn, Exploit, ValueFn};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binary_game(n: usize, m: usize) -> GameSpec {
        GameSpec {
            schema: AttributeSchema::binary(n),
            m,
            prior: Prior::UniformBinary,
            exploits: vec![Exploit::default()],
            value: ValueFn::HalfSumPlusOne,
            cost: CostFn::uniform(n, 0.01),
        }
    }

    #[test]
    fn uniform_binary_support_sizes() {
        let s = enumerate_support(&binary_game(2, 1)).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|(_, p)| (*p - 0.25).abs() < 1e-15));
        let s = enumerate_support(&binary_game(2, 2)).unwrap();
        assert_eq!(s.len(), 16);
        assert!(s.iter().all(|(_, p)| (*p - 0.0625).abs() < 1e-15));
        let mut xs: Vec<_> = s.iter().map(|(x, _)| x.clone()).collect();
        xs.sort();
        xs.dedup();
        assert_eq!(xs.len(), 16);
    }

    #[test]
    fn table_support_is_passthrough() {
        let mut g = binary_game(2, 1);
        let rows = vec![
            (Configuration(vec![1, 1]), 0.5),
            (Configuration(vec![-1, 1]), 0.25),
            (Configuration(vec![1, -1]), 0.25),
        ];
        g.prior = Prior::Table(rows.clone());
        assert_eq!(enumerate_support(&g).unwrap(), rows);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let err = enumerate_support(&binary_game(21, 1)).unwrap_err();
        assert!(matches!(err, CmgError::Capacity(_)));
        assert!(err.to_string().contains("GAM"));
    }

    #[test]
    fn table_sampler_follows_probabilities() {
        let mut g = binary_game(1, 1);
        g.prior = Prior::Table(vec![(Configuration(vec![1]), 0.8), (Configuration(vec![-1]), 0.2)]);
        let sampler = PriorSampler::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ones = (0..20_000).filter(|_| sampler.sample(&mut rng, 1).0[0] == 1).count();
        let freq = ones as f64 / 20_000.0;
        assert!((freq - 0.8).abs() < 0.02, "freq {freq}");
    }
}
