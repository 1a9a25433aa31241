use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CmgError, Result};

/// Integer attribute value. `0` never occurs in a configuration; it marks a
/// suppressed attribute in an observation.
pub type AttrValue = i32;

/// Semantic tag for attributes of structured (OS / application / port) instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeRole {
    OsFlag,
    OsVersion,
    AppFlag,
    AppVersion,
    Port,
    /// Operating system slot holding either `-1` (absent) or its installed version.
    Os,
    /// Application slot holding either `-1` (absent) or its installed version.
    App,
}

impl AttributeRole {
    pub fn is_os(self) -> bool {
        matches!(
            self,
            AttributeRole::OsFlag | AttributeRole::OsVersion | AttributeRole::Os
        )
    }
}

/// Per-attribute value domains for a single device.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSchema {
    domains: Vec<Vec<AttrValue>>,
    max_value: AttrValue,
    roles: Option<Vec<AttributeRole>>,
}

impl AttributeSchema {
    pub fn new(domains: Vec<Vec<AttrValue>>, max_value: AttrValue, roles: Option<Vec<AttributeRole>>) -> Result<Self> {
        if max_value < 1 {
            return Err(CmgError::Schema(format!(
                "maximum attribute value must be >= 1, got {max_value}"
            )));
        }
        for (i, dom) in domains.iter().enumerate() {
            if dom.is_empty() {
                return Err(CmgError::Schema(format!("domain of attribute {i} is empty")));
            }
            for &v in dom {
                if v == 0 {
                    return Err(CmgError::Schema(format!(
                        "domain of attribute {i} contains 0, which is reserved for masked entries"
                    )));
                }
                if v < -1 || v > max_value {
                    return Err(CmgError::Schema(format!(
                        "domain of attribute {i} contains {v}, outside [-1, {max_value}]"
                    )));
                }
            }
        }
        if let Some(r) = &roles {
            if r.len() != domains.len() {
                return Err(CmgError::Schema(format!(
                    "{} roles given for {} attributes",
                    r.len(),
                    domains.len()
                )));
            }
        }
        let domains = domains
            .into_iter()
            .map(|mut d| {
                d.sort_unstable();
                d.dedup();
                d
            })
            .collect();
        Ok(AttributeSchema {
            domains,
            max_value,
            roles,
        })
    }

    /// `n` attributes, each in `{-1, 1}`.
    pub fn binary(n: usize) -> Self {
        AttributeSchema {
            domains: vec![vec![-1, 1]; n],
            max_value: 1,
            roles: None,
        }
    }

    pub fn n(&self) -> usize {
        self.domains.len()
    }

    pub fn max_value(&self) -> AttrValue {
        self.max_value
    }

    pub fn domains(&self) -> &[Vec<AttrValue>] {
        &self.domains
    }

    pub fn domain(&self, i: usize) -> &[AttrValue] {
        &self.domains[i]
    }

    pub fn roles(&self) -> Option<&[AttributeRole]> {
        self.roles.as_deref()
    }

    pub fn role(&self, i: usize) -> Option<AttributeRole> {
        self.roles.as_ref().map(|r| r[i])
    }

    /// Checks that a single-device vector is a valid configuration.
    pub fn validate_device(&self, values: &[AttrValue]) -> Result<()> {
        if values.len() != self.n() {
            return Err(CmgError::Schema(format!(
                "configuration has length {}, schema has {} attributes",
                values.len(),
                self.n()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !self.domains[i].contains(v) {
                return Err(CmgError::Schema(format!(
                    "value {v} of attribute {i} is outside its domain {:?}",
                    self.domains[i]
                )));
            }
        }
        Ok(())
    }
}

/// A (possibly multi-device) true configuration, flattened device by device.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<AttrValue>);

/// Binary visibility vector: `1` keeps an attribute observable, `0` suppresses it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mask(pub Vec<u8>);

impl Mask {
    pub fn all_visible(len: usize) -> Self {
        Mask(vec![1; len])
    }

    pub fn all_masked(len: usize) -> Self {
        Mask(vec![0; len])
    }

    /// Mask whose bits are the binary digits of `code`, attribute 0 being the
    /// least significant bit.
    pub fn from_code(code: usize, len: usize) -> Self {
        Mask((0..len).map(|i| ((code >> i) & 1) as u8).collect())
    }

    pub fn code(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as usize) << i))
    }

    pub fn masked_count(&self) -> usize {
        self.0.iter().filter(|&&b| b == 0).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// What the attacker sees: `x ⊙ y`, with masked attributes reading `0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<AttrValue>);

impl Observation {
    /// The mask that produced this observation.
    pub fn mask(&self) -> Mask {
        Mask(self.0.iter().map(|&v| u8::from(v != 0)).collect())
    }

    /// `(attribute, value)` pairs that remain visible.
    pub fn visible(&self) -> impl Iterator<Item = (usize, AttrValue)> + '_ {
        self.0.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, &v)| (i, v))
    }

    pub fn is_consistent_with(&self, x: &Configuration) -> bool {
        self.0.len() == x.0.len() && self.0.iter().zip(&x.0).all(|(&o, &v)| o == 0 || o == v)
    }
}

/// Hadamard product of a configuration and a mask.
pub fn observe(x: &Configuration, y: &Mask) -> Result<Observation> {
    if x.0.len() != y.0.len() {
        return Err(CmgError::Schema(format!(
            "configuration length {} does not match mask length {}",
            x.0.len(),
            y.0.len()
        )));
    }
    Ok(Observation(
        x.0.iter().zip(&y.0).map(|(&v, &b)| v * AttrValue::from(b)).collect(),
    ))
}

/// Conjunction of per-attribute allowed sets. Attributes absent from
/// `required` are don't-care.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exploit {
    pub required: BTreeMap<usize, Vec<AttrValue>>,
}

impl Exploit {
    pub fn new(required: impl IntoIterator<Item = (usize, Vec<AttrValue>)>) -> Self {
        Exploit {
            required: required.into_iter().collect(),
        }
    }

    /// Parses the compact `{-1, 1}` notation where `1` demands the attribute
    /// equal 1 and `-1` means the attribute does not matter.
    pub fn from_compact(pattern: &[AttrValue]) -> Self {
        Exploit::new(
            pattern
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(|(i, _)| (i, vec![1])),
        )
    }

    /// `δ(x ∈ Xᵉ)` for a single device.
    pub fn matches(&self, device: &[AttrValue]) -> bool {
        self.required
            .iter()
            .all(|(&i, allowed)| device.get(i).is_some_and(|v| allowed.contains(v)))
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        for (&i, allowed) in &self.required {
            if i >= schema.n() {
                return Err(CmgError::Schema(format!(
                    "exploit references attribute {i} but schema has {} attributes",
                    schema.n()
                )));
            }
            if allowed.is_empty() {
                return Err(CmgError::Schema(format!(
                    "exploit allowed set for attribute {i} is empty"
                )));
            }
            if let Some(v) = allowed.iter().find(|v| !schema.domain(i).contains(v)) {
                return Err(CmgError::Schema(format!(
                    "exploit allows value {v} for attribute {i}, outside its domain"
                )));
            }
        }
        Ok(())
    }
}

/// Per-device value of a successful compromise.
#[derive(Clone, Debug, PartialEq)]
pub enum ValueFn {
    /// `v(x) = ½ Σᵢ (xᵢ + 1)`: the number of attributes equal to 1 on binary domains.
    HalfSumPlusOne,
    /// `v(x) = 1 + number of installed applications` (needs attribute roles).
    OnePlusApps,
    /// Explicit per-device lookup; unlisted configurations are worth 0.
    Table(Vec<(Vec<AttrValue>, f64)>),
}

impl ValueFn {
    pub fn device_value(&self, schema: &AttributeSchema, device: &[AttrValue]) -> f64 {
        match self {
            ValueFn::HalfSumPlusOne => device.iter().map(|&v| 0.5 * (f64::from(v) + 1.0)).sum(),
            ValueFn::OnePlusApps => {
                let installed = match schema.roles() {
                    Some(roles) => roles
                        .iter()
                        .zip(device)
                        .filter(|(r, &v)| match r {
                            AttributeRole::AppFlag => v == 1,
                            AttributeRole::App => v != -1,
                            _ => false,
                        })
                        .count(),
                    None => 0,
                };
                1.0 + installed as f64
            }
            ValueFn::Table(rows) => rows
                .iter()
                .find(|(x, _)| x.as_slice() == device)
                .map_or(0.0, |(_, v)| *v),
        }
    }
}

/// Additive masking cost: `c(y) = Σᵢ cᵢ (1 − yᵢ)`, summed over devices.
#[derive(Clone, Debug, PartialEq)]
pub struct CostFn {
    pub per_attribute: Vec<f64>,
}

impl CostFn {
    pub fn uniform(n: usize, c: f64) -> Self {
        CostFn {
            per_attribute: vec![c; n],
        }
    }

    /// Cost of a flattened joint mask; attribute `j` pays `c[j mod n]`.
    pub fn cost(&self, mask: &[u8]) -> f64 {
        let n = self.per_attribute.len();
        mask.iter()
            .enumerate()
            .filter(|(_, &b)| b == 0)
            .map(|(j, _)| self.per_attribute[j % n])
            .sum()
    }

    /// Same formula on a relaxed mask in `[0, 1]`.
    pub fn relaxed_cost(&self, mask: &[f64]) -> f64 {
        let n = self.per_attribute.len();
        mask.iter()
            .enumerate()
            .map(|(j, &y)| self.per_attribute[j % n] * (1.0 - y))
            .sum()
    }

    /// Mean per-attribute cost, reported as `c` in result tables.
    pub fn mean(&self) -> f64 {
        if self.per_attribute.is_empty() {
            0.0
        } else {
            self.per_attribute.iter().sum::<f64>() / self.per_attribute.len() as f64
        }
    }
}

/// Distribution over joint configurations of all `m` devices.
#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    /// Explicit joint table over flattened configurations.
    Table(Vec<(Configuration, f64)>),
    /// Every attribute uniform over its domain, independently across attributes and devices.
    UniformBinary,
    /// OS / application / port generator, devices i.i.d. Layout comes from the schema roles.
    Structured { seed: Option<u64> },
}

impl Prior {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Prior::Table(_) => "explicit-table",
            Prior::UniformBinary => "uniform-binary",
            Prior::Structured { .. } => "structured",
        }
    }
}

/// A complete masking game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub schema: AttributeSchema,
    pub m: usize,
    pub prior: Prior,
    pub exploits: Vec<Exploit>,
    pub value: ValueFn,
    pub cost: CostFn,
}

impl GameSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.schema.n();
        if self.m == 0 {
            return Err(CmgError::spec("m", "device count must be at least 1"));
        }
        if self.cost.per_attribute.len() != n {
            return Err(CmgError::spec(
                "cost.per_attribute",
                format!("expected {n} entries, got {}", self.cost.per_attribute.len()),
            ));
        }
        if let Some(c) = self.cost.per_attribute.iter().find(|c| c.is_nan() || **c < 0.0) {
            return Err(CmgError::spec(
                "cost.per_attribute",
                format!("costs must be non-negative, got {c}"),
            ));
        }
        for (k, e) in self.exploits.iter().enumerate() {
            e.validate(&self.schema)
                .map_err(|err| CmgError::spec(format!("exploits[{k}]"), err.to_string()))?;
        }
        match &self.prior {
            Prior::Table(rows) => {
                if rows.is_empty() {
                    return Err(CmgError::spec("prior.table", "table is empty"));
                }
                let mut total = 0.0;
                for (idx, (x, p)) in rows.iter().enumerate() {
                    if p.is_nan() || *p < 0.0 {
                        return Err(CmgError::spec(
                            format!("prior.table[{idx}]"),
                            format!("probability {p} is negative"),
                        ));
                    }
                    if x.0.len() != self.m * n {
                        return Err(CmgError::spec(
                            format!("prior.table[{idx}]"),
                            format!("configuration has length {}, expected m*n = {}", x.0.len(), self.m * n),
                        ));
                    }
                    for device in x.0.chunks(n) {
                        self.schema
                            .validate_device(device)
                            .map_err(|err| CmgError::spec(format!("prior.table[{idx}]"), err.to_string()))?;
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(CmgError::spec(
                        "prior.table",
                        format!("probabilities sum to {total}, not 1"),
                    ));
                }
            }
            Prior::UniformBinary => {}
            Prior::Structured { .. } => {
                if self.schema.roles().is_none() {
                    return Err(CmgError::spec(
                        "schema.roles",
                        "a structured prior needs attribute roles",
                    ));
                }
            }
        }
        if matches!(self.value, ValueFn::OnePlusApps) && self.schema.roles().is_none() {
            return Err(CmgError::spec(
                "value.kind",
                "one-plus-apps needs attribute roles to identify applications",
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.schema.n()
    }

    /// Length `m·n` of flattened joint vectors.
    pub fn joint_len(&self) -> usize {
        self.m * self.schema.n()
    }

    pub fn num_exploits(&self) -> usize {
        self.exploits.len()
    }

    /// For each exploit `e`, `Σₖ v(xᵏ) δ(xᵏ ∈ Xᵉ)` over the devices of a joint configuration.
    pub fn attack_values(&self, joint: &[AttrValue]) -> Vec<f64> {
        let mut out = vec![0.0; self.exploits.len()];
        self.attack_values_into(joint, &mut out);
        out
    }

    pub fn attack_values_into(&self, joint: &[AttrValue], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for device in joint.chunks(self.schema.n()) {
            let value = self.value.device_value(&self.schema, device);
            for (slot, e) in out.iter_mut().zip(&self.exploits) {
                if e.matches(device) {
                    *slot += value;
                }
            }
        }
    }

    /// Total value of all devices, `Σₖ v(xᵏ)`.
    pub fn total_value(&self, joint: &[AttrValue]) -> f64 {
        joint
            .chunks(self.schema.n())
            .map(|d| self.value.device_value(&self.schema, d))
            .sum()
    }

    pub fn mask_cost(&self, mask: &[u8]) -> f64 {
        self.cost.cost(mask)
    }
}
