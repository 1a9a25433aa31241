//! JSON game-spec documents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{
    AttrValue, AttributeRole, AttributeSchema, Configuration, CostFn, Exploit, GameSpec, Prior, ValueFn,
};
use crate::error::{CmgError, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    n: usize,
    #[serde(rename = "V")]
    max_value: AttrValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domains: Option<Vec<Vec<AttrValue>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roles: Option<Vec<AttributeRole>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawProbRow {
    x: Vec<AttrValue>,
    p: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawValueRow {
    x: Vec<AttrValue>,
    v: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<RawProbRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValue {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<RawValueRow>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    per_attribute: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGameSpec {
    schema: RawSchema,
    m: usize,
    prior: RawPrior,
    exploits: Vec<BTreeMap<String, Vec<AttrValue>>>,
    value: RawValue,
    cost: RawCost,
}

impl TryFrom<RawGameSpec> for GameSpec {
    type Error = CmgError;

    fn try_from(raw: RawGameSpec) -> Result<Self> {
        let n = raw.schema.n;
        let v = raw.schema.max_value;
        let domains = match raw.schema.domains {
            Some(d) => {
                if d.len() != n {
                    return Err(CmgError::spec(
                        "schema.domains",
                        format!("expected {n} domains, got {}", d.len()),
                    ));
                }
                d
            }
            None => vec![std::iter::once(-1).chain(1..=v).collect(); n],
        };
        let schema =
            AttributeSchema::new(domains, v, raw.schema.roles).map_err(|e| CmgError::spec("schema", e.to_string()))?;

        let prior = match raw.prior.kind.as_str() {
            "explicit-table" => {
                let rows = raw
                    .prior
                    .table
                    .ok_or_else(|| CmgError::spec("prior.table", "required for explicit-table"))?;
                Prior::Table(rows.into_iter().map(|r| (Configuration(r.x), r.p)).collect())
            }
            "uniform-binary" => Prior::UniformBinary,
            "structured" => Prior::Structured { seed: raw.prior.seed },
            other => {
                return Err(CmgError::spec(
                    "prior.kind",
                    format!("unknown kind `{other}` (expected explicit-table, uniform-binary or structured)"),
                ))
            }
        };

        let mut exploits = Vec::with_capacity(raw.exploits.len());
        for (k, req) in raw.exploits.into_iter().enumerate() {
            let mut parsed = Vec::with_capacity(req.len());
            for (attr, allowed) in req {
                let i: usize = attr.parse().map_err(|_| {
                    CmgError::spec(
                        format!("exploits[{k}]"),
                        format!("attribute key `{attr}` is not an index"),
                    )
                })?;
                parsed.push((i, allowed));
            }
            exploits.push(Exploit::new(parsed));
        }

        let value = match raw.value.kind.as_str() {
            "half-sum-plus-one-scale" => ValueFn::HalfSumPlusOne,
            "one-plus-apps" => ValueFn::OnePlusApps,
            "explicit-table" => {
                let rows = raw
                    .value
                    .table
                    .ok_or_else(|| CmgError::spec("value.table", "required for explicit-table"))?;
                ValueFn::Table(rows.into_iter().map(|r| (r.x, r.v)).collect())
            }
            other => return Err(CmgError::spec("value.kind", format!("unknown kind `{other}`"))),
        };

        let game = GameSpec {
            schema,
            m: raw.m,
            prior,
            exploits,
            value,
            cost: CostFn {
                per_attribute: raw.cost.per_attribute,
            },
        };
        game.validate()?;
        Ok(game)
    }
}

impl From<&GameSpec> for RawGameSpec {
    fn from(g: &GameSpec) -> Self {
        let (kind, table, seed) = match &g.prior {
            Prior::Table(rows) => (
                "explicit-table",
                Some(rows.iter().map(|(x, p)| RawProbRow { x: x.0.clone(), p: *p }).collect()),
                None,
            ),
            Prior::UniformBinary => ("uniform-binary", None, None),
            Prior::Structured { seed } => ("structured", None, *seed),
        };
        let value = match &g.value {
            ValueFn::HalfSumPlusOne => RawValue {
                kind: "half-sum-plus-one-scale".into(),
                table: None,
            },
            ValueFn::OnePlusApps => RawValue {
                kind: "one-plus-apps".into(),
                table: None,
            },
            ValueFn::Table(rows) => RawValue {
                kind: "explicit-table".into(),
                table: Some(rows.iter().map(|(x, v)| RawValueRow { x: x.clone(), v: *v }).collect()),
            },
        };
        RawGameSpec {
            schema: RawSchema {
                n: g.schema.n(),
                max_value: g.schema.max_value(),
                domains: Some(g.schema.domains().to_vec()),
                roles: g.schema.roles().map(<[_]>::to_vec),
            },
            m: g.m,
            prior: RawPrior {
                kind: kind.into(),
                table,
                seed,
            },
            exploits: g
                .exploits
                .iter()
                .map(|e| e.required.iter().map(|(i, a)| (i.to_string(), a.clone())).collect())
                .collect(),
            value,
            cost: RawCost {
                per_attribute: g.cost.per_attribute.clone(),
            },
        }
    }
}

/// Parses and validates a game-spec document.
pub fn parse_game_spec(text: &str) -> Result<GameSpec> {
    let raw: RawGameSpec = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let field = msg.split('`').nth(1).unwrap_or("document").to_string();
        CmgError::spec(field, msg)
    })?;
    GameSpec::try_from(raw)
}

pub fn load_game_spec(path: impl AsRef<Path>) -> Result<GameSpec> {
    parse_game_spec(&std::fs::read_to_string(path)?)
}

pub fn to_json_string(game: &GameSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(&RawGameSpec::from(game))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::generator::case_study_game;

    const TABLE1_N4: &str = r#"{
        "schema": {"n": 4, "V": 1},
        "m": 1,
        "prior": {"kind": "uniform-binary"},
        "exploits": [{"1": [1]}, {"0": [1], "2": [1], "3": [1]}],
        "value": {"kind": "half-sum-plus-one-scale"},
        "cost": {"per_attribute": [0.01, 0.01, 0.01, 0.01]}
    }"#;

    #[test]
    fn parses_compact_document() {
        let g = parse_game_spec(TABLE1_N4).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.schema.domain(2), &[-1, 1]);
        assert_eq!(g.exploits[0], Exploit::from_compact(&[-1, 1, -1, -1]));
        assert_eq!(g.exploits[1], Exploit::from_compact(&[1, -1, 1, 1]));
    }

    #[test]
    fn serialization_round_trips() {
        let g = case_study_game();
        let back = parse_game_spec(&to_json_string(&g).unwrap()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn errors_name_the_offending_field() {
        let bad = TABLE1_N4.replace("uniform-binary", "gaussian");
        let err = parse_game_spec(&bad).unwrap_err();
        assert!(matches!(err, CmgError::Spec { ref field, .. } if field == "prior.kind"));

        let bad = TABLE1_N4.replace("[0.01, 0.01, 0.01, 0.01]", "[0.01]");
        let err = parse_game_spec(&bad).unwrap_err();
        assert!(matches!(err, CmgError::Spec { ref field, .. } if field == "cost.per_attribute"));

        let bad = TABLE1_N4.replace(r#""1": [1]"#, r#""7": [1]"#);
        let err = parse_game_spec(&bad).unwrap_err();
        assert!(matches!(err, CmgError::Spec { ref field, .. } if field == "exploits[0]"));

        let bad = TABLE1_N4.replace(r#""m": 1,"#, "");
        let err = parse_game_spec(&bad).unwrap_err();
        assert!(matches!(err, CmgError::Spec { ref field, .. } if field == "m"));
    }

    #[test]
    fn table_prior_must_sum_to_one() {
        let doc = TABLE1_N4.replace(
            r#"{"kind": "uniform-binary"}"#,
            r#"{"kind": "explicit-table", "table": [{"x": [1,1,1,1], "p": 0.5}]}"#,
        );
        let err = parse_game_spec(&doc).unwrap_err();
        assert!(matches!(err, CmgError::Spec { ref field, .. } if field == "prior.table"));
    }
}
