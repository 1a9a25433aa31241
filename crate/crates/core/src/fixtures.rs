//! Named games shipped with the crate.

use crate::error::{CmgError, Result};
use crate::game::{parse_game_spec, GameSpec};

const FILES: [(&str, &str); 5] = [
    ("table1-n2m2", include_str!("../fixtures/table1-n2m2.json")),
    ("table1-n4", include_str!("../fixtures/table1-n4.json")),
    ("table1-n5", include_str!("../fixtures/table1-n5.json")),
    ("table1-n6", include_str!("../fixtures/table1-n6.json")),
    ("case-study", include_str!("../fixtures/case-study.json")),
];

/// Every name accepted by [`fixture`].
pub const FIXTURE_NAMES: [&str; 5] = ["table1-n2m2", "table1-n4", "table1-n5", "table1-n6", "case-study"];

/// Looks up a shipped game by name.
pub fn fixture(name: &str) -> Result<GameSpec> {
    let (_, text) = FILES.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        CmgError::Argument(format!(
            "unknown fixture `{name}`; expected one of {}",
            FIXTURE_NAMES.join(", ")
        ))
    })?;
    parse_game_spec(text)
}
