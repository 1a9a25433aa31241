//! Solvers for combinatorial masking games: a defender hides device
//! attributes behind costly masks, an attacker sees the masked configuration
//! and picks one exploit to fire at every device.
//!
//! Two solution routes are provided:
//!
//! - [`exact`]: the defender's linear program over explicit mask tables,
//!   solved by constraint generation against an exact attacker best response.
//! - [`gam`]: a conditional mask generator trained against a softmax attacker
//!   network by alternating gradient descent-ascent; scales to large `n`.
//!
//! [`baselines`] and [`eval`] provide the comparison strategies and the
//! sample-based evaluation protocol shared by all methods.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod exact;
pub mod experiment;
pub mod fixtures;
pub mod gam;
pub mod game;
pub mod lp;
pub mod nn;
pub mod strategy;

pub use error::{CmgError, Result};
pub use game::{
    AttrValue, AttributeRole, AttributeSchema, Configuration, CostFn, Exploit, GameSpec, Mask, Observation, Prior,
    ValueFn,
};
pub use strategy::{DefenderTable, MixedAttackStrategy, PureAttackStrategy};
