//! Game model: attributes, masks, observations, exploits, priors and instance generators.

mod generator;
mod model;
mod posterior;
mod sampling;
mod spec_file;

pub use generator::{
    case_study_game, generate_binary_instance, generate_structured_instance, structured_roles, BinaryParams,
    StructuredParams, CASE_STUDY_EXPLOITS,
};
pub use model::{
    observe, AttrValue, AttributeRole, AttributeSchema, Configuration, CostFn, Exploit, GameSpec, Mask, Observation,
    Prior, ValueFn,
};
pub use posterior::posterior;
pub use sampling::{enumerate_support, PriorSampler, ENUMERATION_CAP};
pub use spec_file::{load_game_spec, parse_game_spec, to_json_string};
