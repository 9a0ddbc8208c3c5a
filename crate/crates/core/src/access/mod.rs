//! Security checks, protected resources and the check model they are
//! measured against.

pub mod checks;
pub mod coverage;
pub mod resources;
pub mod rules;

pub use checks::{
    classify_check, extract_checks, function_checks, must_revert_blocks, CheckForm,
    ClassifyContext, SecurityCheck,
};
pub use coverage::{evaluate_model, CheckModelCoverage};
pub use resources::{extract_resources, Access, Resource, ResourceKind};
pub use rules::{Category, Feature, Perspective, RuleSet};
