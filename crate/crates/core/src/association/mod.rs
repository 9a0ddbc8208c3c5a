//! Paths from public entries to resources, check/resource association and
//! the access-control detectors built on them.

pub mod detect;
pub mod infer;
pub mod paths;

pub use detect::{detect_omission, detect_violation_paths, AcFinding, AcFindingKind};
pub use infer::{infer_associations, noisy_or, Association, Evidence, Pattern};
pub use paths::{enumerate, function_paths, PathBounds, PathGraph, PathRecord};

use crate::access::checks::{classify_check, extract_checks_with, ClassifyContext};
use crate::access::{evaluate_model, extract_resources, CheckModelCoverage, Resource, ResourceKind, RuleSet, SecurityCheck};
use crate::bridge::{BridgeProgram, ContractProgram, FnRef, KindHint, Role};
use crate::config::AnalysisConfig;
use crate::evm::{BlockId, FunctionBody, FunctionKey, ValueIndex};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Checks, resources, paths and associations of one public function.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionAnalysis {
    pub function: FnRef,
    pub name: String,
    pub role: Role,
    /// Whether the function deposits (source) or authorizes/withdraws
    /// (destination), and so is held to the check model.
    pub relevant: bool,
    pub checks: Vec<SecurityCheck>,
    pub resources: Vec<Resource>,
    pub paths: Vec<PathRecord>,
    #[serde(skip)]
    pub paths_to: Vec<Vec<usize>>,
    pub associations: Vec<Association>,
    pub coverage: CheckModelCoverage,
    pub truncated: bool,
}

impl FunctionAnalysis {
    pub fn check_index(&self, block: BlockId) -> Option<usize> {
        self.checks.iter().position(|c| c.site.block == block)
    }

    pub fn associations_of(&self, resource: usize) -> impl Iterator<Item = &Association> {
        self.associations.iter().filter(move |a| a.resource == resource)
    }
}

/// Shared per-contract inputs.
pub struct ContractContext<'a> {
    pub program: &'a ContractProgram,
    pub index: ValueIndex,
    pub reverting: BTreeSet<BlockId>,
}

impl<'a> ContractContext<'a> {
    pub fn new(program: &'a ContractProgram) -> Self {
        ContractContext {
            program,
            index: ValueIndex::build(&program.cfg),
            reverting: crate::access::must_revert_blocks(&program.cfg),
        }
    }
}

pub fn bounds(config: &AnalysisConfig) -> PathBounds {
    PathBounds {
        max_depth: config.max_path_depth,
        unroll: config.loop_unroll,
        max_paths: config.max_paths,
    }
}

fn is_relevant(bridge: &BridgeProgram, program: &ContractProgram, f: &FunctionBody, resources: &[Resource]) -> bool {
    let kind = bridge.kind_of(program.fn_ref(f.key));
    let emits = |want: &[KindHint]| {
        resources
            .iter()
            .any(|r| r.kind == ResourceKind::EventEmit && r.kind_hint.is_some_and(|k| want.contains(&k)))
    };
    match program.role {
        Role::Source => kind == Some(KindHint::Deposit) || emits(&[KindHint::Deposit]),
        Role::Destination => {
            matches!(kind, Some(KindHint::Authorize | KindHint::Withdraw))
                || matches!(f.key, FunctionKey::Public(sel)
                    if bridge.descriptor.pairings.iter().any(|p| p.authorize_selector == sel))
                || emits(&[KindHint::Withdraw, KindHint::Authorize])
        }
    }
}

pub fn analyze_function(
    bridge: &BridgeProgram,
    ctx: &ContractContext<'_>,
    f: &FunctionBody,
    rules: &RuleSet,
    config: &AnalysisConfig,
    cancel: &dyn Fn() -> bool,
) -> FunctionAnalysis {
    let program = ctx.program;
    let classify = ClassifyContext::for_function(program, f);
    let checks: Vec<SecurityCheck> = extract_checks_with(program, f, &ctx.reverting)
        .into_iter()
        .map(|c| classify_check(c, &program.cfg.values, &program.entry, &classify, rules))
        .collect();
    let resources = extract_resources(program, f);
    let targets: BTreeSet<BlockId> = resources.iter().map(|r| r.block()).collect();
    let found = function_paths(program, f, &targets, bounds(config), cancel);
    let check_at: BTreeMap<BlockId, usize> = checks.iter().enumerate().map(|(i, c)| (c.site.block, i)).collect();
    let paths: Vec<PathRecord> = found
        .paths
        .into_iter()
        .enumerate()
        .map(|(id, blocks)| {
            let checks_on_path = blocks[..blocks.len() - 1]
                .iter()
                .filter_map(|b| check_at.get(b).map(|i| checks[*i].site))
                .collect();
            PathRecord {
                id,
                blocks,
                checks_on_path,
            }
        })
        .collect();
    let paths_to: Vec<Vec<usize>> = resources
        .iter()
        .map(|r| paths.iter().filter(|p| p.last() == r.block()).map(|p| p.id).collect())
        .collect();
    if found.truncated {
        log::warn!(
            "{}: path enumeration for {} truncated at depth {} / {} paths",
            program.address(),
            f.display_name(),
            config.max_path_depth,
            config.max_paths
        );
    }
    let associations = infer_associations(&infer::InferInput {
        program,
        index: &ctx.index,
        checks: &checks,
        resources: &resources,
        paths: &paths,
        paths_to: &paths_to,
    });
    let coverage = evaluate_model(&checks, program.role, rules);
    FunctionAnalysis {
        function: program.fn_ref(f.key),
        name: f.display_name(),
        role: program.role,
        relevant: is_relevant(bridge, program, f, &resources),
        checks,
        resources,
        paths,
        paths_to,
        associations,
        coverage,
        truncated: found.truncated,
    }
}

/// Paths from each public entry of the resource's contract to its block.
pub fn enumerate_paths(
    program: &ContractProgram,
    resource: &Resource,
    max_depth: usize,
    unroll: usize,
) -> (Vec<PathRecord>, Vec<String>) {
    let targets = BTreeSet::from([resource.block()]);
    let bounds = PathBounds {
        max_depth,
        unroll,
        max_paths: AnalysisConfig::default().max_paths,
    };
    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for f in program.cfg.public_functions() {
        if !f.blocks.contains(&resource.block()) {
            continue;
        }
        let found = function_paths(program, f, &targets, bounds, &|| false);
        if found.truncated {
            diagnostics.push(format!("paths from {} truncated", f.display_name()));
        }
        for blocks in found.paths {
            out.push(PathRecord {
                id: out.len(),
                blocks,
                checks_on_path: Vec::new(),
            });
        }
    }
    (out, diagnostics)
}
