use super::FunctionAnalysis;
use crate::access::{CheckModelCoverage, Perspective, RuleSet};
use crate::bridge::{FnRef, SiteRef};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AcFindingKind {
    Omission,
    ViolationPath,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcFinding {
    pub kind: AcFindingKind,
    pub function: FnRef,
    pub function_name: String,
    pub missing: Vec<Perspective>,
    /// Critical resources lacking the missing perspectives.
    pub resources: Vec<SiteRef>,
    /// For violation paths: the weaker path, then the stronger one.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<(FnRef, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CheckModelCoverage>,
}

/// Perspectives whose satisfying checks are associated with resource `r`
/// at or above the threshold.
pub fn protected_by(fa: &FunctionAnalysis, r: usize, rules: &RuleSet, threshold: f64) -> BTreeSet<Perspective> {
    fa.associations_of(r)
        .filter(|a| a.combined >= threshold)
        .filter_map(|a| {
            let c = &fa.checks[a.check];
            c.satisfies(rules).then_some(c.perspective).flatten()
        })
        .collect()
}

pub fn detect_omission(analyses: &[FunctionAnalysis], rules: &RuleSet, threshold: f64) -> Vec<AcFinding> {
    let mut out = Vec::new();
    for fa in analyses.iter().filter(|fa| fa.relevant) {
        let required = rules.required(fa.role);
        let mut missing: BTreeSet<Perspective> = BTreeSet::new();
        let mut resources = Vec::new();
        for (r, res) in fa.resources.iter().enumerate() {
            if !res.critical {
                continue;
            }
            let have = protected_by(fa, r, rules, threshold);
            let lacking: Vec<Perspective> = required.iter().copied().filter(|p| !have.contains(p)).collect();
            if !lacking.is_empty() {
                missing.extend(lacking);
                resources.push(res.site);
            }
        }
        if missing.is_empty() {
            continue;
        }
        out.push(AcFinding {
            kind: AcFindingKind::Omission,
            function: fa.function,
            function_name: fa.name.clone(),
            missing: missing.into_iter().collect(),
            resources,
            paths: Vec::new(),
            coverage: Some(fa.coverage.clone()),
        });
    }
    out
}

pub fn detect_violation_paths(analyses: &[FunctionAnalysis], rules: &RuleSet, threshold: f64) -> Vec<AcFinding> {
    // Critical resource site -> (function, resource index) reaching it.
    let mut shared: BTreeMap<SiteRef, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, fa) in analyses.iter().enumerate() {
        for (r, res) in fa.resources.iter().enumerate() {
            if res.critical && !fa.paths_to[r].is_empty() {
                shared.entry(res.site).or_default().push((i, r));
            }
        }
    }
    let mut out = Vec::new();
    for (site, users) in &shared {
        if users.len() < 2 {
            continue;
        }
        let sets: Vec<BTreeSet<Perspective>> = users
            .iter()
            .map(|(i, r)| protected_by(&analyses[*i], *r, rules, threshold))
            .collect();
        for (a, (ia, ra)) in users.iter().enumerate() {
            for (b, (ib, rb)) in users.iter().enumerate() {
                if a == b || ia == ib {
                    continue;
                }
                if !(sets[a].is_subset(&sets[b]) && sets[a].len() < sets[b].len()) {
                    continue;
                }
                let (weak, strong) = (&analyses[*ia], &analyses[*ib]);
                out.push(AcFinding {
                    kind: AcFindingKind::ViolationPath,
                    function: weak.function,
                    function_name: weak.name.clone(),
                    missing: sets[b].difference(&sets[a]).copied().collect(),
                    resources: vec![*site],
                    paths: vec![
                        (weak.function, weak.paths_to[*ra][0]),
                        (strong.function, strong.paths_to[*rb][0]),
                    ],
                    coverage: None,
                });
            }
        }
    }
    out
}
