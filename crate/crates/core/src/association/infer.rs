//! Linking checks to the resources they protect.

use super::paths::PathRecord;
use crate::access::{Resource, ResourceKind, SecurityCheck};
use crate::bridge::{ContractProgram, KindHint, Meaning};
use crate::evm::{slot_of, ValueId, ValueIndex};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Inference patterns with their prior probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    /// The check dominates the resource and no other resource in between.
    P1,
    /// The check dominates a set of resources containing this one.
    P2,
    SameBlock,
    SemanticCorrelation,
    DataFlowDependency,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::P1,
        Pattern::P2,
        Pattern::SameBlock,
        Pattern::SemanticCorrelation,
        Pattern::DataFlowDependency,
    ];

    pub fn prior(self) -> f64 {
        match self {
            Pattern::P1 => 0.95,
            Pattern::P2 => 0.60,
            Pattern::SameBlock => 0.60,
            Pattern::SemanticCorrelation => 0.70,
            Pattern::DataFlowDependency => 0.80,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Pattern::P1 => "P1",
            Pattern::P2 => "P2",
            Pattern::SameBlock => "P3",
            Pattern::SemanticCorrelation => "P4",
            Pattern::DataFlowDependency => "P5",
        }
    }
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evidence {
    pub pattern: Pattern,
    pub prior: f64,
    /// Prior for direct evidence; prior times the linked association for
    /// transferred evidence.
    pub probability: f64,
    /// Resource the evidence was transferred from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub via: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Association {
    /// Index into the function's checks.
    pub check: usize,
    /// Index into the function's resources.
    pub resource: usize,
    /// Representative path id.
    pub path: usize,
    pub prior_evidence: Vec<Evidence>,
    pub combined: f64,
}

/// `1 - prod(1 - p)`. Inputs are multiplied in sorted order so the result
/// does not depend on the order evidence arrives in, not even in the last bit.
pub fn noisy_or(ps: impl IntoIterator<Item = f64>) -> f64 {
    let mut miss: Vec<f64> = ps.into_iter().map(|p| 1.0 - p.clamp(0.0, 1.0)).collect();
    miss.sort_by(f64::total_cmp);
    let miss: f64 = miss.into_iter().product();
    (1.0 - miss).clamp(0.0, 1.0)
}

/// Everything inference needs about one public function.
pub struct InferInput<'a> {
    pub program: &'a ContractProgram,
    pub index: &'a ValueIndex,
    pub checks: &'a [SecurityCheck],
    pub resources: &'a [Resource],
    pub paths: &'a [PathRecord],
    /// Path ids ending at each resource's block.
    pub paths_to: &'a [Vec<usize>],
}

impl InferInput<'_> {
    fn prefix<'p>(&self, p: &'p PathRecord) -> &'p [usize] {
        &p.blocks[..p.blocks.len() - 1]
    }

    /// Every path to `r` passes the check's block before reaching `r`.
    pub fn dominates(&self, c: usize, r: usize) -> bool {
        let cb = self.checks[c].site.block;
        let ps = &self.paths_to[r];
        cb != self.resources[r].block()
            && !ps.is_empty()
            && ps.iter().all(|p| self.prefix(&self.paths[*p]).contains(&cb))
    }

    pub fn on_path(&self, c: usize, r: usize) -> bool {
        let cb = self.checks[c].site.block;
        self.paths_to[r]
            .iter()
            .any(|p| self.prefix(&self.paths[*p]).contains(&cb))
    }

    /// On some path, no other resource sits between the check and `r`.
    fn immediate(&self, c: usize, r: usize) -> bool {
        let cb = self.checks[c].site.block;
        let target = &self.resources[r];
        self.paths_to[r].iter().any(|p| {
            let blocks = &self.paths[*p].blocks;
            let Some(i) = self.prefix(&self.paths[*p]).iter().rposition(|b| *b == cb) else {
                return false;
            };
            let between: BTreeSet<usize> = blocks[i + 1..blocks.len() - 1].iter().copied().collect();
            !self.resources.iter().enumerate().any(|(q, res)| {
                q != r
                    && res.kind != ResourceKind::AbiEntry
                    && (between.contains(&res.block())
                        || (res.block() == target.block() && res.site.offset < target.site.offset))
            })
        })
    }

    fn direct(&self, c: usize, r: usize) -> Option<Pattern> {
        if self.resources[r].kind == ResourceKind::AbiEntry || !self.dominates(c, r) {
            return None;
        }
        Some(if self.immediate(c, r) { Pattern::P1 } else { Pattern::P2 })
    }

    fn operands(&self, r: &Resource) -> BTreeSet<ValueId> {
        let Some(facts) = self.program.cfg.facts(r.site.offset) else {
            return BTreeSet::new();
        };
        let mut out: BTreeSet<ValueId> = BTreeSet::new();
        match r.kind {
            ResourceKind::AbiEntry => {}
            ResourceKind::InternalMethod => {
                out.extend(facts.inputs.iter().flat_map(|i| i.iter().skip(1).copied()));
            }
            _ => {
                out.extend(facts.inputs.iter().flatten().copied());
                out.extend(facts.mem_inputs.iter().flatten().copied());
            }
        }
        out
    }

    /// Values influenced by what `r` reads or writes.
    fn derived(&self, r: &Resource) -> BTreeSet<ValueId> {
        let cfg = &self.program.cfg;
        let mut seeds: Vec<ValueId> = Vec::new();
        let stores = |offset: usize, seeds: &mut Vec<ValueId>| {
            for args in cfg.facts(offset).map(|f| &f.inputs).into_iter().flatten() {
                seeds.push(args[1]);
                seeds.extend(self.index.readers(&slot_of(&cfg.values, args[0])));
            }
        };
        match r.kind {
            ResourceKind::FieldAccess => {
                if r.access == Some(crate::access::Access::Write) {
                    stores(r.site.offset, &mut seeds);
                } else if let Some(f) = cfg.facts(r.site.offset) {
                    seeds.extend(f.outputs.iter().copied());
                }
            }
            ResourceKind::InternalMethod => {
                if let Some(body) = r.callee.and_then(|k| self.program.function(k)) {
                    for b in &body.blocks {
                        for ins in &cfg.blocks[b].instructions {
                            if ins.opcode == crate::evm::Opcode::SSTORE {
                                stores(ins.offset, &mut seeds);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        if seeds.is_empty() {
            return BTreeSet::new();
        }
        self.index.forward(seeds)
    }

    fn semantically_correlated(&self, a: &Resource, b: &Resource) -> bool {
        let kind = |r: &Resource| r.kind_hint.filter(|k| *k != KindHint::Other);
        let same_kind = kind(a).is_some() && kind(a) == kind(b);
        let shared = a
            .meanings
            .iter()
            .any(|m| *m != Meaning::Other && b.meanings.contains(m));
        same_kind || shared
    }

    /// Transfer links into each resource: (from, pattern).
    pub fn transfers(&self) -> Vec<Vec<(usize, Pattern)>> {
        let n = self.resources.len();
        let active = |r: usize| self.resources[r].kind != ResourceKind::AbiEntry;
        let derived: Vec<BTreeSet<ValueId>> = self.resources.iter().map(|r| self.derived(r)).collect();
        let mut guards: Vec<BTreeSet<ValueId>> = vec![BTreeSet::new(); n];
        for (r, g) in guards.iter_mut().enumerate() {
            g.extend(self.operands(&self.resources[r]));
            for c in 0..self.checks.len() {
                if self.dominates(c, r) {
                    g.extend(self.checks[c].conditions.iter().copied());
                }
            }
        }
        let mut out = vec![Vec::new(); n];
        for r in (0..n).filter(|r| active(*r)) {
            for q in (0..n).filter(|q| *q != r && active(*q)) {
                let (a, b) = (&self.resources[r], &self.resources[q]);
                if a.block() == b.block() {
                    out[r].push((q, Pattern::SameBlock));
                }
                if self.semantically_correlated(a, b) {
                    out[r].push((q, Pattern::SemanticCorrelation));
                }
                if !derived[q].is_disjoint(&guards[r]) {
                    out[r].push((q, Pattern::DataFlowDependency));
                }
            }
        }
        out
    }
}

/// Associations between every check and the resources it may protect.
pub fn infer_associations(input: &InferInput<'_>) -> Vec<Association> {
    let (nc, nr) = (input.checks.len(), input.resources.len());
    let direct: Vec<Vec<Option<Pattern>>> = (0..nc)
        .map(|c| (0..nr).map(|r| input.direct(c, r)).collect())
        .collect();
    let on_path: Vec<Vec<bool>> = (0..nc)
        .map(|c| (0..nr).map(|r| input.on_path(c, r)).collect())
        .collect();
    let transfers = input.transfers();
    // Best single chain of evidence, by max-product.
    let mut best: Vec<Vec<f64>> = direct
        .iter()
        .map(|row| row.iter().map(|d| d.map_or(0.0, Pattern::prior)).collect())
        .collect();
    for c in 0..nc {
        for _round in 0..=nr {
            let mut changed = false;
            for r in 0..nr {
                if !on_path[c][r] {
                    continue;
                }
                for (q, pat) in &transfers[r] {
                    let v = pat.prior() * best[c][*q];
                    if v > best[c][r] + 1e-12 {
                        best[c][r] = v;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
    let mut out = Vec::new();
    for c in 0..nc {
        for r in 0..nr {
            if !on_path[c][r] {
                continue;
            }
            let mut evidence = Vec::new();
            if let Some(p) = direct[c][r] {
                evidence.push(Evidence {
                    pattern: p,
                    prior: p.prior(),
                    probability: p.prior(),
                    via: None,
                });
            }
            for (q, pat) in &transfers[r] {
                if best[c][*q] > 0.0 {
                    evidence.push(Evidence {
                        pattern: *pat,
                        prior: pat.prior(),
                        probability: pat.prior() * best[c][*q],
                        via: Some(*q),
                    });
                }
            }
            if evidence.is_empty() {
                continue;
            }
            let cb = input.checks[c].site.block;
            let path = input.paths_to[r]
                .iter()
                .copied()
                .find(|p| input.prefix(&input.paths[*p]).contains(&cb))
                .expect("on-path check has a path");
            let combined = noisy_or(evidence.iter().map(|e| e.probability));
            out.push(Association {
                check: c,
                resource: r,
                path,
                prior_evidence: evidence,
                combined,
            });
        }
    }
    out
}

/// Strongest association per (check, resource) keyed for lookups.
pub fn by_pair(assocs: &[Association]) -> BTreeMap<(usize, usize), &Association> {
    assocs.iter().map(|a| ((a.check, a.resource), a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn priors_match_table() {
        let got: Vec<f64> = Pattern::ALL.iter().map(|p| p.prior()).collect();
        assert_eq!(got, vec![0.95, 0.60, 0.60, 0.70, 0.80]);
    }

    #[test]
    fn single_prior_passes_through() {
        assert_eq!(noisy_or([0.95]), 0.95);
        assert_eq!(noisy_or([]), 0.0);
        assert!((noisy_or([0.6, 0.5]) - 0.8).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn noisy_or_is_bounded_and_monotone(ps in proptest::collection::vec(0.0f64..=1.0, 0..12), extra in 0.0f64..=1.0) {
            let a = noisy_or(ps.iter().copied());
            prop_assert!((0.0..=1.0).contains(&a));
            let b = noisy_or(ps.iter().copied().chain([extra]));
            prop_assert!(b + 1e-12 >= a);
        }
    }
}
