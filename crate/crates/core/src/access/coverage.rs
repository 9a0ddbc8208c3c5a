use super::checks::SecurityCheck;
use super::rules::{Category, Combinator, Feature, Perspective, RuleSet};
use crate::bridge::{Role, SiteRef};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PerspectiveCoverage {
    pub satisfied: bool,
    pub witnesses: Vec<SiteRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CategoryCoverage {
    pub satisfied: bool,
    pub perspectives: BTreeMap<Perspective, PerspectiveCoverage>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckModelCoverage {
    pub role: Role,
    pub categories: BTreeMap<Category, CategoryCoverage>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckModelCoverage {
    pub fn perspective(&self, p: Perspective) -> Option<&PerspectiveCoverage> {
        self.categories.values().find_map(|c| c.perspectives.get(&p))
    }

    pub fn is_satisfied(&self, p: Perspective) -> bool {
        self.perspective(p).is_some_and(|c| c.satisfied)
    }

    /// Required perspectives without a witness, in model order.
    pub fn missing(&self) -> Vec<Perspective> {
        let mut out: Vec<Perspective> = self
            .categories
            .values()
            .flat_map(|c| c.perspectives.iter())
            .filter(|(_, pc)| !pc.satisfied)
            .map(|(p, _)| *p)
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

fn combine(comb: Combinator, mut flags: impl Iterator<Item = bool>) -> bool {
    match comb {
        Combinator::And => flags.all(|b| b),
        Combinator::Or => flags.any(|b| b),
    }
}

/// Evaluate which required perspectives the classified checks witness.
pub fn evaluate_model(checks: &[SecurityCheck], role: Role, rules: &RuleSet) -> CheckModelCoverage {
    let mut categories = BTreeMap::new();
    for cat in rules.categories_for(role) {
        let mut perspectives = BTreeMap::new();
        for p in &cat.perspectives {
            let per_feature: Vec<(bool, Vec<SiteRef>)> = p
                .features
                .iter()
                .filter(|f| f.satisfies)
                .map(|f| {
                    let w: Vec<SiteRef> = checks
                        .iter()
                        .filter(|c| c.perspective == Some(p.id) && c.features.contains(&f.tag))
                        .map(|c| c.site)
                        .collect();
                    (!w.is_empty(), w)
                })
                .collect();
            let satisfied = !per_feature.is_empty()
                && combine(p.combinator, per_feature.iter().map(|(s, _)| *s));
            let mut witnesses: Vec<SiteRef> =
                per_feature.into_iter().flat_map(|(_, w)| w).collect();
            witnesses.sort();
            witnesses.dedup();
            perspectives.insert(p.id, PerspectiveCoverage { satisfied, witnesses });
        }
        let satisfied = combine(cat.combinator, perspectives.values().map(|p| p.satisfied));
        categories.insert(cat.id, CategoryCoverage { satisfied, perspectives });
    }
    let mut cov = CheckModelCoverage {
        role,
        categories,
        notes: Vec::new(),
    };
    let has_timeout = checks
        .iter()
        .any(|c| c.features.contains(&Feature::TimeoutComparison));
    if cov.is_satisfied(Perspective::P4) && !has_timeout {
        cov.notes
            .push("P4 is covered by signature checks only; no timeout comparison was found".into());
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::access::checks::CheckForm;
    use crate::bridge::Address;
    use std::collections::BTreeSet;

    fn check(p: Perspective, f: Feature, offset: usize) -> SecurityCheck {
        SecurityCheck {
            site: SiteRef {
                contract: Address([0; 20]),
                block: 0,
                offset,
            },
            form: CheckForm::RevertGuard,
            perspective: Some(p),
            features: BTreeSet::from([f]),
            pass: None,
            conditions: vec![],
        }
    }

    #[test]
    fn p1_alone_leaves_c1_partial() {
        let rules = RuleSet::builtin();
        let cov = evaluate_model(
            &[check(Perspective::P1, Feature::LiquidityThreshold, 1)],
            Role::Source,
            &rules,
        );
        assert!(cov.is_satisfied(Perspective::P1));
        assert!(!cov.categories[&Category::C1].satisfied);
        assert_eq!(cov.missing(), vec![Perspective::P2, Perspective::P3]);
    }

    #[test]
    fn empty_checks_satisfy_nothing() {
        let rules = RuleSet::builtin();
        let cov = evaluate_model(&[], Role::Destination, &rules);
        assert_eq!(
            cov.missing(),
            vec![Perspective::P3, Perspective::P4, Perspective::P5, Perspective::P6]
        );
    }

    #[test]
    fn signature_without_timeout_satisfies_with_note() {
        let rules = RuleSet::builtin();
        let cov = evaluate_model(
            &[check(Perspective::P4, Feature::SignatureComparison, 1)],
            Role::Destination,
            &rules,
        );
        assert!(cov.is_satisfied(Perspective::P4));
        assert_eq!(cov.notes.len(), 1);
    }

    #[test]
    fn recovered_signer_alone_does_not_satisfy() {
        let rules = RuleSet::builtin();
        let cov = evaluate_model(
            &[check(Perspective::P4, Feature::SignatureRecovered, 1)],
            Role::Destination,
            &rules,
        );
        assert!(!cov.is_satisfied(Perspective::P4));
    }

    #[test]
    fn monotone_in_checks() {
        let rules = RuleSet::builtin();
        let all = [
            check(Perspective::P1, Feature::LiquidityThreshold, 1),
            check(Perspective::P2, Feature::FunctionArgument, 2),
            check(Perspective::P3, Feature::SupportId, 3),
            check(Perspective::P4, Feature::TimeoutComparison, 4),
            check(Perspective::P5, Feature::RecordListLookup, 5),
            check(Perspective::P6, Feature::ReceiverAddress, 6),
        ];
        for role in [Role::Source, Role::Destination] {
            for mask in 0u32..64 {
                let sub: Vec<_> = (0..6).filter(|i| mask & (1 << i) != 0).map(|i| all[i].clone()).collect();
                let base = evaluate_model(&sub, role, &rules);
                for extra in &all {
                    let mut more = sub.clone();
                    more.push(extra.clone());
                    let cov = evaluate_model(&more, role, &rules);
                    for p in Perspective::ALL {
                        assert!(!base.is_satisfied(p) || cov.is_satisfied(p));
                    }
                }
            }
        }
    }
}
