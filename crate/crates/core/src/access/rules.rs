//! The built-in security check model: categories, perspectives and the
//! features that witness them.

use crate::bridge::Role;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    C1,
    C2,
    C3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Perspective {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl Perspective {
    pub const ALL: [Perspective; 6] = [
        Perspective::P1,
        Perspective::P2,
        Perspective::P3,
        Perspective::P4,
        Perspective::P5,
        Perspective::P6,
    ];
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feature {
    BridgeBalanceComparison,
    UserBalanceVsDepositAmount,
    LiquidityThreshold,
    FunctionArgument,
    CallerArgument,
    SupportId,
    ExternalAddressZero,
    SignatureComparison,
    SignatureRecovered,
    TimeoutComparison,
    RecordListLookup,
    ReceiverAddress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combinator {
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRule {
    pub tag: Feature,
    pub name: String,
    pub usage: String,
    /// Whether a check carrying this feature counts toward coverage.
    pub satisfies: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerspectiveRule {
    pub id: Perspective,
    pub name: String,
    pub combinator: Combinator,
    pub features: Vec<FeatureRule>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRule {
    pub id: Category,
    pub name: String,
    pub combinator: Combinator,
    pub perspectives: Vec<PerspectiveRule>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleRule {
    pub role: Role,
    pub categories: Vec<Category>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub version: String,
    pub categories: Vec<CategoryRule>,
    pub roles: Vec<RoleRule>,
    /// Classification order when a check matches several perspectives.
    pub priority: Vec<Perspective>,
}

fn feature(tag: Feature, name: &str, usage: &str, satisfies: bool) -> FeatureRule {
    FeatureRule {
        tag,
        name: name.into(),
        usage: usage.into(),
        satisfies,
    }
}

fn perspective(id: Perspective, name: &str, features: Vec<FeatureRule>) -> PerspectiveRule {
    PerspectiveRule {
        id,
        name: name.into(),
        combinator: Combinator::Or,
        features,
    }
}

impl RuleSet {
    pub fn builtin() -> RuleSet {
        use Feature::*;
        use Perspective::*;
        RuleSet {
            version: "1.0.0".into(),
            categories: vec![
                CategoryRule {
                    id: Category::C1,
                    name: "Asset deposit and locking".into(),
                    combinator: Combinator::And,
                    perspectives: vec![
                        perspective(
                            P1,
                            "Success check for the deposit",
                            vec![
                                feature(
                                    BridgeBalanceComparison,
                                    "Balance of bridge after deposit",
                                    "Comparison with balance before deposit",
                                    true,
                                ),
                                feature(
                                    UserBalanceVsDepositAmount,
                                    "Balance of user",
                                    "Comparison with the deposit amount",
                                    true,
                                ),
                                feature(
                                    LiquidityThreshold,
                                    "Liquidity of bridge",
                                    "Comparison with deposit threshold",
                                    true,
                                ),
                            ],
                        ),
                        perspective(
                            P2,
                            "Validation check for arguments of user",
                            vec![
                                feature(
                                    FunctionArgument,
                                    "Arguments of public function",
                                    "Comparison with logic condition",
                                    true,
                                ),
                                feature(
                                    CallerArgument,
                                    "Arguments of user message",
                                    "Comparison with logic condition",
                                    true,
                                ),
                            ],
                        ),
                    ],
                },
                CategoryRule {
                    id: Category::C2,
                    name: "Cross-chain router".into(),
                    combinator: Combinator::And,
                    perspectives: vec![perspective(
                        P3,
                        "Correctness check for cross-chain router",
                        vec![
                            feature(
                                SupportId,
                                "Bridge-supported token/chain",
                                "Comparison with ID of destination",
                                true,
                            ),
                            feature(
                                ExternalAddressZero,
                                "Address of external invocation",
                                "Comparison with 0 address",
                                true,
                            ),
                        ],
                    )],
                },
                CategoryRule {
                    id: Category::C3,
                    name: "Asset authorization and withdrawal".into(),
                    combinator: Combinator::And,
                    perspectives: vec![
                        perspective(
                            P4,
                            "Validation check for verification",
                            vec![
                                feature(
                                    SignatureComparison,
                                    "Signature and Signatory",
                                    "Comparison with cross-chain message",
                                    true,
                                ),
                                feature(
                                    SignatureRecovered,
                                    "Recovered signer",
                                    "Comparison of the recovered signer with 0 only",
                                    false,
                                ),
                                feature(
                                    TimeoutComparison,
                                    "Timeout of signature",
                                    "Comparison with on-chain time status (timestamp, block number)",
                                    true,
                                ),
                            ],
                        ),
                        perspective(
                            P5,
                            "Check for repetitive withdrawal",
                            vec![feature(
                                RecordListLookup,
                                "List recording the withdrawal",
                                "Consultation on the lists (mapping variables)",
                                true,
                            )],
                        ),
                        perspective(
                            P6,
                            "Correctness check for releasing",
                            vec![feature(
                                ReceiverAddress,
                                "Receiver address",
                                "Comparison with user-specified address or 0 address",
                                true,
                            )],
                        ),
                    ],
                },
            ],
            roles: vec![
                RoleRule {
                    role: Role::Source,
                    categories: vec![Category::C1, Category::C2],
                },
                RoleRule {
                    role: Role::Destination,
                    categories: vec![Category::C2, Category::C3],
                },
            ],
            priority: vec![P4, P5, P6, P1, P3, P2],
        }
    }

    pub fn perspective_of(&self, f: Feature) -> Option<Perspective> {
        self.perspectives()
            .find(|p| p.features.iter().any(|r| r.tag == f))
            .map(|p| p.id)
    }

    pub fn feature(&self, f: Feature) -> Option<&FeatureRule> {
        self.perspectives()
            .flat_map(|p| p.features.iter())
            .find(|r| r.tag == f)
    }

    pub fn perspectives(&self) -> impl Iterator<Item = &PerspectiveRule> {
        self.categories.iter().flat_map(|c| c.perspectives.iter())
    }

    pub fn categories_for(&self, role: Role) -> Vec<&CategoryRule> {
        let ids = self
            .roles
            .iter()
            .find(|r| r.role == role)
            .map(|r| r.categories.clone())
            .unwrap_or_default();
        self.categories
            .iter()
            .filter(|c| ids.contains(&c.id))
            .collect()
    }

    /// Perspectives a function of `role` must cover.
    pub fn required(&self, role: Role) -> Vec<Perspective> {
        self.categories_for(role)
            .iter()
            .flat_map(|c| c.perspectives.iter().map(|p| p.id))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule set serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<RuleSet> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let r = RuleSet::builtin();
        assert_eq!(r.categories.len(), 3);
        assert_eq!(r.perspectives().count(), 6);
        assert_eq!(r.perspective_of(Feature::TimeoutComparison), Some(Perspective::P4));
        assert_eq!(
            r.required(Role::Source),
            vec![Perspective::P1, Perspective::P2, Perspective::P3]
        );
        assert_eq!(
            r.required(Role::Destination),
            vec![Perspective::P3, Perspective::P4, Perspective::P5, Perspective::P6]
        );
    }

    #[test]
    fn json_roundtrip() {
        let r = RuleSet::builtin();
        let text = r.to_json();
        assert!(text.contains("Balance of bridge after deposit"));
        assert_eq!(RuleSet::from_json(&text).unwrap(), r);
    }
}
