//! Cross-chain graphs: both chains' CFGs joined through a relayer and a
//! client node, and the data flow that survives the crossing.

pub mod semantic;
pub mod xdfg;

pub use semantic::{check_granularity, check_integrity, SemFinding, SemKind, SemWitness, XPath};
pub use xdfg::{build_xdfg, Carried, XDfgEdge, XdNode, Xdfg};

use crate::bridge::{Address, BridgeProgram, FnRef, KindHint, Role, SiteRef, Topic};
use crate::evm::{BlockId, FunctionKey};
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum XNode {
    Block { contract: Address, block: BlockId },
    Relayer,
    Client,
}

impl fmt::Display for XNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XNode::Block { contract, block } => write!(f, "{contract}:{block:#x}"),
            XNode::Relayer => f.write_str("relayer"),
            XNode::Client => f.write_str("client"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum XLabel {
    CF,
    Emitting,
    Informing,
}

impl fmt::Display for XLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            XLabel::CF => "CF",
            XLabel::Emitting => "Emitting",
            XLabel::Informing => "Informing",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct XEdge {
    pub from: XNode,
    pub to: XNode,
    pub label: XLabel,
}

/// A deposit emission relayed to an authorize entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Relay {
    pub emit: SiteRef,
    pub topic: Topic,
    pub authorize: FnRef,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Xcfg {
    pub nodes: BTreeSet<XNode>,
    pub edges: BTreeSet<XEdge>,
    pub relays: Vec<Relay>,
    /// Destination emit sites of withdraw events.
    pub withdraw_emits: Vec<SiteRef>,
    pub warnings: Vec<String>,
}

impl Xcfg {
    pub fn edges_labeled(&self, label: XLabel) -> impl Iterator<Item = &XEdge> {
        self.edges.iter().filter(move |e| e.label == label)
    }

    /// One edge per line, `from -> to [label]`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {n}\n"));
        }
        for e in &self.edges {
            out.push_str(&format!("{} -> {} [{}]\n", e.from, e.to, e.label));
        }
        out
    }
}

pub fn build_xcfg(program: &BridgeProgram) -> Xcfg {
    let mut x = Xcfg::default();
    x.nodes.insert(XNode::Relayer);
    x.nodes.insert(XNode::Client);
    for (addr, p) in &program.programs {
        for b in p.cfg.blocks.keys().filter(|b| !p.cfg.dead.contains(b)) {
            x.nodes.insert(XNode::Block {
                contract: *addr,
                block: *b,
            });
        }
        for (from, to) in p.cfg.edges.keys() {
            x.edges.insert(XEdge {
                from: XNode::Block {
                    contract: *addr,
                    block: *from,
                },
                to: XNode::Block {
                    contract: *addr,
                    block: *to,
                },
                label: XLabel::CF,
            });
        }
    }
    for pairing in &program.descriptor.pairings {
        let emits: Vec<SiteRef> = program
            .programs
            .values()
            .filter(|p| p.role == Role::Source)
            .flat_map(|p| &p.emits)
            .filter(|e| e.topic == pairing.deposit_event)
            .map(|e| e.site)
            .collect();
        let targets: Vec<FnRef> = program
            .programs
            .values()
            .filter(|p| p.role == Role::Destination)
            .filter(|p| p.function(FunctionKey::Public(pairing.authorize_selector)).is_some())
            .map(|p| p.fn_ref(FunctionKey::Public(pairing.authorize_selector)))
            .collect();
        if targets.is_empty() {
            x.warnings.push(format!(
                "pairing {} -> {}: no destination function with that selector; informing edge omitted",
                pairing.deposit_event, pairing.authorize_selector
            ));
        }
        for e in &emits {
            x.edges.insert(XEdge {
                from: XNode::Block {
                    contract: e.contract,
                    block: e.block,
                },
                to: XNode::Relayer,
                label: XLabel::Emitting,
            });
            for t in &targets {
                x.relays.push(Relay {
                    emit: *e,
                    topic: pairing.deposit_event,
                    authorize: *t,
                });
            }
        }
        for t in &targets {
            let entry = program.function(*t).expect("target exists").entry;
            x.edges.insert(XEdge {
                from: XNode::Relayer,
                to: XNode::Block {
                    contract: t.contract,
                    block: entry,
                },
                label: XLabel::Informing,
            });
        }
    }
    for p in program.programs.values().filter(|p| p.role == Role::Destination) {
        for e in p.emits.iter().filter(|e| e.kind == KindHint::Withdraw) {
            x.withdraw_emits.push(e.site);
            x.edges.insert(XEdge {
                from: XNode::Block {
                    contract: e.site.contract,
                    block: e.site.block,
                },
                to: XNode::Client,
                label: XLabel::Emitting,
            });
        }
    }
    x.relays.sort();
    x.relays.dedup();
    x
}
