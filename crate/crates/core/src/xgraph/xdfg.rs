use super::{XLabel, Xcfg};
use crate::bridge::{Address, BridgeProgram, ContractProgram, SiteRef, Topic};
use crate::evm::partition::param_index;
use crate::evm::{slot_of, FunctionBody, Opcode, ValueId, ValueTable, U256};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XdNode {
    Value { contract: Address, id: ValueId },
    Storage { contract: Address, slot: U256 },
    /// Argument `index` of a relayed event: indexed topics first, then data words.
    EventArg { topic: Topic, index: usize },
    Client,
}

impl XdNode {
    pub fn contract(&self) -> Option<Address> {
        match self {
            XdNode::Value { contract, .. } | XdNode::Storage { contract, .. } => Some(*contract),
            _ => None,
        }
    }
}

impl fmt::Display for XdNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XdNode::Value { contract, id } => write!(f, "{contract}:v{}", id.0),
            XdNode::Storage { contract, slot } => write!(f, "{contract}:slot{slot}"),
            XdNode::EventArg { topic, index } => write!(f, "relayer:{topic}#{index}"),
            XdNode::Client => f.write_str("client"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Carried {
    Local,
    Storage,
    EventArg(usize),
    CallArg(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct XDfgEdge {
    pub from: XdNode,
    pub to: XdNode,
    pub carried: Carried,
    /// The xCFG edge label this flow crosses, if any.
    pub boundary: Option<XLabel>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Xdfg {
    pub edges: BTreeSet<XDfgEdge>,
    #[serde(skip)]
    succ: BTreeMap<XdNode, Vec<XdNode>>,
    /// Values stopped at a chain boundary.
    pub blocked: Vec<String>,
}

impl Xdfg {
    pub fn from_edges(edges: impl IntoIterator<Item = XDfgEdge>) -> Xdfg {
        let mut g = Xdfg::default();
        for e in edges {
            g.add(e);
        }
        g
    }

    pub fn add(&mut self, e: XDfgEdge) {
        if self.edges.insert(e) {
            self.succ.entry(e.from).or_default().push(e.to);
        }
    }

    pub fn successors(&self, n: &XdNode) -> &[XdNode] {
        self.succ.get(n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn nodes(&self) -> BTreeSet<XdNode> {
        self.edges.iter().flat_map(|e| [e.from, e.to]).collect()
    }

    /// Nodes reachable from `seeds`, seeds included.
    pub fn reachable(&self, seeds: impl IntoIterator<Item = XdNode>) -> BTreeSet<XdNode> {
        let mut seen = BTreeSet::new();
        let mut work: Vec<XdNode> = seeds.into_iter().collect();
        while let Some(n) = work.pop() {
            if seen.insert(n) {
                work.extend(self.successors(&n).iter().copied());
            }
        }
        seen
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let label = match e.carried {
                Carried::Local => "local".to_string(),
                Carried::Storage => "storage".to_string(),
                Carried::EventArg(i) => format!("event-arg {i}"),
                Carried::CallArg(i) => format!("call-arg {i}"),
            };
            out.push_str(&format!("{} -> {} [{label}]\n", e.from, e.to));
        }
        out
    }
}

/// Values logged by an emit site, per event-argument position.
pub fn event_args(program: &ContractProgram, site: usize) -> Vec<BTreeSet<ValueId>> {
    let cfg = &program.cfg;
    let Some(facts) = cfg.facts(site) else {
        return Vec::new();
    };
    let topics = cfg
        .instruction_at(site)
        .and_then(|i| i.opcode.log_topics())
        .unwrap_or(0);
    let indexed = topics.saturating_sub(1);
    let mut out: Vec<BTreeSet<ValueId>> = vec![BTreeSet::new(); indexed];
    for inputs in &facts.inputs {
        for (i, v) in inputs.iter().skip(3).take(indexed).enumerate() {
            out[i].insert(*v);
        }
    }
    for words in &facts.mem_inputs {
        for (j, v) in words.iter().enumerate() {
            if out.len() <= indexed + j {
                out.resize(indexed + j + 1, BTreeSet::new());
            }
            out[indexed + j].insert(*v);
        }
    }
    for set in &mut out {
        set.remove(&ValueTable::TOP);
    }
    out
}

/// Parameter loads of a public function, by parameter index.
pub fn param_values(program: &ContractProgram, f: &FunctionBody) -> BTreeMap<usize, BTreeSet<ValueId>> {
    let cfg = &program.cfg;
    let mut out: BTreeMap<usize, BTreeSet<ValueId>> = BTreeMap::new();
    for b in &f.blocks {
        for ins in &cfg.blocks[b].instructions {
            if ins.opcode != Opcode::CALLDATALOAD {
                continue;
            }
            for v in cfg.facts(ins.offset).map(|f| &f.outputs).into_iter().flatten() {
                if let Some(k) = param_index(&cfg.values, *v) {
                    out.entry(k).or_default().insert(*v);
                }
            }
        }
    }
    out
}

fn local_edges(g: &mut Xdfg, p: &ContractProgram) {
    let addr = p.address();
    let values = &p.cfg.values;
    for i in 1..values.len() {
        let id = ValueId(i as u32);
        for o in values.operands(id) {
            if o == ValueTable::TOP {
                continue;
            }
            g.add(XDfgEdge {
                from: XdNode::Value { contract: addr, id: o },
                to: XdNode::Value { contract: addr, id },
                carried: Carried::Local,
                boundary: None,
            });
        }
    }
    for (block, ins) in p.cfg.sites() {
        if p.cfg.dead.contains(&block) {
            continue;
        }
        let Some(facts) = p.cfg.facts(ins.offset) else {
            continue;
        };
        match ins.opcode {
            Opcode::SSTORE => {
                for args in &facts.inputs {
                    if let Some(slot) = slot_of(values, args[0]).base() {
                        if args[1] != ValueTable::TOP {
                            g.add(XDfgEdge {
                                from: XdNode::Value { contract: addr, id: args[1] },
                                to: XdNode::Storage { contract: addr, slot },
                                carried: Carried::Storage,
                                boundary: None,
                            });
                        }
                    }
                }
            }
            Opcode::SLOAD => {
                for args in &facts.inputs {
                    if let Some(slot) = slot_of(values, args[0]).base() {
                        for out in &facts.outputs {
                            g.add(XDfgEdge {
                                from: XdNode::Storage { contract: addr, slot },
                                to: XdNode::Value { contract: addr, id: *out },
                                carried: Carried::Storage,
                                boundary: None,
                            });
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

fn emit_edges(g: &mut Xdfg, p: &ContractProgram, site: &SiteRef, to: impl Fn(usize) -> XdNode) {
    for (i, vals) in event_args(p, site.offset).into_iter().enumerate() {
        for v in vals {
            g.add(XDfgEdge {
                from: XdNode::Value {
                    contract: site.contract,
                    id: v,
                },
                to: to(i),
                carried: Carried::EventArg(i),
                boundary: Some(XLabel::Emitting),
            });
        }
    }
}

pub fn build_xdfg(xcfg: &Xcfg, program: &BridgeProgram) -> Xdfg {
    let mut g = Xdfg::default();
    for p in program.programs.values() {
        local_edges(&mut g, p);
    }
    let mut informed = BTreeSet::new();
    for relay in &xcfg.relays {
        let src = program.program(relay.emit.contract);
        emit_edges(&mut g, src, &relay.emit, |index| XdNode::EventArg {
            topic: relay.topic,
            index,
        });
        if !informed.insert((relay.topic, relay.authorize)) {
            continue;
        }
        let dst = program.program(relay.authorize.contract);
        let f = dst.function(relay.authorize.key).expect("relay target exists");
        let n_args = event_args(src, relay.emit.offset).len();
        for (k, vals) in param_values(dst, f) {
            if k >= n_args {
                g.blocked.push(format!(
                    "{}: parameter {k} has no matching argument in event {}",
                    program.function_name(relay.authorize),
                    relay.topic
                ));
                continue;
            }
            for v in vals {
                g.add(XDfgEdge {
                    from: XdNode::EventArg {
                        topic: relay.topic,
                        index: k,
                    },
                    to: XdNode::Value {
                        contract: dst.address(),
                        id: v,
                    },
                    carried: Carried::CallArg(k),
                    boundary: Some(XLabel::Informing),
                });
            }
        }
    }
    for site in &xcfg.withdraw_emits {
        emit_edges(&mut g, program.program(site.contract), site, |_| XdNode::Client);
    }
    g.blocked.sort();
    g.blocked.dedup();
    g
}
