//! Taint from external input over the cross-chain data-flow graph, and the
//! traces that confirm an indicator is reachable and what it affects.

use crate::access::ResourceKind;
use crate::association::{AcFinding, FunctionAnalysis};
use crate::bridge::{BridgeProgram, ContractProgram, FnRef, SiteRef};
use crate::evm::{FunctionKey, Opcode, Value, ValueId, ValueTable};
use crate::xgraph::semantic::StateVar;
use crate::xgraph::xdfg::param_values;
use crate::xgraph::{SemFinding, XdNode, Xdfg};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum SourceKind {
    Calldataload,
    Calldatacopy,
    Caller,
    Origin,
    Callvalue,
    Calldatasize,
    Param(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TaintFact {
    pub origin: SourceKind,
    /// Instruction that produced the value.
    pub site: SiteRef,
    pub node: XdNode,
    /// Function-call trace from the origin: the public function reading it.
    pub chain: Vec<FnRef>,
}

fn source_kind(v: &Value) -> Option<SourceKind> {
    match v {
        Value::Op {
            op: Opcode::CALLDATALOAD,
            ..
        } => Some(SourceKind::Calldataload),
        Value::Site { op, .. } => match *op {
            Opcode::CALLDATACOPY => Some(SourceKind::Calldatacopy),
            Opcode::CALLER => Some(SourceKind::Caller),
            Opcode::ORIGIN => Some(SourceKind::Origin),
            Opcode::CALLVALUE => Some(SourceKind::Callvalue),
            Opcode::CALLDATASIZE => Some(SourceKind::Calldatasize),
            _ => None,
        },
        _ => None,
    }
}

fn site_of(p: &ContractProgram, values: &ValueTable, v: ValueId) -> Option<SiteRef> {
    values.own_sites(v).iter().next().and_then(|o| p.site(*o))
}

fn public_owner(p: &ContractProgram, block: usize) -> Vec<FnRef> {
    p.cfg
        .public_functions()
        .filter(|f| f.blocks.contains(&block))
        .map(|f| p.fn_ref(f.key))
        .collect()
}

/// Taint seeds: every external-input read and every public parameter.
pub fn seed_sources(program: &BridgeProgram) -> Vec<TaintFact> {
    let mut out = Vec::new();
    for p in program.programs.values() {
        let values = &p.cfg.values;
        for i in 1..values.len() {
            let id = ValueId(i as u32);
            let Some(kind) = source_kind(values.get(id)) else {
                continue;
            };
            let Some(site) = site_of(p, values, id) else {
                continue;
            };
            out.push(TaintFact {
                origin: kind,
                site,
                node: XdNode::Value {
                    contract: p.address(),
                    id,
                },
                chain: public_owner(p, site.block),
            });
        }
        for f in p.cfg.public_functions() {
            for (k, vals) in param_values(p, f) {
                for v in vals {
                    let Some(site) = site_of(p, values, v) else {
                        continue;
                    };
                    out.push(TaintFact {
                        origin: SourceKind::Param(k),
                        site,
                        node: XdNode::Value {
                            contract: p.address(),
                            id: v,
                        },
                        chain: vec![p.fn_ref(f.key)],
                    });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SinkHit {
    /// `None` for the client node.
    pub site: Option<SiteRef>,
    pub opcode: String,
    /// Seeds reaching the sink's operands.
    pub origins: BTreeSet<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TaintMap {
    /// Seeds (indices into the seed list) reaching each node.
    pub taint: BTreeMap<XdNode, BTreeSet<usize>>,
    pub sinks: Vec<SinkHit>,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

impl TaintMap {
    pub fn is_tainted(&self, n: &XdNode) -> bool {
        self.taint.get(n).is_some_and(|s| !s.is_empty())
    }
}

/// Forward fixpoint of seed sets over the graph's edges.
pub fn propagate(xdfg: &Xdfg, seeds: &[TaintFact]) -> TaintMap {
    let mut map = TaintMap::default();
    let mut work: Vec<XdNode> = Vec::new();
    for (i, s) in seeds.iter().enumerate() {
        map.taint.entry(s.node).or_default().insert(i);
        work.push(s.node);
    }
    let bound = (2 * xdfg.edges.len() + seeds.len() + 1).saturating_mul(seeds.len().max(1));
    while let Some(n) = work.pop() {
        map.iterations += 1;
        if map.iterations > bound {
            map.diagnostics
                .push("taint propagation did not converge within its bound; result is partial".into());
            break;
        }
        let here = map.taint.get(&n).cloned().unwrap_or_default();
        for s in xdfg.successors(&n) {
            let there = map.taint.entry(*s).or_default();
            let before = there.len();
            there.extend(here.iter().copied());
            if there.len() != before {
                work.push(*s);
            }
        }
    }
    map.taint.retain(|_, s| !s.is_empty());
    map
}

const SINKS: [Opcode; 7] = [
    Opcode::CALL,
    Opcode::CALLCODE,
    Opcode::STATICCALL,
    Opcode::DELEGATECALL,
    Opcode::SSTORE,
    Opcode::BALANCE,
    Opcode::ADDRESS,
];

fn operand_values(p: &ContractProgram, offset: usize) -> BTreeSet<ValueId> {
    let Some(f) = p.cfg.facts(offset) else {
        return BTreeSet::new();
    };
    f.inputs
        .iter()
        .flatten()
        .chain(f.mem_inputs.iter().flatten())
        .copied()
        .filter(|v| *v != ValueTable::TOP)
        .collect()
}

fn origins_at(map: &TaintMap, p: &ContractProgram, offset: usize) -> BTreeSet<usize> {
    operand_values(p, offset)
        .into_iter()
        .flat_map(|id| {
            map.taint
                .get(&XdNode::Value {
                    contract: p.address(),
                    id,
                })
                .into_iter()
                .flatten()
                .copied()
        })
        .collect()
}

/// Record every sink instruction and the client node with the seeds reaching them.
pub fn record_sinks(program: &BridgeProgram, map: &mut TaintMap) {
    let mut sinks = Vec::new();
    for p in program.programs.values() {
        for (block, ins) in p.cfg.sites() {
            if p.cfg.dead.contains(&block) || !SINKS.contains(&ins.opcode) {
                continue;
            }
            sinks.push(SinkHit {
                site: p.site(ins.offset),
                opcode: ins.opcode.name().to_string(),
                origins: origins_at(map, p, ins.offset),
            });
        }
    }
    sinks.push(SinkHit {
        site: None,
        opcode: "client".into(),
        origins: map.taint.get(&XdNode::Client).cloned().unwrap_or_default(),
    });
    map.sinks = sinks;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VulnTrace {
    /// Functions from the public entry to the indicator.
    pub entry_chain: Vec<FnRef>,
    pub entry_names: Vec<String>,
    pub affected: Vec<StateVar>,
}

impl VulnTrace {
    pub fn render(&self) -> String {
        let names: Vec<&str> = self.affected.iter().map(|v| v.name.as_str()).collect();
        format!("{} -> {{{}}}", self.entry_names.join(" -> "), names.join(", "))
    }
}

pub enum Indicator<'a> {
    Ac(&'a AcFinding),
    Sem(&'a SemFinding),
}

/// Storage written at `site` (through the callee for internal calls).
fn writes_at(program: &BridgeProgram, fa: Option<&FunctionAnalysis>, site: &SiteRef) -> Vec<(usize, StateVar)> {
    let p = program.program(site.contract);
    let mut out = Vec::new();
    let resource = fa.and_then(|fa| fa.resources.iter().find(|r| r.site == *site && r.kind != ResourceKind::AbiEntry));
    let store = |offset: usize, out: &mut Vec<(usize, StateVar)>| {
        for args in p.cfg.facts(offset).map(|f| &f.inputs).into_iter().flatten() {
            if let Some(slot) = crate::evm::slot_of(&p.cfg.values, args[0]).base() {
                out.push((offset, StateVar::of_slot(p, slot)));
            }
        }
    };
    match p.cfg.instruction_at(site.offset).map(|i| i.opcode) {
        Some(Opcode::SSTORE) => store(site.offset, &mut out),
        Some(Opcode::JUMP) => {
            if let Some(body) = resource.and_then(|r| r.callee).and_then(|k| p.function(k)) {
                for b in &body.blocks {
                    for ins in &p.cfg.blocks[b].instructions {
                        if ins.opcode == Opcode::SSTORE {
                            store(ins.offset, &mut out);
                        }
                    }
                }
            }
        }
        _ => {}
    }
    out
}

/// Variables written downstream of the seed variables.
fn closure(program: &BridgeProgram, xdfg: &Xdfg, seeds: &[StateVar]) -> Vec<StateVar> {
    let start: Vec<XdNode> = seeds
        .iter()
        .filter_map(|v| {
            v.slot.map(|slot| XdNode::Storage {
                contract: v.contract,
                slot,
            })
        })
        .collect();
    let mut out: Vec<StateVar> = seeds.to_vec();
    for n in xdfg.reachable(start) {
        if let XdNode::Storage { contract, slot } = n {
            let v = StateVar::of_slot(program.program(contract), slot);
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

pub struct TraceOutcome {
    /// One entry per indicator; `None` when the indicator was demoted.
    pub traces: Vec<Option<VulnTrace>>,
    pub notes: Vec<String>,
}

/// Confirm each indicator is reachable from external input (otherwise it
/// is demoted to a note) and collect the state it affects.
pub fn discover_traces(
    indicators: &[Indicator<'_>],
    map: &TaintMap,
    xdfg: &Xdfg,
    program: &BridgeProgram,
    analyses: &[FunctionAnalysis],
) -> TraceOutcome {
    let mut traces = Vec::new();
    let mut notes = Vec::new();
    for ind in indicators {
        let (function, sites, chain, direct): (FnRef, Vec<SiteRef>, Vec<FnRef>, Vec<StateVar>) = match ind {
            Indicator::Ac(f) => {
                let fa = analyses.iter().find(|a| a.function == f.function);
                let mut chain = vec![f.function];
                let mut writes: Vec<(usize, StateVar)> = Vec::new();
                for s in &f.resources {
                    writes.extend(writes_at(program, fa, s));
                    let callee = fa
                        .and_then(|fa| fa.resources.iter().find(|r| r.site == *s && r.kind == ResourceKind::InternalMethod))
                        .and_then(|r| r.callee);
                    if let Some(k) = callee {
                        let r = FnRef {
                            contract: s.contract,
                            key: k,
                        };
                        if !chain.contains(&r) {
                            chain.push(r);
                        }
                    }
                }
                writes.sort_by_key(|(o, _)| *o);
                let mut vars: Vec<StateVar> = Vec::new();
                for (_, v) in writes {
                    if !vars.contains(&v) {
                        vars.push(v);
                    }
                }
                (f.function, f.resources.clone(), chain, vars)
            }
            Indicator::Sem(s) => {
                let mut chain: Vec<FnRef> = s.deposits.clone();
                chain.push(s.function);
                (s.function, s.sites.clone(), chain, s.affected.clone())
            }
        };
        let accessible = function.key.is_public()
            && sites.iter().any(|s| !origins_at(map, program.program(s.contract), s.offset).is_empty());
        if !accessible {
            notes.push(format!(
                "{} in {}: no external input reaches the indicator; reported as informational",
                match ind {
                    Indicator::Ac(_) => "access-control indicator",
                    Indicator::Sem(_) => "semantic indicator",
                },
                program.function_name(function)
            ));
            traces.push(None);
            continue;
        }
        let affected = closure(program, xdfg, &direct);
        traces.push(Some(VulnTrace {
            entry_names: chain.iter().map(|f| program.function_name(*f)).collect(),
            entry_chain: chain,
            affected,
        }));
    }
    TraceOutcome { traces, notes }
}

/// Whether `key` is reached from a public entry by a call edge.
pub fn called_from(program: &BridgeProgram, caller: FnRef, callee: FnRef) -> bool {
    let Some(f) = program.function(caller) else {
        return false;
    };
    let FunctionKey::Internal(entry) = callee.key else {
        return false;
    };
    caller.contract == callee.contract && f.blocks.contains(&entry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::Address;
    use crate::xgraph::{Carried, XDfgEdge};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn node(i: usize) -> XdNode {
        XdNode::Value {
            contract: Address([0; 20]),
            id: ValueId(i as u32),
        }
    }

    fn fact(i: usize) -> TaintFact {
        TaintFact {
            origin: SourceKind::Param(i),
            site: SiteRef {
                contract: Address([0; 20]),
                block: 0,
                offset: i,
            },
            node: node(i),
            chain: vec![],
        }
    }

    #[test]
    fn chain_is_fully_tainted() {
        let g = Xdfg::from_edges((0..10).map(|i| XDfgEdge {
            from: node(i),
            to: node(i + 1),
            carried: Carried::Local,
            boundary: None,
        }));
        let m = propagate(&g, &[fact(0)]);
        assert!((0..=10).all(|i| m.is_tainted(&node(i))));
    }

    /// Warshall closure over an adjacency matrix.
    fn closure_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let mut r = vec![vec![false; n]; n];
        for i in 0..n {
            r[i][i] = true;
        }
        for (a, b) in edges {
            r[*a][*b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if r[i][k] {
                    for j in 0..n {
                        if r[k][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
        }
        r
    }

    #[test]
    fn matches_closure_oracle_on_random_graphs() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=50);
            let m = rng.gen_range(0..=n * 3);
            let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
            let seeds: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.15)).collect();
            let g = Xdfg::from_edges(edges.iter().map(|(a, b)| XDfgEdge {
                from: node(*a),
                to: node(*b),
                carried: Carried::Local,
                boundary: None,
            }));
            let facts: Vec<TaintFact> = seeds.iter().map(|s| fact(*s)).collect();
            let got = propagate(&g, &facts);
            let reach = closure_oracle(n, &edges);
            for v in 0..n {
                let want: BTreeSet<usize> = seeds
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| reach[**s][v])
                    .map(|(i, _)| i)
                    .collect();
                let have = got.taint.get(&node(v)).cloned().unwrap_or_default();
                assert_eq!(have, want, "seed {seed} node {v}");
            }
        }
    }
}
