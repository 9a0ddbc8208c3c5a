//! Cross-bridge semantic checks: deposit granularity and withdrawal
//! integrity.

use super::xdfg::{XdNode, Xdfg};
use super::Xcfg;
use crate::access::checks::{extract_checks_with, CheckForm};
use crate::access::must_revert_blocks;
use crate::bridge::{Address, BridgeProgram, ContractProgram, FnRef, Meaning, Role, SiteRef};
use crate::evm::{slot_of, BlockId, FunctionBody, Opcode, ValueId, ValueTable, U256};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SemKind {
    Granularity,
    Integrity,
}

/// A state variable, named from storage hints when possible.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StateVar {
    pub contract: Address,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot: Option<U256>,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meaning: Option<Meaning>,
}

impl StateVar {
    pub fn of_slot(program: &ContractProgram, slot: U256) -> StateVar {
        let hint = program.entry.storage_hint(slot);
        StateVar {
            contract: program.address(),
            slot: Some(slot),
            name: hint.map(|h| h.display_name()).unwrap_or_else(|| format!("slot {slot}")),
            meaning: hint.map(|h| h.meaning),
        }
    }

    fn native(contract: Address) -> StateVar {
        StateVar {
            contract,
            slot: None,
            name: "native value".into(),
            meaning: None,
        }
    }
}

/// Deposit function, its emit site and the authorize function it reaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct XPath {
    pub deposit: FnRef,
    pub emit: SiteRef,
    pub authorize: FnRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Independent {
    /// `amount` or `type`.
    pub role: &'static str,
    pub site: SiteRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SemWitness {
    Paths { first: XPath, second: XPath },
    Independent { items: Vec<Independent> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SemFinding {
    pub kind: SemKind,
    /// Destination function the finding is about.
    pub function: FnRef,
    pub function_name: String,
    /// Deposit functions feeding it, in order.
    pub deposits: Vec<FnRef>,
    pub witness: SemWitness,
    pub affected: Vec<StateVar>,
    /// Instructions the finding points at.
    pub sites: Vec<SiteRef>,
}

/// Public source functions whose body contains the emit block.
fn deposit_functions(program: &BridgeProgram, emit: &SiteRef) -> Vec<FnRef> {
    let p = program.program(emit.contract);
    p.cfg
        .public_functions()
        .filter(|f| f.blocks.contains(&emit.block))
        .map(|f| p.fn_ref(f.key))
        .collect()
}

fn xpaths(xcfg: &Xcfg, program: &BridgeProgram) -> BTreeMap<FnRef, Vec<XPath>> {
    let mut out: BTreeMap<FnRef, Vec<XPath>> = BTreeMap::new();
    for r in &xcfg.relays {
        for d in deposit_functions(program, &r.emit) {
            out.entry(r.authorize).or_default().push(XPath {
                deposit: d,
                emit: r.emit,
                authorize: r.authorize,
            });
        }
    }
    for v in out.values_mut() {
        v.sort();
        v.dedup();
    }
    out
}

/// Distinct deposit paths that land in the same withdrawal logic.
pub fn check_granularity(xcfg: &Xcfg, program: &BridgeProgram) -> Vec<SemFinding> {
    let mut out = Vec::new();
    for (target, paths) in xpaths(xcfg, program) {
        let p = program.program(target.contract);
        let f = p.function(target.key).expect("relay target exists");
        let mut affected: Vec<StateVar> = Vec::new();
        let mut writes: Vec<&Write> = Vec::new();
        let by_block = withdrawal_writes(p, f);
        writes.extend(by_block.values().flatten());
        writes.sort_by_key(|w| w.site.offset);
        for w in writes {
            if !affected.contains(&w.var) {
                affected.push(w.var.clone());
            }
        }
        for (i, a) in paths.iter().enumerate() {
            for b in &paths[i + 1..] {
                if a.deposit == b.deposit && a.emit == b.emit {
                    continue;
                }
                let mut deposits = vec![a.deposit, b.deposit];
                deposits.dedup();
                out.push(SemFinding {
                    kind: SemKind::Granularity,
                    function: target,
                    function_name: program.function_name(target),
                    deposits,
                    witness: SemWitness::Paths { first: *a, second: *b },
                    affected: affected.clone(),
                    sites: vec![a.emit, b.emit],
                });
            }
        }
    }
    out
}

struct Write {
    site: SiteRef,
    var: StateVar,
    amounts: BTreeSet<ValueId>,
}

/// Amount part of a stored balance: `x` in `bal +/- x`, else the value.
fn amount_of(values: &ValueTable, stored: ValueId, slot_key: ValueId) -> ValueId {
    if matches!(values.op_of(stored), Some(Opcode::ADD | Opcode::SUB)) {
        let args = values.args(stored);
        let same = |v: ValueId| {
            values.op_of(v) == Some(Opcode::SLOAD)
                && slot_of(values, values.args(v)[0]) == slot_of(values, slot_key)
        };
        if same(args[0]) {
            return args[1];
        }
        if same(args[1]) {
            return args[0];
        }
    }
    stored
}

fn withdrawal_writes(p: &ContractProgram, f: &FunctionBody) -> BTreeMap<BlockId, Vec<Write>> {
    let cfg = &p.cfg;
    let values = &cfg.values;
    let mut out: BTreeMap<BlockId, Vec<Write>> = BTreeMap::new();
    for b in &f.blocks {
        for ins in &cfg.blocks[b].instructions {
            let Some(facts) = cfg.facts(ins.offset) else {
                continue;
            };
            let site = SiteRef {
                contract: p.address(),
                block: *b,
                offset: ins.offset,
            };
            match ins.opcode {
                Opcode::SSTORE => {
                    for args in &facts.inputs {
                        let Some(slot) = slot_of(values, args[0]).base() else {
                            continue;
                        };
                        let balance = p
                            .entry
                            .storage_hint(slot)
                            .is_some_and(|h| h.meaning == Meaning::Balance);
                        if !balance {
                            continue;
                        }
                        out.entry(*b).or_default().push(Write {
                            site,
                            var: StateVar::of_slot(p, slot),
                            amounts: [amount_of(values, args[1], args[0])].into(),
                        });
                    }
                }
                Opcode::CALL | Opcode::CALLCODE => {
                    let amounts: BTreeSet<ValueId> = facts
                        .inputs
                        .iter()
                        .map(|a| a[2])
                        .filter(|v| !values.const_value(*v).is_some_and(|c| c.is_zero()))
                        .collect();
                    if !amounts.is_empty() {
                        out.entry(*b).or_default().push(Write {
                            site,
                            var: StateVar::native(p.address()),
                            amounts,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Blocks of `f` reachable from `start`, ignoring call matching.
fn reach_within(p: &ContractProgram, f: &FunctionBody, start: BlockId) -> BTreeSet<BlockId> {
    let mut seen = BTreeSet::new();
    let mut work = vec![start];
    while let Some(b) = work.pop() {
        if f.blocks.contains(&b) && seen.insert(b) {
            work.extend(p.cfg.successors(b).map(|(s, _)| s));
        }
    }
    seen
}

/// Withdrawal amounts and types that no deposit value reaches.
pub fn check_integrity(xcfg: &Xcfg, xdfg: &Xdfg, program: &BridgeProgram) -> Vec<SemFinding> {
    let sources: Vec<XdNode> = xdfg
        .nodes()
        .into_iter()
        .filter(|n| n.contract().is_some_and(|c| program.role_of(c) == Role::Source))
        .collect();
    let reached = xdfg.reachable(sources);
    let mut out = Vec::new();
    for (target, paths) in xpaths(xcfg, program) {
        let p = program.program(target.contract);
        let f = p.function(target.key).expect("relay target exists");
        let depends = |v: &ValueId| {
            *v == ValueTable::TOP
                || reached.contains(&XdNode::Value {
                    contract: p.address(),
                    id: *v,
                })
        };
        let writes = withdrawal_writes(p, f);
        let mut items = Vec::new();
        let mut affected: BTreeSet<(usize, StateVar)> = BTreeSet::new();
        for w in writes.values().flatten() {
            if !w.amounts.iter().all(depends) {
                items.push(Independent {
                    role: "amount",
                    site: w.site,
                });
                affected.insert((w.site.offset, w.var.clone()));
            }
        }
        let reverting = must_revert_blocks(&p.cfg);
        for c in extract_checks_with(p, f, &reverting) {
            if c.form != CheckForm::Branch {
                continue;
            }
            let succ: Vec<BlockId> = p.cfg.successors(c.site.block).map(|(s, _)| s).collect();
            let reached_writes: Vec<BTreeSet<usize>> = succ
                .iter()
                .map(|s| {
                    reach_within(p, f, *s)
                        .iter()
                        .flat_map(|b| writes.get(b).into_iter().flatten())
                        .map(|w| w.site.offset)
                        .collect()
                })
                .collect();
            let selects = reached_writes.len() == 2
                && reached_writes[0] != reached_writes[1]
                && reached_writes.iter().any(|s| !s.is_empty());
            if !selects || c.conditions.iter().any(depends) {
                continue;
            }
            items.push(Independent {
                role: "type",
                site: c.site,
            });
            for w in writes.values().flatten() {
                if reached_writes.iter().any(|s| s.contains(&w.site.offset)) {
                    affected.insert((w.site.offset, w.var.clone()));
                }
            }
        }
        if items.is_empty() {
            continue;
        }
        let mut deposits: Vec<FnRef> = paths.iter().map(|x| x.deposit).collect();
        deposits.dedup();
        let mut vars: Vec<StateVar> = Vec::new();
        let mut sites: Vec<SiteRef> = items.iter().map(|i| i.site).collect();
        for (offset, v) in affected {
            if let Some(w) = writes.values().flatten().find(|w| w.site.offset == offset) {
                if !sites.contains(&w.site) {
                    sites.push(w.site);
                }
            }
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        out.push(SemFinding {
            kind: SemKind::Integrity,
            function: target,
            function_name: program.function_name(target),
            deposits,
            sites,
            witness: SemWitness::Independent { items },
            affected: vars,
        });
    }
    out
}
