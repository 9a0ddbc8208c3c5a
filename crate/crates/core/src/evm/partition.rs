//! Function partitioning: dispatcher recognition, internal-call discovery and
//! parameter inference.

use super::cfg::{BlockId, ContractCfg, EdgeKind, FunctionBody, FunctionKey, ParamKind, Selector};
use super::opcode::Opcode;
use super::value::{Value, ValueId, ValueTable};
use std::collections::{BTreeMap, BTreeSet};

/// Call-stack depth explored when computing function bodies.
pub const MAX_CALL_DEPTH: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectorHint {
    pub selector: Selector,
    pub name: String,
}

/// Blocks executed by a function entered at `entry`, matching returns to
/// the call that produced them. Returns with an empty call stack leave the
/// function and are not followed.
pub fn body_blocks(cfg: &ContractCfg, entry: BlockId) -> BTreeSet<BlockId> {
    let mut blocks = BTreeSet::new();
    let mut seen: BTreeSet<(BlockId, Vec<BlockId>)> = BTreeSet::new();
    let mut work = vec![(entry, Vec::new())];
    while let Some((b, stack)) = work.pop() {
        if !seen.insert((b, stack.clone())) {
            continue;
        }
        blocks.insert(b);
        for (to, kind) in cfg.successors(b) {
            match kind {
                EdgeKind::Normal => work.push((to, stack.clone())),
                EdgeKind::Call { return_to } => {
                    if stack.len() < MAX_CALL_DEPTH {
                        let mut s = stack.clone();
                        s.push(return_to);
                        work.push((to, s));
                    }
                }
                EdgeKind::Return => {
                    if stack.last() == Some(&to) {
                        let mut s = stack.clone();
                        s.pop();
                        work.push((to, s));
                    }
                }
            }
        }
    }
    blocks
}

fn reads_selector(values: &ValueTable, v: ValueId) -> bool {
    values.slice(v, 64).into_iter().any(|x| match values.get(x) {
        Value::Op { op: Opcode::CALLDATALOAD, args, .. } => {
            values.const_value(args[0]).is_some_and(|c| c.is_zero())
        }
        _ => false,
    })
}

/// Selector constant compared by a dispatcher condition, if `cond` is one.
fn dispatcher_selector(values: &ValueTable, cond: ValueId) -> Option<Selector> {
    if values.op_of(cond) != Some(Opcode::EQ) {
        return None;
    }
    let args = values.args(cond);
    let (a, b) = (args[0], args[1]);
    let (k, other) = match (values.const_value(a), values.const_value(b)) {
        (Some(k), None) => (k, b),
        (None, Some(k)) => (k, a),
        _ => return None,
    };
    let k = k.as_u64().filter(|k| *k <= u32::MAX as u64)?;
    reads_selector(values, other).then(|| Selector::from(k as u32))
}

/// Dispatcher comparisons: selector to the entry block it jumps to.
pub fn find_dispatch(cfg: &ContractCfg) -> BTreeMap<Selector, BlockId> {
    let mut out = BTreeMap::new();
    for block in cfg.blocks.values() {
        let last = block.last();
        if last.opcode != Opcode::JUMPI || cfg.dead.contains(&block.id) {
            continue;
        }
        let Some(facts) = cfg.facts(last.offset) else {
            continue;
        };
        for inputs in &facts.inputs {
            let Some(sel) = dispatcher_selector(&cfg.values, inputs[1]) else {
                continue;
            };
            let targets = cfg.values.const_set(inputs[0]).unwrap_or_default();
            if let Some(t) = targets.iter().find_map(|t| t.as_usize()) {
                out.entry(sel).or_insert(t);
            }
        }
    }
    out
}

/// Argument index of a `CALLDATALOAD(4 + 32k)`.
pub fn param_index(values: &ValueTable, v: ValueId) -> Option<usize> {
    match values.get(v) {
        Value::Op { op: Opcode::CALLDATALOAD, args, .. } => {
            let off = values.const_value(args[0])?.as_usize()?;
            (off >= 4 && (off - 4) % 32 == 0).then(|| (off - 4) / 32)
        }
        _ => None,
    }
}

fn infer_params(cfg: &ContractCfg, blocks: &BTreeSet<BlockId>) -> Vec<ParamKind> {
    let mut loads: BTreeMap<usize, BTreeSet<ValueId>> = BTreeMap::new();
    let mut calldata_uses: Vec<ValueId> = Vec::new();
    for b in blocks {
        for ins in &cfg.blocks[b].instructions {
            let Some(f) = cfg.facts(ins.offset) else {
                continue;
            };
            match ins.opcode {
                Opcode::CALLDATALOAD => {
                    for out in &f.outputs {
                        if let Some(k) = param_index(&cfg.values, *out) {
                            loads.entry(k).or_default().insert(*out);
                        }
                    }
                    calldata_uses.extend(f.inputs.iter().map(|i| i[0]));
                }
                Opcode::CALLDATACOPY => {
                    calldata_uses.extend(f.inputs.iter().flat_map(|i| [i[1], i[2]]));
                }
                _ => {}
            }
        }
    }
    let Some(max) = loads.keys().max().copied() else {
        return Vec::new();
    };
    let used_as_offset: BTreeSet<ValueId> = calldata_uses
        .iter()
        .flat_map(|u| cfg.values.slice(*u, 64))
        .collect();
    (0..=max)
        .map(|k| {
            let dynamic = loads
                .get(&k)
                .is_some_and(|vs| vs.iter().any(|v| used_as_offset.contains(v)));
            if dynamic {
                ParamKind::Dynamic
            } else {
                ParamKind::Word
            }
        })
        .collect()
}

/// Split the contract into public entries and internal functions.
///
/// Hinted selectors absent from the dispatcher produce diagnostics.
pub fn partition_functions(mut cfg: ContractCfg, hints: &[SelectorHint]) -> ContractCfg {
    let dispatch = find_dispatch(&cfg);
    let mut functions = BTreeMap::new();
    if dispatch.is_empty() {
        let blocks = body_blocks(&cfg, cfg.entry);
        functions.insert(
            FunctionKey::Fallback,
            FunctionBody {
                key: FunctionKey::Fallback,
                entry: cfg.entry,
                params: infer_params(&cfg, &blocks),
                blocks,
                is_public: true,
                name: None,
            },
        );
    }
    for (sel, entry) in &dispatch {
        let blocks = body_blocks(&cfg, *entry);
        let key = FunctionKey::Public(*sel);
        let name = hints.iter().find(|h| h.selector == *sel).map(|h| h.name.clone());
        functions.insert(
            key,
            FunctionBody {
                key,
                entry: *entry,
                params: infer_params(&cfg, &blocks),
                blocks,
                is_public: true,
                name,
            },
        );
    }
    let callees: BTreeSet<BlockId> = cfg
        .edges
        .iter()
        .filter(|(_, k)| matches!(k, EdgeKind::Call { .. }))
        .map(|((_, to), _)| *to)
        .collect();
    for entry in callees {
        let key = FunctionKey::Internal(entry);
        let blocks = body_blocks(&cfg, entry);
        functions.insert(
            key,
            FunctionBody {
                key,
                entry,
                params: Vec::new(),
                blocks,
                is_public: false,
                name: None,
            },
        );
    }
    for h in hints {
        if !dispatch.contains_key(&h.selector) {
            let msg = format!(
                "hinted selector {} ({}) not found in dispatcher",
                h.selector, h.name
            );
            log::warn!("{msg}");
            cfg.diagnostics.push(msg);
        }
    }
    cfg.functions = functions;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::asm::assemble_text;
    use crate::evm::disasm::disassemble;
    use crate::evm::interp::recover_cfg;

    fn build(src: &str, hints: &[SelectorHint]) -> ContractCfg {
        let ins = disassemble(&assemble_text(src).unwrap()).unwrap();
        partition_functions(recover_cfg(&ins), hints)
    }

    const TWO: &str = "
        PUSH0 CALLDATALOAD PUSH1 0xe0 SHR
        DUP1 PUSH4 0x11111111 EQ @f1 JUMPI
        DUP1 PUSH4 0x22222222 EQ @f2 JUMPI
        PUSH0 DUP1 REVERT
        f1: PUSH1 0x04 CALLDATALOAD PUSH0 SSTORE STOP
        f2: PUSH1 0x04 CALLDATALOAD PUSH1 0x04 ADD CALLDATALOAD PUSH1 0x24 CALLDATALOAD ADD PUSH1 0x01 SSTORE STOP";

    #[test]
    fn fallback_only() {
        let cfg = build("CALLVALUE PUSH0 SSTORE STOP", &[]);
        assert_eq!(cfg.functions.len(), 1);
        assert!(cfg.functions.contains_key(&FunctionKey::Fallback));
    }

    #[test]
    fn two_selectors_disjoint_bodies() {
        let hints = [
            SelectorHint {
                selector: Selector::from(0x11111111),
                name: "one".into(),
            },
            SelectorHint {
                selector: Selector::from(0x33333333),
                name: "missing".into(),
            },
        ];
        let cfg = build(TWO, &hints);
        let f1 = &cfg.functions[&FunctionKey::Public(Selector::from(0x11111111))];
        let f2 = &cfg.functions[&FunctionKey::Public(Selector::from(0x22222222))];
        assert!(f1.blocks.is_disjoint(&f2.blocks));
        assert_eq!(f1.name.as_deref(), Some("one"));
        assert_eq!(f1.params, vec![ParamKind::Word]);
        assert_eq!(f2.params, vec![ParamKind::Dynamic, ParamKind::Word]);
        assert!(cfg.diagnostics.iter().any(|d| d.contains("0x33333333")));
    }

    #[test]
    fn internal_function_found() {
        let cfg = build("@r @f JUMP r: STOP f: PUSH0 SLOAD POP JUMP", &[]);
        let internal: Vec<_> = cfg.functions.values().filter(|f| !f.is_public).collect();
        assert_eq!(internal.len(), 1);
        let fallback = &cfg.functions[&FunctionKey::Fallback];
        assert!(fallback.blocks.is_superset(&internal[0].blocks));
    }
}
