//! Control-flow recovery by abstract interpretation of the operand stack.
//!
//! Each block keeps up to [`CONTEXTS_PER_BLOCK`] distinct entry states; a
//! further state widens them into one (differing slots become merges or
//! top). Jump targets are read from constant (or merge-of-constant) values
//! only; anything else leaves the jump unresolved.

use super::cfg::{BasicBlock, BlockId, ContractCfg, EdgeKind, SiteFacts, Terminator};
use super::disasm::Instruction;
use super::opcode::Opcode;
use super::value::{Value, ValueId, ValueTable};
use super::word::U256;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

/// Entry states kept per block before widening: the first visit plus one unroll.
pub const CONTEXTS_PER_BLOCK: usize = 2;

/// Upper bound on block executions before the fixpoint is abandoned.
const STEP_BUDGET: usize = 200_000;

/// Largest memory region (in words) tracked for SHA3, LOG and call data.
const MAX_TRACKED_WORDS: usize = 16;

/// Memory offsets above this are not tracked.
const MAX_TRACKED_OFFSET: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
struct AbsState {
    stack: Vec<ValueId>,
    mem: BTreeMap<usize, ValueId>,
}

impl AbsState {
    fn pop(&mut self) -> ValueId {
        self.stack.pop().unwrap_or(ValueTable::TOP)
    }

    fn peek(&self, depth: usize) -> ValueId {
        self.stack
            .len()
            .checked_sub(depth + 1)
            .map_or(ValueTable::TOP, |i| self.stack[i])
    }

    fn clobber(&mut self, start: usize, len: usize) {
        let lo = start.saturating_sub(31);
        let hi = start + len;
        let doomed: Vec<usize> = self.mem.range(lo..hi).map(|(k, _)| *k).collect();
        for k in doomed {
            self.mem.remove(&k);
        }
    }

    fn store(&mut self, offset: usize, value: ValueId) {
        self.clobber(offset, 32);
        self.mem.insert(offset, value);
    }
}

fn const_usize(values: &ValueTable, v: ValueId) -> Option<usize> {
    values.const_value(v).and_then(|c| c.as_usize())
}

fn fold(op: Opcode, args: &[U256]) -> Option<U256> {
    let a = *args.first()?;
    let b = args.get(1).copied();
    let bool_word = |x: bool| if x { U256::ONE } else { U256::ZERO };
    Some(match op {
        Opcode::ADD => a.wrapping_add(b?),
        Opcode::SUB => a.wrapping_sub(b?),
        Opcode::MUL => a.wrapping_mul(b?),
        Opcode::AND => a & b?,
        Opcode::OR => a | b?,
        Opcode::XOR => a ^ b?,
        Opcode::NOT => !a,
        Opcode::EQ => bool_word(a == b?),
        Opcode::LT => bool_word(a < b?),
        Opcode::GT => bool_word(a > b?),
        Opcode::ISZERO => bool_word(a.is_zero()),
        Opcode::SHL => b?.shl(a.shift_amount()),
        Opcode::SHR => b?.shr(a.shift_amount()),
        _ => return None,
    })
}

/// Split a linear instruction list into basic blocks.
pub fn split_blocks(instructions: &[Instruction]) -> BTreeMap<BlockId, BasicBlock> {
    let mut blocks = BTreeMap::new();
    let mut current: Vec<Instruction> = Vec::new();
    let flush = |current: &mut Vec<Instruction>, blocks: &mut BTreeMap<BlockId, BasicBlock>| {
        if current.is_empty() {
            return;
        }
        let last = current.last().unwrap().opcode;
        let terminator = match last {
            Opcode::JUMP => Terminator::Jump,
            Opcode::JUMPI => Terminator::Jumpi,
            Opcode::RETURN => Terminator::Return,
            Opcode::REVERT => Terminator::Revert,
            Opcode::STOP => Terminator::Stop,
            Opcode::SELFDESTRUCT => Terminator::Selfdestruct,
            op if op.is_halting() => Terminator::Invalid,
            _ => Terminator::Fallthrough,
        };
        let id = current[0].offset;
        blocks.insert(
            id,
            BasicBlock {
                id,
                instructions: std::mem::take(current),
                terminator,
            },
        );
    };
    for ins in instructions {
        if ins.opcode == Opcode::JUMPDEST {
            flush(&mut current, &mut blocks);
        }
        current.push(ins.clone());
        if ins.opcode.ends_block() {
            flush(&mut current, &mut blocks);
        }
    }
    flush(&mut current, &mut blocks);
    // Falling off the end of the code behaves like STOP.
    if let Some((_, last)) = blocks.iter_mut().next_back() {
        if last.terminator == Terminator::Fallthrough {
            last.terminator = Terminator::Stop;
        }
    }
    blocks
}

#[derive(Default)]
struct BlockStates {
    states: Vec<AbsState>,
    widened: bool,
}

struct Interp<'a> {
    blocks: &'a BTreeMap<BlockId, BasicBlock>,
    values: ValueTable,
    facts: BTreeMap<usize, SiteFacts>,
    edges: BTreeMap<(BlockId, BlockId), EdgeKind>,
    states: HashMap<BlockId, BlockStates>,
    unresolved: BTreeSet<BlockId>,
    diagnostics: BTreeSet<String>,
}

impl<'a> Interp<'a> {
    fn is_jumpdest(&self, target: usize) -> bool {
        self.blocks
            .get(&target)
            .is_some_and(BasicBlock::starts_with_jumpdest)
    }

    fn subsumes(&self, wide: &AbsState, s: &AbsState) -> bool {
        if wide.stack.len() > s.stack.len() {
            return false;
        }
        let off = s.stack.len() - wide.stack.len();
        let stack_ok = wide
            .stack
            .iter()
            .zip(&s.stack[off..])
            .all(|(w, v)| self.values.subsumes(*w, *v));
        stack_ok
            && wide
                .mem
                .iter()
                .all(|(k, w)| s.mem.get(k).is_some_and(|v| self.values.subsumes(*w, *v)))
    }

    fn join(&mut self, a: &AbsState, b: &AbsState) -> AbsState {
        let h = a.stack.len().min(b.stack.len());
        let sa = &a.stack[a.stack.len() - h..];
        let sb = &b.stack[b.stack.len() - h..];
        let stack = sa
            .iter()
            .zip(sb)
            .map(|(x, y)| self.values.join(*x, *y))
            .collect();
        let mut mem = BTreeMap::new();
        for (k, x) in &a.mem {
            if let Some(y) = b.mem.get(k) {
                mem.insert(*k, self.values.join(*x, *y));
            }
        }
        AbsState { stack, mem }
    }

    /// Returns the state to run, or `None` when `s` adds nothing new.
    fn admit(&mut self, block: BlockId, s: AbsState) -> Option<AbsState> {
        let entry = self.states.remove(&block).unwrap_or_default();
        if entry.states.iter().any(|w| self.subsumes(w, &s)) {
            self.states.insert(block, entry);
            return None;
        }
        if !entry.widened && entry.states.len() < CONTEXTS_PER_BLOCK {
            let mut entry = entry;
            entry.states.push(s.clone());
            self.states.insert(block, entry);
            return Some(s);
        }
        let mut wide = s;
        for old in &entry.states {
            wide = self.join(&wide, old);
        }
        self.states.insert(
            block,
            BlockStates {
                states: vec![wide.clone()],
                widened: true,
            },
        );
        Some(wide)
    }

    fn read_words(&self, state: &AbsState, off: ValueId, len: ValueId) -> Option<Vec<ValueId>> {
        let off = const_usize(&self.values, off)?;
        let len = const_usize(&self.values, len)?;
        let words = len.div_ceil(32);
        if words > MAX_TRACKED_WORDS || off > MAX_TRACKED_OFFSET {
            return None;
        }
        Some(
            (0..words)
                .map(|i| *state.mem.get(&(off + 32 * i)).unwrap_or(&ValueTable::TOP))
                .collect(),
        )
    }

    /// Every tracked word overlapping `[off, off + len)`, in offset order.
    /// Unlike [`Self::read_words`] this tolerates unaligned encodings such as
    /// a 4-byte selector followed by arguments.
    fn read_region(&self, state: &AbsState, off: ValueId, len: ValueId) -> Option<Vec<ValueId>> {
        let off = const_usize(&self.values, off)?;
        let len = const_usize(&self.values, len)?;
        if len == 0 {
            return Some(Vec::new());
        }
        if len > 32 * MAX_TRACKED_WORDS || off > MAX_TRACKED_OFFSET {
            return None;
        }
        Some(
            state
                .mem
                .range(off.saturating_sub(31)..off + len)
                .map(|(_, v)| *v)
                .collect(),
        )
    }

    /// Fill a memory region with words of `of`.
    fn write_words(&mut self, state: &mut AbsState, off: ValueId, len: ValueId, of: ValueId) {
        match (const_usize(&self.values, off), const_usize(&self.values, len)) {
            (Some(off), Some(len)) if off <= MAX_TRACKED_OFFSET => {
                let words = len.div_ceil(32);
                state.clobber(off, len);
                if words <= MAX_TRACKED_WORDS {
                    for i in 0..words {
                        let w = self.values.intern(Value::Word {
                            of,
                            index: i as u32,
                        });
                        state.mem.insert(off + 32 * i, w);
                    }
                }
            }
            (_, Some(0)) => {}
            _ => state.mem.clear(),
        }
    }

    fn record(&mut self, site: usize, inputs: Vec<ValueId>, mem: Option<Vec<ValueId>>, out: Option<ValueId>) {
        let f = self.facts.entry(site).or_default();
        f.inputs.insert(inputs);
        if let Some(m) = mem {
            f.mem_inputs.insert(m);
        }
        if let Some(o) = out {
            f.outputs.insert(o);
        }
    }

    fn site_value(&mut self, op: Opcode, site: usize, args: Vec<ValueId>, mem: Vec<ValueId>) -> ValueId {
        self.values.intern(Value::Site { op, site, args, mem })
    }

    /// Run one block from `state`, returning successor states.
    fn exec(&mut self, block: &BasicBlock, mut state: AbsState) -> Vec<(BlockId, AbsState, EdgeKind)> {
        let mut out = Vec::new();
        for ins in &block.instructions {
            let op = ins.opcode;
            let site = ins.offset;
            if let Some(value) = ins.push_value() {
                let v = self.values.constant(value, site);
                self.record(site, vec![], None, Some(v));
                state.stack.push(v);
                continue;
            }
            if let Some(n) = op.dup_depth() {
                let v = state.peek(n - 1);
                state.stack.push(v);
                continue;
            }
            if let Some(n) = op.swap_depth() {
                let len = state.stack.len();
                if len > n {
                    state.stack.swap(len - 1, len - 1 - n);
                } else {
                    while state.stack.len() <= n {
                        state.stack.insert(0, ValueTable::TOP);
                    }
                    let len = state.stack.len();
                    state.stack.swap(len - 1, len - 1 - n);
                }
                continue;
            }
            let args: Vec<ValueId> = (0..op.pops()).map(|_| state.pop()).collect();
            match op {
                Opcode::JUMPDEST | Opcode::POP => {}
                Opcode::JUMP | Opcode::JUMPI => {
                    // A JUMP also records the stack beneath the target: the
                    // arguments of an internal call.
                    let mut seen = args.clone();
                    if op == Opcode::JUMP {
                        seen.extend(state.stack.iter().rev().take(16));
                    }
                    self.record(site, seen, None, None);
                    self.branch(block, &args, state, &mut out);
                    return out;
                }
                Opcode::MSTORE => {
                    self.record(site, args.clone(), None, None);
                    match const_usize(&self.values, args[0]) {
                        Some(off) if off <= MAX_TRACKED_OFFSET => state.store(off, args[1]),
                        _ => state.mem.clear(),
                    }
                }
                Opcode::MSTORE8 => {
                    self.record(site, args.clone(), None, None);
                    match const_usize(&self.values, args[0]) {
                        Some(off) => state.clobber(off, 1),
                        None => state.mem.clear(),
                    }
                }
                Opcode::MLOAD => {
                    let known = const_usize(&self.values, args[0]).and_then(|o| state.mem.get(&o).copied());
                    let v = match known {
                        Some(v) => v,
                        None => self.site_value(op, site, args.clone(), vec![]),
                    };
                    self.record(site, args, None, Some(v));
                    state.stack.push(v);
                }
                Opcode::SHA3 => {
                    let v = match self.read_words(&state, args[0], args[1]) {
                        Some(words) if const_usize(&self.values, args[1]).is_some_and(|l| l % 32 == 0) => {
                            let v = self.values.intern(Value::Op {
                                op,
                                args: vec![],
                                mem: words.clone(),
                            });
                            self.record(site, args, Some(words), Some(v));
                            v
                        }
                        words => {
                            let v = self.site_value(op, site, args.clone(), words.clone().unwrap_or_default());
                            self.record(site, args, words, Some(v));
                            v
                        }
                    };
                    self.values.add_site(v, site);
                    state.stack.push(v);
                }
                Opcode::CALLDATACOPY | Opcode::CODECOPY | Opcode::RETURNDATACOPY | Opcode::MCOPY => {
                    let src = self.site_value(op, site, args.clone(), vec![]);
                    self.record(site, args.clone(), None, Some(src));
                    self.write_words(&mut state, args[0], args[2], src);
                }
                Opcode::EXTCODECOPY => {
                    let src = self.site_value(op, site, args.clone(), vec![]);
                    self.record(site, args.clone(), None, Some(src));
                    self.write_words(&mut state, args[1], args[3], src);
                }
                op if op.is_call() => {
                    // CALL/CALLCODE carry a value word; the others do not.
                    let (in_at, ret_at) = if matches!(op, Opcode::CALL | Opcode::CALLCODE) {
                        (3, 5)
                    } else {
                        (2, 4)
                    };
                    let input = self.read_region(&state, args[in_at], args[in_at + 1]);
                    let v = self.site_value(op, site, args.clone(), input.clone().unwrap_or_default());
                    self.record(site, args.clone(), input, Some(v));
                    self.write_words(&mut state, args[ret_at], args[ret_at + 1], v);
                    state.stack.push(v);
                }
                op if op.log_topics().is_some() || matches!(op, Opcode::RETURN | Opcode::REVERT) => {
                    let data = self.read_region(&state, args[0], args[1]);
                    self.record(site, args, Some(data.unwrap_or_default()), None);
                }
                op if op.is_halting() => {
                    self.record(site, args, None, None);
                }
                op if op.pushes() == 0 => {
                    self.record(site, args, None, None);
                }
                op => {
                    let consts: Option<Vec<U256>> = args.iter().map(|a| self.values.const_value(*a)).collect();
                    let v = match consts.and_then(|c| fold(op, &c)) {
                        Some(c) => self.values.constant(c, site),
                        None if op.is_pure() && !args.is_empty() => {
                            let v = self.values.intern(Value::Op {
                                op,
                                args: args.clone(),
                                mem: vec![],
                            });
                            self.values.add_site(v, site);
                            v
                        }
                        None => self.site_value(op, site, args.clone(), vec![]),
                    };
                    self.record(site, args, None, Some(v));
                    state.stack.push(v);
                }
            }
            if op.is_halting() {
                return out;
            }
        }
        // Reached the end of a block without a control-transfer instruction.
        if block.terminator == Terminator::Fallthrough {
            let next = block.end();
            if self.blocks.contains_key(&next) {
                out.push((next, state, EdgeKind::Normal));
            }
        }
        out
    }

    fn branch(
        &mut self,
        block: &BasicBlock,
        args: &[ValueId],
        state: AbsState,
        out: &mut Vec<(BlockId, AbsState, EdgeKind)>,
    ) {
        let is_jumpi = args.len() == 2;
        let target = args[0];
        let cond = is_jumpi.then(|| self.values.const_value(args[1])).flatten();
        let take_jump = cond.is_none_or(|c| !c.is_zero());
        let take_fall = is_jumpi && cond.is_none_or(|c| c.is_zero());
        if take_jump {
            match self.values.const_set(target) {
                Some(targets) => {
                    for t in targets {
                        match t.as_usize().filter(|t| self.is_jumpdest(*t)) {
                            Some(t) => {
                                let kind = self.edge_kind(block, target, t, &state, is_jumpi);
                                out.push((t, state.clone(), kind));
                            }
                            None => {
                                self.diagnostics.insert(format!(
                                    "block {:#x}: jump to {t:#x} does not land on a JUMPDEST",
                                    block.id
                                ));
                            }
                        }
                    }
                }
                None => {
                    self.unresolved.insert(block.id);
                    self.diagnostics.insert(format!(
                        "block {:#x}: unresolved jump target at {:#x}",
                        block.id,
                        block.last().offset
                    ));
                }
            }
        }
        if take_fall {
            let next = block.end();
            if self.blocks.contains_key(&next) {
                out.push((next, state, EdgeKind::Normal));
            }
        }
    }

    fn edge_kind(
        &self,
        block: &BasicBlock,
        target_value: ValueId,
        target: BlockId,
        state: &AbsState,
        is_jumpi: bool,
    ) -> EdgeKind {
        let local = |v: ValueId| match self.values.get(v) {
            Value::Const { site, .. } => block.contains(*site),
            _ => false,
        };
        if is_jumpi {
            return EdgeKind::Normal;
        }
        if !self.values.members(target_value).into_iter().any(local) {
            return EdgeKind::Return;
        }
        // A locally pushed code address left under the arguments is a return address.
        for v in &state.stack {
            if !local(*v) {
                continue;
            }
            if let Some(ret) = self.values.const_value(*v).and_then(|c| c.as_usize()) {
                if ret != target && self.is_jumpdest(ret) {
                    return EdgeKind::Call { return_to: ret };
                }
            }
        }
        EdgeKind::Normal
    }

    fn add_edge(&mut self, from: BlockId, to: BlockId, kind: EdgeKind) {
        let rank = |k: &EdgeKind| match k {
            EdgeKind::Call { .. } => 2,
            EdgeKind::Return => 1,
            EdgeKind::Normal => 0,
        };
        match self.edges.get(&(from, to)) {
            Some(old) if rank(old) >= rank(&kind) => {}
            _ => {
                self.edges.insert((from, to), kind);
            }
        }
    }
}

/// Recover the control-flow graph of a runtime bytecode program.
///
/// The returned graph has no function partition yet; see
/// [`super::partition::partition_functions`].
pub fn recover_cfg(instructions: &[Instruction]) -> ContractCfg {
    let blocks = split_blocks(instructions);
    let entry = instructions.first().map_or(0, |i| i.offset);
    let mut it = Interp {
        blocks: &blocks,
        values: ValueTable::default(),
        facts: BTreeMap::new(),
        edges: BTreeMap::new(),
        states: HashMap::new(),
        unresolved: BTreeSet::new(),
        diagnostics: BTreeSet::new(),
    };
    let mut work: VecDeque<(BlockId, AbsState)> = VecDeque::new();
    if blocks.contains_key(&entry) {
        if let Some(s) = it.admit(entry, AbsState::default()) {
            work.push_back((entry, s));
        }
    }
    let mut steps = 0;
    let mut visited = BTreeSet::new();
    while let Some((id, state)) = work.pop_front() {
        steps += 1;
        if steps > STEP_BUDGET {
            it.diagnostics
                .insert("abstract interpretation budget exhausted; CFG may be incomplete".into());
            break;
        }
        visited.insert(id);
        let block = &blocks[&id];
        for (succ, s, kind) in it.exec(block, state) {
            it.add_edge(id, succ, kind);
            if let Some(s) = it.admit(succ, s) {
                work.push_back((succ, s));
            }
        }
    }
    let unresolved = std::mem::take(&mut it.unresolved);
    let edges = std::mem::take(&mut it.edges);
    let diagnostics: Vec<String> = std::mem::take(&mut it.diagnostics).into_iter().collect();
    let facts = std::mem::take(&mut it.facts);
    let values = std::mem::take(&mut it.values);
    drop(it);
    let mut blocks = blocks;
    for id in &unresolved {
        if let Some(b) = blocks.get_mut(id) {
            b.terminator = Terminator::Unresolved;
        }
    }
    let dead = blocks
        .keys()
        .filter(|id| !visited.contains(*id) && **id != entry)
        .copied()
        .collect();
    for d in &diagnostics {
        log::debug!("{d}");
    }
    ContractCfg {
        instructions: instructions.to_vec(),
        blocks,
        edges,
        entry,
        functions: BTreeMap::new(),
        dead,
        diagnostics,
        values,
        facts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::asm::assemble_text;
    use crate::evm::disasm::disassemble;

    fn cfg_of(src: &str) -> ContractCfg {
        recover_cfg(&disassemble(&assemble_text(src).unwrap()).unwrap())
    }

    #[test]
    fn constant_jump() {
        let cfg = recover_cfg(&disassemble(&[0x60, 0x04, 0x56, 0xfe, 0x5b, 0x00]).unwrap());
        assert_eq!(cfg.edges.keys().copied().collect::<Vec<_>>(), vec![(0, 4)]);
        assert!(cfg.dead.contains(&3));
        assert_eq!(cfg.blocks[&0].terminator, Terminator::Jump);
    }

    #[test]
    fn jumpi_has_two_successors() {
        let cfg = cfg_of("PUSH1 0x01 CALLDATALOAD @t JUMPI STOP t: STOP");
        let succ: Vec<_> = cfg.successors(0).map(|(b, _)| b).collect();
        assert_eq!(succ.len(), 2);
    }

    #[test]
    fn computed_jump_is_unresolved() {
        let cfg = cfg_of("PUSH0 CALLDATALOAD JUMP t: STOP");
        assert_eq!(cfg.blocks[&0].terminator, Terminator::Unresolved);
        assert!(cfg.edges.is_empty());
        assert!(!cfg.diagnostics.is_empty());
    }

    #[test]
    fn masked_constant_is_folded() {
        let cfg = cfg_of("@t PUSH2 0xffff AND JUMP t: STOP");
        assert_eq!(cfg.successors(0).count(), 1);
    }

    #[test]
    fn internal_call_and_return() {
        // main calls f twice; f returns through the pushed address.
        let cfg = cfg_of(
            "@r1 @f JUMP r1: @r2 @f JUMP r2: STOP
             f: JUMP",
        );
        let f = cfg.blocks.keys().copied().find(|b| {
            cfg.blocks[b].instructions.len() == 2 && cfg.blocks[b].last().opcode == Opcode::JUMP
        });
        let f = f.unwrap();
        let calls: Vec<_> = cfg
            .edges
            .iter()
            .filter(|(_, k)| matches!(k, EdgeKind::Call { .. }))
            .collect();
        assert_eq!(calls.len(), 2);
        let rets: BTreeSet<_> = cfg.successors(f).collect();
        assert_eq!(rets.len(), 2);
        assert!(rets.iter().all(|(_, k)| *k == EdgeKind::Return));
        assert!(cfg.dead.is_empty());
    }

    #[test]
    fn loop_terminates() {
        let cfg = cfg_of(
            "PUSH0 head: DUP1 PUSH1 0x0a GT ISZERO @done JUMPI PUSH1 0x01 ADD @head JUMP done: STOP",
        );
        assert!(cfg.diagnostics.is_empty(), "{:?}", cfg.diagnostics);
        assert!(cfg.dead.is_empty());
    }

    #[test]
    fn memory_roundtrip_keeps_targets() {
        let cfg = cfg_of("@t PUSH1 0x20 MSTORE PUSH1 0x20 MLOAD JUMP t: STOP");
        assert_eq!(cfg.successors(0).count(), 1);
    }

    #[test]
    fn fallthrough_into_jumpdest() {
        let cfg = cfg_of("PUSH0 POP t: STOP");
        assert_eq!(cfg.blocks[&0].terminator, Terminator::Fallthrough);
        assert_eq!(cfg.successors(0).count(), 1);
    }
}
