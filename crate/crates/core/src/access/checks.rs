//! Security check extraction and classification.

use super::rules::{Feature, Perspective, RuleSet};
use crate::bridge::{ContractEntry, ContractProgram, Meaning, SiteRef};
use crate::evm::partition::param_index;
use crate::evm::{slot_of, BlockId, ContractCfg, FunctionBody, Opcode, Terminator, Value, ValueId, ValueTable};
use serde::{Serialize, Serializer};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckForm {
    /// One side of the JUMPI always ends in REVERT.
    RevertGuard,
    Branch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SecurityCheck {
    pub site: SiteRef,
    pub form: CheckForm,
    #[serde(serialize_with = "ser_perspective")]
    pub perspective: Option<Perspective>,
    pub features: BTreeSet<Feature>,
    /// Successor taken when the check passes (revert guards only).
    pub pass: Option<BlockId>,
    /// Condition operand of the JUMPI, one per abstract context.
    #[serde(skip)]
    pub conditions: Vec<ValueId>,
}

fn ser_perspective<S: Serializer>(p: &Option<Perspective>, s: S) -> Result<S::Ok, S::Error> {
    match p {
        Some(p) => s.collect_str(p),
        None => s.serialize_str("Unclassified"),
    }
}

impl SecurityCheck {
    pub fn is_classified(&self) -> bool {
        self.perspective.is_some()
    }

    /// Classified with at least one feature that counts toward coverage.
    pub fn satisfies(&self, rules: &RuleSet) -> bool {
        let Some(p) = self.perspective else {
            return false;
        };
        self.features.iter().any(|f| {
            rules.perspective_of(*f) == Some(p)
                && rules.feature(*f).is_some_and(|r| r.satisfies)
        })
    }
}

/// Blocks from which every path ends in REVERT or INVALID.
pub fn must_revert_blocks(cfg: &ContractCfg) -> BTreeSet<BlockId> {
    let mut set: BTreeSet<BlockId> = cfg
        .blocks
        .values()
        .filter(|b| matches!(b.terminator, Terminator::Revert | Terminator::Invalid))
        .map(|b| b.id)
        .collect();
    loop {
        let mut changed = false;
        for b in cfg.blocks.values() {
            if set.contains(&b.id)
                || matches!(
                    b.terminator,
                    Terminator::Stop | Terminator::Return | Terminator::Selfdestruct | Terminator::Unresolved
                )
            {
                continue;
            }
            let mut succ = cfg.successors(b.id).peekable();
            if succ.peek().is_none() {
                continue;
            }
            if succ.all(|(s, _)| set.contains(&s)) {
                set.insert(b.id);
                changed = true;
            }
        }
        if !changed {
            return set;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Atom {
    Balance,
    HintedLoad(Meaning),
    UnhintedLoad,
    Param,
    DynamicCalldata,
    Caller,
    CallValue,
    CallDataSize,
    ChainId,
    Time,
    Ecrecover,
    CallOutput,
    CallSuccess,
    Other,
}

fn is_ecrecover(values: &ValueTable, call: ValueId) -> bool {
    match values.get(call) {
        Value::Site { op, args, .. } if op.is_call() => values
            .const_value(args[1])
            .is_some_and(|t| t.as_u64() == Some(1)),
        _ => false,
    }
}

fn atoms(values: &ValueTable, hints: &ContractEntry, root: ValueId) -> BTreeSet<Atom> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if !seen.insert(v) || seen.len() > 512 {
            continue;
        }
        match values.get(v) {
            Value::Top | Value::Const { .. } => {}
            Value::Merge(ms) => stack.extend(ms),
            Value::Op { op, args, mem } => {
                match *op {
                    Opcode::CALLDATALOAD => {
                        out.insert(if param_index(values, v).is_some() {
                            Atom::Param
                        } else {
                            Atom::DynamicCalldata
                        });
                    }
                    Opcode::SLOAD => {
                        let hint = slot_of(values, args[0])
                            .base()
                            .and_then(|b| hints.storage_hint(b));
                        out.insert(match hint {
                            Some(h) => Atom::HintedLoad(h.meaning),
                            None => Atom::UnhintedLoad,
                        });
                    }
                    Opcode::BALANCE => {
                        out.insert(Atom::Balance);
                    }
                    _ => {}
                }
                stack.extend(args);
                stack.extend(mem);
            }
            Value::Site { op, args, .. } => {
                let atom = match *op {
                    Opcode::CALLER | Opcode::ORIGIN => Atom::Caller,
                    Opcode::CALLVALUE => Atom::CallValue,
                    Opcode::CALLDATASIZE => Atom::CallDataSize,
                    Opcode::CHAINID => Atom::ChainId,
                    Opcode::TIMESTAMP | Opcode::NUMBER => Atom::Time,
                    Opcode::SELFBALANCE => Atom::Balance,
                    Opcode::CALLDATACOPY => Atom::DynamicCalldata,
                    op if op.is_call() => Atom::CallSuccess,
                    _ => Atom::Other,
                };
                out.insert(atom);
                if !op.is_call() {
                    stack.extend(args);
                }
            }
            Value::Word { of, .. } => {
                let atom = match values.op_of(*of) {
                    _ if is_ecrecover(values, *of) => Atom::Ecrecover,
                    Some(op) if op.is_call() => Atom::CallOutput,
                    Some(Opcode::CALLDATACOPY) => Atom::DynamicCalldata,
                    _ => Atom::Other,
                };
                out.insert(atom);
            }
        }
    }
    out
}

/// Drop address masks: `AND(x, const)` becomes `x`.
pub fn strip_mask(values: &ValueTable, mut v: ValueId) -> ValueId {
    while values.op_of(v) == Some(Opcode::AND) {
        let args = values.args(v);
        match (values.const_value(args[0]), values.const_value(args[1])) {
            (Some(_), None) => v = args[1],
            (None, Some(_)) => v = args[0],
            _ => break,
        }
    }
    v
}

/// Sides of the comparison a condition performs, and whether it is a test
/// against zero. A bare value used as a condition is a zero test of itself.
fn comparison(values: &ValueTable, cond: ValueId) -> (Vec<ValueId>, bool) {
    let mut c = cond;
    while values.op_of(c) == Some(Opcode::ISZERO) {
        c = values.args(c)[0];
    }
    match values.op_of(c) {
        Some(Opcode::EQ | Opcode::LT | Opcode::GT | Opcode::SLT | Opcode::SGT) => {
            let args = values.args(c);
            let zero = |v: ValueId| values.const_value(v).is_some_and(|k| k.is_zero());
            let sides: Vec<ValueId> = args.iter().copied().filter(|a| !zero(*a)).collect();
            let zero_test = sides.len() < args.len();
            (sides, zero_test)
        }
        _ => (vec![c], true),
    }
}

/// Function-level facts the matchers consult.
#[derive(Clone, Debug, Default)]
pub struct ClassifyContext {
    /// Targets of external calls (masks stripped).
    pub call_targets: BTreeSet<ValueId>,
    /// Recipients of value transfers and balance credits (masks stripped).
    pub receivers: BTreeSet<ValueId>,
}

impl ClassifyContext {
    pub fn for_function(program: &ContractProgram, f: &FunctionBody) -> ClassifyContext {
        let cfg = &program.cfg;
        let values = &cfg.values;
        let mut ctx = ClassifyContext::default();
        for b in &f.blocks {
            for ins in &cfg.blocks[b].instructions {
                let Some(facts) = cfg.facts(ins.offset) else {
                    continue;
                };
                if ins.opcode.is_call() {
                    let with_value = matches!(ins.opcode, Opcode::CALL | Opcode::CALLCODE);
                    for args in &facts.inputs {
                        let precompile = values
                            .const_value(args[1])
                            .is_some_and(|t| t.as_u64().is_some_and(|t| t <= 0x0a));
                        if precompile {
                            continue;
                        }
                        let target = strip_mask(values, args[1]);
                        let pays = with_value
                            && !values.const_value(args[2]).is_some_and(|v| v.is_zero());
                        if pays {
                            ctx.receivers.insert(target);
                        } else {
                            ctx.call_targets.insert(target);
                        }
                    }
                    // First argument of an encoded call. The selector word survives
                    // only when the arguments were written word-aligned after it.
                    let precompile_only = facts.inputs.iter().all(|args| {
                        values
                            .const_value(args[1])
                            .is_some_and(|t| t.as_u64().is_some_and(|t| t <= 0x0a))
                    });
                    for words in facts.mem_inputs.iter().filter(|_| !precompile_only) {
                        let first = match words.first() {
                            Some(w) if values.const_value(*w).is_some() => words.get(1),
                            w => w,
                        };
                        if let Some(w) = first {
                            ctx.receivers.insert(strip_mask(values, *w));
                        }
                    }
                }
                if ins.opcode == Opcode::SSTORE {
                    for args in &facts.inputs {
                        let slot = slot_of(values, args[0]);
                        let credit = slot
                            .base()
                            .and_then(|b| program.entry.storage_hint(b))
                            .is_some_and(|h| h.meaning == Meaning::Balance)
                            && values.op_of(args[1]) == Some(Opcode::ADD);
                        if credit {
                            for k in slot.keys() {
                                ctx.receivers.insert(strip_mask(values, *k));
                            }
                        }
                    }
                }
            }
        }
        ctx
    }
}

fn is_boilerplate(values: &ValueTable, cond: ValueId, atoms: &BTreeSet<Atom>) -> bool {
    if atoms.is_empty() || atoms.iter().all(|a| *a == Atom::CallDataSize) {
        return true;
    }
    let mut c = cond;
    while values.op_of(c) == Some(Opcode::ISZERO) {
        c = values.args(c)[0];
    }
    values.op_of(c) == Some(Opcode::CALLVALUE) && atoms.len() == 1
}

/// Security checks guarding JUMPIs inside `f`, unclassified.
pub fn extract_checks(program: &ContractProgram, f: &FunctionBody) -> Vec<SecurityCheck> {
    extract_checks_with(program, f, &must_revert_blocks(&program.cfg))
}

pub fn extract_checks_with(
    program: &ContractProgram,
    f: &FunctionBody,
    reverting: &BTreeSet<BlockId>,
) -> Vec<SecurityCheck> {
    let cfg = &program.cfg;
    let mut out = Vec::new();
    for b in &f.blocks {
        let block = &cfg.blocks[b];
        let last = block.last();
        if last.opcode != Opcode::JUMPI || cfg.dead.contains(b) {
            continue;
        }
        let succ: Vec<BlockId> = cfg.successors(*b).map(|(s, _)| s).collect();
        if succ.len() != 2 {
            continue;
        }
        let (r0, r1) = (reverting.contains(&succ[0]), reverting.contains(&succ[1]));
        let (form, pass) = match (r0, r1) {
            (true, true) => continue,
            (true, false) => (CheckForm::RevertGuard, Some(succ[1])),
            (false, true) => (CheckForm::RevertGuard, Some(succ[0])),
            (false, false) => (CheckForm::Branch, None),
        };
        let conditions: Vec<ValueId> = cfg
            .facts(last.offset)
            .map(|f| f.inputs.iter().map(|i| i[1]).collect::<BTreeSet<_>>())
            .unwrap_or_default()
            .into_iter()
            .collect();
        let boiler = conditions.iter().all(|c| {
            let a = atoms(&cfg.values, &program.entry, *c);
            is_boilerplate(&cfg.values, *c, &a)
        });
        if conditions.is_empty() || boiler {
            continue;
        }
        out.push(SecurityCheck {
            site: SiteRef {
                contract: program.address(),
                block: *b,
                offset: last.offset,
            },
            form,
            perspective: None,
            features: BTreeSet::new(),
            pass,
            conditions,
        });
    }
    out
}

/// Assign features and a perspective from the condition's shape.
pub fn classify_check(
    mut check: SecurityCheck,
    values: &ValueTable,
    hints: &ContractEntry,
    ctx: &ClassifyContext,
    rules: &RuleSet,
) -> SecurityCheck {
    use Feature::*;
    let mut features = BTreeSet::new();
    for cond in &check.conditions {
        let found = atoms(values, hints, *cond);
        let (sides, zero_test) = comparison(values, *cond);
        for a in &found {
            match a {
                Atom::Balance => {
                    features.insert(BridgeBalanceComparison);
                }
                Atom::HintedLoad(Meaning::Balance) => {
                    features.insert(UserBalanceVsDepositAmount);
                }
                Atom::HintedLoad(Meaning::Liquidity) => {
                    features.insert(LiquidityThreshold);
                }
                Atom::HintedLoad(Meaning::Authorization) => {
                    features.insert(SignatureComparison);
                }
                Atom::HintedLoad(Meaning::RecordList) => {
                    features.insert(RecordListLookup);
                }
                Atom::HintedLoad(Meaning::Support) | Atom::ChainId => {
                    features.insert(SupportId);
                }
                Atom::Param => {
                    features.insert(FunctionArgument);
                }
                Atom::Caller | Atom::CallValue | Atom::DynamicCalldata => {
                    features.insert(CallerArgument);
                }
                Atom::Time => {
                    features.insert(TimeoutComparison);
                }
                _ => {}
            }
        }
        if found.contains(&Atom::Ecrecover) {
            let only_recovered = zero_test
                && sides.len() == 1
                && atoms(values, hints, sides[0]) == BTreeSet::from([Atom::Ecrecover]);
            features.insert(if only_recovered {
                SignatureRecovered
            } else {
                SignatureComparison
            });
        }
        for s in &sides {
            let s = strip_mask(values, *s);
            if ctx.receivers.contains(&s) {
                features.insert(ReceiverAddress);
            } else if zero_test && ctx.call_targets.contains(&s) {
                features.insert(ExternalAddressZero);
            }
        }
    }
    check.perspective = rules
        .priority
        .iter()
        .copied()
        .find(|p| features.iter().any(|f| rules.perspective_of(*f) == Some(*p)));
    check.features = features;
    check
}

/// Extract and classify the checks of one function.
pub fn function_checks(program: &ContractProgram, f: &FunctionBody, rules: &RuleSet) -> Vec<SecurityCheck> {
    let ctx = ClassifyContext::for_function(program, f);
    extract_checks(program, f)
        .into_iter()
        .map(|c| classify_check(c, &program.cfg.values, &program.entry, &ctx, rules))
        .collect()
}
