//! Protected resources: storage fields, internal methods, public entries and
//! event emissions.

use crate::bridge::{ContractProgram, FnRef, KindHint, Meaning, Role, SiteRef, Topic};
use crate::evm::{slot_of, EdgeKind, FunctionBody, FunctionKey, Opcode, Selector, SlotRef, U256};
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ResourceKind {
    FieldAccess,
    InternalMethod,
    AbiEntry,
    EventEmit,
}

impl ResourceKind {
    pub fn letter(self) -> char {
        match self {
            ResourceKind::FieldAccess => 'f',
            ResourceKind::InternalMethod => 'm',
            ResourceKind::AbiEntry => 'a',
            ResourceKind::EventEmit => 'e',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    Write,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Resource {
    pub kind: ResourceKind,
    pub site: SiteRef,
    /// Public function the resource was found in.
    pub function: FnRef,
    /// Short label used in traces: variable, method or event name.
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub access: Option<Access>,
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    pub touched_slots: BTreeSet<U256>,
    /// Recovered slot expressions, one per abstract context.
    #[serde(skip)]
    pub slots: Vec<SlotRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub callee: Option<FunctionKey>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    /// Meanings of hinted storage the resource touches (for `m`, what the
    /// callee writes).
    pub meanings: BTreeSet<Meaning>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind_hint: Option<KindHint>,
    /// Whether an unprotected instance is a finding.
    pub critical: bool,
}

impl Resource {
    pub fn block(&self) -> usize {
        self.site.block
    }
}

fn is_relevant_event(role: Role, kind: KindHint) -> bool {
    match role {
        Role::Source => kind == KindHint::Deposit,
        Role::Destination => matches!(kind, KindHint::Withdraw | KindHint::Authorize),
    }
}

/// Whether a function body changes state: writes storage, sends value or logs.
pub fn is_effectful(program: &ContractProgram, f: &FunctionBody) -> bool {
    let cfg = &program.cfg;
    f.blocks.iter().any(|b| {
        cfg.blocks[b].instructions.iter().any(|i| match i.opcode {
            Opcode::SSTORE => true,
            Opcode::CALL => cfg.facts(i.offset).is_some_and(|f| {
                f.inputs
                    .iter()
                    .any(|a| !cfg.values.const_value(a[2]).is_some_and(|v| v.is_zero()))
            }),
            op => op.log_topics().is_some(),
        })
    })
}

/// Storage meanings written by a function body.
fn written_meanings(program: &ContractProgram, f: &FunctionBody) -> BTreeSet<Meaning> {
    let cfg = &program.cfg;
    let mut out = BTreeSet::new();
    for b in &f.blocks {
        for i in &cfg.blocks[b].instructions {
            if i.opcode != Opcode::SSTORE {
                continue;
            }
            for args in cfg.facts(i.offset).map(|f| &f.inputs).into_iter().flatten() {
                if let Some(h) = slot_of(&cfg.values, args[0])
                    .base()
                    .and_then(|b| program.entry.storage_hint(b))
                {
                    out.insert(h.meaning);
                }
            }
        }
    }
    out
}

/// Resources reachable inside a public function `f`.
pub fn extract_resources(program: &ContractProgram, f: &FunctionBody) -> Vec<Resource> {
    let cfg = &program.cfg;
    let owner = program.fn_ref(f.key);
    let kind_hint = match f.key {
        FunctionKey::Public(sel) => program.entry.abi_hint(sel).map(|h| h.kind),
        _ => None,
    };
    let base = |kind, block, offset, label: String| Resource {
        kind,
        site: SiteRef {
            contract: program.address(),
            block,
            offset,
        },
        function: owner,
        label,
        access: None,
        touched_slots: BTreeSet::new(),
        slots: Vec::new(),
        selector: None,
        callee: None,
        topic: None,
        meanings: BTreeSet::new(),
        kind_hint: None,
        critical: false,
    };
    let mut out = Vec::new();
    if f.is_public {
        let mut a = base(
            ResourceKind::AbiEntry,
            f.entry,
            f.entry,
            f.display_name(),
        );
        if let FunctionKey::Public(sel) = f.key {
            a.selector = Some(sel);
        }
        a.kind_hint = kind_hint;
        out.push(a);
    }
    for b in &f.blocks {
        if cfg.dead.contains(b) {
            continue;
        }
        let block = &cfg.blocks[b];
        for ins in &block.instructions {
            let Some(facts) = cfg.facts(ins.offset) else {
                continue;
            };
            match ins.opcode {
                Opcode::SSTORE | Opcode::SLOAD => {
                    let slots: Vec<SlotRef> = facts
                        .inputs
                        .iter()
                        .map(|a| slot_of(&cfg.values, a[0]))
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    let hints: Vec<_> = slots
                        .iter()
                        .filter_map(|s| s.base().and_then(|b| program.entry.storage_hint(b)))
                        .collect();
                    let write = ins.opcode == Opcode::SSTORE;
                    if !write && hints.is_empty() {
                        continue;
                    }
                    let label = hints
                        .first()
                        .map(|h| h.display_name())
                        .or_else(|| slots.iter().find_map(|s| s.base()).map(|b| format!("slot {b}")))
                        .unwrap_or_else(|| "storage".into());
                    let mut r = base(ResourceKind::FieldAccess, *b, ins.offset, label);
                    r.access = Some(if write { Access::Write } else { Access::Read });
                    r.touched_slots = slots.iter().filter_map(|s| s.base()).collect();
                    r.meanings = hints.iter().map(|h| h.meaning).collect();
                    r.slots = slots;
                    r.critical = write;
                    out.push(r);
                }
                Opcode::JUMP => {
                    let call = cfg
                        .successors(*b)
                        .find(|(_, k)| matches!(k, EdgeKind::Call { .. }));
                    let Some((callee_entry, _)) = call else {
                        continue;
                    };
                    let key = FunctionKey::Internal(callee_entry);
                    let callee = program.function(key);
                    let label = callee
                        .map(FunctionBody::display_name)
                        .unwrap_or_else(|| key.to_string());
                    let mut r = base(ResourceKind::InternalMethod, *b, ins.offset, label);
                    r.callee = Some(key);
                    if let Some(c) = callee {
                        r.meanings = written_meanings(program, c);
                        r.critical = is_effectful(program, c);
                    }
                    out.push(r);
                }
                _ => {}
            }
        }
    }
    for e in &program.emits {
        if !f.blocks.contains(&e.site.block) {
            continue;
        }
        let mut r = base(ResourceKind::EventEmit, e.site.block, e.site.offset, e.name.clone());
        r.topic = Some(e.topic);
        r.kind_hint = Some(e.kind);
        r.critical = is_relevant_event(program.role, e.kind);
        out.push(r);
    }
    out.sort_by_key(|r| (r.site.offset, r.kind));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{bind, load_manifest};
    use crate::evm::asm::assemble_text;
    use std::collections::BTreeMap;

    fn program(src: &str, storage: &str) -> ContractProgram {
        let doc = format!(
            r#"
[bridge]
name = "t"
[[bridge.chains]]
chain_id = 1
role = "source"
[[bridge.chains.contracts]]
address = "0x0000000000000000000000000000000000000001"
bytecode = "none.hex"
{storage}
[[bridge.chains]]
chain_id = 2
role = "destination"
"#
        );
        let d = load_manifest(&doc, std::path::Path::new(".")).unwrap();
        let code = assemble_text(src).unwrap();
        let cfg = crate::evm::ingest(&code, &[]).unwrap();
        let addr = d.chains[0].contracts[0].address;
        let mut b = bind(d, BTreeMap::from([(addr, cfg)])).unwrap();
        b.programs.remove(&addr).unwrap()
    }

    #[test]
    fn sstore_is_field_access() {
        let p = program("PUSH1 0x01 PUSH1 0x00 SSTORE STOP", "");
        let f = &p.cfg.functions[&FunctionKey::Fallback];
        let rs = extract_resources(&p, f);
        let fa: Vec<_> = rs.iter().filter(|r| r.kind == ResourceKind::FieldAccess).collect();
        assert_eq!(fa.len(), 1);
        assert_eq!(fa[0].touched_slots, BTreeSet::from([U256::ZERO]));
        assert!(fa[0].critical);
    }

    #[test]
    fn unhinted_sload_is_not_a_resource() {
        let p = program("PUSH1 0x00 SLOAD POP STOP", "");
        let f = &p.cfg.functions[&FunctionKey::Fallback];
        assert!(extract_resources(&p, f)
            .iter()
            .all(|r| r.kind != ResourceKind::FieldAccess));
        let p = program(
            "PUSH1 0x00 SLOAD POP STOP",
            "storage = [{ slot = 0, meaning = \"liquidity\" }]",
        );
        let f = &p.cfg.functions[&FunctionKey::Fallback];
        let rs = extract_resources(&p, f);
        let fa: Vec<_> = rs.iter().filter(|r| r.kind == ResourceKind::FieldAccess).collect();
        assert_eq!(fa.len(), 1);
        assert_eq!(fa[0].label, "liquidity");
        assert!(!fa[0].critical);
    }

    #[test]
    fn internal_call_is_method() {
        let src = "
            @ret @callee JUMP
            ret: JUMPDEST STOP
            callee: JUMPDEST PUSH1 0x01 PUSH1 0x02 SSTORE JUMP";
        let p = program(src, "");
        let f = &p.cfg.functions[&FunctionKey::Fallback];
        let rs = extract_resources(&p, f);
        let m: Vec<_> = rs.iter().filter(|r| r.kind == ResourceKind::InternalMethod).collect();
        assert_eq!(m.len(), 1);
        assert!(m[0].critical);
    }
}
