use super::manifest::{Address, BridgeDescriptor, ContractEntry, KindHint, Role, Topic};
use crate::evm::{self, BlockId, ContractCfg, FunctionBody, FunctionKey, Opcode, SelectorHint, Value};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// A function of one contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FnRef {
    pub contract: Address,
    pub key: FunctionKey,
}

/// An instruction of one contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SiteRef {
    pub contract: Address,
    pub block: BlockId,
    pub offset: usize,
}

/// A LOG instruction whose first topic is a hinted event constant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmitSite {
    pub site: SiteRef,
    pub topic: Topic,
    pub name: String,
    pub kind: KindHint,
    /// Number of topics (LOGn).
    pub topics: usize,
}

#[derive(Clone, Debug)]
pub struct ContractProgram {
    pub entry: ContractEntry,
    pub role: Role,
    pub chain_id: u64,
    pub cfg: ContractCfg,
    pub emits: Vec<EmitSite>,
}

impl ContractProgram {
    pub fn address(&self) -> Address {
        self.entry.address
    }

    pub fn function(&self, key: FunctionKey) -> Option<&FunctionBody> {
        self.cfg.functions.get(&key)
    }

    pub fn fn_ref(&self, key: FunctionKey) -> FnRef {
        FnRef {
            contract: self.address(),
            key,
        }
    }

    pub fn site(&self, offset: usize) -> Option<SiteRef> {
        let block = self.cfg.block_of(offset)?.id;
        Some(SiteRef {
            contract: self.address(),
            block,
            offset,
        })
    }

    pub fn public_entry_keys(&self) -> Vec<FunctionKey> {
        self.cfg.public_functions().map(|f| f.key).collect()
    }
}

#[derive(Clone, Debug)]
pub struct BridgeProgram {
    pub descriptor: BridgeDescriptor,
    pub programs: BTreeMap<Address, ContractProgram>,
    pub source_entry_points: Vec<FnRef>,
    pub dest_entry_points: Vec<FnRef>,
    pub warnings: Vec<String>,
}

impl BridgeProgram {
    pub fn program(&self, address: Address) -> &ContractProgram {
        &self.programs[&address]
    }

    pub fn function(&self, f: FnRef) -> Option<&FunctionBody> {
        self.programs.get(&f.contract)?.function(f.key)
    }

    pub fn function_name(&self, f: FnRef) -> String {
        self.function(f)
            .map(FunctionBody::display_name)
            .unwrap_or_else(|| f.key.to_string())
    }

    pub fn role_of(&self, address: Address) -> Role {
        self.program(address).role
    }

    pub fn entry_points(&self, role: Role) -> &[FnRef] {
        match role {
            Role::Source => &self.source_entry_points,
            Role::Destination => &self.dest_entry_points,
        }
    }

    pub fn emits(&self) -> impl Iterator<Item = &EmitSite> {
        self.programs.values().flat_map(|p| p.emits.iter())
    }

    /// Kind hint of a public function, if the manifest gives one.
    pub fn kind_of(&self, f: FnRef) -> Option<KindHint> {
        match f.key {
            FunctionKey::Public(sel) => self
                .programs
                .get(&f.contract)?
                .entry
                .abi_hint(sel)
                .map(|h| h.kind),
            _ => None,
        }
    }
}

fn locate_emits(entry: &ContractEntry, cfg: &ContractCfg) -> Vec<EmitSite> {
    let mut out = Vec::new();
    for (block, ins) in cfg.sites() {
        let Some(n) = ins.opcode.log_topics().filter(|n| *n >= 1) else {
            continue;
        };
        if cfg.dead.contains(&block) {
            continue;
        }
        let Some(facts) = cfg.facts(ins.offset) else {
            continue;
        };
        let mut found = None;
        for inputs in &facts.inputs {
            let topic = inputs[2];
            let Value::Const { value, site } = cfg.values.get(topic) else {
                continue;
            };
            let literal = cfg.block(block).is_some_and(|b| b.contains(*site))
                && cfg
                    .instruction_at(*site)
                    .is_some_and(|i| i.opcode == Opcode::PUSH32);
            if !literal {
                continue;
            }
            if let Some(h) = entry.event_hint(*value) {
                found = Some(h);
            }
        }
        if let Some(h) = found {
            out.push(EmitSite {
                site: SiteRef {
                    contract: entry.address,
                    block,
                    offset: ins.offset,
                },
                topic: h.topic0,
                name: h.name.clone(),
                kind: h.kind,
                topics: n,
            });
        }
    }
    out
}

fn apply_names(entry: &ContractEntry, cfg: &mut ContractCfg, warnings: &mut Vec<String>) {
    for h in &entry.abi {
        match cfg.functions.get_mut(&FunctionKey::Public(h.selector)) {
            Some(f) => {
                f.name.get_or_insert_with(|| h.name.clone());
            }
            None => warnings.push(format!(
                "{}: hinted selector {} ({}) not found in dispatcher",
                entry.address, h.selector, h.name
            )),
        }
    }
    for h in &entry.internal_functions {
        match cfg.functions.get_mut(&FunctionKey::Internal(h.entry)) {
            Some(f) => f.name = Some(h.name.clone()),
            None => warnings.push(format!(
                "{}: no internal function is entered at {:#x} ({})",
                entry.address, h.entry, h.name
            )),
        }
    }
}

/// Attach ingested CFGs to the descriptor's contracts.
pub fn bind(
    descriptor: BridgeDescriptor,
    mut ingested: BTreeMap<Address, ContractCfg>,
) -> Result<BridgeProgram> {
    let mut programs = BTreeMap::new();
    let mut warnings = Vec::new();
    for chain in &descriptor.chains {
        for entry in &chain.contracts {
            let mut cfg = ingested.remove(&entry.address).ok_or_else(|| {
                Error::Bind(format!("no bytecode ingested for contract {}", entry.address))
            })?;
            apply_names(entry, &mut cfg, &mut warnings);
            let emits = locate_emits(entry, &cfg);
            programs.insert(
                entry.address,
                ContractProgram {
                    entry: entry.clone(),
                    role: chain.role,
                    chain_id: chain.chain_id,
                    cfg,
                    emits,
                },
            );
        }
    }
    for p in &descriptor.pairings {
        let located = programs
            .values()
            .filter(|c| c.role == Role::Source)
            .flat_map(|c| &c.emits)
            .any(|e| e.topic == p.deposit_event);
        if !located {
            warnings.push(format!(
                "pairing {} -> {}: no emission site for the deposit event; emitting edge omitted",
                p.deposit_event, p.authorize_selector
            ));
        }
    }
    let entry_points = |role: Role| -> Vec<FnRef> {
        programs
            .values()
            .filter(|c| c.role == role)
            .flat_map(|c| c.cfg.public_functions().map(|f| c.fn_ref(f.key)))
            .collect()
    };
    let source_entry_points = entry_points(Role::Source);
    let dest_entry_points = entry_points(Role::Destination);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BridgeProgram {
        descriptor,
        programs,
        source_entry_points,
        dest_entry_points,
        warnings,
    })
}

/// Read, ingest and bind every contract of a descriptor.
pub fn load_program(descriptor: BridgeDescriptor) -> Result<BridgeProgram> {
    let jobs: Vec<&ContractEntry> = descriptor.contracts().map(|(_, e)| e).collect();
    let ingested: Result<Vec<(Address, ContractCfg)>> = jobs
        .par_iter()
        .map(|entry| {
            let text = std::fs::read_to_string(&entry.bytecode).map_err(|e| {
                Error::Bind(format!(
                    "contract {}: cannot read bytecode {}: {e}",
                    entry.address,
                    entry.bytecode.display()
                ))
            })?;
            let code = evm::parse_hex(&text)?;
            let hints: Vec<SelectorHint> = entry
                .abi
                .iter()
                .map(|h| SelectorHint {
                    selector: h.selector,
                    name: h.name.clone(),
                })
                .collect();
            Ok((entry.address, evm::ingest(&code, &hints)?))
        })
        .collect();
    bind(descriptor, ingested?.into_iter().collect())
}
