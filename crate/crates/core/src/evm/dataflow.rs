//! Def-use over the value graph, with hops through storage.

use super::cfg::ContractCfg;
use super::opcode::Opcode;
use super::slot::{slot_of, SlotRef};
use super::value::{ValueId, ValueTable};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, Default)]
pub struct ValueIndex {
    pub users: Vec<Vec<ValueId>>,
    /// SLOAD results by the slot they read.
    pub loads: BTreeMap<SlotRef, BTreeSet<ValueId>>,
    /// SSTOREs as (slot, stored value, site).
    pub stores: Vec<(SlotRef, ValueId, usize)>,
}

impl ValueIndex {
    pub fn build(cfg: &ContractCfg) -> ValueIndex {
        let mut idx = ValueIndex {
            users: cfg.values.users(),
            ..Default::default()
        };
        for (block, ins) in cfg.sites() {
            if cfg.dead.contains(&block) {
                continue;
            }
            let Some(facts) = cfg.facts(ins.offset) else {
                continue;
            };
            match ins.opcode {
                Opcode::SLOAD => {
                    for args in &facts.inputs {
                        let slot = slot_of(&cfg.values, args[0]);
                        idx.loads.entry(slot).or_default().extend(facts.outputs.iter().copied());
                    }
                }
                Opcode::SSTORE => {
                    for args in &facts.inputs {
                        idx.stores.push((slot_of(&cfg.values, args[0]), args[1], ins.offset));
                    }
                }
                _ => {}
            }
        }
        idx
    }

    /// SLOAD results that may observe a store to `slot`.
    pub fn readers<'a>(&'a self, slot: &'a SlotRef) -> impl Iterator<Item = ValueId> + 'a {
        let matches = move |s: &SlotRef| match (slot, s) {
            (SlotRef::Unknown, _) | (_, SlotRef::Unknown) => false,
            _ => s == slot,
        };
        self.loads
            .iter()
            .filter(move |(s, _)| matches(s))
            .flat_map(|(_, vs)| vs.iter().copied())
    }

    /// Values computed from `seeds`, following stores into later loads of
    /// the same slot.
    pub fn forward(&self, seeds: impl IntoIterator<Item = ValueId>) -> BTreeSet<ValueId> {
        let mut seen: BTreeSet<ValueId> = BTreeSet::new();
        let mut work: Vec<ValueId> = seeds.into_iter().collect();
        let mut hopped: BTreeSet<usize> = BTreeSet::new();
        loop {
            while let Some(v) = work.pop() {
                if v == ValueTable::TOP || !seen.insert(v) {
                    continue;
                }
                if let Some(us) = self.users.get(v.0 as usize) {
                    work.extend(us.iter().copied());
                }
            }
            for (i, (slot, stored, _)) in self.stores.iter().enumerate() {
                if seen.contains(stored) && hopped.insert(i) {
                    work.extend(self.readers(slot));
                }
            }
            if work.is_empty() {
                return seen;
            }
        }
    }
}
