//! Symbolic stack values produced by the abstract interpreter.
//!
//! Values are hash-consed: structurally identical computations share a
//! [`ValueId`]. Leaves (constants, environment reads, calls) are keyed by the
//! instruction site that produced them, so the same parameter read in two
//! different functions never collapses into one value.

use super::opcode::Opcode;
use super::word::U256;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub struct ValueId(pub u32);

/// Largest merge set kept before a slot degrades to [`Value::Top`].
pub const MERGE_CAP: usize = 16;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Value {
    Top,
    Const {
        value: U256,
        site: usize,
    },
    /// Pure operation; `mem` holds the memory words read (SHA3).
    Op {
        op: Opcode,
        args: Vec<ValueId>,
        mem: Vec<ValueId>,
    },
    /// Site-unique result: environment reads, calls, unknown memory.
    Site {
        op: Opcode,
        site: usize,
        args: Vec<ValueId>,
        mem: Vec<ValueId>,
    },
    /// Word `index` of a multi-word result: call return data or copied input.
    Word {
        of: ValueId,
        index: u32,
    },
    Merge(Vec<ValueId>),
}

#[derive(Debug, Clone)]
pub struct ValueTable {
    values: Vec<Value>,
    index: HashMap<Value, ValueId>,
    sites: Vec<BTreeSet<usize>>,
}

impl Default for ValueTable {
    fn default() -> Self {
        let mut t = ValueTable {
            values: Vec::new(),
            index: HashMap::new(),
            sites: Vec::new(),
        };
        t.intern(Value::Top);
        t
    }
}

impl ValueTable {
    pub const TOP: ValueId = ValueId(0);

    pub fn intern(&mut self, v: Value) -> ValueId {
        if let Some(id) = self.index.get(&v) {
            return *id;
        }
        let id = ValueId(self.values.len() as u32);
        let site = match &v {
            Value::Const { site, .. } | Value::Site { site, .. } => Some(*site),
            _ => None,
        };
        self.values.push(v.clone());
        self.sites.push(site.into_iter().collect());
        self.index.insert(v, id);
        id
    }

    pub fn constant(&mut self, value: U256, site: usize) -> ValueId {
        self.intern(Value::Const { value, site })
    }

    pub fn get(&self, id: ValueId) -> &Value {
        &self.values[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add_site(&mut self, id: ValueId, site: usize) {
        if id != Self::TOP {
            self.sites[id.0 as usize].insert(site);
        }
    }

    /// Instruction offsets that define `id` directly (merges are not expanded).
    pub fn own_sites(&self, id: ValueId) -> &BTreeSet<usize> {
        &self.sites[id.0 as usize]
    }

    /// Defining sites with merges expanded.
    pub fn def_sites(&self, id: ValueId) -> BTreeSet<usize> {
        self.members(id)
            .iter()
            .flat_map(|m| self.own_sites(*m).iter().copied())
            .collect()
    }

    pub fn is_top(&self, id: ValueId) -> bool {
        id == Self::TOP
    }

    pub fn const_value(&self, id: ValueId) -> Option<U256> {
        match self.get(id) {
            Value::Const { value, .. } => Some(*value),
            _ => None,
        }
    }

    /// All constant values `id` may take, if every alternative is constant.
    pub fn const_set(&self, id: ValueId) -> Option<BTreeSet<U256>> {
        self.members(id)
            .iter()
            .map(|m| self.const_value(*m))
            .collect()
    }

    /// Leaves of a merge; a non-merge value is its own single member.
    pub fn members(&self, id: ValueId) -> Vec<ValueId> {
        match self.get(id) {
            Value::Merge(ms) => ms.clone(),
            _ => vec![id],
        }
    }

    pub fn op_of(&self, id: ValueId) -> Option<Opcode> {
        match self.get(id) {
            Value::Op { op, .. } | Value::Site { op, .. } => Some(*op),
            _ => None,
        }
    }

    pub fn args(&self, id: ValueId) -> &[ValueId] {
        match self.get(id) {
            Value::Op { args, .. } | Value::Site { args, .. } => args,
            _ => &[],
        }
    }

    pub fn mem(&self, id: ValueId) -> &[ValueId] {
        match self.get(id) {
            Value::Op { mem, .. } | Value::Site { mem, .. } => mem,
            _ => &[],
        }
    }

    /// Direct operands of `id` in the value graph.
    pub fn operands(&self, id: ValueId) -> Vec<ValueId> {
        match self.get(id) {
            Value::Op { args, mem, .. } | Value::Site { args, mem, .. } => {
                args.iter().chain(mem.iter()).copied().collect()
            }
            Value::Word { of, .. } => vec![*of],
            Value::Merge(ms) => ms.clone(),
            Value::Top | Value::Const { .. } => Vec::new(),
        }
    }

    /// Reverse operand index: for each value, the values that use it.
    pub fn users(&self) -> Vec<Vec<ValueId>> {
        let mut out = vec![Vec::new(); self.values.len()];
        for i in 0..self.values.len() {
            let id = ValueId(i as u32);
            for o in self.operands(id) {
                out[o.0 as usize].push(id);
            }
        }
        out
    }

    /// Every value reachable from `root` through operands, `root` included.
    pub fn slice(&self, root: ValueId, max_nodes: usize) -> BTreeSet<ValueId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if seen.len() >= max_nodes || !seen.insert(v) {
                continue;
            }
            stack.extend(self.operands(v));
        }
        seen
    }

    /// Least upper bound of two values.
    pub fn join(&mut self, a: ValueId, b: ValueId) -> ValueId {
        if a == b {
            return a;
        }
        if a == Self::TOP || b == Self::TOP {
            return Self::TOP;
        }
        let set: BTreeSet<ValueId> = self
            .members(a)
            .into_iter()
            .chain(self.members(b))
            .collect();
        if set.len() > MERGE_CAP {
            return Self::TOP;
        }
        if set.len() == 1 {
            return *set.iter().next().unwrap();
        }
        self.intern(Value::Merge(set.into_iter().collect()))
    }

    /// `a` over-approximates `b`.
    pub fn subsumes(&self, a: ValueId, b: ValueId) -> bool {
        if a == b || a == Self::TOP {
            return true;
        }
        if b == Self::TOP {
            return false;
        }
        let outer = self.members(a);
        self.members(b).iter().all(|m| outer.contains(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_consing_and_sites() {
        let mut t = ValueTable::default();
        let c1 = t.constant(U256::from(4), 0);
        let c1b = t.constant(U256::from(4), 0);
        let c2 = t.constant(U256::from(4), 7);
        assert_eq!(c1, c1b);
        assert_ne!(c1, c2);
        let load = t.intern(Value::Op {
            op: Opcode::CALLDATALOAD,
            args: vec![c1],
            mem: vec![],
        });
        t.add_site(load, 2);
        t.add_site(load, 9);
        assert_eq!(t.def_sites(load), BTreeSet::from([2, 9]));
        assert_eq!(t.slice(load, 10), BTreeSet::from([load, c1]));
    }

    #[test]
    fn join_and_subsume() {
        let mut t = ValueTable::default();
        let a = t.constant(U256::from(1), 0);
        let b = t.constant(U256::from(2), 1);
        let ab = t.join(a, b);
        assert_eq!(t.const_set(ab).unwrap().len(), 2);
        assert!(t.subsumes(ab, a));
        assert!(!t.subsumes(a, ab));
        assert_eq!(t.join(ab, a), ab);
        assert_eq!(t.join(ab, ValueTable::TOP), ValueTable::TOP);
        assert!(t.subsumes(ValueTable::TOP, ab));
        let mut cur = ab;
        for i in 0..MERGE_CAP as u64 {
            let c = t.constant(U256::from(100 + i), 10 + i as usize);
            cur = t.join(cur, c);
        }
        assert_eq!(cur, ValueTable::TOP);
    }
}
