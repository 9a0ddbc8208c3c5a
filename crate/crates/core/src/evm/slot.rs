//! Storage slot recognition from SLOAD/SSTORE key values.

use super::opcode::Opcode;
use super::value::{Value, ValueId, ValueTable};
use super::word::U256;
use serde::Serialize;

/// A storage location as far as it can be recovered from bytecode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotRef {
    Direct {
        slot: U256,
    },
    /// `keccak(key_n . ... keccak(key_1 . base))`, i.e. a (nested) mapping entry.
    Mapping {
        base: U256,
        #[serde(skip)]
        keys: Vec<ValueId>,
    },
    Unknown,
}

impl SlotRef {
    /// Declared slot number of the variable, when known.
    pub fn base(&self) -> Option<U256> {
        match self {
            SlotRef::Direct { slot } => Some(*slot),
            SlotRef::Mapping { base, .. } => Some(*base),
            SlotRef::Unknown => None,
        }
    }

    pub fn keys(&self) -> &[ValueId] {
        match self {
            SlotRef::Mapping { keys, .. } => keys,
            _ => &[],
        }
    }
}

pub fn slot_of(values: &ValueTable, key: ValueId) -> SlotRef {
    slot_of_depth(values, key, 0)
}

fn slot_of_depth(values: &ValueTable, key: ValueId, depth: usize) -> SlotRef {
    if depth > 8 {
        return SlotRef::Unknown;
    }
    if let Some(slot) = values.const_value(key) {
        return SlotRef::Direct { slot };
    }
    match values.get(key) {
        Value::Op { op: Opcode::SHA3, mem, .. } => match mem.as_slice() {
            [base] => match values.const_value(*base) {
                Some(base) => SlotRef::Mapping { base, keys: vec![] },
                None => SlotRef::Unknown,
            },
            [k, inner] => match values.const_value(*inner) {
                Some(base) => SlotRef::Mapping {
                    base,
                    keys: vec![*k],
                },
                None => match slot_of_depth(values, *inner, depth + 1) {
                    SlotRef::Mapping { base, mut keys } => {
                        keys.push(*k);
                        SlotRef::Mapping { base, keys }
                    }
                    _ => SlotRef::Unknown,
                },
            },
            _ => SlotRef::Unknown,
        },
        // Struct members and array elements: offset from a mapping or array slot.
        Value::Op { op: Opcode::ADD, args, .. } => {
            let (a, b) = (args[0], args[1]);
            let inner = match (values.const_value(a), values.const_value(b)) {
                (Some(_), None) => b,
                (None, Some(_)) => a,
                _ => return SlotRef::Unknown,
            };
            match slot_of_depth(values, inner, depth + 1) {
                m @ SlotRef::Mapping { .. } => m,
                _ => SlotRef::Unknown,
            }
        }
        _ => SlotRef::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_mapping() {
        let mut t = ValueTable::default();
        let k1 = t.intern(Value::Site {
            op: Opcode::CALLER,
            site: 1,
            args: vec![],
            mem: vec![],
        });
        let k2 = t.intern(Value::Site {
            op: Opcode::ORIGIN,
            site: 2,
            args: vec![],
            mem: vec![],
        });
        let base = t.constant(U256::from(3), 5);
        let inner = t.intern(Value::Op {
            op: Opcode::SHA3,
            args: vec![],
            mem: vec![k1, base],
        });
        let outer = t.intern(Value::Op {
            op: Opcode::SHA3,
            args: vec![],
            mem: vec![k2, inner],
        });
        assert_eq!(
            slot_of(&t, outer),
            SlotRef::Mapping {
                base: U256::from(3),
                keys: vec![k1, k2]
            }
        );
        assert_eq!(slot_of(&t, base), SlotRef::Direct { slot: U256::from(3) });
        assert_eq!(slot_of(&t, k1), SlotRef::Unknown);
    }
}
