use super::disasm::Instruction;
use super::opcode::Opcode;
use super::value::{ValueId, ValueTable};
use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// Blocks are identified by the byte offset of their first instruction.
pub type BlockId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminator {
    Jump,
    Jumpi,
    Return,
    Revert,
    Stop,
    Selfdestruct,
    Fallthrough,
    Invalid,
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BasicBlock {
    pub id: BlockId,
    pub instructions: Vec<Instruction>,
    pub terminator: Terminator,
}

impl BasicBlock {
    pub fn start(&self) -> usize {
        self.id
    }

    /// One past the last byte of the block.
    pub fn end(&self) -> usize {
        self.last().next_offset()
    }

    pub fn last(&self) -> &Instruction {
        self.instructions.last().expect("blocks are never empty")
    }

    pub fn contains(&self, offset: usize) -> bool {
        (self.start()..self.end()).contains(&offset)
    }

    pub fn starts_with_jumpdest(&self) -> bool {
        self.instructions[0].opcode == Opcode::JUMPDEST
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EdgeKind {
    Normal,
    /// Jump into an internal function; control comes back at `return_to`.
    Call { return_to: BlockId },
    /// Jump through a return address pushed by some caller.
    Return,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    pub fn as_u32(self) -> u32 {
        u32::from_be_bytes(self.0)
    }
}

impl From<u32> for Selector {
    fn from(v: u32) -> Self {
        Selector(v.to_be_bytes())
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let digits = s.strip_prefix("0x").unwrap_or(s);
        let raw = hex::decode(digits).map_err(|e| format!("bad selector `{s}`: {e}"))?;
        let arr: [u8; 4] = raw
            .try_into()
            .map_err(|_| format!("selector `{s}` is not 4 bytes"))?;
        Ok(Selector(arr))
    }
}

impl Serialize for Selector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Identity of a function inside one contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionKey {
    Public(Selector),
    /// The sentinel for contracts without a dispatcher.
    Fallback,
    Internal(BlockId),
}

impl FunctionKey {
    pub fn is_public(self) -> bool {
        !matches!(self, FunctionKey::Internal(_))
    }
}

impl fmt::Display for FunctionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionKey::Public(sel) => write!(f, "{sel}"),
            FunctionKey::Fallback => write!(f, "fallback"),
            FunctionKey::Internal(at) => write!(f, "internal@{at:#x}"),
        }
    }
}

impl Serialize for FunctionKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Word,
    /// Head word of a dynamic argument (used as a calldata offset).
    Dynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Visibility {
    PublicEntry,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FunctionBody {
    pub key: FunctionKey,
    pub entry: BlockId,
    pub blocks: BTreeSet<BlockId>,
    pub params: Vec<ParamKind>,
    pub is_public: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl FunctionBody {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.key.to_string())
    }
}

/// Per-instruction facts gathered by the abstract interpreter, one entry per
/// distinct abstract context the instruction was executed in.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiteFacts {
    /// Stack operands, top of stack first.
    pub inputs: BTreeSet<Vec<ValueId>>,
    /// Memory words read (SHA3, LOG data, call input, return data).
    pub mem_inputs: BTreeSet<Vec<ValueId>>,
    pub outputs: BTreeSet<ValueId>,
}

#[derive(Clone, Debug)]
pub struct ContractCfg {
    pub instructions: Vec<Instruction>,
    pub blocks: BTreeMap<BlockId, BasicBlock>,
    pub edges: BTreeMap<(BlockId, BlockId), EdgeKind>,
    pub entry: BlockId,
    pub functions: BTreeMap<FunctionKey, FunctionBody>,
    /// Blocks never reached from the entry.
    pub dead: BTreeSet<BlockId>,
    pub diagnostics: Vec<String>,
    pub values: ValueTable,
    pub facts: BTreeMap<usize, SiteFacts>,
}

impl ContractCfg {
    pub fn block(&self, id: BlockId) -> Option<&BasicBlock> {
        self.blocks.get(&id)
    }

    /// Block containing the instruction at `offset`.
    pub fn block_of(&self, offset: usize) -> Option<&BasicBlock> {
        self.blocks
            .range(..=offset)
            .next_back()
            .map(|(_, b)| b)
            .filter(|b| b.contains(offset))
    }

    pub fn instruction_at(&self, offset: usize) -> Option<&Instruction> {
        let block = self.block_of(offset)?;
        block.instructions.iter().find(|i| i.offset == offset)
    }

    pub fn successors(&self, id: BlockId) -> impl Iterator<Item = (BlockId, EdgeKind)> + '_ {
        self.edges
            .range((id, 0)..=(id, usize::MAX))
            .map(|((_, to), kind)| (*to, *kind))
    }

    pub fn predecessors(&self, id: BlockId) -> Vec<(BlockId, EdgeKind)> {
        self.edges
            .iter()
            .filter(|((_, to), _)| *to == id)
            .map(|((from, _), kind)| (*from, *kind))
            .collect()
    }

    pub fn facts(&self, offset: usize) -> Option<&SiteFacts> {
        self.facts.get(&offset)
    }

    pub fn is_reachable(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id) && !self.dead.contains(&id)
    }

    pub fn public_functions(&self) -> impl Iterator<Item = &FunctionBody> {
        self.functions.values().filter(|f| f.is_public)
    }

    pub fn visibility(&self) -> BTreeMap<FunctionKey, Visibility> {
        self.functions
            .iter()
            .map(|(k, f)| {
                let v = if f.is_public {
                    Visibility::PublicEntry
                } else {
                    Visibility::Internal
                };
                (*k, v)
            })
            .collect()
    }

    /// Functions whose body contains `block`.
    pub fn functions_containing(&self, block: BlockId) -> Vec<&FunctionBody> {
        self.functions
            .values()
            .filter(|f| f.blocks.contains(&block))
            .collect()
    }

    /// All instructions in block order with their block id.
    pub fn sites(&self) -> impl Iterator<Item = (BlockId, &Instruction)> {
        self.blocks
            .values()
            .flat_map(|b| b.instructions.iter().map(move |i| (b.id, i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_text_roundtrip() {
        let s: Selector = "0xa9059cbb".parse().unwrap();
        assert_eq!(s.to_string(), "0xa9059cbb");
        assert_eq!(s.as_u32(), 0xa9059cbb);
        assert!("0x1234".parse::<Selector>().is_err());
        assert_eq!(FunctionKey::Internal(0x1a).to_string(), "internal@0x1a");
    }
}
