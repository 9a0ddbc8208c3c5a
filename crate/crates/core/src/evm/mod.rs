//! EVM bytecode ingestion: disassembly, control-flow recovery and function
//! partitioning.

pub mod asm;
pub mod cfg;
pub mod dataflow;
pub mod disasm;
pub mod interp;
pub mod opcode;
pub mod partition;
pub mod slot;
pub mod value;
pub mod word;

pub use cfg::{
    BasicBlock, BlockId, ContractCfg, EdgeKind, FunctionBody, FunctionKey, ParamKind, Selector,
    SiteFacts, Terminator, Visibility,
};
pub use disasm::{disassemble, parse_hex, strip_metadata, Instruction};
pub use dataflow::ValueIndex;
pub use interp::recover_cfg;
pub use opcode::Opcode;
pub use partition::{partition_functions, SelectorHint, MAX_CALL_DEPTH};
pub use slot::{slot_of, SlotRef};
pub use value::{Value, ValueId, ValueTable};
pub use word::U256;

/// Disassemble, recover control flow and partition in one step.
pub fn ingest(code: &[u8], hints: &[SelectorHint]) -> crate::Result<ContractCfg> {
    let code = strip_metadata(code);
    let instructions = disassemble(code)?;
    Ok(partition_functions(recover_cfg(&instructions), hints))
}
