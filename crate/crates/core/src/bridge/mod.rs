//! Bridge descriptors and the bound, analysis-ready program.

pub mod manifest;
pub mod program;

pub use manifest::{
    load_manifest, load_manifest_file, Address, BridgeDescriptor, ContractEntry, KindHint,
    Meaning, Pairing, Role, Topic,
};
pub use program::{bind, load_program, BridgeProgram, ContractProgram, EmitSite, FnRef, SiteRef};
