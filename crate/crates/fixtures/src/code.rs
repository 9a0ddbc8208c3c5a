//! Assembly-text builder with the idioms compiled bridge code uses:
//! a selector dispatcher, mapping slots, `require`, events and ecrecover.
//!
//! Memory layout: 0x00-0x3f mapping scratch, 0x80-0x17f event data,
//! 0x200-0x3ff locals, 0x400-0x4ff hash input, 0x500-0x57f ecrecover input.

use axe_core::evm::asm::parse_text;
use axe_core::Result;
use sha3::{Digest, Keccak256};
use std::collections::BTreeMap;

pub fn keccak(text: &str) -> [u8; 32] {
    Keccak256::digest(text.as_bytes()).into()
}

pub fn selector(signature: &str) -> u32 {
    let h = keccak(signature);
    u32::from_be_bytes([h[0], h[1], h[2], h[3]])
}

const EVENT_DATA: usize = 0x80;
const LOCALS: usize = 0x200;
const HASH_INPUT: usize = 0x400;
const SIG_INPUT: usize = 0x500;

#[derive(Default, Clone)]
pub struct Src {
    text: String,
    fresh: usize,
}

impl Src {
    pub fn new() -> Src {
        Src::default()
    }

    pub fn raw(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self.text.push('\n');
        self
    }

    pub fn fresh(&mut self, stem: &str) -> String {
        self.fresh += 1;
        format!("{stem}_{}", self.fresh)
    }

    pub fn label(&mut self, name: &str) -> &mut Self {
        self.raw(&format!("{name}:"))
    }

    pub fn push(&mut self, v: u64) -> &mut Self {
        if v == 0 {
            self.raw("PUSH0")
        } else {
            self.raw(&format!("PUSH8 {v:#x}"))
        }
    }

    /// Route on the first four calldata bytes; unknown selectors revert.
    pub fn dispatcher(&mut self, entries: &[(u32, &str)]) -> &mut Self {
        self.raw("PUSH0 CALLDATALOAD PUSH1 0xe0 SHR");
        for (sel, label) in entries {
            self.raw(&format!("DUP1 PUSH4 {sel:#010x} EQ @{label} JUMPI"));
        }
        self.raw("PUSH0 DUP1 REVERT")
    }

    /// `[] -> [arg k]`
    pub fn param(&mut self, k: usize) -> &mut Self {
        self.raw(&format!("PUSH2 {:#06x} CALLDATALOAD", 4 + 32 * k))
    }

    /// `[v] -> []`
    pub fn set(&mut self, local: usize) -> &mut Self {
        self.raw(&format!("PUSH2 {:#06x} MSTORE", LOCALS + 32 * local))
    }

    /// `[] -> [v]`
    pub fn get(&mut self, local: usize) -> &mut Self {
        self.raw(&format!("PUSH2 {:#06x} MLOAD", LOCALS + 32 * local))
    }

    /// `[key] -> [slot of mapping base[key]]`
    pub fn slot(&mut self, base: u64) -> &mut Self {
        self.raw("PUSH0 MSTORE");
        self.push(base);
        self.raw("PUSH1 0x20 MSTORE PUSH1 0x40 PUSH0 SHA3")
    }

    /// `[key] -> [base[key]]`
    pub fn load(&mut self, base: u64) -> &mut Self {
        self.slot(base).raw("SLOAD")
    }

    /// `[value key] -> []`, storing `base[key] = value`.
    pub fn store(&mut self, base: u64) -> &mut Self {
        self.slot(base).raw("SSTORE")
    }

    /// `[] -> [var]` for a plain state variable.
    pub fn load_var(&mut self, slot: u64) -> &mut Self {
        self.push(slot).raw("SLOAD")
    }

    /// `[value] -> []`
    pub fn store_var(&mut self, slot: u64) -> &mut Self {
        self.push(slot).raw("SSTORE")
    }

    /// `[cond] -> []`, reverting when the condition is zero.
    pub fn require(&mut self) -> &mut Self {
        let ok = self.fresh("ok");
        self.raw(&format!("@{ok} JUMPI PUSH0 DUP1 REVERT"));
        self.label(&ok)
    }

    /// `[w0 .. wn-1] -> []`, logging the words as event data under `topic`.
    pub fn emit(&mut self, topic: &[u8; 32], words: usize) -> &mut Self {
        for j in (0..words).rev() {
            self.raw(&format!("PUSH2 {:#06x} MSTORE", EVENT_DATA + 32 * j));
        }
        self.raw(&format!(
            "PUSH32 0x{} PUSH1 {:#04x} PUSH1 {EVENT_DATA:#04x} LOG1",
            hex::encode(topic),
            32 * words
        ))
    }

    /// `[w0 .. wn-1] -> [keccak(w0 . .. . wn-1)]`
    pub fn hash(&mut self, words: usize) -> &mut Self {
        for j in (0..words).rev() {
            self.raw(&format!("PUSH2 {:#06x} MSTORE", HASH_INPUT + 32 * j));
        }
        self.raw(&format!("PUSH1 {:#04x} PUSH2 {HASH_INPUT:#06x} SHA3", 32 * words))
    }

    /// `[hash v r s] -> [signer]` through the ecrecover precompile.
    pub fn ecrecover(&mut self) -> &mut Self {
        for j in (0..4).rev() {
            self.raw(&format!("PUSH2 {:#06x} MSTORE", SIG_INPUT + 32 * j));
        }
        self.raw(&format!(
            "PUSH1 0x20 PUSH0 PUSH1 0x80 PUSH2 {SIG_INPUT:#06x} PUSH1 0x01 GAS STATICCALL POP PUSH0 MLOAD"
        ))
    }

    /// `[args..] -> []`: call the internal function at `label`, whose
    /// return address sits beneath the arguments.
    pub fn call(&mut self, label: &str, args: &[usize]) -> &mut Self {
        let ret = self.fresh("ret");
        self.raw(&format!("@{ret}"));
        for a in args {
            self.get(*a);
        }
        self.raw(&format!("@{label} JUMP"));
        self.label(&ret)
    }

    pub fn revert(&mut self) -> &mut Self {
        self.raw("PUSH0 DUP1 REVERT")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Bytecode and label offsets.
    pub fn build(&self) -> Result<(Vec<u8>, BTreeMap<String, usize>)> {
        let (code, labels) = parse_text(&self.text)?.assemble_with_labels()?;
        Ok((code, labels.into_iter().collect()))
    }
}

/// `_transfer(to, amount)`: `balance[to] += amount`. Entered with
/// `[ret to amount]`.
pub fn transfer_fn(s: &mut Src, label: &str, balance: u64) {
    s.label(label)
        .raw("DUP2")
        .load(balance)
        .raw("DUP2 ADD DUP3")
        .store(balance)
        .raw("POP POP JUMP");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_selector() {
        assert_eq!(selector("transfer(address,uint256)"), 0xa9059cbb);
    }

    #[test]
    fn builds() {
        let mut s = Src::new();
        s.dispatcher(&[(1, "f")]).label("f").param(0).require().raw("STOP");
        let (code, labels) = s.build().unwrap();
        assert!(!code.is_empty());
        assert!(labels.contains_key("f"));
    }
}
