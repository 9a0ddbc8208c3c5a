//! A small label-resolving assembler, used to build test programs and fixtures.

use super::opcode::Opcode;
use super::word::U256;
use crate::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone)]
enum Item {
    Op(Opcode),
    Push(Vec<u8>),
    Label(String),
    PushLabel(String),
}

#[derive(Debug, Clone, Default)]
pub struct Assembler {
    items: Vec<Item>,
    fresh: usize,
}

impl Assembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(&mut self, op: Opcode) -> &mut Self {
        self.items.push(Item::Op(op));
        self
    }

    pub fn ops(&mut self, ops: &[Opcode]) -> &mut Self {
        for op in ops {
            self.op(*op);
        }
        self
    }

    /// Push with the narrowest PUSHn that fits (PUSH0 for zero).
    pub fn push(&mut self, value: impl Into<U256>) -> &mut Self {
        let v = value.into();
        let bytes = v.to_be_bytes();
        let width = v.byte_len();
        self.items.push(Item::Push(bytes[32 - width..].to_vec()));
        self
    }

    /// Push with an explicit width equal to `bytes.len()` (1..=32).
    pub fn push_bytes(&mut self, bytes: &[u8]) -> &mut Self {
        assert!((1..=32).contains(&bytes.len()), "PUSH width out of range");
        self.items.push(Item::Push(bytes.to_vec()));
        self
    }

    pub fn dup(&mut self, n: usize) -> &mut Self {
        assert!((1..=16).contains(&n));
        self.op(Opcode(0x7f + n as u8))
    }

    pub fn swap(&mut self, n: usize) -> &mut Self {
        assert!((1..=16).contains(&n));
        self.op(Opcode(0x8f + n as u8))
    }

    /// Define `name` here and emit its JUMPDEST.
    pub fn label(&mut self, name: &str) -> &mut Self {
        self.items.push(Item::Label(name.to_string()));
        self
    }

    /// PUSH2 of the label's offset.
    pub fn push_label(&mut self, name: &str) -> &mut Self {
        self.items.push(Item::PushLabel(name.to_string()));
        self
    }

    pub fn jump(&mut self, name: &str) -> &mut Self {
        self.push_label(name).op(Opcode::JUMP)
    }

    pub fn jumpi(&mut self, name: &str) -> &mut Self {
        self.push_label(name).op(Opcode::JUMPI)
    }

    /// Label name unique within this assembler.
    pub fn fresh_label(&mut self, stem: &str) -> String {
        self.fresh += 1;
        format!("{stem}.{}", self.fresh)
    }

    pub fn append(&mut self, other: &Assembler) -> &mut Self {
        self.items.extend(other.items.iter().cloned());
        self
    }

    pub fn assemble(&self) -> Result<Vec<u8>> {
        self.assemble_with_labels().map(|(code, _)| code)
    }

    /// Bytecode plus the offset of every label.
    pub fn assemble_with_labels(&self) -> Result<(Vec<u8>, HashMap<String, usize>)> {
        let mut labels = HashMap::new();
        let mut pc = 0usize;
        for item in &self.items {
            match item {
                Item::Op(_) => pc += 1,
                Item::Push(bytes) => pc += 1 + bytes.len(),
                Item::PushLabel(_) => pc += 3,
                Item::Label(name) => {
                    if labels.insert(name.clone(), pc).is_some() {
                        return Err(Error::Asm(format!("label `{name}` defined twice")));
                    }
                    pc += 1;
                }
            }
        }
        if pc > u16::MAX as usize {
            return Err(Error::Asm("program exceeds PUSH2 label range".into()));
        }
        let mut out = Vec::with_capacity(pc);
        for item in &self.items {
            match item {
                Item::Op(op) => out.push(op.0),
                Item::Push(bytes) if bytes.is_empty() => out.push(Opcode::PUSH0.0),
                Item::Push(bytes) => {
                    out.push(0x5f + bytes.len() as u8);
                    out.extend_from_slice(bytes);
                }
                Item::PushLabel(name) => {
                    let target = *labels
                        .get(name)
                        .ok_or_else(|| Error::Asm(format!("undefined label `{name}`")))?;
                    out.push(Opcode::PUSH2.0);
                    out.extend_from_slice(&(target as u16).to_be_bytes());
                }
                Item::Label(_) => out.push(Opcode::JUMPDEST.0),
            }
        }
        Ok((out, labels))
    }
}

/// Assemble whitespace-separated text. Tokens are mnemonics, hex immediates
/// following PUSHn, `name:` label definitions and `@name` label pushes.
pub fn assemble_text(src: &str) -> Result<Vec<u8>> {
    parse_text(src)?.assemble()
}

/// Parse assembly text without resolving labels.
pub fn parse_text(src: &str) -> Result<Assembler> {
    let mut asm = Assembler::new();
    let mut tokens = src
        .lines()
        .map(|l| l.split("//").next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .peekable();
    while let Some(tok) = tokens.next() {
        if let Some(name) = tok.strip_suffix(':') {
            asm.label(name);
        } else if let Some(name) = tok.strip_prefix('@') {
            asm.push_label(name);
        } else {
            let op = Opcode::from_name(tok)
                .ok_or_else(|| Error::Asm(format!("unknown mnemonic `{tok}`")))?;
            let width = op.push_width();
            if width == 0 {
                asm.op(op);
                continue;
            }
            let imm = tokens
                .next()
                .ok_or_else(|| Error::Asm(format!("{tok} needs an immediate")))?;
            let digits = imm.trim_start_matches("0x");
            let raw = hex::decode(format!("{digits:0>w$}", w = width * 2))
                .map_err(|e| Error::Asm(format!("bad immediate `{imm}`: {e}")))?;
            if raw.len() != width {
                return Err(Error::Asm(format!("immediate `{imm}` wider than {tok}")));
            }
            asm.push_bytes(&raw);
        }
    }
    Ok(asm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_resolve() {
        let code = assemble_text("@end JUMP INVALID end: STOP").unwrap();
        assert_eq!(code, vec![0x61, 0x00, 0x05, 0x56, 0xfe, 0x5b, 0x00]);
    }

    #[test]
    fn minimal_push_width() {
        let mut a = Assembler::new();
        a.push(0u64).push(0x1234u64);
        assert_eq!(a.assemble().unwrap(), vec![0x5f, 0x61, 0x12, 0x34]);
    }

    #[test]
    fn undefined_label_is_error() {
        assert!(matches!(assemble_text("@nowhere JUMP"), Err(Error::Asm(_))));
        assert!(matches!(assemble_text("PUSH1"), Err(Error::Asm(_))));
    }
}
