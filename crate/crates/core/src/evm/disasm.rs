use super::opcode::Opcode;
use super::word::U256;
use crate::{Error, Result};
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Instruction {
    pub offset: usize,
    pub opcode: Opcode,
    /// Immediate bytes for PUSH1..PUSH32. A PUSH cut short by the end of the
    /// code keeps only the bytes actually present.
    #[serde(skip_serializing_if = "Option::is_none", with = "hex_opt")]
    pub immediate: Option<Vec<u8>>,
}

impl Instruction {
    pub fn size(&self) -> usize {
        1 + self.immediate.as_ref().map_or(0, Vec::len)
    }

    pub fn next_offset(&self) -> usize {
        self.offset + self.size()
    }

    /// Immediate as a word, zero-padded on the right when truncated (EVM semantics).
    pub fn push_value(&self) -> Option<U256> {
        if self.opcode == Opcode::PUSH0 {
            return Some(U256::ZERO);
        }
        let imm = self.immediate.as_ref()?;
        let width = self.opcode.push_width();
        let mut buf = imm.clone();
        buf.resize(width, 0);
        Some(U256::from_be_slice(&buf))
    }

    pub fn is_truncated(&self) -> bool {
        self.immediate
            .as_ref()
            .is_some_and(|imm| imm.len() < self.opcode.push_width())
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x} {}", self.offset, self.opcode)?;
        if let Some(imm) = &self.immediate {
            write!(f, " 0x{}", hex::encode(imm))?;
        }
        Ok(())
    }
}

mod hex_opt {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_str(&format!("0x{}", hex::encode(bytes))),
            None => s.serialize_none(),
        }
    }
}

/// Decode hex bytecode text: optional `0x` prefix, surrounding whitespace ignored.
pub fn parse_hex(text: &str) -> Result<Vec<u8>> {
    let trimmed = text.trim();
    let digits = trimmed
        .strip_prefix("0x")
        .or_else(|| trimmed.strip_prefix("0X"))
        .unwrap_or(trimmed);
    if digits.is_empty() {
        return Err(Error::EmptyBytecode);
    }
    if !digits.len().is_multiple_of(2) {
        return Err(Error::MalformedHex(format!(
            "odd number of hex digits ({})",
            digits.len()
        )));
    }
    hex::decode(digits).map_err(|e| Error::MalformedHex(e.to_string()))
}

/// Length of a trailing Solidity/Vyper CBOR metadata section, if one is present.
///
/// The trailer is `<cbor map> <u16 big-endian length of the map>`; the map
/// must start with a small-map header followed by a text-string key.
pub fn metadata_trailer_len(code: &[u8]) -> Option<usize> {
    if code.len() < 4 {
        return None;
    }
    let declared = u16::from_be_bytes([code[code.len() - 2], code[code.len() - 1]]) as usize;
    let total = declared + 2;
    if declared < 2 || total > code.len() {
        return None;
    }
    let start = code.len() - total;
    let header = code[start];
    let first_key = code[start + 1];
    ((0xa1..=0xa6).contains(&header) && (0x60..=0x77).contains(&first_key)).then_some(total)
}

pub fn strip_metadata(code: &[u8]) -> &[u8] {
    match metadata_trailer_len(code) {
        Some(n) => &code[..code.len() - n],
        None => code,
    }
}

/// Linear-sweep disassembly. Every byte is consumed exactly once; unassigned
/// opcodes come back as instructions whose mnemonic is `INVALID`.
pub fn disassemble(code: &[u8]) -> Result<Vec<Instruction>> {
    if code.is_empty() {
        return Err(Error::EmptyBytecode);
    }
    let mut out = Vec::with_capacity(code.len());
    let mut pc = 0;
    while pc < code.len() {
        let opcode = Opcode(code[pc]);
        let width = opcode.push_width();
        let immediate = (width > 0).then(|| {
            let end = (pc + 1 + width).min(code.len());
            code[pc + 1..end].to_vec()
        });
        let ins = Instruction {
            offset: pc,
            opcode,
            immediate,
        };
        pc = ins.next_offset();
        out.push(ins);
    }
    Ok(out)
}

/// Re-serialize an instruction list to bytes.
pub fn reassemble(instructions: &[Instruction]) -> Vec<u8> {
    let mut out = Vec::new();
    for ins in instructions {
        out.push(ins.opcode.0);
        if let Some(imm) = &ins.immediate {
            out.extend_from_slice(imm);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn push_push_add() {
        let code = parse_hex("0x6001600101").unwrap();
        let ins = disassemble(&code).unwrap();
        let names: Vec<_> = ins.iter().map(|i| i.to_string()).collect();
        assert_eq!(
            names,
            ["0x0000 PUSH1 0x01", "0x0002 PUSH1 0x01", "0x0004 ADD"]
        );
    }

    #[test]
    fn single_stop() {
        let ins = disassemble(&parse_hex("00").unwrap()).unwrap();
        assert_eq!(ins.len(), 1);
        assert_eq!(ins[0].opcode, Opcode::STOP);
        assert!(ins[0].immediate.is_none());
    }

    #[test]
    fn hex_errors() {
        assert!(matches!(parse_hex(""), Err(Error::EmptyBytecode)));
        assert!(matches!(parse_hex("0x"), Err(Error::EmptyBytecode)));
        assert!(matches!(parse_hex("0x600"), Err(Error::MalformedHex(_))));
        assert!(matches!(parse_hex("zz"), Err(Error::MalformedHex(_))));
        assert!(matches!(disassemble(&[]), Err(Error::EmptyBytecode)));
        assert_eq!(parse_hex(" 0x00\n").unwrap(), vec![0]);
    }

    #[test]
    fn unknown_opcode_is_invalid_not_error() {
        let ins = disassemble(&[0x0c, 0x00]).unwrap();
        assert_eq!(ins[0].opcode.name(), "INVALID");
        assert_eq!(ins.len(), 2);
    }

    #[test]
    fn truncated_push_keeps_bytes() {
        let ins = disassemble(&[0x61, 0xaa]).unwrap();
        assert_eq!(ins.len(), 1);
        assert!(ins[0].is_truncated());
        assert_eq!(ins[0].push_value(), Some(U256::from(0xaa00)));
        assert_eq!(reassemble(&ins), vec![0x61, 0xaa]);
    }

    #[test]
    fn metadata_trailer_is_stripped() {
        // a1 65 "bzzr0" 58 20 <32 bytes>  then length 0x0029
        let mut code = vec![0x60, 0x00, 0x56, 0xfe];
        let mut meta = vec![0xa1, 0x65];
        meta.extend_from_slice(b"bzzr0");
        meta.extend_from_slice(&[0x58, 0x20]);
        meta.extend_from_slice(&[0x11; 32]);
        let len = meta.len() as u16;
        code.extend_from_slice(&meta);
        code.extend_from_slice(&len.to_be_bytes());
        assert_eq!(strip_metadata(&code), &[0x60, 0x00, 0x56, 0xfe]);
        assert_eq!(strip_metadata(&[0x60, 0x01, 0x00]), &[0x60, 0x01, 0x00]);
    }

    proptest! {
        #[test]
        fn roundtrip_and_offsets(code in proptest::collection::vec(any::<u8>(), 1..400)) {
            let ins = disassemble(&code).unwrap();
            prop_assert_eq!(reassemble(&ins), code.clone());
            for pair in ins.windows(2) {
                prop_assert!(pair[0].offset < pair[1].offset);
                prop_assert_eq!(pair[0].next_offset(), pair[1].offset);
            }
            for i in &ins {
                let width = i.opcode.push_width();
                match &i.immediate {
                    Some(imm) => prop_assert!(width > 0 && (imm.len() == width || i.next_offset() == code.len())),
                    None => prop_assert_eq!(width, 0),
                }
            }
        }
    }
}
