use std::cmp::Ordering;
use std::fmt;

/// 256-bit EVM machine word, stored as four little-endian `u64` limbs.
///
/// Only the operations needed for constant folding during jump resolution
/// and slot recognition are provided; everything wraps modulo 2^256.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct U256([u64; 4]);

impl U256 {
    pub const ZERO: U256 = U256([0; 4]);
    pub const ONE: U256 = U256([1, 0, 0, 0]);
    pub const MAX: U256 = U256([u64::MAX; 4]);

    pub const fn from_u64(v: u64) -> Self {
        U256([v, 0, 0, 0])
    }

    /// Big-endian bytes, at most 32 of them.
    pub fn from_be_slice(bytes: &[u8]) -> Self {
        assert!(bytes.len() <= 32, "word wider than 32 bytes");
        let mut buf = [0u8; 32];
        buf[32 - bytes.len()..].copy_from_slice(bytes);
        Self::from_be_bytes(buf)
    }

    pub fn from_be_bytes(bytes: [u8; 32]) -> Self {
        let mut limbs = [0u64; 4];
        for (i, limb) in limbs.iter_mut().enumerate() {
            let start = 32 - (i + 1) * 8;
            *limb = u64::from_be_bytes(bytes[start..start + 8].try_into().unwrap());
        }
        U256(limbs)
    }

    pub fn to_be_bytes(self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.0.iter().enumerate() {
            let start = 32 - (i + 1) * 8;
            out[start..start + 8].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn as_u64(&self) -> Option<u64> {
        if self.0[1..] == [0; 3] {
            Some(self.0[0])
        } else {
            None
        }
    }

    pub fn as_usize(&self) -> Option<usize> {
        self.as_u64().and_then(|v| usize::try_from(v).ok())
    }

    /// Number of significant bytes (0 for zero).
    pub fn byte_len(&self) -> usize {
        let bytes = self.to_be_bytes();
        32 - bytes.iter().take_while(|b| **b == 0).count()
    }

    pub fn wrapping_add(self, rhs: U256) -> U256 {
        let mut out = [0u64; 4];
        let mut carry = 0u128;
        for i in 0..4 {
            let s = self.0[i] as u128 + rhs.0[i] as u128 + carry;
            out[i] = s as u64;
            carry = s >> 64;
        }
        U256(out)
    }

    pub fn wrapping_sub(self, rhs: U256) -> U256 {
        self.wrapping_add(!rhs).wrapping_add(U256::ONE)
    }

    pub fn wrapping_mul(self, rhs: U256) -> U256 {
        let mut out = [0u64; 4];
        for i in 0..4 {
            let mut carry = 0u128;
            for j in 0..(4 - i) {
                let cur = out[i + j] as u128 + self.0[i] as u128 * rhs.0[j] as u128 + carry;
                out[i + j] = cur as u64;
                carry = cur >> 64;
            }
        }
        U256(out)
    }

    pub fn shl(self, shift: u32) -> U256 {
        if shift >= 256 {
            return U256::ZERO;
        }
        let limb_shift = (shift / 64) as usize;
        let bit_shift = shift % 64;
        let mut out = [0u64; 4];
        for i in (limb_shift..4).rev() {
            let src = i - limb_shift;
            out[i] = self.0[src] << bit_shift;
            if bit_shift > 0 && src > 0 {
                out[i] |= self.0[src - 1] >> (64 - bit_shift);
            }
        }
        U256(out)
    }

    pub fn shr(self, shift: u32) -> U256 {
        if shift >= 256 {
            return U256::ZERO;
        }
        let limb_shift = (shift / 64) as usize;
        let bit_shift = shift % 64;
        let mut out = [0u64; 4];
        for i in 0..(4 - limb_shift) {
            let src = i + limb_shift;
            out[i] = self.0[src] >> bit_shift;
            if bit_shift > 0 && src + 1 < 4 {
                out[i] |= self.0[src + 1] << (64 - bit_shift);
            }
        }
        U256(out)
    }

    /// Shift amount clamped into `u32`; anything at or above 256 saturates.
    pub fn shift_amount(&self) -> u32 {
        self.as_u64().map_or(256, |v| v.min(256) as u32)
    }
}

impl std::ops::Not for U256 {
    type Output = U256;
    fn not(self) -> U256 {
        U256([!self.0[0], !self.0[1], !self.0[2], !self.0[3]])
    }
}

impl std::ops::BitAnd for U256 {
    type Output = U256;
    fn bitand(self, rhs: U256) -> U256 {
        U256([
            self.0[0] & rhs.0[0],
            self.0[1] & rhs.0[1],
            self.0[2] & rhs.0[2],
            self.0[3] & rhs.0[3],
        ])
    }
}

impl std::ops::BitOr for U256 {
    type Output = U256;
    fn bitor(self, rhs: U256) -> U256 {
        U256([
            self.0[0] | rhs.0[0],
            self.0[1] | rhs.0[1],
            self.0[2] | rhs.0[2],
            self.0[3] | rhs.0[3],
        ])
    }
}

impl std::ops::BitXor for U256 {
    type Output = U256;
    fn bitxor(self, rhs: U256) -> U256 {
        U256([
            self.0[0] ^ rhs.0[0],
            self.0[1] ^ rhs.0[1],
            self.0[2] ^ rhs.0[2],
            self.0[3] ^ rhs.0[3],
        ])
    }
}

impl Ord for U256 {
    fn cmp(&self, other: &Self) -> Ordering {
        for i in (0..4).rev() {
            match self.0[i].cmp(&other.0[i]) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for U256 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<u64> for U256 {
    fn from(v: u64) -> Self {
        U256::from_u64(v)
    }
}

impl fmt::Debug for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:#x}")
    }
}

impl fmt::LowerHex for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = self.to_be_bytes();
        let skip = bytes.iter().take_while(|b| **b == 0).count().min(31);
        let digits = hex::encode(&bytes[skip..]);
        let digits = digits.strip_prefix('0').filter(|d| !d.is_empty()).unwrap_or(&digits);
        if f.alternate() {
            write!(f, "0x{digits}")
        } else {
            write!(f, "{digits}")
        }
    }
}

impl fmt::Display for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:#x}")
    }
}

impl serde::Serialize for U256 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn to_u128(w: U256) -> u128 {
        w.0[0] as u128 | (w.0[1] as u128) << 64
    }

    fn from_u128(v: u128) -> U256 {
        U256([v as u64, (v >> 64) as u64, 0, 0])
    }

    #[test]
    fn byte_roundtrip() {
        let w = U256::from_be_slice(&[0xde, 0xad, 0xbe, 0xef]);
        assert_eq!(w.as_u64(), Some(0xdeadbeef));
        assert_eq!(&w.to_be_bytes()[28..], &[0xde, 0xad, 0xbe, 0xef]);
        assert_eq!(format!("{w:#x}"), "0xdeadbeef");
        assert_eq!(format!("{:#x}", U256::ZERO), "0x0");
    }

    #[test]
    fn wrapping_edges() {
        assert_eq!(U256::MAX.wrapping_add(U256::ONE), U256::ZERO);
        assert_eq!(U256::ZERO.wrapping_sub(U256::ONE), U256::MAX);
        assert_eq!(U256::ONE.shl(255).shr(255), U256::ONE);
        assert_eq!(U256::ONE.shl(256), U256::ZERO);
    }

    proptest! {
        // Small operands never overflow 128 bits, so u128 arithmetic is an exact reference.
        #[test]
        fn arithmetic_matches_u128(a in any::<u64>(), b in any::<u64>(), s in 0u32..64) {
            let (wa, wb) = (U256::from(a), U256::from(b));
            prop_assert_eq!(to_u128(wa.wrapping_add(wb)), a as u128 + b as u128);
            prop_assert_eq!(to_u128(wa.wrapping_mul(wb)), a as u128 * b as u128);
            prop_assert_eq!(to_u128(wa.shl(s)), (a as u128) << s);
            prop_assert_eq!(wa.shr(s).as_u64(), Some(a >> s));
            prop_assert_eq!(wa.cmp(&wb), a.cmp(&b));
            if a >= b {
                prop_assert_eq!(wa.wrapping_sub(wb).as_u64(), Some(a - b));
            }
            let big = from_u128((a as u128) << 64 | b as u128);
            prop_assert_eq!(U256::from_be_bytes(big.to_be_bytes()), big);
        }
    }
}
