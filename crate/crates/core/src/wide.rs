//! 192-bit unsigned integers for ciphertext coefficients.
//!
//! The ciphertext modulus is a power of two up to 2^192, so all arithmetic
//! is wrapping mod 2^192 followed by a mask down to `q_bits`. Three 64-bit
//! limbs, little-endian.

/// Unsigned 192-bit integer, limbs little-endian.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct U192(pub [u64; 3]);

impl U192 {
    pub const ZERO: U192 = U192([0, 0, 0]);
    pub const ONE: U192 = U192([1, 0, 0]);
    pub const MAX: U192 = U192([u64::MAX; 3]);

    #[inline]
    pub fn from_u64(v: u64) -> U192 {
        U192([v, 0, 0])
    }

    #[inline]
    pub fn from_u128(v: u128) -> U192 {
        U192([v as u64, (v >> 64) as u64, 0])
    }

    /// Low 128 bits.
    #[inline]
    pub fn as_u128(self) -> u128 {
        self.0[0] as u128 | (self.0[1] as u128) << 64
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == [0, 0, 0]
    }

    /// 2^bits for bits in 0..192.
    pub fn pow2(bits: u32) -> U192 {
        debug_assert!(bits < 192);
        let mut out = [0u64; 3];
        out[(bits / 64) as usize] = 1u64 << (bits % 64);
        U192(out)
    }

    /// Mask with bits ones: 2^bits - 1. `bits` may be 192 (full word).
    pub fn mask(bits: u32) -> U192 {
        debug_assert!(bits <= 192);
        if bits == 192 {
            return U192::MAX;
        }
        let mut out = [0u64; 3];
        for i in 0..3 {
            let lo = 64 * i as u32;
            if bits >= lo + 64 {
                out[i] = u64::MAX;
            } else if bits > lo {
                out[i] = (1u64 << (bits - lo)) - 1;
            }
        }
        U192(out)
    }

    #[inline]
    pub fn wrapping_add(self, rhs: U192) -> U192 {
        let (l0, c0) = self.0[0].overflowing_add(rhs.0[0]);
        let (l1a, c1a) = self.0[1].overflowing_add(rhs.0[1]);
        let (l1, c1b) = l1a.overflowing_add(c0 as u64);
        let l2 = self.0[2]
            .wrapping_add(rhs.0[2])
            .wrapping_add((c1a as u64) + (c1b as u64));
        U192([l0, l1, l2])
    }

    #[inline]
    pub fn wrapping_sub(self, rhs: U192) -> U192 {
        let (l0, b0) = self.0[0].overflowing_sub(rhs.0[0]);
        let (l1a, b1a) = self.0[1].overflowing_sub(rhs.0[1]);
        let (l1, b1b) = l1a.overflowing_sub(b0 as u64);
        let l2 = self.0[2]
            .wrapping_sub(rhs.0[2])
            .wrapping_sub((b1a as u64) + (b1b as u64));
        U192([l0, l1, l2])
    }

    #[inline]
    pub fn wrapping_neg(self) -> U192 {
        U192::ZERO.wrapping_sub(self)
    }

    /// Product mod 2^192.
    #[inline]
    pub fn wrapping_mul(self, rhs: U192) -> U192 {
        let a = &self.0;
        let b = &rhs.0;
        // limb 0 and carry into limb 1
        let p00 = (a[0] as u128) * (b[0] as u128);
        let l0 = p00 as u64;
        // limb 1
        let p01 = (a[0] as u128) * (b[1] as u128);
        let p10 = (a[1] as u128) * (b[0] as u128);
        let mid = (p00 >> 64)
            .wrapping_add(p01 as u64 as u128)
            .wrapping_add(p10 as u64 as u128);
        let l1 = mid as u64;
        // limb 2: everything that lands there, wrapping
        let l2 = ((mid >> 64) as u64)
            .wrapping_add((p01 >> 64) as u64)
            .wrapping_add((p10 >> 64) as u64)
            .wrapping_add((a[0] as u128 * b[2] as u128) as u64)
            .wrapping_add((a[1] as u128 * b[1] as u128) as u64)
            .wrapping_add((a[2] as u128 * b[0] as u128) as u64);
        U192([l0, l1, l2])
    }

    /// Sum, or MAX on overflow past 192 bits.
    pub fn saturating_add(self, rhs: U192) -> U192 {
        let sum = self.wrapping_add(rhs);
        if sum.lt(self) {
            U192::MAX
        } else {
            sum
        }
    }

    /// Product, or MAX if it does not fit in 192 bits.
    pub fn saturating_mul(self, rhs: U192) -> U192 {
        let a = &self.0;
        let b = &rhs.0;
        // limbs 3..5 of the full 384-bit product must be zero, including
        // carries propagating up from limb 2
        let mut acc = [0u128; 6];
        for i in 0..3 {
            for j in 0..3 {
                let p = (a[i] as u128) * (b[j] as u128);
                acc[i + j] += p as u64 as u128;
                if i + j + 1 < 6 {
                    acc[i + j + 1] += p >> 64;
                }
            }
        }
        let mut out = [0u64; 3];
        let mut carry: u128 = 0;
        for k in 0..6 {
            let v = acc[k] + carry;
            if k < 3 {
                out[k] = v as u64;
            } else if v as u64 != 0 {
                return U192::MAX;
            }
            carry = v >> 64;
        }
        U192(out)
    }

    pub fn shl(self, bits: u32) -> U192 {
        debug_assert!(bits < 192);
        let word = (bits / 64) as usize;
        let sh = bits % 64;
        let mut out = [0u64; 3];
        for i in word..3 {
            out[i] = self.0[i - word] << sh;
            if sh > 0 && i > word {
                out[i] |= self.0[i - word - 1] >> (64 - sh);
            }
        }
        U192(out)
    }

    pub fn shr(self, bits: u32) -> U192 {
        debug_assert!(bits < 192);
        let word = (bits / 64) as usize;
        let sh = bits % 64;
        let mut out = [0u64; 3];
        for i in 0..(3 - word) {
            out[i] = self.0[i + word] >> sh;
            if sh > 0 && i + word + 1 < 3 {
                out[i] |= self.0[i + word + 1] << (64 - sh);
            }
        }
        U192(out)
    }

    #[inline]
    pub fn bitand(self, rhs: U192) -> U192 {
        U192([
            self.0[0] & rhs.0[0],
            self.0[1] & rhs.0[1],
            self.0[2] & rhs.0[2],
        ])
    }

    pub fn cmp_u(self, rhs: U192) -> core::cmp::Ordering {
        for i in (0..3).rev() {
            match self.0[i].cmp(&rhs.0[i]) {
                core::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        core::cmp::Ordering::Equal
    }

    #[inline]
    pub fn lt(self, rhs: U192) -> bool {
        self.cmp_u(rhs) == core::cmp::Ordering::Less
    }

    /// Little-endian bytes, `width` of them (low bytes first).
    pub fn to_le_bytes(self, width: usize) -> Vec<u8> {
        debug_assert!(width <= 24);
        let mut all = [0u8; 24];
        for i in 0..3 {
            all[i * 8..(i + 1) * 8].copy_from_slice(&self.0[i].to_le_bytes());
        }
        all[..width].to_vec()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> U192 {
        debug_assert!(bytes.len() <= 24);
        let mut all = [0u8; 24];
        all[..bytes.len()].copy_from_slice(bytes);
        let mut limbs = [0u64; 3];
        for i in 0..3 {
            limbs[i] = u64::from_le_bytes(all[i * 8..(i + 1) * 8].try_into().unwrap());
        }
        U192(limbs)
    }
}

impl core::fmt::Debug for U192 {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "0x{:016x}{:016x}{:016x}",
            self.0[2], self.0[1], self.0[0]
        )
    }
}
