//! Symmetric additive RLWE-style encryption with explicit noise tracking.
//!
//! Operation set: KeyGen, Enc, Dec, ciphertext addition, plaintext
//! addition/subtraction, plaintext-ciphertext polynomial multiplication,
//! scalar multiplication, and free negacyclic right shift.
//!
//! This is a correctness vehicle, NOT production-secure: parameters are not
//! chosen for IND-CPA hardness and there is no circuit privacy or noise
//! flooding. The noise bound is a conservative per-coefficient upper bound
//! on |b - a*s - delta*m|; any op sequence whose final bound stays below
//! delta/2 decrypts exactly.

use crate::counters::OpCounters;
use crate::poly_ring::{
    monomial_shift, negacyclic_mul, scalar_mul, Poly, PolyError, PolyParams,
};
use crate::wide::U192;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HeError {
    #[error("plaintext coefficient out of range (>= 2^t_bits)")]
    PlaintextOutOfRange,
    #[error("noise budget exceeded: bound {bound:?} >= delta/2 = {half_delta:?}")]
    NoiseBudgetExceeded { bound: U192, half_delta: U192 },
    #[error("ciphertext parameter mismatch")]
    ParamsMismatch,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("malformed ciphertext bytes: {0}")]
    Deserialize(String),
}

/// Ternary secret key, coefficients in {-1, 0, 1} embedded mod q.
#[derive(Debug, Clone)]
pub struct SecretKey {
    pub s: Poly,
}

/// RLWE pair (b, a) with b = a*s + delta*m + e, plus a tracked noise bound
/// and the fixed-point scale of the carried plaintext.
#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub b: Poly,
    pub a: Poly,
    pub noise_bound: U192,
    pub level_scale: u32,
}

impl Ciphertext {
    pub fn params(&self) -> PolyParams {
        self.b.params
    }

    fn half_delta(&self) -> U192 {
        U192::pow2(self.params().delta_bits() - 1)
    }

    pub fn budget_ok(&self) -> bool {
        self.noise_bound.lt(self.half_delta())
    }
}

pub fn keygen(params: PolyParams, rng_seed: u64) -> SecretKey {
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let q = params.q_mask();
    let coeffs = (0..params.n)
        .map(|_| match rng.gen_range(0u8..3) {
            0 => U192::ZERO,
            1 => U192::ONE,
            _ => U192::ONE.wrapping_neg().bitand(q),
        })
        .collect();
    SecretKey {
        s: Poly { params, coeffs },
    }
}

fn uniform_mod_q(params: PolyParams, rng: &mut impl RngCore) -> Poly {
    let mask = params.q_mask();
    let coeffs = (0..params.n)
        .map(|_| U192([rng.next_u64(), rng.next_u64(), rng.next_u64()]).bitand(mask))
        .collect();
    Poly { params, coeffs }
}

/// Magnitude bound of the fresh centered-binomial noise.
pub const FRESH_NOISE_BOUND: u64 = 8;

/// Centered binomial sample in [-8, 8]: popcounts of 8+8 random bits.
fn sample_noise(rng: &mut impl RngCore) -> i32 {
    let bits = rng.next_u32();
    (bits & 0xff).count_ones() as i32 - ((bits >> 8) & 0xff).count_ones() as i32
}

fn check_plaintext(m: &Poly) -> Result<(), HeError> {
    let t_mask = m.params.t_mask();
    if m.coeffs.iter().any(|&c| c != c.bitand(t_mask)) {
        return Err(HeError::PlaintextOutOfRange);
    }
    Ok(())
}

pub fn encrypt(
    m: &Poly,
    sk: &SecretKey,
    rng: &mut impl RngCore,
) -> Result<Ciphertext, HeError> {
    encrypt_scaled(m, 0, sk, rng)
}

pub fn encrypt_scaled(
    m: &Poly,
    level_scale: u32,
    sk: &SecretKey,
    rng: &mut impl RngCore,
) -> Result<Ciphertext, HeError> {
    check_plaintext(m)?;
    let params = m.params;
    let q = params.q_mask();
    let delta_bits = params.delta_bits();
    let a = uniform_mod_q(params, rng);
    let mut b = negacyclic_mul(&a, &sk.s)?;
    for (bc, &mc) in b.coeffs.iter_mut().zip(&m.coeffs) {
        let mut v = bc.wrapping_add(mc.shl(delta_bits));
        let e = sample_noise(rng);
        if e >= 0 {
            v = v.wrapping_add(U192::from_u64(e as u64));
        } else {
            v = v.wrapping_sub(U192::from_u64((-e) as u64));
        }
        *bc = v.bitand(q);
    }
    Ok(Ciphertext {
        b,
        a,
        noise_bound: U192::from_u64(FRESH_NOISE_BOUND),
        level_scale,
    })
}

/// Decrypt with the noise-budget precondition enforced.
pub fn decrypt(ct: &Ciphertext, sk: &SecretKey) -> Result<Poly, HeError> {
    if !ct.budget_ok() {
        return Err(HeError::NoiseBudgetExceeded {
            bound: ct.noise_bound,
            half_delta: ct.half_delta(),
        });
    }
    Ok(decrypt_unchecked(ct, sk))
}

/// Decrypt ignoring the tracked budget (used by noise-soundness tests).
pub fn decrypt_unchecked(ct: &Ciphertext, sk: &SecretKey) -> Poly {
    let params = ct.params();
    let q = params.q_mask();
    let t = params.t_mask();
    let delta_bits = params.delta_bits();
    let half_delta = U192::pow2(delta_bits - 1);
    let a_s = negacyclic_mul(&ct.a, &sk.s).expect("params match");
    let coeffs = ct
        .b
        .coeffs
        .iter()
        .zip(&a_s.coeffs)
        .map(|(&bc, &asc)| {
            // centered rounding: floor((v + delta/2) / delta) mod t
            let v = bc.wrapping_sub(asc).bitand(q);
            v.wrapping_add(half_delta)
                .bitand(q)
                .shr(delta_bits)
                .bitand(t)
        })
        .collect();
    Poly { params, coeffs }
}

/// Actual per-coefficient noise |b - a*s - delta*m| (centered mod q), given
/// the expected plaintext. Instrumentation for verifying the tracked bound.
pub fn measure_noise(ct: &Ciphertext, sk: &SecretKey, m: &Poly) -> U192 {
    let params = ct.params();
    let q = params.q_mask();
    let half_q = U192::pow2(params.q_bits - 1);
    let delta_bits = params.delta_bits();
    let a_s = negacyclic_mul(&ct.a, &sk.s).expect("params match");
    let mut worst = U192::ZERO;
    for i in 0..params.n {
        let v = ct.b.coeffs[i]
            .wrapping_sub(a_s.coeffs[i])
            .wrapping_sub(m.coeffs[i].shl(delta_bits))
            .bitand(q);
        let centered = if v.lt(half_q) {
            v
        } else {
            v.wrapping_neg().bitand(q)
        };
        if worst.lt(centered) {
            worst = centered;
        }
    }
    worst
}

fn check_match(a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    if a.params() != b.params() {
        return Err(HeError::ParamsMismatch);
    }
    Ok(())
}

pub fn he_add(ct1: &Ciphertext, ct2: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_match(ct1, ct2)?;
    Ok(Ciphertext {
        b: ct1.b.add(&ct2.b)?,
        a: ct1.a.add(&ct2.a)?,
        noise_bound: ct1.noise_bound.saturating_add(ct2.noise_bound),
        level_scale: ct1.level_scale,
    })
}

/// b += delta * r; noise unchanged.
pub fn he_add_plain(ct: &Ciphertext, r: &Poly) -> Result<Ciphertext, HeError> {
    check_plaintext(r)?;
    let q = ct.params().q_mask();
    let delta_bits = ct.params().delta_bits();
    let mut b = ct.b.clone();
    for (bc, &rc) in b.coeffs.iter_mut().zip(&r.coeffs) {
        *bc = bc.wrapping_add(rc.shl(delta_bits)).bitand(q);
    }
    Ok(Ciphertext {
        b,
        a: ct.a.clone(),
        noise_bound: ct.noise_bound,
        level_scale: ct.level_scale,
    })
}

/// b -= delta * r; noise unchanged.
pub fn he_sub_plain(ct: &Ciphertext, r: &Poly) -> Result<Ciphertext, HeError> {
    check_plaintext(r)?;
    let q = ct.params().q_mask();
    let delta_bits = ct.params().delta_bits();
    let mut b = ct.b.clone();
    for (bc, &rc) in b.coeffs.iter_mut().zip(&r.coeffs) {
        *bc = bc.wrapping_sub(rc.shl(delta_bits)).bitand(q);
    }
    Ok(Ciphertext {
        b,
        a: ct.a.clone(),
        noise_bound: ct.noise_bound,
        level_scale: ct.level_scale,
    })
}

/// Plaintext-ciphertext polynomial multiplication: decrypts to p * m in the
/// negacyclic plaintext ring. Worst-case noise growth N * max|p|.
pub fn he_poly_mul(
    p: &Poly,
    ct: &Ciphertext,
    counters: &OpCounters,
) -> Result<Ciphertext, HeError> {
    check_plaintext(p)?;
    let params = ct.params();
    // lift each plaintext coefficient to its centered representative so
    // negative values contribute small noise
    let lifted = Poly {
        params,
        coeffs: p
            .coeffs
            .iter()
            .map(|&c| params.lift_signed(c.as_u128() as u64))
            .collect(),
    };
    let max_mag = p
        .coeffs
        .iter()
        .map(|&c| params.signed_magnitude(c.as_u128() as u64))
        .max()
        .unwrap_or(0);
    counters.record_poly_mul(params.n);
    let factor =
        U192::from_u64(params.n as u64).saturating_mul(U192::from_u128(max_mag));
    Ok(Ciphertext {
        b: negacyclic_mul(&ct.b, &lifted)?,
        a: negacyclic_mul(&ct.a, &lifted)?,
        noise_bound: ct.noise_bound.saturating_mul(factor),
        level_scale: ct.level_scale,
    })
}

/// Scalar-polynomial multiplication: decrypts to c * m mod t. Noise scales
/// by the signed magnitude min(c, t - c).
pub fn he_scalar_mul(c: u64, ct: &Ciphertext, counters: &OpCounters) -> Ciphertext {
    let params = ct.params();
    debug_assert!(params.t_bits >= 64 || c < (1u64 << params.t_bits));
    let lifted = params.lift_signed(c);
    counters.record_scalar_mul(params.n);
    Ciphertext {
        b: scalar_mul(lifted, &ct.b),
        a: scalar_mul(lifted, &ct.a),
        noise_bound: ct
            .noise_bound
            .saturating_mul(U192::from_u128(params.signed_magnitude(c))),
        level_scale: ct.level_scale,
    }
}

/// Negacyclic right shift of the plaintext by `steps`: free, noise unchanged
/// (pure coefficient rearrangement with sign flips).
pub fn he_rshift(ct: &Ciphertext, steps: usize) -> Result<Ciphertext, HeError> {
    Ok(Ciphertext {
        b: monomial_shift(&ct.b, steps)?,
        a: monomial_shift(&ct.a, steps)?,
        noise_bound: ct.noise_bound,
        level_scale: ct.level_scale,
    })
}

/// Ciphertext of zero with zero noise (identity for he_add).
pub fn trivial_zero(params: PolyParams, level_scale: u32) -> Ciphertext {
    Ciphertext {
        b: Poly::zero(params),
        a: Poly::zero(params),
        noise_bound: U192::ZERO,
        level_scale,
    }
}

// --- serialization -------------------------------------------------------
//
// Header: n u32 | q_bits u16 | t_bits u16 | level_scale u32 | noise_bound
// 24 bytes LE, then the b and a coefficient vectors, each coefficient as
// ceil(q_bits / 8) little-endian bytes.

const CT_HEADER_LEN: usize = 4 + 2 + 2 + 4 + 24;

pub fn coeff_width(q_bits: u32) -> usize {
    q_bits.div_ceil(8) as usize
}

pub fn serialized_len(params: PolyParams) -> usize {
    CT_HEADER_LEN + 2 * params.n * coeff_width(params.q_bits)
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.params();
        let width = coeff_width(params.q_bits);
        let mut out = Vec::with_capacity(serialized_len(params));
        out.extend_from_slice(&(params.n as u32).to_le_bytes());
        out.extend_from_slice(&(params.q_bits as u16).to_le_bytes());
        out.extend_from_slice(&(params.t_bits as u16).to_le_bytes());
        out.extend_from_slice(&self.level_scale.to_le_bytes());
        out.extend_from_slice(&self.noise_bound.to_le_bytes(24));
        for poly in [&self.b, &self.a] {
            for &c in &poly.coeffs {
                out.extend_from_slice(&c.to_le_bytes(width));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Ciphertext, HeError> {
        if bytes.len() < CT_HEADER_LEN {
            return Err(HeError::Deserialize("truncated header".into()));
        }
        let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let q_bits = u16::from_le_bytes(bytes[4..6].try_into().unwrap()) as u32;
        let t_bits = u16::from_le_bytes(bytes[6..8].try_into().unwrap()) as u32;
        let level_scale = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let noise_bound = U192::from_le_bytes(&bytes[12..36]);
        let params = PolyParams::new(n, q_bits, t_bits)
            .map_err(|e| HeError::Deserialize(e.to_string()))?;
        let width = coeff_width(q_bits);
        if bytes.len() != CT_HEADER_LEN + 2 * n * width {
            return Err(HeError::Deserialize(format!(
                "expected {} bytes, got {}",
                CT_HEADER_LEN + 2 * n * width,
                bytes.len()
            )));
        }
        let mask = params.q_mask();
        let read_poly = |offset: usize| -> Poly {
            let coeffs = (0..n)
                .map(|i| {
                    let at = offset + i * width;
                    U192::from_le_bytes(&bytes[at..at + width]).bitand(mask)
                })
                .collect();
            Poly { params, coeffs }
        };
        let b = read_poly(CT_HEADER_LEN);
        let a = read_poly(CT_HEADER_LEN + n * width);
        Ok(Ciphertext {
            b,
            a,
            noise_bound,
            level_scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn params(n: usize, q_bits: u32, t_bits: u32) -> PolyParams {
        PolyParams::new(n, q_bits, t_bits).unwrap()
    }

    fn random_plaintext(p: PolyParams, rng: &mut impl Rng) -> Poly {
        let t = p.t_mask();
        Poly {
            params: p,
            coeffs: (0..p.n)
                .map(|_| U192([rng.gen(), rng.gen(), rng.gen()]).bitand(t))
                .collect(),
        }
    }

    #[test]
    fn keygen_deterministic_and_ternary() {
        let p = params(16, 128, 32);
        let k1 = keygen(p, 7);
        let k2 = keygen(p, 7);
        assert_eq!(k1.s, k2.s);
        let q = p.q_mask();
        let minus_one = U192::ONE.wrapping_neg().bitand(q);
        for &c in &k1.s.coeffs {
            assert!(c == U192::ZERO || c == U192::ONE || c == minus_one);
        }
        let k3 = keygen(p, 8);
        assert_ne!(k1.s, k3.s);
    }

    #[test]
    fn encrypt_decrypt_round_trip() {
        let p = params(32, 128, 32);
        let sk = keygen(p, 1);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let m = random_plaintext(p, &mut rng);
            let ct = encrypt(&m, &sk, &mut rng).unwrap();
            assert_eq!(ct.noise_bound, U192::from_u64(8));
            assert_eq!(decrypt(&ct, &sk).unwrap(), m);
        }
    }

    #[test]
    fn encrypt_zero_and_trivial() {
        let p = params(8, 128, 16);
        let sk = keygen(p, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let zero = Poly::zero(p);
        let ct = encrypt(&zero, &sk, &mut rng).unwrap();
        assert!(decrypt(&ct, &sk).unwrap().is_zero());
        assert!(decrypt(&trivial_zero(p, 0), &sk).unwrap().is_zero());
    }

    #[test]
    fn plaintext_out_of_range_rejected() {
        let p = params(4, 128, 8);
        let sk = keygen(p, 5);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let bad = Poly::from_u64_coeffs(p, &[256]);
        assert_eq!(encrypt(&bad, &sk, &mut rng).unwrap_err(), HeError::PlaintextOutOfRange);
    }

    #[test]
    fn homomorphic_add() {
        let p = params(16, 128, 32);
        let sk = keygen(p, 10);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let t = p.t_mask();
        for _ in 0..100 {
            let m1 = random_plaintext(p, &mut rng);
            let m2 = random_plaintext(p, &mut rng);
            let c1 = encrypt(&m1, &sk, &mut rng).unwrap();
            let c2 = encrypt(&m2, &sk, &mut rng).unwrap();
            let sum = he_add(&c1, &c2).unwrap();
            assert_eq!(sum.noise_bound, U192::from_u64(16));
            let expect: Vec<U192> = m1
                .coeffs
                .iter()
                .zip(&m2.coeffs)
                .map(|(&x, &y)| x.wrapping_add(y).bitand(t))
                .collect();
            assert_eq!(decrypt(&sum, &sk).unwrap().coeffs, expect);
        }
    }

    #[test]
    fn add_and_sub_plain() {
        let p = params(8, 128, 16);
        let sk = keygen(p, 20);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let m = random_plaintext(p, &mut rng);
        let r = random_plaintext(p, &mut rng);
        let ct = encrypt(&m, &sk, &mut rng).unwrap();
        // subtract zero: identity
        assert_eq!(he_sub_plain(&ct, &Poly::zero(p)).unwrap(), ct);
        let sub = he_sub_plain(&ct, &r).unwrap();
        assert_eq!(sub.noise_bound, ct.noise_bound);
        let t = p.t_mask();
        let expect: Vec<U192> = m
            .coeffs
            .iter()
            .zip(&r.coeffs)
            .map(|(&x, &y)| x.wrapping_sub(y).bitand(t))
            .collect();
        assert_eq!(decrypt(&sub, &sk).unwrap().coeffs, expect);
        // subtract then add restores
        assert_eq!(decrypt(&he_add_plain(&sub, &r).unwrap(), &sk).unwrap(), m);
    }

    #[test]
    fn poly_mul_matches_plaintext_ring() {
        let p = params(4, 128, 16);
        let sk = keygen(p, 30);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let counters = OpCounters::new();
        for _ in 0..50 {
            let m = random_plaintext(p, &mut rng);
            let pl = random_plaintext(p, &mut rng);
            let ct = encrypt(&m, &sk, &mut rng).unwrap();
            let prod = he_poly_mul(&pl, &ct, &counters).unwrap();
            assert!(ct.noise_bound.cmp_u(prod.noise_bound) != std::cmp::Ordering::Greater
                || pl.is_zero());
            let expect_coeffs: Vec<U192> = {
                let pp = PolyParams::new(p.n, p.t_bits + 1, p.t_bits).unwrap();
                // plaintext-ring product mod (X^N+1, t)
                let a = Poly { params: pp, coeffs: m.coeffs.clone() };
                let b = Poly { params: pp, coeffs: pl.coeffs.clone() };
                crate::poly_ring::negacyclic_mul_schoolbook(&a, &b)
                    .coeffs
                    .iter()
                    .map(|&c| c.bitand(p.t_mask()))
                    .collect()
            };
            assert_eq!(decrypt(&prod, &sk).unwrap().coeffs, expect_coeffs);
        }
        // p = 1 leaves the plaintext unchanged
        let m = random_plaintext(p, &mut rng);
        let ct = encrypt(&m, &sk, &mut rng).unwrap();
        let one = Poly::constant(p, U192::ONE);
        assert_eq!(decrypt(&he_poly_mul(&one, &ct, &counters).unwrap(), &sk).unwrap(), m);
    }

    #[test]
    fn scalar_mul_matches_plaintext() {
        let p = params(8, 128, 16);
        let sk = keygen(p, 40);
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let counters = OpCounters::new();
        let t = p.t_mask();
        for _ in 0..100 {
            let m = random_plaintext(p, &mut rng);
            let c: u64 = rng.gen::<u64>() & 0xffff;
            let ct = encrypt(&m, &sk, &mut rng).unwrap();
            let prod = he_scalar_mul(c, &ct, &counters);
            let expect: Vec<U192> = m
                .coeffs
                .iter()
                .map(|&x| x.wrapping_mul(U192::from_u64(c)).bitand(t))
                .collect();
            assert_eq!(decrypt(&prod, &sk).unwrap().coeffs, expect);
        }
        let m = random_plaintext(p, &mut rng);
        let ct = encrypt(&m, &sk, &mut rng).unwrap();
        assert_eq!(decrypt(&he_scalar_mul(1, &ct, &counters), &sk).unwrap(), m);
    }

    #[test]
    fn scalar_mul_negative_scalar_small_noise() {
        // c = t - 1 is "-1": noise multiplier must be 1, not t - 1
        let p = params(8, 128, 16);
        let sk = keygen(p, 42);
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let counters = OpCounters::new();
        let m = random_plaintext(p, &mut rng);
        let ct = encrypt(&m, &sk, &mut rng).unwrap();
        let neg = he_scalar_mul((1u64 << 16) - 1, &ct, &counters);
        assert_eq!(neg.noise_bound, ct.noise_bound);
        let t = p.t_mask();
        let expect: Vec<U192> = m
            .coeffs
            .iter()
            .map(|&x| x.wrapping_neg().bitand(t))
            .collect();
        assert_eq!(decrypt(&neg, &sk).unwrap().coeffs, expect);
        assert!(measure_noise(&neg, &sk, &Poly { params: p, coeffs: expect })
            .cmp_u(neg.noise_bound) != std::cmp::Ordering::Greater);
    }

    #[test]
    fn rshift_is_free_and_matches_monomial_shift() {
        let p = params(8, 128, 16);
        let sk = keygen(p, 50);
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let m = random_plaintext(p, &mut rng);
        let ct = encrypt(&m, &sk, &mut rng).unwrap();
        assert_eq!(he_rshift(&ct, 0).unwrap(), ct);
        let t = p.t_mask();
        for s in [1usize, 3, 7] {
            let shifted = he_rshift(&ct, s).unwrap();
            assert_eq!(shifted.noise_bound, ct.noise_bound);
            let expect: Vec<U192> = monomial_shift(&m, s)
                .unwrap()
                .coeffs
                .iter()
                .map(|&c| c.bitand(t))
                .collect();
            assert_eq!(decrypt(&shifted, &sk).unwrap().coeffs, expect);
        }
        // composing shifts
        let s12 = he_rshift(&he_rshift(&ct, 3).unwrap(), 4).unwrap();
        assert_eq!(s12, he_rshift(&ct, 7).unwrap());
    }

    #[test]
    fn budget_enforced() {
        let p = params(4, 64, 32);
        let sk = keygen(p, 60);
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let m = random_plaintext(p, &mut rng);
        let mut ct = encrypt(&m, &sk, &mut rng).unwrap();
        ct.noise_bound = U192::pow2(31); // delta/2 = 2^31
        assert!(matches!(
            decrypt(&ct, &sk),
            Err(HeError::NoiseBudgetExceeded { .. })
        ));
    }

    #[test]
    fn serialization_round_trip() {
        for (q_bits, t_bits) in [(128u32, 32u32), (192, 64), (100, 17)] {
            let p = params(16, q_bits, t_bits);
            let sk = keygen(p, 70);
            let mut rng = ChaCha12Rng::seed_from_u64(71);
            let m = random_plaintext(p, &mut rng);
            let ct = encrypt_scaled(&m, 12, &sk, &mut rng).unwrap();
            let bytes = ct.to_bytes();
            assert_eq!(bytes.len(), serialized_len(p));
            let back = Ciphertext::from_bytes(&bytes).unwrap();
            assert_eq!(back, ct);
            assert_eq!(back.level_scale, 12);
            assert!(Ciphertext::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }
}
