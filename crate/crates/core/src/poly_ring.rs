//! Arithmetic in A_{N,q} = Z_q[X]/(X^N + 1) with q a power of two up to 2^192.
//!
//! A power-of-two q rules out NTT, so multiplication is schoolbook O(N^2)
//! with an optional Karatsuba path above N = 512 (feature `karatsuba`,
//! oracle-checked against schoolbook).

use crate::wide::U192;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("polynomial parameter mismatch")]
    ParamsMismatch,
    #[error("invalid parameters: n={n}, q_bits={q_bits}, t_bits={t_bits}")]
    BadParams { n: usize, q_bits: u32, t_bits: u32 },
    #[error("shift of {steps} steps out of range for degree {n}")]
    ShiftOutOfRange { steps: usize, n: usize },
}

/// Degree, ciphertext-modulus width and plaintext-modulus width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyParams {
    pub n: usize,
    pub q_bits: u32,
    pub t_bits: u32,
}

impl PolyParams {
    pub fn new(n: usize, q_bits: u32, t_bits: u32) -> Result<PolyParams, PolyError> {
        if !n.is_power_of_two() || q_bits > 192 || t_bits >= q_bits || t_bits == 0 {
            return Err(PolyError::BadParams { n, q_bits, t_bits });
        }
        Ok(PolyParams { n, q_bits, t_bits })
    }

    #[inline]
    pub fn q_mask(&self) -> U192 {
        U192::mask(self.q_bits)
    }

    /// Delta = q / t, the plaintext embedding gap.
    #[inline]
    pub fn delta_bits(&self) -> u32 {
        self.q_bits - self.t_bits
    }

    #[inline]
    pub fn delta(&self) -> U192 {
        U192::pow2(self.delta_bits())
    }

    #[inline]
    pub fn t_mask(&self) -> U192 {
        U192::mask(self.t_bits)
    }

    /// Centered lift of a plaintext residue c < t into Z_q, so that residues
    /// above t/2 become small negative values mod q.
    pub fn lift_signed(&self, c: u64) -> U192 {
        let t_half = if self.t_bits >= 64 {
            1u128 << 63
        } else {
            1u128 << (self.t_bits - 1)
        };
        if (c as u128) < t_half || self.t_bits > 64 {
            U192::from_u64(c)
        } else {
            // q - (t - c)
            let t = U192::pow2(self.t_bits.min(191));
            U192::from_u64(c)
                .wrapping_sub(t)
                .bitand(self.q_mask())
        }
    }

    /// Signed magnitude of a plaintext residue: min(c, t - c).
    pub fn signed_magnitude(&self, c: u64) -> u128 {
        if self.t_bits > 64 {
            return c as u128;
        }
        let t = 1u128 << self.t_bits;
        (c as u128).min(t - c as u128)
    }
}

/// Dense polynomial with N coefficients mod q.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    pub params: PolyParams,
    pub coeffs: Vec<U192>,
}

impl Poly {
    pub fn zero(params: PolyParams) -> Poly {
        Poly {
            params,
            coeffs: vec![U192::ZERO; params.n],
        }
    }

    pub fn constant(params: PolyParams, c: U192) -> Poly {
        let mut p = Poly::zero(params);
        p.coeffs[0] = c.bitand(params.q_mask());
        p
    }

    pub fn from_u64_coeffs(params: PolyParams, coeffs: &[u64]) -> Poly {
        debug_assert!(coeffs.len() <= params.n);
        let mut p = Poly::zero(params);
        for (i, &c) in coeffs.iter().enumerate() {
            p.coeffs[i] = U192::from_u64(c).bitand(params.q_mask());
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    fn check_params(&self, rhs: &Poly) -> Result<(), PolyError> {
        if self.params != rhs.params {
            return Err(PolyError::ParamsMismatch);
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Poly) -> Result<Poly, PolyError> {
        self.check_params(rhs)?;
        let mask = self.params.q_mask();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(&a, &b)| a.wrapping_add(b).bitand(mask))
            .collect();
        Ok(Poly {
            params: self.params,
            coeffs,
        })
    }

    pub fn sub(&self, rhs: &Poly) -> Result<Poly, PolyError> {
        self.check_params(rhs)?;
        let mask = self.params.q_mask();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(&a, &b)| a.wrapping_sub(b).bitand(mask))
            .collect();
        Ok(Poly {
            params: self.params,
            coeffs,
        })
    }

    pub fn neg(&self) -> Poly {
        let mask = self.params.q_mask();
        let coeffs = self
            .coeffs
            .iter()
            .map(|&a| a.wrapping_neg().bitand(mask))
            .collect();
        Poly {
            params: self.params,
            coeffs,
        }
    }
}

/// Every coefficient multiplied by c mod q.
pub fn scalar_mul(c: U192, a: &Poly) -> Poly {
    let mask = a.params.q_mask();
    let coeffs = a
        .coeffs
        .iter()
        .map(|&x| x.wrapping_mul(c).bitand(mask))
        .collect();
    Poly {
        params: a.params,
        coeffs,
    }
}

/// a * X^steps mod (X^N + 1): coefficients wrapping past N-1 are negated.
pub fn monomial_shift(a: &Poly, steps: usize) -> Result<Poly, PolyError> {
    let n = a.params.n;
    if steps >= n {
        return Err(PolyError::ShiftOutOfRange { steps, n });
    }
    let mask = a.params.q_mask();
    let mut out = Poly::zero(a.params);
    for j in 0..n {
        let target = j + steps;
        if target < n {
            out.coeffs[target] = a.coeffs[j];
        } else {
            out.coeffs[target - n] = a.coeffs[j].wrapping_neg().bitand(mask);
        }
    }
    Ok(out)
}

/// c = a * b mod (X^N + 1, q).
pub fn negacyclic_mul(a: &Poly, b: &Poly) -> Result<Poly, PolyError> {
    a.check_params(b)?;
    #[cfg(feature = "karatsuba")]
    if a.params.n > 512 {
        return Ok(negacyclic_mul_karatsuba(a, b));
    }
    Ok(negacyclic_mul_schoolbook(a, b))
}

/// Quadratic reference multiplication with sign flip on wraparound.
pub fn negacyclic_mul_schoolbook(a: &Poly, b: &Poly) -> Poly {
    let n = a.params.n;
    let mask = a.params.q_mask();
    let mut acc = vec![U192::ZERO; n];
    for i in 0..n {
        let ai = a.coeffs[i];
        if ai.is_zero() {
            continue;
        }
        for j in 0..n {
            let p = ai.wrapping_mul(b.coeffs[j]);
            let k = i + j;
            if k < n {
                acc[k] = acc[k].wrapping_add(p);
            } else {
                acc[k - n] = acc[k - n].wrapping_sub(p);
            }
        }
    }
    for c in &mut acc {
        *c = c.bitand(mask);
    }
    Poly {
        params: a.params,
        coeffs: acc,
    }
}

/// Karatsuba over the integer coefficients followed by the negacyclic fold.
pub fn negacyclic_mul_karatsuba(a: &Poly, b: &Poly) -> Poly {
    let n = a.params.n;
    let mask = a.params.q_mask();
    let full = karatsuba_full(&a.coeffs, &b.coeffs);
    let mut out = vec![U192::ZERO; n];
    for k in 0..n {
        let mut c = full[k];
        if k + n < full.len() {
            c = c.wrapping_sub(full[k + n]);
        }
        out[k] = c.bitand(mask);
    }
    Poly {
        params: a.params,
        coeffs: out,
    }
}

const KARATSUBA_BASE: usize = 64;

/// Full product of two equal-length coefficient slices, length 2n-1,
/// wrapping mod 2^192.
fn karatsuba_full(a: &[U192], b: &[U192]) -> Vec<U192> {
    let n = a.len();
    if n <= KARATSUBA_BASE {
        let mut out = vec![U192::ZERO; 2 * n - 1];
        for i in 0..n {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..n {
                out[i + j] = out[i + j].wrapping_add(a[i].wrapping_mul(b[j]));
            }
        }
        return out;
    }
    let h = n / 2;
    let (a0, a1) = a.split_at(h);
    let (b0, b1) = b.split_at(h);
    let z0 = karatsuba_full(a0, b0);
    let z2 = karatsuba_full(a1, b1);
    let asum: Vec<U192> = a0.iter().zip(a1).map(|(&x, &y)| x.wrapping_add(y)).collect();
    let bsum: Vec<U192> = b0.iter().zip(b1).map(|(&x, &y)| x.wrapping_add(y)).collect();
    let mut z1 = karatsuba_full(&asum, &bsum);
    for i in 0..z1.len() {
        z1[i] = z1[i].wrapping_sub(z0[i]).wrapping_sub(z2[i]);
    }
    let mut out = vec![U192::ZERO; 2 * n - 1];
    for (i, &c) in z0.iter().enumerate() {
        out[i] = out[i].wrapping_add(c);
    }
    for (i, &c) in z1.iter().enumerate() {
        out[i + h] = out[i + h].wrapping_add(c);
    }
    for (i, &c) in z2.iter().enumerate() {
        out[i + 2 * h] = out[i + 2 * h].wrapping_add(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, q_bits: u32, t_bits: u32) -> PolyParams {
        PolyParams::new(n, q_bits, t_bits).unwrap()
    }

    fn random_poly(p: PolyParams, rng: &mut ChaCha8Rng) -> Poly {
        let coeffs = (0..p.n)
            .map(|_| {
                U192([rng.gen(), rng.gen(), rng.gen()]).bitand(p.q_mask())
            })
            .collect();
        Poly { params: p, coeffs }
    }

    fn to_big(v: U192) -> BigUint {
        ((BigUint::from(v.0[2]) << 64u32) + v.0[1] << 64u32) + v.0[0]
    }

    /// Independent oracle: integer convolution, negacyclic fold, mod q.
    fn oracle_mul(a: &Poly, b: &Poly) -> Vec<U192> {
        let n = a.params.n;
        let q = BigUint::from(1u8) << a.params.q_bits;
        let mut conv = vec![BigUint::from(0u8); 2 * n];
        for i in 0..n {
            for j in 0..n {
                conv[i + j] += to_big(a.coeffs[i]) * to_big(b.coeffs[j]);
            }
        }
        (0..n)
            .map(|k| {
                let folded = ((&conv[k] % &q) + &q - (&conv[k + n] % &q)) % &q;
                let mut limbs = folded.iter_u64_digits().collect::<Vec<_>>();
                limbs.resize(3, 0);
                U192([limbs[0], limbs[1], limbs[2]])
            })
            .collect()
    }

    #[test]
    fn identity_element() {
        let p = params(8, 128, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_poly(p, &mut rng);
        let one = Poly::constant(p, U192::ONE);
        assert_eq!(negacyclic_mul(&a, &one).unwrap(), a);
    }

    #[test]
    fn one_plus_x_squared() {
        // (1 + X)^2 = 1 + 2X + X^2 = 2X mod (X^2 + 1)
        let p = params(2, 8, 4);
        let a = Poly::from_u64_coeffs(p, &[1, 1]);
        let c = negacyclic_mul(&a, &a).unwrap();
        assert_eq!(c.coeffs, vec![U192::ZERO, U192::from_u64(2)]);
    }

    #[test]
    fn matches_oracle_n8() {
        let p = params(8, 128, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_poly(p, &mut rng);
            let b = random_poly(p, &mut rng);
            assert_eq!(negacyclic_mul(&a, &b).unwrap().coeffs, oracle_mul(&a, &b));
        }
    }

    #[test]
    fn matches_oracle_q192() {
        let p = params(8, 192, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_poly(p, &mut rng);
            let b = random_poly(p, &mut rng);
            assert_eq!(negacyclic_mul(&a, &b).unwrap().coeffs, oracle_mul(&a, &b));
        }
    }

    #[test]
    fn karatsuba_matches_schoolbook() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [64usize, 128, 1024] {
            let p = params(n, 192, 64);
            let a = random_poly(p, &mut rng);
            let b = random_poly(p, &mut rng);
            assert_eq!(
                negacyclic_mul_karatsuba(&a, &b).coeffs,
                negacyclic_mul_schoolbook(&a, &b).coeffs
            );
        }
    }

    #[test]
    fn scalar_mul_basics() {
        let p = params(2, 8, 4);
        let a = Poly::from_u64_coeffs(p, &[1, 2]);
        assert!(scalar_mul(U192::ZERO, &a).is_zero());
        assert_eq!(scalar_mul(U192::ONE, &a), a);
        assert_eq!(
            scalar_mul(U192::from_u64(3), &a).coeffs,
            vec![U192::from_u64(3), U192::from_u64(6)]
        );
    }

    #[test]
    fn monomial_shift_wraps_with_negation() {
        let p = params(4, 16, 8);
        let a = Poly::from_u64_coeffs(p, &[1, 2, 3, 4]);
        assert_eq!(monomial_shift(&a, 0).unwrap(), a);
        let s = monomial_shift(&a, 1).unwrap();
        let q_minus_4 = U192::from_u64(4).wrapping_neg().bitand(p.q_mask());
        assert_eq!(
            s.coeffs,
            vec![q_minus_4, U192::from_u64(1), U192::from_u64(2), U192::from_u64(3)]
        );
        assert!(monomial_shift(&a, 4).is_err());
    }

    #[test]
    fn monomial_shift_equals_mul_by_monomial() {
        let p = params(16, 64, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_poly(p, &mut rng);
        for s in [0usize, 1, 7, 15] {
            let mut xs = Poly::zero(p);
            xs.coeffs[s] = U192::ONE;
            assert_eq!(
                monomial_shift(&a, s).unwrap(),
                negacyclic_mul(&a, &xs).unwrap()
            );
        }
    }

    #[test]
    fn shift_composition_negates() {
        // shifting by s then N-s multiplies by X^N = -1
        let p = params(8, 32, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_poly(p, &mut rng);
        for s in 1..8usize {
            let roundabout =
                monomial_shift(&monomial_shift(&a, s).unwrap(), 8 - s).unwrap();
            assert_eq!(roundabout, a.neg());
        }
    }

    #[test]
    fn ring_axioms_random_samples() {
        let p = params(16, 64, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = random_poly(p, &mut rng);
            let b = random_poly(p, &mut rng);
            let c = random_poly(p, &mut rng);
            let ab = negacyclic_mul(&a, &b).unwrap();
            let ba = negacyclic_mul(&b, &a).unwrap();
            assert_eq!(ab, ba, "commutativity");
            let ab_c = negacyclic_mul(&ab, &c).unwrap();
            let a_bc = negacyclic_mul(&a, &negacyclic_mul(&b, &c).unwrap()).unwrap();
            assert_eq!(ab_c, a_bc, "associativity");
            let a_bplusc = negacyclic_mul(&a, &b.add(&c).unwrap()).unwrap();
            let ab_plus_ac = ab.add(&negacyclic_mul(&a, &c).unwrap()).unwrap();
            assert_eq!(a_bplusc, ab_plus_ac, "distributivity");
        }
    }

    #[test]
    fn lift_signed_centers_large_residues() {
        let p = params(4, 128, 8);
        assert_eq!(p.lift_signed(3), U192::from_u64(3));
        // 255 = -1 mod 2^8, lifts to q - 1
        assert_eq!(p.lift_signed(255), U192::ONE.wrapping_neg().bitand(p.q_mask()));
        assert_eq!(p.signed_magnitude(255), 1);
        assert_eq!(p.signed_magnitude(3), 3);
    }
}
