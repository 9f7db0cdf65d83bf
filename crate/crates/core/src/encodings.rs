//! Matrix-to-polynomial encodings.
//!
//! Two packings are implemented:
//! - window encoding: X (k_w x m_w) and W (m_w x n_w) are packed into one
//!   polynomial each so that their negacyclic product carries the matrix
//!   product X*W at known coefficient indices;
//! - row-wise encoding: each weight row becomes the low-n coefficients of a
//!   polynomial, so scalar-polynomial outer products accumulate X*W rows,
//!   which are then compressed into dense ciphertexts by negacyclic right
//!   shifts at stride n.

use crate::fixed_ring::{RingParams, RingTensor};
use crate::poly_ring::{Poly, PolyParams};
use crate::toy_he::{he_add, he_rshift, Ciphertext, HeError};
use crate::wide::U192;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("window k_w*m_w*n_w = {vol} exceeds polynomial degree {n}")]
    WindowTooLarge { vol: usize, n: usize },
    #[error("matrix is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("row width {n} exceeds polynomial degree {big_n}")]
    RowTooWide { n: usize, big_n: usize },
    #[error(transparent)]
    He(#[from] HeError),
}

/// Window dimensions: X tiles are k_w x m_w, W tiles are m_w x n_w.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowShape {
    pub k_w: usize,
    pub m_w: usize,
    pub n_w: usize,
}

impl WindowShape {
    pub fn volume(&self) -> usize {
        self.k_w * self.m_w * self.n_w
    }

    pub fn check(&self, n: usize) -> Result<(), EncodingError> {
        if self.volume() > n {
            return Err(EncodingError::WindowTooLarge {
                vol: self.volume(),
                n,
            });
        }
        Ok(())
    }
}

fn check_shape(
    t: &RingTensor,
    want_rows: usize,
    want_cols: usize,
) -> Result<(), EncodingError> {
    if t.rows != want_rows || t.cols != want_cols {
        return Err(EncodingError::ShapeMismatch {
            rows: t.rows,
            cols: t.cols,
            want_rows,
            want_cols,
        });
    }
    Ok(())
}

/// Left operand packing: x_hat[i*m_w*n_w + (m_w-1) - j] = X[i][j].
pub fn window_encode_left(
    x: &RingTensor,
    shape: WindowShape,
    params: PolyParams,
) -> Result<Poly, EncodingError> {
    shape.check(params.n)?;
    check_shape(x, shape.k_w, shape.m_w)?;
    let mut out = Poly::zero(params);
    for i in 0..shape.k_w {
        for j in 0..shape.m_w {
            out.coeffs[i * shape.m_w * shape.n_w + (shape.m_w - 1) - j] =
                U192::from_u64(x.get(i, j));
        }
    }
    Ok(out)
}

/// Right operand packing: w_hat[j*m_w + i] = W[i][j].
pub fn window_encode_right(
    w: &RingTensor,
    shape: WindowShape,
    params: PolyParams,
) -> Result<Poly, EncodingError> {
    shape.check(params.n)?;
    check_shape(w, shape.m_w, shape.n_w)?;
    let mut out = Poly::zero(params);
    for i in 0..shape.m_w {
        for j in 0..shape.n_w {
            out.coeffs[j * shape.m_w + i] = U192::from_u64(w.get(i, j));
        }
    }
    Ok(out)
}

/// Read the product matrix out of a product polynomial:
/// Z[i][j] = z_hat[i*m_w*n_w + j*m_w + (m_w-1)] mod 2^ell.
pub fn window_decode(
    z: &Poly,
    shape: WindowShape,
    ring: RingParams,
) -> Result<RingTensor, EncodingError> {
    shape.check(z.params.n)?;
    let mask = U192::mask(ring.ell);
    let mut out = RingTensor::zeros(ring, shape.k_w, shape.n_w);
    for i in 0..shape.k_w {
        for j in 0..shape.n_w {
            let idx = i * shape.m_w * shape.n_w + j * shape.m_w + (shape.m_w - 1);
            out.set(i, j, z.coeffs[idx].bitand(mask).0[0]);
        }
    }
    Ok(out)
}

/// One weight row into the low n coefficients, rest zero.
pub fn rowwise_encode(
    w: &RingTensor,
    row: usize,
    params: PolyParams,
) -> Result<Poly, EncodingError> {
    if w.cols > params.n {
        return Err(EncodingError::RowTooWide {
            n: w.cols,
            big_n: params.n,
        });
    }
    let mut out = Poly::zero(params);
    for j in 0..w.cols {
        out.coeffs[j] = U192::from_u64(w.get(row, j));
    }
    Ok(out)
}

/// How k length-n output rows (one ciphertext each) compress into dense
/// ciphertexts: floor(N/n) rows per ciphertext at shift stride n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackingPlan {
    pub rows_per_ct: usize,
    pub shift_stride: usize,
    pub ct_count: usize,
    pub k: usize,
    pub n: usize,
}

impl PackingPlan {
    pub fn new(k: usize, n: usize, big_n: usize) -> Result<PackingPlan, EncodingError> {
        if n > big_n {
            return Err(EncodingError::RowTooWide { n, big_n });
        }
        let rows_per_ct = big_n / n;
        Ok(PackingPlan {
            rows_per_ct,
            shift_stride: n,
            ct_count: k.div_ceil(rows_per_ct),
            k,
            n,
        })
    }
}

/// Compress k row ciphertexts (valid prefix of length n each) into
/// ct_count dense ciphertexts; missing tail rows are treated as zero.
pub fn pack_outputs(
    cts: &[Ciphertext],
    plan: &PackingPlan,
) -> Result<Vec<Ciphertext>, EncodingError> {
    debug_assert_eq!(cts.len(), plan.k);
    let mut out = Vec::with_capacity(plan.ct_count);
    for theta in 0..plan.ct_count {
        let base = theta * plan.rows_per_ct;
        let mut acc = None;
        for r in 0..plan.rows_per_ct {
            let Some(ct) = cts.get(base + r) else { break };
            let shifted = he_rshift(ct, r * plan.shift_stride)?;
            acc = Some(match acc {
                None => shifted,
                Some(prev) => he_add(&prev, &shifted)?,
            });
        }
        out.push(acc.expect("ct_count implies at least one row per output"));
    }
    Ok(out)
}

/// Inverse of pack_outputs on decrypted plaintexts:
/// Z[alpha][j] = pt[alpha / rows_per_ct][(alpha mod rows_per_ct)*n + j].
pub fn unpack_outputs(
    plaintexts: &[Poly],
    plan: &PackingPlan,
    ring: RingParams,
) -> RingTensor {
    let mask = U192::mask(ring.ell);
    let mut out = RingTensor::zeros(ring, plan.k, plan.n);
    for alpha in 0..plan.k {
        let pt = &plaintexts[alpha / plan.rows_per_ct];
        let base = (alpha % plan.rows_per_ct) * plan.shift_stride;
        for j in 0..plan.n {
            out.set(alpha, j, pt.coeffs[base + j].bitand(mask).0[0]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counters::OpCounters;
    use crate::fixed_ring::ring_matmul;
    use crate::poly_ring::negacyclic_mul;
    use crate::toy_he::{decrypt, encrypt, he_scalar_mul, keygen, trivial_zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn ring(ell: u32) -> RingParams {
        RingParams::new(ell, 0).unwrap()
    }

    fn random_tensor(
        p: RingParams,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> RingTensor {
        let data: Vec<u64> = (0..rows * cols).map(|_| rng.gen()).collect();
        RingTensor::from_residues(p, rows, cols, data).unwrap()
    }

    /// Plain negacyclic ring mod 2^ell for products without HE.
    fn plain_params(n: usize, ell: u32) -> PolyParams {
        PolyParams::new(n, ell, ell - 1).unwrap()
    }

    fn window_product_matches(shape: WindowShape, n: usize, ell: u32, seed: u64) {
        let p = plain_params(n, ell);
        let r = ring(ell);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = random_tensor(r, shape.k_w, shape.m_w, &mut rng);
        let w = random_tensor(r, shape.m_w, shape.n_w, &mut rng);
        let xh = window_encode_left(&x, shape, p).unwrap();
        let wh = window_encode_right(&w, shape, p).unwrap();
        let z = negacyclic_mul(&xh, &wh).unwrap();
        let got = window_decode(&z, shape, r).unwrap();
        let want = ring_matmul(&x, &w).unwrap();
        assert_eq!(got.data, want.data, "shape {shape:?}");
    }

    #[test]
    fn scalar_window_product() {
        let p = plain_params(4, 8);
        let r = ring(8);
        let shape = WindowShape { k_w: 1, m_w: 1, n_w: 1 };
        let x = RingTensor::from_residues(r, 1, 1, vec![7]).unwrap();
        let w = RingTensor::from_residues(r, 1, 1, vec![9]).unwrap();
        let xh = window_encode_left(&x, shape, p).unwrap();
        let wh = window_encode_right(&w, shape, p).unwrap();
        assert_eq!(xh.coeffs[0], U192::from_u64(7));
        assert_eq!(wh.coeffs[0], U192::from_u64(9));
        let z = negacyclic_mul(&xh, &wh).unwrap();
        assert_eq!(window_decode(&z, shape, r).unwrap().get(0, 0), 63);
    }

    #[test]
    fn zero_matrix_encodes_to_zero() {
        let p = plain_params(16, 5);
        let r = ring(5);
        let shape = WindowShape { k_w: 2, m_w: 2, n_w: 2 };
        let z = RingTensor::zeros(r, 2, 2);
        assert!(window_encode_left(&z, shape, p).unwrap().is_zero());
        assert!(window_encode_right(&z, shape, p).unwrap().is_zero());
    }

    #[test]
    fn fig3_regime_n16_ell5() {
        // N = 16, ell = 5, 2x2x2 windows
        for seed in 0..20 {
            window_product_matches(
                WindowShape { k_w: 2, m_w: 2, n_w: 2 },
                16,
                5,
                seed,
            );
        }
    }

    #[test]
    fn window_random_shapes() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..50 {
            let k_w = rng.gen_range(1..=4usize);
            let m_w = rng.gen_range(1..=4usize);
            let n_w = rng.gen_range(1..=4usize);
            let vol = k_w * m_w * n_w;
            let n = vol.next_power_of_two().max(2);
            let ell = rng.gen_range(4..=32u32);
            window_product_matches(WindowShape { k_w, m_w, n_w }, n, ell, rng.gen());
        }
    }

    #[test]
    fn window_exhaustive_2x2x2_mod16() {
        // all 2x2 X over Z_16 against a handful of fixed W
        let shape = WindowShape { k_w: 2, m_w: 2, n_w: 2 };
        let p = plain_params(16, 4);
        let r = ring(4);
        let ws = [
            [0u64, 0, 0, 0],
            [1, 0, 0, 1],
            [3, 7, 11, 15],
            [15, 15, 15, 15],
        ];
        for wdat in ws {
            let w = RingTensor::from_residues(r, 2, 2, wdat.to_vec()).unwrap();
            let wh = window_encode_right(&w, shape, p).unwrap();
            for code in 0u64..65536 {
                let xdat = vec![code & 15, (code >> 4) & 15, (code >> 8) & 15, (code >> 12) & 15];
                let x = RingTensor::from_residues(r, 2, 2, xdat).unwrap();
                let xh = window_encode_left(&x, shape, p).unwrap();
                let z = negacyclic_mul(&xh, &wh).unwrap();
                let got = window_decode(&z, shape, r).unwrap();
                let want = ring_matmul(&x, &w).unwrap();
                assert_eq!(got.data, want.data);
            }
        }
    }

    #[test]
    fn window_too_large_rejected() {
        let p = plain_params(4, 8);
        let shape = WindowShape { k_w: 2, m_w: 2, n_w: 2 };
        let x = RingTensor::zeros(ring(8), 2, 2);
        assert!(matches!(
            window_encode_left(&x, shape, p),
            Err(EncodingError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn rowwise_encode_pads_with_zeros() {
        let p = plain_params(8, 8);
        let r = ring(8);
        let w = RingTensor::from_residues(r, 1, 3, vec![1, 2, 3]).unwrap();
        let enc = rowwise_encode(&w, 0, p).unwrap();
        let expect: Vec<u64> = vec![1, 2, 3, 0, 0, 0, 0, 0];
        assert_eq!(
            enc.coeffs.iter().map(|c| c.0[0]).collect::<Vec<_>>(),
            expect
        );
        // dense case n = N
        let dense = random_dense(p, r);
        let enc2 = rowwise_encode(&dense, 0, p).unwrap();
        for j in 0..8 {
            assert_eq!(enc2.coeffs[j].0[0], dense.get(0, j));
        }
    }

    fn random_dense(p: PolyParams, r: RingParams) -> RingTensor {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        random_tensor(r, 1, p.n, &mut rng)
    }

    #[test]
    fn packing_plan_counts() {
        // BERT-base COP shape: 13 dense ciphertexts
        let plan = PackingPlan::new(128, 768, 8192).unwrap();
        assert_eq!(plan.rows_per_ct, 10);
        assert_eq!(plan.ct_count, 13);
        assert_eq!(plan.shift_stride, 768);
        let one = PackingPlan::new(4, 8, 8).unwrap();
        assert_eq!(one.rows_per_ct, 1);
        assert_eq!(one.ct_count, 4);
        assert!(PackingPlan::new(1, 16, 8).is_err());
    }

    #[test]
    fn pack_two_rows_into_one_ct() {
        // N=8, n=4: [a0..a3,0...] and [b0..b3,0...] pack as [a0..a3,b0..b3]
        let p = PolyParams::new(8, 128, 16).unwrap();
        let sk = keygen(p, 1);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = Poly::from_u64_coeffs(p, &[10, 11, 12, 13]);
        let b = Poly::from_u64_coeffs(p, &[20, 21, 22, 23]);
        let cts = vec![
            encrypt(&a, &sk, &mut rng).unwrap(),
            encrypt(&b, &sk, &mut rng).unwrap(),
        ];
        let plan = PackingPlan::new(2, 4, 8).unwrap();
        let packed = pack_outputs(&cts, &plan).unwrap();
        assert_eq!(packed.len(), 1);
        let pt = decrypt(&packed[0], &sk).unwrap();
        let got: Vec<u64> = pt.coeffs.iter().map(|c| c.0[0]).collect();
        assert_eq!(got, vec![10, 11, 12, 13, 20, 21, 22, 23]);
        // unpack inverts
        let r = ring(16);
        let z = unpack_outputs(&[pt], &plan, r);
        assert_eq!(z.data, vec![10, 11, 12, 13, 20, 21, 22, 23]);
    }

    #[test]
    fn pack_identity_when_one_row_per_ct() {
        let p = PolyParams::new(8, 128, 16).unwrap();
        let sk = keygen(p, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = Poly::from_u64_coeffs(p, &[1, 2, 3, 4, 5, 6, 7, 8]);
        let cts = vec![encrypt(&a, &sk, &mut rng).unwrap()];
        let plan = PackingPlan::new(1, 8, 8).unwrap();
        let packed = pack_outputs(&cts, &plan).unwrap();
        assert_eq!(packed.len(), 1);
        assert_eq!(packed[0], cts[0]);
    }

    #[test]
    fn pack_pads_missing_tail_rows() {
        // k=3 rows, 2 per ct: second output ct carries row 2 then zeros
        let p = PolyParams::new(8, 128, 16).unwrap();
        let sk = keygen(p, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let rows: Vec<Poly> = (0..3)
            .map(|i| Poly::from_u64_coeffs(p, &[i + 1, i + 1, i + 1, i + 1]))
            .collect();
        let cts: Vec<Ciphertext> = rows
            .iter()
            .map(|m| encrypt(m, &sk, &mut rng).unwrap())
            .collect();
        let plan = PackingPlan::new(3, 4, 8).unwrap();
        let packed = pack_outputs(&cts, &plan).unwrap();
        assert_eq!(packed.len(), 2);
        let pt1 = decrypt(&packed[1], &sk).unwrap();
        let got: Vec<u64> = pt1.coeffs.iter().map(|c| c.0[0]).collect();
        assert_eq!(got, vec![3, 3, 3, 3, 0, 0, 0, 0]);
        let pts = vec![decrypt(&packed[0], &sk).unwrap(), pt1];
        let z = unpack_outputs(&pts, &plan, ring(16));
        assert_eq!(z.data, vec![1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
    }

    #[test]
    fn rowwise_outer_product_path_end_to_end() {
        // full row-wise path: sum_beta x[alpha][beta] (x) Enc(w_beta),
        // packed and unpacked, equals X*W
        let (k, m, n, big_n, ell) = (5usize, 3usize, 4usize, 8usize, 16u32);
        let p = PolyParams::new(big_n, 128, ell).unwrap();
        let r = ring(ell);
        let sk = keygen(p, 11);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let counters = OpCounters::new();
        let x = random_tensor(r, k, m, &mut rng);
        let w = random_tensor(r, m, n, &mut rng);
        let row_cts: Vec<Ciphertext> = (0..m)
            .map(|beta| {
                encrypt(&rowwise_encode(&w, beta, p).unwrap(), &sk, &mut rng).unwrap()
            })
            .collect();
        let out_rows: Vec<Ciphertext> = (0..k)
            .map(|alpha| {
                let mut acc = trivial_zero(p, 0);
                for beta in 0..m {
                    let term = he_scalar_mul(x.get(alpha, beta), &row_cts[beta], &counters);
                    acc = he_add(&acc, &term).unwrap();
                }
                acc
            })
            .collect();
        let plan = PackingPlan::new(k, n, big_n).unwrap();
        let packed = pack_outputs(&out_rows, &plan).unwrap();
        assert_eq!(packed.len(), plan.ct_count);
        let pts: Vec<Poly> = packed.iter().map(|ct| decrypt(ct, &sk).unwrap()).collect();
        let z = unpack_outputs(&pts, &plan, r);
        let want = ring_matmul(&x, &w).unwrap();
        assert_eq!(z.data, want.data);
        // complexity counter: k*m scalar products of N coefficients each
        let snap = counters.snapshot();
        assert_eq!(snap.scalar_mults, (k * m) as u64);
        assert_eq!(snap.coeff_mults, (k * m * big_n) as u64);
    }

    #[test]
    fn packing_preserves_disjoint_support() {
        // plaintext oracle: shifted rows occupy disjoint coefficient ranges
        let p = PolyParams::new(8, 128, 16).unwrap();
        let plan = PackingPlan::new(2, 4, 8).unwrap();
        let rows = [
            Poly::from_u64_coeffs(p, &[1, 1, 1, 1]),
            Poly::from_u64_coeffs(p, &[2, 2, 2, 2]),
        ];
        let mut support = vec![false; 8];
        for (r, row) in rows.iter().enumerate() {
            let shifted = crate::poly_ring::monomial_shift(row, r * plan.shift_stride).unwrap();
            for (i, c) in shifted.coeffs.iter().enumerate() {
                if !c.is_zero() {
                    assert!(!support[i], "coefficient {i} written twice");
                    support[i] = true;
                }
            }
        }
    }
}
