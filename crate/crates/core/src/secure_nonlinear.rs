//! Secure non-linear layers over additive shares: piecewise-polynomial
//! GELU and exp, softmax, and the fused truncation-upcast that moves a
//! value from a small ring into a larger one while rescaling.
//!
//! All protocols consume dealer-backed functionalities from
//! [`crate::mpc_core::dealer`]; both parties run the same code on their own
//! shares and every routine is batched over whole tensors.

use crate::approx::{ApproxError, FixedPiecewise, PiecewisePoly};
use crate::fixed_ring::{RingParams, RingTensor};
use crate::mpc_core::PartyCtx;
use crate::mpc_core::{BoolShare, ShareTensor};
use crate::mpc_core::Party;

/// A piecewise polynomial with ring-encoded coefficients and breakpoints,
/// ready for secure evaluation. Both parties hold the same public copy.
#[derive(Debug, Clone)]
pub struct SecurePiecewise {
    pub fixed: FixedPiecewise,
}

impl SecurePiecewise {
    pub fn new(p: &PiecewisePoly, ring: RingParams) -> Result<SecurePiecewise, ApproxError> {
        Ok(SecurePiecewise {
            fixed: FixedPiecewise::from_real(p, ring)?,
        })
    }

    pub fn ring(&self) -> RingParams {
        self.fixed.ring
    }
}

/// Horner evaluation of a public polynomial on a shared tensor: one
/// F_mul with fused truncation per degree, public coefficient additions
/// are local. Coefficients are ring residues, lowest order first.
fn horner_shared(ctx: &mut PartyCtx, x: &ShareTensor, coeffs: &[u64]) -> ShareTensor {
    let params = x.params();
    if coeffs.is_empty() {
        return ShareTensor::zero(ctx.party, params, x.rows(), x.cols());
    }
    let top = RingTensor::from_residues(
        params,
        x.rows(),
        x.cols(),
        vec![coeffs[coeffs.len() - 1] & params.mask(); x.len()],
    )
    .unwrap();
    let mut acc = ShareTensor::of_public(ctx.party, &top);
    for &c in coeffs.iter().rev().skip(1) {
        acc = ctx.f_mul(&acc, x, Some(params.scale));
        acc = acc.add_public_residue(c);
    }
    acc
}

/// Select a shared value with a shared bit: b2a conversion followed by one
/// multiply (no truncation: the bit carries scale 0).
fn mux(ctx: &mut PartyCtx, bit: &BoolShare, v: &ShareTensor) -> ShareTensor {
    let b = ctx.f_b2a(bit, v.params());
    ctx.f_mul(&b, v, None)
}

/// Secure GELU over the three-piece template {0 | quadratic | identity}.
///
/// Per element: 4 F_mul (2 Horner with fused truncation + 2 mux),
/// 2 F_less, 2 F_B2A. Reconstructs bit-exactly to
/// [`FixedPiecewise::eval`] on the same inputs.
pub fn secure_gelu(ctx: &mut PartyCtx, x: &ShareTensor, p: &SecurePiecewise) -> ShareTensor {
    let fp = &p.fixed;
    assert_eq!(fp.pieces.len(), 3, "gelu template has three pieces");
    assert_eq!(fp.ring, x.params());
    let (t1, t2) = (fp.breakpoints[0], fp.breakpoints[1]);
    let mask = fp.ring.mask();

    // piece selectors: z0 = 1{x <= T1}, z2 = 1{x > T2}, middle by exclusion
    let z0 = ctx.f_less_const(x, t1.wrapping_add(1) & mask);
    let z2 = ctx.f_greater_const(x, t2);
    let mut z1 = z0.xor_local(&z2);
    if ctx.party == Party::Client {
        z1 = z1.flip(); // z1 = NOT (z0 XOR z2); the selectors are disjoint
    }

    let quad = horner_shared(ctx, x, &fp.pieces[1]);
    let mid = mux(ctx, &z1, &quad);
    let right = mux(ctx, &z2, x); // identity piece contributes x itself
    mid.add(&right)
}

/// Secure exp over the two-piece template {0 | cubic}.
///
/// Per element: 4 F_mul (3 Horner + 1 mux), 1 F_less, 1 F_B2A.
pub fn secure_exp(ctx: &mut PartyCtx, x: &ShareTensor, p: &SecurePiecewise) -> ShareTensor {
    let fp = &p.fixed;
    assert_eq!(fp.pieces.len(), 2, "exp template has two pieces");
    assert_eq!(fp.ring, x.params());

    // keep = NOT 1{x < T}: the cubic piece owns its left boundary
    let z = ctx.f_less_const(x, fp.breakpoints[0]);
    let keep = if ctx.party == Party::Client { z.flip() } else { z };
    let cubic = horner_shared(ctx, x, &fp.pieces[1]);
    mux(ctx, &keep, &cubic)
}

fn column(x: &ShareTensor, j: usize) -> ShareTensor {
    let params = x.params();
    let data: Vec<u64> = (0..x.rows()).map(|r| x.inner.get(r, j)).collect();
    ShareTensor {
        party: x.party,
        inner: RingTensor::from_residues(params, x.rows(), 1, data).unwrap(),
    }
}

/// Row-wise running maximum via a comparison tournament: for each later
/// column, m += 1{m < x_j} * (x_j - m). One F_less + F_B2A + F_mul per
/// column beyond the first, batched over rows.
fn row_max(ctx: &mut PartyCtx, x: &ShareTensor) -> ShareTensor {
    let mut m = column(x, 0);
    for j in 1..x.cols() {
        let xj = column(x, j);
        let b = ctx.f_less(&m, &xj);
        let diff = xj.sub(&m);
        m = m.add(&mux(ctx, &b, &diff));
    }
    m
}

/// Secure softmax along rows: subtract the row maximum, apply the secure
/// exp template, sum locally, and normalize with F_recip + F_mul.
pub fn secure_softmax(
    ctx: &mut PartyCtx,
    x: &ShareTensor,
    exp_template: &SecurePiecewise,
) -> ShareTensor {
    let params = x.params();
    let (rows, cols) = (x.rows(), x.cols());
    let m = row_max(ctx, x);

    // broadcast-subtract the row max (local)
    let mut shifted = RingTensor::zeros(params, rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            shifted.set(
                r,
                c,
                x.inner.get(r, c).wrapping_sub(m.inner.get(r, 0)) & params.mask(),
            );
        }
    }
    let shifted = ShareTensor {
        party: ctx.party,
        inner: shifted,
    };

    let e = secure_exp(ctx, &shifted, exp_template);

    // local row sums: sum of shares is the share of the sum
    let mut sums = RingTensor::zeros(params, rows, 1);
    for r in 0..rows {
        let mut acc = 0u64;
        for c in 0..cols {
            acc = acc.wrapping_add(e.inner.get(r, c)) & params.mask();
        }
        sums.set(r, 0, acc);
    }
    let sums = ShareTensor {
        party: ctx.party,
        inner: sums,
    };

    let recip = ctx.f_recip(&sums);

    // broadcast the reciprocal across the row and multiply with truncation
    let mut recip_full = RingTensor::zeros(params, rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            recip_full.set(r, c, recip.inner.get(r, 0));
        }
    }
    let recip_full = ShareTensor {
        party: ctx.party,
        inner: recip_full,
    };
    ctx.f_mul(&e, &recip_full, Some(params.scale))
}

/// Fused truncation-upcast for unsigned residues: given shares of
/// x in Z_{2^ell}, produce shares of floor(x / 2^s) embedded in the larger
/// ring Z_{2^ell'} with at most a +1 error.
///
/// Each party locally right-shifts its own share; the shift's lost carry is
/// corrected with the shared wrap bit w = 1{x_c + x_s >= 2^ell}, converted
/// arithmetically at width ell' - ell + s (all that survives the final
/// scaling by 2^{ell-s} mod 2^ell').
pub fn trunc_upcast(
    ctx: &mut PartyCtx,
    x: &ShareTensor,
    s: u32,
    out_ring: RingParams,
) -> ShareTensor {
    let in_ring = x.params();
    let ell = in_ring.ell;
    let ell_p = out_ring.ell;
    assert!(ell_p >= ell && s < ell);
    debug_assert!(s > 0 || ell_p > ell, "s = 0 only makes sense as an upcast");

    let w = ctx.f_wrap(x);
    let narrow_bits = (ell_p - ell + s).clamp(2, 64);
    let narrow = RingParams::new(narrow_bits, 0).unwrap();
    let w_arith = ctx.f_b2a(&w, narrow);

    // Shifting the shares separately drops the carry of the low parts
    // (a deficit of 0 or 1); the client's unconditional +1 moves the error
    // to the {0, +1} side.
    // (at s = 0 there are no low parts, so the shift is already exact)
    let carry_fix = if ctx.party == Party::Client && s > 0 { 1u64 } else { 0 };
    let shift = ell - s;
    let data: Vec<u64> = x
        .inner
        .data
        .iter()
        .zip(&w_arith.inner.data)
        .map(|(&xb, &wb)| {
            let local = xb >> s; // logical shift of the share
            let correction = if shift >= 64 { 0 } else { wb.wrapping_shl(shift) };
            local
                .wrapping_sub(correction)
                .wrapping_add(carry_fix)
                & out_ring.mask()
        })
        .collect();
    ShareTensor {
        party: ctx.party,
        inner: RingTensor::from_residues(out_ring, x.rows(), x.cols(), data).unwrap(),
    }
}

/// Signed variant: the client re-biases by +2^{ell-1} before the unsigned
/// protocol and removes the scaled bias 2^{ell-1-s} afterwards, so the
/// result is the signed floor(x / 2^s) embedded in the larger ring
/// (again with at most a +1 error).
pub fn signed_trunc_upcast(
    ctx: &mut PartyCtx,
    x: &ShareTensor,
    s: u32,
    out_ring: RingParams,
) -> ShareTensor {
    let ell = x.params().ell;
    let bias = 1u64 << (ell - 1);
    let biased = x.add_public_residue(bias);
    let y = trunc_upcast(ctx, &biased, s, out_ring);
    let unbias = (1u64 << (ell - 1 - s)) & out_ring.mask();
    y.add_public_residue(unbias.wrapping_neg() & out_ring.mask())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{template_exp, template_gelu, Histogram};
    use crate::mpc_core::{Dealer, FuncKind, FuncStats};
    use crate::mpc_core::{reconstruct, share};
    use crate::mpc_core::LoggedChannel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn run_pair<A, B, FC, FS>(dealer_seed: u64, fc: FC, fs: FS) -> (A, B, FuncStats)
    where
        A: Send + 'static,
        B: Send + 'static,
        FC: FnOnce(&mut PartyCtx) -> A + Send + 'static,
        FS: FnOnce(&mut PartyCtx) -> B + Send + 'static,
    {
        let dealer = Dealer::new(dealer_seed);
        let (cc, sc) = LoggedChannel::inproc_pair();
        let mut ctx_c = PartyCtx::new(Party::Client, cc, dealer.clone(), 100);
        let mut ctx_s = PartyCtx::new(Party::Server, sc, dealer.clone(), 200);
        let hs = std::thread::spawn(move || fs(&mut ctx_s));
        let a = fc(&mut ctx_c);
        let b = hs.join().unwrap();
        (a, b, dealer.stats())
    }

    fn gelu_template(ring: RingParams) -> SecurePiecewise {
        SecurePiecewise::new(&template_gelu(&Histogram::synthetic_gelu()), ring).unwrap()
    }

    fn exp_template(ring: RingParams) -> SecurePiecewise {
        SecurePiecewise::new(&template_exp(&Histogram::synthetic_exp()), ring).unwrap()
    }

    #[test]
    fn secure_gelu_matches_fixed_oracle() {
        let ring = RingParams::new(32, 12).unwrap();
        let p = gelu_template(ring);
        let fixed = p.fixed.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 512;
        let xs: Vec<u64> = (0..n)
            .map(|i| {
                let v = -6.0 + 12.0 * (i as f64) / n as f64;
                ring.encode(v).unwrap()
            })
            .collect();
        let xt = RingTensor::from_residues(ring, 1, n, xs.clone()).unwrap();
        let (xc, xsrv) = share(&xt, &mut rng);
        let pc = p.clone();
        let ps = p.clone();
        let (oc, os, stats) = run_pair(
            3,
            move |ctx| secure_gelu(ctx, &xc, &pc),
            move |ctx| secure_gelu(ctx, &xsrv, &ps),
        );
        let got = reconstruct(&oc, &os);
        for i in 0..n {
            let (want, overflow) = fixed.eval(xs[i]);
            assert!(!overflow);
            let diff = got.data[i].wrapping_sub(want) & ring.mask();
            let ulp = diff.min(ring.mask() - diff + 1);
            assert!(ulp <= 2, "index {i}: got {} want {want}", got.data[i]);
        }
        // pinned per-call functionality counts
        assert_eq!(stats.calls_of(FuncKind::Mul), 4);
        assert_eq!(stats.calls_of(FuncKind::Less), 2);
        assert_eq!(stats.calls_of(FuncKind::B2A), 2);
        assert_eq!(stats.elements[&FuncKind::Mul], 4 * n as u64);
    }

    #[test]
    fn secure_gelu_boundary_values_match_template_convention() {
        let ring = RingParams::new(32, 12).unwrap();
        let p = gelu_template(ring);
        let fixed = p.fixed.clone();
        // exactly the encoded breakpoints and their neighbors
        let mut xs = Vec::new();
        for &bp in &fixed.breakpoints {
            xs.push(bp.wrapping_sub(1) & ring.mask());
            xs.push(bp);
            xs.push(bp.wrapping_add(1) & ring.mask());
        }
        let n = xs.len();
        let xt = RingTensor::from_residues(ring, 1, n, xs.clone()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let (xc, xsrv) = share(&xt, &mut rng);
        let pc = p.clone();
        let ps = p.clone();
        let (oc, os, _) = run_pair(
            4,
            move |ctx| secure_gelu(ctx, &xc, &pc),
            move |ctx| secure_gelu(ctx, &xsrv, &ps),
        );
        let got = reconstruct(&oc, &os);
        for i in 0..n {
            let (want, _) = fixed.eval(xs[i]);
            assert_eq!(got.data[i], want, "boundary input {}", xs[i]);
        }
    }

    #[test]
    fn secure_exp_matches_fixed_oracle() {
        let ring = RingParams::new(32, 12).unwrap();
        let p = exp_template(ring);
        let fixed = p.fixed.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 512;
        let xs: Vec<u64> = (0..n)
            .map(|i| ring.encode(-10.0 + 10.0 * (i as f64) / n as f64).unwrap())
            .collect();
        let xt = RingTensor::from_residues(ring, 1, n, xs.clone()).unwrap();
        let (xc, xsrv) = share(&xt, &mut rng);
        let pc = p.clone();
        let ps = p.clone();
        let (oc, os, stats) = run_pair(
            5,
            move |ctx| secure_exp(ctx, &xc, &pc),
            move |ctx| secure_exp(ctx, &xsrv, &ps),
        );
        let got = reconstruct(&oc, &os);
        for i in 0..n {
            let (want, overflow) = fixed.eval(xs[i]);
            assert!(!overflow);
            let diff = got.data[i].wrapping_sub(want) & ring.mask();
            let ulp = diff.min(ring.mask() - diff + 1);
            assert!(ulp <= 2, "index {i}");
        }
        assert_eq!(stats.calls_of(FuncKind::Mul), 4);
        assert_eq!(stats.calls_of(FuncKind::Less), 1);
        assert_eq!(stats.calls_of(FuncKind::B2A), 1);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let ring = RingParams::new(32, 12).unwrap();
        let p = exp_template(ring);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let (rows, cols) = (4, 8);
        let mut vals = RingTensor::zeros(ring, rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = -4.0 + 8.0 * ((r * cols + c * 7 % 13) as f64) / 32.0;
                vals.set(r, c, ring.encode(v).unwrap());
            }
        }
        let (xc, xs) = share(&vals, &mut rng);
        let pc = p.clone();
        let ps = p.clone();
        let (oc, os, _) = run_pair(
            6,
            move |ctx| secure_softmax(ctx, &xc, &pc),
            move |ctx| secure_softmax(ctx, &xs, &ps),
        );
        let got = reconstruct(&oc, &os);
        let tol = 2f64.powi(-(ring.scale as i32) + 3);
        for r in 0..rows {
            let mut sum = 0.0;
            for c in 0..cols {
                let v = ring.decode(got.get(r, c));
                assert!((-tol..=1.0 + tol).contains(&v), "entry ({r},{c}) = {v}");
                sum += v;
            }
            assert!((sum - 1.0).abs() <= tol, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn softmax_tracks_real_softmax() {
        let ring = RingParams::new(32, 12).unwrap();
        let p = exp_template(ring);
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let (rows, cols) = (2, 6);
        let reals = [
            [0.5, -1.0, 2.0, 0.0, -3.0, 1.0],
            [-0.2, -0.4, 0.3, 1.5, -2.5, 0.9],
        ];
        let mut vals = RingTensor::zeros(ring, rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                vals.set(r, c, ring.encode(reals[r][c]).unwrap());
            }
        }
        let (xc, xs) = share(&vals, &mut rng);
        let pc = p.clone();
        let ps = p.clone();
        let (oc, os, _) = run_pair(
            7,
            move |ctx| secure_softmax(ctx, &xc, &pc),
            move |ctx| secure_softmax(ctx, &xs, &ps),
        );
        let got = reconstruct(&oc, &os);
        for r in 0..rows {
            let m = reals[r].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = reals[r].iter().map(|&v| (v - m).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for c in 0..cols {
                let want = exps[c] / denom;
                let gotv = ring.decode(got.get(r, c));
                assert!(
                    (gotv - want).abs() <= 0.03,
                    "({r},{c}): got {gotv} want {want}"
                );
            }
        }
    }

    #[test]
    fn trunc_upcast_exhaustive_small_ring() {
        // every value and every share split of Z_256, s in {1,3,5}
        let in_ring = RingParams::new(8, 0).unwrap();
        let out_ring = RingParams::new(16, 0).unwrap();
        for s in [1u32, 3, 5] {
            let mut xs_c = Vec::new();
            let mut xs_s = Vec::new();
            let mut expect = Vec::new();
            for x in 0u64..256 {
                for xc in (0u64..256).step_by(4) {
                    xs_c.push(xc);
                    xs_s.push(x.wrapping_sub(xc) & 0xff);
                    expect.push(x >> s);
                }
            }
            let n = xs_c.len();
            let cshare = ShareTensor {
                party: Party::Client,
                inner: RingTensor::from_residues(in_ring, 1, n, xs_c).unwrap(),
            };
            let sshare = ShareTensor {
                party: Party::Server,
                inner: RingTensor::from_residues(in_ring, 1, n, xs_s).unwrap(),
            };
            let (oc, os, _) = run_pair(
                40 + s as u64,
                move |ctx| trunc_upcast(ctx, &cshare, s, out_ring),
                move |ctx| trunc_upcast(ctx, &sshare, s, out_ring),
            );
            let got = reconstruct(&oc, &os);
            for i in 0..n {
                let g = got.data[i];
                assert!(
                    g == expect[i] || g == (expect[i] + 1) & out_ring.mask(),
                    "s={s} i={i}: got {g} want {} or +1",
                    expect[i]
                );
            }
        }
    }

    #[test]
    fn signed_trunc_upcast_recovers_signed_quotient() {
        let in_ring = RingParams::new(16, 8).unwrap();
        let out_ring = RingParams::new(32, 4).unwrap();
        let s = 4u32;
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        let reals: Vec<f64> = (0..200).map(|i| -100.0 + i as f64).collect();
        let data: Vec<u64> = reals.iter().map(|&v| in_ring.encode(v).unwrap()).collect();
        let xt = RingTensor::from_residues(in_ring, 1, data.len(), data.clone()).unwrap();
        let (xc, xs) = share(&xt, &mut rng);
        let (oc, os, _) = run_pair(
            60,
            move |ctx| signed_trunc_upcast(ctx, &xc, s, out_ring),
            move |ctx| signed_trunc_upcast(ctx, &xs, s, out_ring),
        );
        let got = reconstruct(&oc, &os);
        for i in 0..data.len() {
            let want = in_ring.to_signed(data[i]) >> s; // exact signed floor
            let g = out_ring.to_signed(got.data[i]);
            assert!(
                g == want || g == want + 1,
                "i={i}: got {g} want {want} or +1"
            );
        }
    }

    #[test]
    fn trunc_upcast_cost_is_wrap_plus_b2a() {
        let in_ring = RingParams::new(16, 0).unwrap();
        let out_ring = RingParams::new(32, 0).unwrap();
        let xt = RingTensor::from_residues(in_ring, 1, 10, vec![1000; 10]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(70);
        let (xc, xs) = share(&xt, &mut rng);
        let (_, _, stats) = run_pair(
            71,
            move |ctx| trunc_upcast(ctx, &xc, 4, out_ring),
            move |ctx| trunc_upcast(ctx, &xs, 4, out_ring),
        );
        assert_eq!(stats.calls_of(FuncKind::Wrap), 1);
        assert_eq!(stats.calls_of(FuncKind::B2A), 1);
        assert_eq!(stats.calls_of(FuncKind::Mul), 0);
        assert_eq!(stats.elements[&FuncKind::Wrap], 10);
    }
}
