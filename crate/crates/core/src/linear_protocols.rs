//! The two HE-based secure matrix-multiplication protocols.
//!
//! Contract for both: Z = X * W over Z_{2^ell}, X is k x m and held as
//! additive shares, W is m x n and known to the server. Output stays
//! additively shared; the result scale is s_X + s_W (caller truncates).
//!
//! - SIP ("server-side inner product", the baseline): the client owns the
//!   HE key, encrypts window-encoded tiles of its input share, the server
//!   adds its own share, multiplies by window-encoded weight tiles,
//!   masks, and returns output ciphertexts. Two online rounds.
//! - COP ("client-side outer product"): the server owns the HE key and
//!   pre-sends encrypted weight rows in a setup phase. Online, the client
//!   accumulates scalar-polynomial outer products against its plaintext
//!   share, compresses rows by negacyclic shifts at stride n, masks, and
//!   sends. One online round, zero input ciphertexts.

use crate::counters::OpCounters;
use crate::encodings::{
    pack_outputs, rowwise_encode, unpack_outputs, window_decode, window_encode_left,
    window_encode_right, EncodingError, PackingPlan, WindowShape,
};
use crate::fixed_ring::{ring_matmul, RingError, RingParams, RingTensor};
use crate::mpc_core::{ChannelError, Party, PartyCtx, Phase, ShareTensor};
use crate::poly_ring::{Poly, PolyError, PolyParams};
use crate::toy_he::{
    decrypt, encrypt, he_add, he_add_plain, he_poly_mul, he_scalar_mul, he_sub_plain,
    trivial_zero, Ciphertext, HeError, SecretKey,
};
use crate::wide::U192;
use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("weight store file malformed: {0}")]
    StoreFormat(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row width n={n} exceeds polynomial degree N={big_n}")]
    RowTooWide { n: usize, big_n: usize },
}

/// Message tags on the two-party wire.
pub const TAG_SETUP_WEIGHTS: u16 = 1;
pub const TAG_COP_PACKED: u16 = 2;
pub const TAG_SIP_INPUT: u16 = 3;
pub const TAG_SIP_OUTPUT: u16 = 4;

/// Dimensions and ring/HE parameters of one linear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearLayerSpec {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub ring: RingParams,
    pub poly: PolyParams,
}

impl LinearLayerSpec {
    /// q_bits is picked from ell so uniform masks leave decryption noise
    /// headroom: 128 for ell <= 32, 192 above.
    pub fn new(
        k: usize,
        m: usize,
        n: usize,
        ell: u32,
        scale: u32,
        big_n: usize,
    ) -> Result<LinearLayerSpec, LinearError> {
        let ring = RingParams::new(ell, scale)?;
        let q_bits = if ell <= 32 { 128 } else { 192 };
        let poly = PolyParams::new(big_n, q_bits, ell)?;
        Ok(LinearLayerSpec { k, m, n, ring, poly })
    }

    /// Ring of the protocol output (scale s_X + s_W, capped).
    pub fn out_ring(&self, w_scale: u32) -> RingParams {
        let s = (self.ring.scale + w_scale).min(self.ring.ell - 2);
        RingParams::new(self.ring.ell, s).unwrap()
    }

    pub fn packing_plan(&self) -> Result<PackingPlan, LinearError> {
        PackingPlan::new(self.k, self.n, self.poly.n).map_err(LinearError::Encoding)
    }
}

// --- ciphertext batch framing --------------------------------------------

fn serialize_cts(cts: &[Ciphertext]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(cts.len() as u32).to_le_bytes());
    for ct in cts {
        let bytes = ct.to_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

fn deserialize_cts(bytes: &[u8]) -> Result<Vec<Ciphertext>, LinearError> {
    let take = |at: usize| -> Result<u32, LinearError> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| LinearError::StoreFormat("truncated ciphertext batch".into()))
    };
    let count = take(0)? as usize;
    let mut cts = Vec::with_capacity(count);
    let mut at = 4;
    for _ in 0..count {
        let len = take(at)? as usize;
        at += 4;
        let chunk = bytes
            .get(at..at + len)
            .ok_or_else(|| LinearError::StoreFormat("truncated ciphertext".into()))?;
        cts.push(Ciphertext::from_bytes(chunk)?);
        at += len;
    }
    Ok(cts)
}

// --- weight store ----------------------------------------------------------

const STORE_MAGIC: &[u8; 8] = b"NIMBWSTR";
const STORE_VERSION: u16 = 1;

/// The m encrypted weight rows a COP client holds after setup.
#[derive(Debug, Clone)]
pub struct WeightStore {
    pub spec: LinearLayerSpec,
    pub w_scale: u32,
    pub cts: Vec<Ciphertext>,
}

impl WeightStore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.spec.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.ring.ell as u16).to_le_bytes());
        out.extend_from_slice(&(self.spec.ring.scale as u16).to_le_bytes());
        out.extend_from_slice(&(self.spec.poly.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.poly.q_bits as u16).to_le_bytes());
        out.extend_from_slice(&(self.w_scale as u16).to_le_bytes());
        out.extend_from_slice(&serialize_cts(&self.cts));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WeightStore, LinearError> {
        if bytes.len() < 32 || &bytes[0..8] != STORE_MAGIC {
            return Err(LinearError::StoreFormat("bad magic".into()));
        }
        let version = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
        if version != STORE_VERSION {
            return Err(LinearError::StoreFormat(format!("bad version {version}")));
        }
        let r_u32 =
            |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let r_u16 =
            |at: usize| u16::from_le_bytes(bytes[at..at + 2].try_into().unwrap()) as u32;
        let k = r_u32(10);
        let m = r_u32(14);
        let n = r_u32(18);
        let ell = r_u16(22);
        let scale = r_u16(24);
        let big_n = r_u32(26);
        let q_bits = r_u16(30);
        let w_scale = r_u16(32);
        let ring = RingParams::new(ell, scale)?;
        let poly = PolyParams::new(big_n, q_bits, ell)?;
        let spec = LinearLayerSpec { k, m, n, ring, poly };
        let cts = deserialize_cts(&bytes[34..])?;
        if cts.len() != m {
            return Err(LinearError::StoreFormat(format!(
                "expected {m} ciphertexts, found {}",
                cts.len()
            )));
        }
        Ok(WeightStore { spec, w_scale, cts })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), LinearError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<WeightStore, LinearError> {
        WeightStore::from_bytes(&std::fs::read(path)?)
    }

    /// Background load; the handle yields an immutable store.
    pub fn load_async(
        path: std::path::PathBuf,
    ) -> std::thread::JoinHandle<Result<WeightStore, LinearError>> {
        std::thread::spawn(move || WeightStore::load(&path))
    }
}

/// Setup phase: encrypt each weight row under the server's key.
pub fn cop_setup(
    w: &RingTensor,
    sk: &SecretKey,
    spec: &LinearLayerSpec,
    rng: &mut impl RngCore,
) -> Result<WeightStore, LinearError> {
    if spec.n > spec.poly.n {
        return Err(LinearError::RowTooWide {
            n: spec.n,
            big_n: spec.poly.n,
        });
    }
    debug_assert_eq!((w.rows, w.cols), (spec.m, spec.n));
    let mut cts = Vec::with_capacity(spec.m);
    for beta in 0..spec.m {
        let row = rowwise_encode(w, beta, spec.poly)?;
        cts.push(encrypt(&row, sk, rng)?);
    }
    Ok(WeightStore {
        spec: *spec,
        w_scale: w.params.scale,
        cts,
    })
}

/// Server side of the setup: build the store and send it (setup phase).
pub fn cop_setup_server(
    ctx: &mut PartyCtx,
    w: &RingTensor,
    sk: &SecretKey,
    spec: &LinearLayerSpec,
) -> Result<WeightStore, LinearError> {
    let mut rng = ctx.rng.clone();
    let store = cop_setup(w, sk, spec, &mut rng)?;
    ctx.rng = rng;
    ctx.chan.set_phase(Phase::Setup);
    let payload = store.to_bytes();
    ctx.chan
        .send_with_cts(TAG_SETUP_WEIGHTS, &payload, spec.m as u64)?;
    ctx.chan.set_phase(Phase::Online);
    Ok(store)
}

/// Client side of the setup: receive the encrypted weight rows.
pub fn cop_setup_client(ctx: &mut PartyCtx) -> Result<WeightStore, LinearError> {
    ctx.chan.set_phase(Phase::Setup);
    let payload = ctx.chan.recv(TAG_SETUP_WEIGHTS)?;
    ctx.chan.set_phase(Phase::Online);
    WeightStore::from_bytes(&payload)
}

fn uniform_plaintext(params: PolyParams, rng: &mut impl RngCore) -> Poly {
    let t = params.t_mask();
    Poly {
        params,
        coeffs: (0..params.n)
            .map(|_| U192([rng.next_u64(), rng.next_u64(), rng.next_u64()]).bitand(t))
            .collect(),
    }
}

/// Accumulate one output row: sum_beta x[alpha][beta] (x) Enc(w_beta).
fn cop_client_row(
    store: &WeightStore,
    xc: &RingTensor,
    alpha: usize,
    counters: &OpCounters,
) -> Result<Ciphertext, LinearError> {
    let mut acc = trivial_zero(store.spec.poly, 0);
    for beta in 0..store.spec.m {
        let term = he_scalar_mul(xc.get(alpha, beta), &store.cts[beta], counters);
        acc = he_add(&acc, &term)?;
    }
    Ok(acc)
}

/// COP online, client side. The client's output share is exactly the
/// sampled mask R; it never crosses the wire in plaintext.
pub fn cop_client(
    ctx: &mut PartyCtx,
    store: &WeightStore,
    xc: &ShareTensor,
    counters: &OpCounters,
) -> Result<ShareTensor, LinearError> {
    let spec = &store.spec;
    assert_eq!(ctx.chan.party(), Party::Client);
    debug_assert_eq!((xc.rows(), xc.cols()), (spec.k, spec.m));
    let plan = spec.packing_plan()?;

    let rows: Vec<Ciphertext> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..spec.k)
                .into_par_iter()
                .map(|alpha| cop_client_row(store, &xc.inner, alpha, counters))
                .collect::<Result<_, _>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..spec.k)
                .map(|alpha| cop_client_row(store, &xc.inner, alpha, counters))
                .collect::<Result<_, _>>()?
        }
    };
    let packed = pack_outputs(&rows, &plan)?;

    // mask every coefficient of every packed ciphertext uniformly; the
    // valid slots of the masks become the client's output share
    let masks: Vec<Poly> = packed
        .iter()
        .map(|_| uniform_plaintext(spec.poly, &mut ctx.rng))
        .collect();
    let masked: Vec<Ciphertext> = packed
        .iter()
        .zip(&masks)
        .map(|(ct, r)| he_sub_plain(ct, r))
        .collect::<Result<_, _>>()?;
    let payload = serialize_cts(&masked);
    ctx.chan
        .send_with_cts(TAG_COP_PACKED, &payload, masked.len() as u64)?;

    let out_ring = spec.out_ring(store.w_scale);
    let yc = unpack_outputs(&masks, &plan, out_ring);
    Ok(ShareTensor {
        party: Party::Client,
        inner: yc,
    })
}

/// COP online, server side: decrypt the masked packed ciphertexts and add
/// the local product W against its own input share.
pub fn cop_server(
    ctx: &mut PartyCtx,
    sk: &SecretKey,
    w: &RingTensor,
    xs: &ShareTensor,
    spec: &LinearLayerSpec,
) -> Result<ShareTensor, LinearError> {
    assert_eq!(ctx.chan.party(), Party::Server);
    debug_assert_eq!((xs.rows(), xs.cols()), (spec.k, spec.m));
    let plan = spec.packing_plan()?;
    let payload = ctx.chan.recv(TAG_COP_PACKED)?;
    let cts = deserialize_cts(&payload)?;
    let pts: Vec<Poly> = cts
        .iter()
        .map(|ct| decrypt(ct, sk))
        .collect::<Result<_, _>>()?;
    let out_ring = spec.out_ring(w.params.scale);
    // decrypted: Xc*W - R (in packed layout)
    let masked_prod = unpack_outputs(&pts, &plan, out_ring);
    // local: Xs*W
    let local = ring_matmul(&xs.inner, w)?;
    Ok(ShareTensor {
        party: Party::Server,
        inner: masked_prod.add(&local)?,
    })
}

// --- SIP --------------------------------------------------------------------

/// Zero-padded tile starting at (r0, c0).
fn tile(x: &RingTensor, r0: usize, c0: usize, rows: usize, cols: usize) -> RingTensor {
    let mut out = RingTensor::zeros(x.params, rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            if r0 + r < x.rows && c0 + c < x.cols {
                out.set(r, c, x.get(r0 + r, c0 + c));
            }
        }
    }
    out
}

pub fn sip_tile_counts(spec: &LinearLayerSpec, shape: WindowShape) -> (usize, usize, usize) {
    (
        spec.k.div_ceil(shape.k_w),
        spec.m.div_ceil(shape.m_w),
        spec.n.div_ceil(shape.n_w),
    )
}

/// SIP client: encrypt window-encoded input-share tiles, send, then decrypt
/// the masked output tiles. The client owns the HE key.
pub fn sip_client(
    ctx: &mut PartyCtx,
    xc: &ShareTensor,
    shape: WindowShape,
    sk: &SecretKey,
    spec: &LinearLayerSpec,
    w_scale: u32,
) -> Result<ShareTensor, LinearError> {
    assert_eq!(ctx.chan.party(), Party::Client);
    shape.check(spec.poly.n)?;
    let (kt, mt, nt) = sip_tile_counts(spec, shape);
    let mut input_cts = Vec::with_capacity(kt * mt);
    for i in 0..kt {
        for j in 0..mt {
            let xt = tile(&xc.inner, i * shape.k_w, j * shape.m_w, shape.k_w, shape.m_w);
            let enc = window_encode_left(&xt, shape, spec.poly)?;
            input_cts.push(encrypt(&enc, sk, &mut ctx.rng)?);
        }
    }
    let payload = serialize_cts(&input_cts);
    ctx.chan
        .send_with_cts(TAG_SIP_INPUT, &payload, input_cts.len() as u64)?;

    let reply = ctx.chan.recv(TAG_SIP_OUTPUT)?;
    let out_cts = deserialize_cts(&reply)?;
    debug_assert_eq!(out_cts.len(), kt * nt);
    let out_ring = spec.out_ring(w_scale);
    let mut y = RingTensor::zeros(out_ring, spec.k, spec.n);
    for i in 0..kt {
        for l in 0..nt {
            let pt = decrypt(&out_cts[i * nt + l], sk)?;
            let zt = window_decode(&pt, shape, out_ring)?;
            for r in 0..shape.k_w {
                for c in 0..shape.n_w {
                    let (gr, gc) = (i * shape.k_w + r, l * shape.n_w + c);
                    if gr < spec.k && gc < spec.n {
                        y.set(gr, gc, zt.get(r, c));
                    }
                }
            }
        }
    }
    Ok(ShareTensor {
        party: Party::Client,
        inner: y,
    })
}

/// SIP server: homomorphically add its input share, multiply by
/// window-encoded weight tiles, mask, and return output ciphertexts. The
/// server's output share is the (window-decoded) mask R.
pub fn sip_server(
    ctx: &mut PartyCtx,
    xs: &ShareTensor,
    w: &RingTensor,
    shape: WindowShape,
    spec: &LinearLayerSpec,
    counters: &OpCounters,
) -> Result<ShareTensor, LinearError> {
    assert_eq!(ctx.chan.party(), Party::Server);
    shape.check(spec.poly.n)?;
    let (kt, mt, nt) = sip_tile_counts(spec, shape);
    let payload = ctx.chan.recv(TAG_SIP_INPUT)?;
    let input_cts = deserialize_cts(&payload)?;
    debug_assert_eq!(input_cts.len(), kt * mt);

    // complete the input: Enc(Xc tile) + plain Xs tile
    let full_x: Vec<Ciphertext> = (0..kt * mt)
        .map(|idx| {
            let (i, j) = (idx / mt, idx % mt);
            let xt = tile(&xs.inner, i * shape.k_w, j * shape.m_w, shape.k_w, shape.m_w);
            let enc = window_encode_left(&xt, shape, spec.poly)?;
            Ok(he_add_plain(&input_cts[idx], &enc)?)
        })
        .collect::<Result<Vec<_>, LinearError>>()?;

    let w_tiles: Vec<Poly> = (0..mt * nt)
        .map(|idx| {
            let (j, l) = (idx / nt, idx % nt);
            let wt = tile(w, j * shape.m_w, l * shape.n_w, shape.m_w, shape.n_w);
            Ok(window_encode_right(&wt, shape, spec.poly)?)
        })
        .collect::<Result<Vec<_>, LinearError>>()?;

    let out_ring = spec.out_ring(w.params.scale);
    let mut out_cts = Vec::with_capacity(kt * nt);
    let mut ys = RingTensor::zeros(out_ring, spec.k, spec.n);
    for i in 0..kt {
        for l in 0..nt {
            let mut acc = trivial_zero(spec.poly, 0);
            for j in 0..mt {
                let term = he_poly_mul(&w_tiles[j * nt + l], &full_x[i * mt + j], counters)?;
                acc = he_add(&acc, &term)?;
            }
            let r = uniform_plaintext(spec.poly, &mut ctx.rng);
            out_cts.push(he_sub_plain(&acc, &r)?);
            let rt = window_decode(&r, shape, out_ring)?;
            for rr in 0..shape.k_w {
                for cc in 0..shape.n_w {
                    let (gr, gc) = (i * shape.k_w + rr, l * shape.n_w + cc);
                    if gr < spec.k && gc < spec.n {
                        ys.set(gr, gc, rt.get(rr, cc));
                    }
                }
            }
        }
    }
    let payload = serialize_cts(&out_cts);
    ctx.chan
        .send_with_cts(TAG_SIP_OUTPUT, &payload, out_cts.len() as u64)?;
    Ok(ShareTensor {
        party: Party::Server,
        inner: ys,
    })
}
