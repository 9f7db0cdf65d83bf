//! Dealer-backed ideal functionalities and the per-party protocol context.
//!
//! Both parties call the dealer in the same scripted order; the i-th call
//! of one party is paired with the i-th call of the other. The dealer
//! reconstructs the inputs, computes the functionality exactly, and returns
//! fresh re-randomized shares. Cost is charged to a configurable table
//! (bytes per element and rounds per call) since the paper treats these
//! primitives as black boxes.

use super::channel::LoggedChannel;
use super::shares::{BoolShare, ShareTensor};
use super::Party;
use crate::fixed_ring::{RingParams, RingTensor};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FuncKind {
    Mul,
    Less,
    B2A,
    Wrap,
    Recip,
    Trunc,
}

/// Per-functionality cost model: communicated bits are `ell_factor * ell`
/// per element, plus a fixed round count per (batched) call.
#[derive(Debug, Clone, Copy)]
pub struct FuncCost {
    pub ell_factor: u64,
    pub rounds: u64,
}

#[derive(Debug, Clone)]
pub struct CostTable {
    pub mul: FuncCost,
    pub less: FuncCost,
    pub b2a: FuncCost,
    pub wrap: FuncCost,
    pub recip: FuncCost,
    pub trunc: FuncCost,
}

impl Default for CostTable {
    fn default() -> CostTable {
        CostTable {
            mul: FuncCost { ell_factor: 2, rounds: 1 },
            less: FuncCost { ell_factor: 4, rounds: 2 },
            b2a: FuncCost { ell_factor: 2, rounds: 1 },
            wrap: FuncCost { ell_factor: 4, rounds: 2 },
            recip: FuncCost { ell_factor: 4, rounds: 2 },
            trunc: FuncCost { ell_factor: 4, rounds: 2 },
        }
    }
}

impl CostTable {
    fn get(&self, kind: FuncKind) -> FuncCost {
        match kind {
            FuncKind::Mul => self.mul,
            FuncKind::Less => self.less,
            FuncKind::B2A => self.b2a,
            FuncKind::Wrap => self.wrap,
            FuncKind::Recip => self.recip,
            FuncKind::Trunc => self.trunc,
        }
    }
}

/// Aggregated functionality-call accounting for one protocol run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuncStats {
    pub calls: HashMap<FuncKind, u64>,
    pub elements: HashMap<FuncKind, u64>,
    pub bytes: u64,
    pub rounds: u64,
}

impl FuncStats {
    pub fn calls_of(&self, kind: FuncKind) -> u64 {
        self.calls.get(&kind).copied().unwrap_or(0)
    }
}

/// One party's input to a paired dealer call.
#[derive(Debug, Clone)]
pub enum FuncRequest {
    Mul {
        a: Vec<u64>,
        b: Vec<u64>,
        ring: RingParams,
        trunc_s: Option<u32>,
    },
    Less {
        a: Vec<u64>,
        b: Vec<u64>,
        ring: RingParams,
    },
    B2A {
        bits: Vec<u8>,
        ring: RingParams,
    },
    Wrap {
        x: Vec<u64>,
        ring: RingParams,
    },
    Recip {
        x: Vec<u64>,
        ring: RingParams,
    },
    Trunc {
        x: Vec<u64>,
        ring: RingParams,
        s: u32,
    },
}

impl FuncRequest {
    fn kind(&self) -> FuncKind {
        match self {
            FuncRequest::Mul { .. } => FuncKind::Mul,
            FuncRequest::Less { .. } => FuncKind::Less,
            FuncRequest::B2A { .. } => FuncKind::B2A,
            FuncRequest::Wrap { .. } => FuncKind::Wrap,
            FuncRequest::Recip { .. } => FuncKind::Recip,
            FuncRequest::Trunc { .. } => FuncKind::Trunc,
        }
    }
}

#[derive(Debug, Clone)]
pub enum FuncResponse {
    Ring(Vec<u64>),
    Bits(Vec<u8>),
}

#[derive(Default)]
struct Pending {
    client: Option<FuncRequest>,
    server: Option<FuncRequest>,
    out_client: Option<FuncResponse>,
    out_server: Option<FuncResponse>,
    computed: bool,
}

struct DealerInner {
    rng: ChaCha12Rng,
    stats: FuncStats,
    pending: HashMap<u64, Pending>,
}

/// The trusted third endpoint.
pub struct Dealer {
    cost: CostTable,
    inner: Mutex<DealerInner>,
    cv: Condvar,
}

impl Dealer {
    pub fn new(seed: u64) -> Arc<Dealer> {
        Dealer::with_cost(seed, CostTable::default())
    }

    pub fn with_cost(seed: u64, cost: CostTable) -> Arc<Dealer> {
        Arc::new(Dealer {
            cost,
            inner: Mutex::new(DealerInner {
                rng: ChaCha12Rng::seed_from_u64(seed),
                stats: FuncStats::default(),
                pending: HashMap::new(),
            }),
            cv: Condvar::new(),
        })
    }

    pub fn stats(&self) -> FuncStats {
        self.inner.lock().unwrap().stats.clone()
    }

    pub fn reset_stats(&self) {
        self.inner.lock().unwrap().stats = FuncStats::default();
    }

    /// Blocking paired call; returns this party's output share.
    pub fn call(&self, party: Party, call_id: u64, req: FuncRequest) -> FuncResponse {
        let mut inner = self.inner.lock().unwrap();
        {
            let slot = inner.pending.entry(call_id).or_default();
            match party {
                Party::Client => slot.client = Some(req),
                Party::Server => slot.server = Some(req),
            }
        }
        let ready = {
            let slot = inner.pending.get(&call_id).unwrap();
            slot.client.is_some() && slot.server.is_some() && !slot.computed
        };
        if ready {
            let mut slot = inner.pending.remove(&call_id).unwrap();
            let creq = slot.client.take().unwrap();
            let sreq = slot.server.take().unwrap();
            let (kind, n_elems, ell, out_c, out_s) =
                compute(&creq, &sreq, &mut inner.rng);
            let cost = self.cost.get(kind);
            *inner.stats.calls.entry(kind).or_insert(0) += 1;
            *inner.stats.elements.entry(kind).or_insert(0) += n_elems as u64;
            inner.stats.bytes += cost.ell_factor * ell as u64 * n_elems as u64 / 8;
            inner.stats.rounds += cost.rounds;
            slot.out_client = Some(out_c);
            slot.out_server = Some(out_s);
            slot.computed = true;
            inner.pending.insert(call_id, slot);
            self.cv.notify_all();
        }
        loop {
            {
                let slot = inner.pending.get_mut(&call_id).unwrap();
                let mine = match party {
                    Party::Client => slot.out_client.take(),
                    Party::Server => slot.out_server.take(),
                };
                if let Some(resp) = mine {
                    if slot.out_client.is_none() && slot.out_server.is_none() {
                        inner.pending.remove(&call_id);
                    }
                    return resp;
                }
            }
            inner = self.cv.wait(inner).unwrap();
        }
    }
}

fn uniform_residue(rng: &mut ChaCha12Rng, mask: u64) -> u64 {
    rng.next_u64() & mask
}

/// Reconstruct, compute, re-share. Returns (kind, elements, ell, client
/// output, server output).
fn compute(
    creq: &FuncRequest,
    sreq: &FuncRequest,
    rng: &mut ChaCha12Rng,
) -> (FuncKind, usize, u32, FuncResponse, FuncResponse) {
    let kind = creq.kind();
    assert_eq!(kind, sreq.kind(), "parties disagree on functionality kind");
    match (creq, sreq) {
        (
            FuncRequest::Mul { a: ac, b: bc, ring, trunc_s },
            FuncRequest::Mul { a: as_, b: bs, .. },
        ) => {
            let mask = ring.mask();
            let result: Vec<u64> = (0..ac.len())
                .map(|i| {
                    let a = ac[i].wrapping_add(as_[i]) & mask;
                    let b = bc[i].wrapping_add(bs[i]) & mask;
                    let mut prod =
                        ring.to_signed(a) as i128 * ring.to_signed(b) as i128;
                    if let Some(s) = trunc_s {
                        prod >>= s;
                    }
                    (prod as u128 as u64) & mask
                })
                .collect();
            let (oc, os) = reshare_ring(&result, mask, rng);
            (kind, ac.len(), ring.ell, oc, os)
        }
        (
            FuncRequest::Less { a: ac, b: bc, ring },
            FuncRequest::Less { a: as_, b: bs, .. },
        ) => {
            let mask = ring.mask();
            let bits: Vec<u8> = (0..ac.len())
                .map(|i| {
                    let a = ac[i].wrapping_add(as_[i]) & mask;
                    let b = bc[i].wrapping_add(bs[i]) & mask;
                    (ring.to_signed(a) < ring.to_signed(b)) as u8
                })
                .collect();
            let (oc, os) = reshare_bits(&bits, rng);
            (kind, ac.len(), ring.ell, oc, os)
        }
        (
            FuncRequest::B2A { bits: bitc, ring },
            FuncRequest::B2A { bits: bits_, .. },
        ) => {
            let mask = ring.mask();
            let vals: Vec<u64> = bitc
                .iter()
                .zip(bits_)
                .map(|(&c, &s)| (c ^ s) as u64)
                .collect();
            let (oc, os) = reshare_ring(&vals, mask, rng);
            (kind, bitc.len(), ring.ell, oc, os)
        }
        (
            FuncRequest::Wrap { x: xc, ring },
            FuncRequest::Wrap { x: xs, .. },
        ) => {
            let bits: Vec<u8> = xc
                .iter()
                .zip(xs)
                .map(|(&c, &s)| (((c as u128) + (s as u128)) >> ring.ell != 0) as u8)
                .collect();
            let (oc, os) = reshare_bits(&bits, rng);
            (kind, xc.len(), ring.ell, oc, os)
        }
        (
            FuncRequest::Recip { x: xc, ring },
            FuncRequest::Recip { x: xs, .. },
        ) => {
            let mask = ring.mask();
            let max_signed = (1u64 << (ring.ell - 1)) - 1;
            let result: Vec<u64> = xc
                .iter()
                .zip(xs)
                .map(|(&c, &s)| {
                    let x = ring.decode(c.wrapping_add(s) & mask);
                    if x == 0.0 {
                        0
                    } else {
                        // saturate on encode overflow (|1/x| too large)
                        ring.encode(1.0 / x).unwrap_or(if x > 0.0 {
                            max_signed
                        } else {
                            (!max_signed) & mask
                        })
                    }
                })
                .collect();
            let (oc, os) = reshare_ring(&result, mask, rng);
            (kind, xc.len(), ring.ell, oc, os)
        }
        (
            FuncRequest::Trunc { x: xc, ring, s },
            FuncRequest::Trunc { x: xs, .. },
        ) => {
            let mask = ring.mask();
            let result: Vec<u64> = xc
                .iter()
                .zip(xs)
                .map(|(&c, &sv)| {
                    let x = ring.to_signed(c.wrapping_add(sv) & mask);
                    ((x >> s) as u64) & mask
                })
                .collect();
            let (oc, os) = reshare_ring(&result, mask, rng);
            (kind, xc.len(), ring.ell, oc, os)
        }
        _ => unreachable!("kinds already checked equal"),
    }
}

fn reshare_ring(
    vals: &[u64],
    mask: u64,
    rng: &mut ChaCha12Rng,
) -> (FuncResponse, FuncResponse) {
    let client: Vec<u64> = vals.iter().map(|_| uniform_residue(rng, mask)).collect();
    let server: Vec<u64> = vals
        .iter()
        .zip(&client)
        .map(|(&v, &c)| v.wrapping_sub(c) & mask)
        .collect();
    (FuncResponse::Ring(client), FuncResponse::Ring(server))
}

fn reshare_bits(bits: &[u8], rng: &mut ChaCha12Rng) -> (FuncResponse, FuncResponse) {
    let client: Vec<u8> = bits.iter().map(|_| (rng.next_u32() & 1) as u8).collect();
    let server: Vec<u8> = bits.iter().zip(&client).map(|(&b, &c)| b ^ c).collect();
    (FuncResponse::Bits(client), FuncResponse::Bits(server))
}

/// One party's protocol execution context: its channel endpoint, the shared
/// dealer, a private RNG, and the scripted dealer-call sequence number.
pub struct PartyCtx {
    pub party: Party,
    pub chan: LoggedChannel,
    pub dealer: Arc<Dealer>,
    pub rng: ChaCha12Rng,
    call_idx: u64,
}

impl PartyCtx {
    pub fn new(
        party: Party,
        chan: LoggedChannel,
        dealer: Arc<Dealer>,
        rng_seed: u64,
    ) -> PartyCtx {
        PartyCtx {
            party,
            chan,
            dealer,
            rng: ChaCha12Rng::seed_from_u64(rng_seed),
            call_idx: 0,
        }
    }

    fn next_call(&mut self) -> u64 {
        let id = self.call_idx;
        self.call_idx += 1;
        id
    }

    fn expect_ring(&self, resp: FuncResponse, like: &ShareTensor) -> ShareTensor {
        match resp {
            FuncResponse::Ring(vals) => ShareTensor {
                party: self.party,
                inner: RingTensor::from_residues(
                    like.params(),
                    like.rows(),
                    like.cols(),
                    vals,
                )
                .expect("dealer preserves shape"),
            },
            FuncResponse::Bits(_) => panic!("expected ring response"),
        }
    }

    fn expect_bits(&self, resp: FuncResponse, rows: usize, cols: usize) -> BoolShare {
        match resp {
            FuncResponse::Bits(bits) => BoolShare {
                party: self.party,
                rows,
                cols,
                bits,
            },
            FuncResponse::Ring(_) => panic!("expected bit response"),
        }
    }

    /// Elementwise product; optionally with exact signed truncation by
    /// 2^trunc_s fused after the multiply.
    pub fn f_mul(
        &mut self,
        a: &ShareTensor,
        b: &ShareTensor,
        trunc_s: Option<u32>,
    ) -> ShareTensor {
        assert_eq!(a.params(), b.params());
        assert_eq!(a.len(), b.len());
        let id = self.next_call();
        let resp = self.dealer.call(
            self.party,
            id,
            FuncRequest::Mul {
                a: a.inner.data.clone(),
                b: b.inner.data.clone(),
                ring: a.params(),
                trunc_s,
            },
        );
        self.expect_ring(resp, a)
    }

    /// Elementwise signed comparison: shared bit = 1 iff a < b.
    pub fn f_less(&mut self, a: &ShareTensor, b: &ShareTensor) -> BoolShare {
        assert_eq!(a.params(), b.params());
        assert_eq!(a.len(), b.len());
        let id = self.next_call();
        let resp = self.dealer.call(
            self.party,
            id,
            FuncRequest::Less {
                a: a.inner.data.clone(),
                b: b.inner.data.clone(),
                ring: a.params(),
            },
        );
        self.expect_bits(resp, a.rows(), a.cols())
    }

    /// Compare against a public residue: shared bit = 1 iff a < c.
    pub fn f_less_const(&mut self, a: &ShareTensor, c: u64) -> BoolShare {
        let params = a.params();
        let b_inner = RingTensor::from_residues(
            params,
            a.rows(),
            a.cols(),
            vec![c & params.mask(); a.len()],
        )
        .unwrap();
        let b = ShareTensor::of_public(self.party, &b_inner);
        self.f_less(a, &b)
    }

    /// Shared bit = 1 iff c > a (public constant on the left).
    pub fn f_greater_const(&mut self, a: &ShareTensor, c: u64) -> BoolShare {
        let params = a.params();
        let b_inner = RingTensor::from_residues(
            params,
            a.rows(),
            a.cols(),
            vec![c & params.mask(); a.len()],
        )
        .unwrap();
        let b = ShareTensor::of_public(self.party, &b_inner);
        self.f_less(&b, a)
    }

    /// Boolean-to-arithmetic conversion into the given ring.
    pub fn f_b2a(&mut self, bits: &BoolShare, ring: RingParams) -> ShareTensor {
        let id = self.next_call();
        let resp = self.dealer.call(
            self.party,
            id,
            FuncRequest::B2A {
                bits: bits.bits.clone(),
                ring,
            },
        );
        let like = ShareTensor::zero(self.party, ring, bits.rows, bits.cols);
        self.expect_ring(resp, &like)
    }

    /// Shared wrap bit of the two shares: 1 iff xc + xs >= 2^ell as integers.
    pub fn f_wrap(&mut self, x: &ShareTensor) -> BoolShare {
        let id = self.next_call();
        let resp = self.dealer.call(
            self.party,
            id,
            FuncRequest::Wrap {
                x: x.inner.data.clone(),
                ring: x.params(),
            },
        );
        self.expect_bits(resp, x.rows(), x.cols())
    }

    /// Fixed-point reciprocal at the ring's scale.
    pub fn f_recip(&mut self, x: &ShareTensor) -> ShareTensor {
        let id = self.next_call();
        let resp = self.dealer.call(
            self.party,
            id,
            FuncRequest::Recip {
                x: x.inner.data.clone(),
                ring: x.params(),
            },
        );
        self.expect_ring(resp, x)
    }

    /// Exact signed truncation by 2^s.
    pub fn f_trunc(&mut self, x: &ShareTensor, s: u32) -> ShareTensor {
        let id = self.next_call();
        let resp = self.dealer.call(
            self.party,
            id,
            FuncRequest::Trunc {
                x: x.inner.data.clone(),
                ring: x.params(),
                s,
            },
        );
        self.expect_ring(resp, x)
    }
}
