//! Instrumentation counters for HE-side work.
//!
//! The complexity claims are checked by counting logical plaintext-side
//! multiplications rather than timing: one scalar-polynomial product counts
//! N coefficient multiplications, one polynomial-polynomial product counts
//! N^2 (schoolbook-equivalent, regardless of the algorithm actually used).

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct OpCounters {
    scalar_mults: AtomicU64,
    poly_mults: AtomicU64,
    coeff_mults: AtomicU64,
}

/// A snapshot of the counters at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub scalar_mults: u64,
    pub poly_mults: u64,
    pub coeff_mults: u64,
}

impl OpCounters {
    pub fn new() -> OpCounters {
        OpCounters::default()
    }

    pub fn record_scalar_mul(&self, n: usize) {
        self.scalar_mults.fetch_add(1, Ordering::Relaxed);
        self.coeff_mults.fetch_add(n as u64, Ordering::Relaxed);
    }

    pub fn record_poly_mul(&self, n: usize) {
        self.poly_mults.fetch_add(1, Ordering::Relaxed);
        self.coeff_mults
            .fetch_add((n as u64) * (n as u64), Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            scalar_mults: self.scalar_mults.load(Ordering::Relaxed),
            poly_mults: self.poly_mults.load(Ordering::Relaxed),
            coeff_mults: self.coeff_mults.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.scalar_mults.store(0, Ordering::Relaxed);
        self.poly_mults.store(0, Ordering::Relaxed);
        self.coeff_mults.store(0, Ordering::Relaxed);
    }
}
