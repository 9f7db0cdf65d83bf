//! Benchmarks comparing the data-parallel inner loops against the
//! sequential fallback. The `parallel` feature is compile-time, so run the
//! suite twice and let criterion's saved baselines line the results up:
//!
//! ```text
//! cargo bench --bench parallel                                      # rayon
//! cargo bench --bench parallel --no-default-features --features karatsuba
//! ```
//!
//! Group names carry the active mode so both runs coexist in the report.

use criterion::{criterion_group, criterion_main, Criterion};
use mpc_infer::approx::{search_breakpoints, gelu, Histogram, Template};
use mpc_infer::harness::{run_block, run_matmul, TransportKind};
use mpc_infer::linear_protocols::LinearLayerSpec;

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

/// Full COP matrix multiplication (setup + online, both parties on
/// in-process channels). The client's per-row ciphertext accumulation is
/// the data-parallel section.
fn bench_cop_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("cop_matmul/{MODE}"));
    group.sample_size(10);
    for &(k, m, n, big_n) in &[(32usize, 32usize, 32usize, 256usize), (64, 64, 64, 512)] {
        let spec = LinearLayerSpec::new(k, m, n, 32, 12, big_n).unwrap();
        group.bench_function(format!("k{k}_m{m}_n{n}_N{big_n}"), |b| {
            b.iter(|| run_matmul(true, spec, None, TransportKind::Inproc, 7).unwrap())
        });
    }
    group.finish();
}

/// Breakpoint grid search for the GELU template: 441 candidate pairs, each
/// requiring a weighted least-squares fit plus a loss evaluation. The
/// candidate sweep is the data-parallel section.
fn bench_breakpoint_search(c: &mut Criterion) {
    let hist = Histogram::synthetic_gelu();
    let mut group = c.benchmark_group(format!("breakpoint_search/{MODE}"));
    group.sample_size(10);
    group.bench_function("gelu_radius0.5_step0.05", |b| {
        b.iter(|| {
            search_breakpoints(&gelu, Template::Gelu, &[-2.1, 0.2], &hist, 0.5, 0.05).unwrap()
        })
    });
    group.finish();
}

/// End-to-end block (linear layer, truncation, secure GELU, upcast) as a
/// mixed workload: parallel sections interleaved with channel rounds.
fn bench_block(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("block/{MODE}"));
    group.sample_size(10);
    group.bench_function("k8_m16_n16_N128", |b| {
        b.iter(|| run_block(8, 16, 16, 128, TransportKind::Inproc, 7).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_cop_matmul, bench_breakpoint_search, bench_block);
criterion_main!(benches);
