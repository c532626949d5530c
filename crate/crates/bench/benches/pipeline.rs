use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ibnet_core::connectivity::connectivity_matrices;
use ibnet_core::embeddings::nmf::{factorize, NmfOptions};
use ibnet_core::embeddings::{fit, transform};
use ibnet_core::model_selection::{build_graphs, GraphSpec};
use ibnet_core::signals::generate_dyad_cohort;
use ibnet_core::wavelet::cwt;
use ibnet_core::{Band, CohortConfig, ConnectivityOptions, EncoderKind, Estimator, ThetaE, WaveletParams};
use nalgebra::DMatrix;

fn cohort() -> CohortConfig {
    CohortConfig {
        n_dyads_per_class: 4,
        conditions_per_dyad: 2,
        ..CohortConfig::lagged_contrast(1)
    }
}

fn bench_cwt(c: &mut Criterion) {
    let recs = generate_dyad_cohort(&cohort()).unwrap();
    let x = &recs[0].p1[0];
    c.bench_function("cwt/1200 samples", |b| b.iter(|| cwt(black_box(x), 4.0, &WaveletParams::default()).unwrap()));
}

fn bench_connectivity(c: &mut Criterion) {
    let recs = generate_dyad_cohort(&cohort()).unwrap();
    let mut opts = ConnectivityOptions::default();
    opts.entropy.max_lag_s = 60.0;
    let mut group = c.benchmark_group("connectivity/8x8 recording");
    group.sample_size(10);
    for est in Estimator::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(est), &est, |b, &est| {
            b.iter(|| connectivity_matrices(&recs[0], &[est], &Band::default(), &opts).unwrap())
        });
    }
    group.finish();
}

fn bench_encoders(c: &mut Criterion) {
    let recs = generate_dyad_cohort(&cohort()).unwrap();
    let graphs = build_graphs(&recs, &GraphSpec::new(Estimator::Wco)).unwrap();
    let mut group = c.benchmark_group("encoder fit+transform/32 graphs");
    group.sample_size(10);
    for kind in EncoderKind::ALL {
        let theta = ThetaE::default_for(kind);
        group.bench_with_input(BenchmarkId::from_parameter(kind), &kind, |b, &kind| {
            b.iter(|| transform(&fit(kind, &graphs, &theta, 3).unwrap(), &graphs).unwrap())
        });
    }
    group.finish();
}

fn bench_nmf(c: &mut Criterion) {
    let d = DMatrix::from_fn(1152, 16, |i, j| ((i * 7 + j * 13) % 17) as f64 / 17.0);
    let mut group = c.benchmark_group("nmf/1152x16");
    group.sample_size(10);
    for delta in [2, 8, 16] {
        group.bench_with_input(BenchmarkId::from_parameter(delta), &delta, |b, &delta| {
            b.iter(|| factorize(black_box(&d), delta, &NmfOptions::default(), 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cwt, bench_connectivity, bench_encoders, bench_nmf);
criterion_main!(benches);
