//! Timing-engine benchmarks: grid pipeline, closed forms, and the
//! Monte Carlo oracle on one mid-size configuration.

use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, Criterion};
use netlearn::{
    closed_form_time_exponential, closed_form_time_uniform, monte_carlo, DistributionSpec,
    DrawMode, EpochEngine, GridParams, Selection, Topology,
};
use netlearn_bench::instance;
use std::hint::black_box;

fn exp_laws(topo: &Topology) -> Topology {
    let mut t = topo.clone();
    // The closed forms expect interchangeable learners.
    for node in &mut t.l_nodes {
        node.base_compute = DistributionSpec::Exponential { rate: 1.0 };
        node.initial_samples = 300.0;
    }
    // Rate chosen so no multiple of it hits the compute rate (a pole of
    // the closed form).
    for node in &mut t.i_nodes {
        node.gen_time = DistributionSpec::Exponential { rate: 0.7 };
        node.rate = 0.0;
    }
    t
}

fn uniform_laws(topo: &Topology) -> Topology {
    let mut t = topo.clone();
    for node in &mut t.l_nodes {
        node.base_compute = DistributionSpec::Uniform { a: 0.0, b: 3.0 };
        node.initial_samples = 300.0;
    }
    for node in &mut t.i_nodes {
        node.gen_time = DistributionSpec::Uniform { a: 1.0, b: 2.0 };
        node.rate = 0.0;
    }
    t
}

fn every_edge(topo: &Topology) -> BTreeSet<usize> {
    (0..topo.il_candidates.len()).collect()
}

fn bench_timing(c: &mut Criterion) {
    let topo = instance(8, 4);
    let selection = Selection::new(BTreeSet::new(), every_edge(&topo), 20);
    let grid = GridParams::default();

    c.bench_function("epoch_pdf_k20", |b| {
        b.iter(|| {
            let mut engine = EpochEngine::new(&topo, grid);
            black_box(engine.epoch_pdf(&selection.il_edges, 20).unwrap());
        })
    });
    c.bench_function("expected_time_20_epochs", |b| {
        b.iter(|| {
            let mut engine = EpochEngine::new(&topo, grid);
            black_box(engine.expected_time(&selection).unwrap());
        })
    });

    let exp_topo = exp_laws(&topo);
    let exp_sel = Selection::new(BTreeSet::new(), every_edge(&exp_topo), 20);
    c.bench_function("closed_form_exponential", |b| {
        b.iter(|| black_box(closed_form_time_exponential(&exp_topo, &exp_sel).unwrap()))
    });

    let uni_topo = uniform_laws(&topo);
    let uni_sel = Selection::new(BTreeSet::new(), every_edge(&uni_topo), 20);
    c.bench_function("closed_form_uniform", |b| {
        b.iter(|| black_box(closed_form_time_uniform(&uni_topo, &uni_sel).unwrap()))
    });

    c.bench_function("monte_carlo_10k_reps", |b| {
        b.iter(|| {
            black_box(
                monte_carlo(&topo, &selection, 10_000, 7, DrawMode::Independent).unwrap(),
            )
        })
    });
}

criterion_group!(benches, bench_timing);
criterion_main!(benches);
