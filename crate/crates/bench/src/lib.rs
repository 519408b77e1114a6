//! Shared fixtures for the benchmark suite.

use netlearn::{
    average_dataset_size, cheapest_uniform, predicted_error, random_instance, spectral_gap,
    InstanceParams, LearningProfile, Topology,
};
use std::collections::BTreeSet;

/// Random instance of the given size, seeded for stable comparisons.
pub fn instance(l_count: usize, i_count: usize) -> Topology {
    random_instance(
        &InstanceParams {
            l_count,
            i_count,
            rate_multiplier: 1.0,
        },
        42,
    )
    .expect("benchmark instance generates")
}

/// Targets that the instance can meet in a few dozen epochs, so planner
/// benchmarks measure search work rather than a hopeless scan.
pub fn reachable_profile(topo: &Topology) -> LearningProfile {
    let full = cheapest_uniform(topo, topo.l_count() - 1).expect("complete graph");
    let gap = spectral_gap(topo, &full);
    let x_bar = average_dataset_size(topo, &BTreeSet::new(), 40);
    let mut profile = LearningProfile {
        c1: 0.6799,
        c2: 0.4978,
        c3: 542.1,
        eps_max: 1.0,
        t_max: f64::INFINITY,
    };
    profile.eps_max = predicted_error(&profile, 40, gap, x_bar).expect("error law") * 1.000_001;
    profile
}
