//! Random benchmark instances.
//!
//! Mirrors the evaluation scenario the planners are meant for: every pair
//! of learners can cooperate, every source can feed every learner, edge
//! costs are normalized to [0, 1), generation and compute times are
//! exponential with mean 1, nodes have no operational cost, and each
//! source emits a per-epoch sample batch drawn from [10, 100) times a
//! scenario multiplier (a "rich" scenario multiplies rates by 5).
//!
//! Draw order is part of the contract (fixed seed, fixed file): initial
//! samples per learner, then base rate per source, then L-L edge costs in
//! lexicographic pair order, then I-L edge costs source-major. The
//! multiplier is applied after drawing, so the same seed yields the same
//! instance with every rate scaled exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{IlCandidate, INode, LNode, LlCandidate, Topology};
use crate::stochastic::DistributionSpec;

pub const RICH_MULTIPLIER: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceParams {
    pub l_count: usize,
    pub i_count: usize,
    /// Scales every source rate; 1 is the basic scenario.
    pub rate_multiplier: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            l_count: 10,
            i_count: 5,
            rate_multiplier: 1.0,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    a + (b - a) * rng.random::<f64>()
}

/// Deterministic random instance for the given seed.
pub fn random_instance(params: &InstanceParams, seed: u64) -> Result<Topology> {
    if params.l_count == 0 {
        return Err(Error::NoLNodes);
    }
    if !(params.rate_multiplier > 0.0) || !params.rate_multiplier.is_finite() {
        return Err(Error::InvalidScenario(format!(
            "rate multiplier must be positive and finite, got {}",
            params.rate_multiplier
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let l_nodes: Vec<LNode> = (0..params.l_count)
        .map(|l| LNode {
            id: format!("l{l}"),
            op_cost: 0.0,
            base_compute: DistributionSpec::Exponential { rate: 1.0 },
            initial_samples: uniform(&mut rng, 100.0, 1000.0),
        })
        .collect();
    let i_nodes: Vec<INode> = (0..params.i_count)
        .map(|i| INode {
            id: format!("i{i}"),
            op_cost: 0.0,
            gen_time: DistributionSpec::Exponential { rate: 1.0 },
            rate: uniform(&mut rng, 10.0, 100.0) * params.rate_multiplier,
        })
        .collect();
    let mut ll_candidates = Vec::with_capacity(params.l_count * (params.l_count - 1) / 2);
    for a in 0..params.l_count {
        for b in (a + 1)..params.l_count {
            ll_candidates.push(LlCandidate {
                a,
                b,
                cost: uniform(&mut rng, 0.0, 1.0),
            });
        }
    }
    let mut il_candidates = Vec::with_capacity(params.i_count * params.l_count);
    for i in 0..params.i_count {
        for l in 0..params.l_count {
            il_candidates.push(IlCandidate {
                i,
                l,
                cost: uniform(&mut rng, 0.0, 1.0),
            });
        }
    }

    let topo = Topology {
        l_nodes,
        i_nodes,
        ll_candidates,
        il_candidates,
    };
    crate::model::validate_topology(&topo)?;
    Ok(topo)
}
