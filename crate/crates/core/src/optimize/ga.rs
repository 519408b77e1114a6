//! Genetic search over data-edge subsets.
//!
//! One cooperation degree at a time: the cooperation graph is fixed to the
//! cheapest uniform one and a bit string over the candidate data edges
//! evolves. Feasible genomes compete on (negated) cost; infeasible ones
//! are pushed below every feasible genome by a penalty scaled to the worst
//! possible bill, graded by how far the margin is from 1 so the population
//! can still climb toward feasibility.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::learning::{per_epoch_cost, Evaluation, Evaluator, LearningProfile, EPOCH_CAP};
use crate::model::{spectral_gap, Selection, Topology};
use crate::stochastic::GridParams;

use super::regular::cheapest_uniform;
use super::{cooperation_degrees, solution_cost, Solution};

#[derive(Debug, Clone, Copy)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    /// Genomes carried into the next generation unchanged; also the mating
    /// pool, filled by tournament selection.
    pub parents: usize,
    pub tournament: usize,
    /// Fraction of genes flipped in each child (at least one).
    pub mutation_rate: f64,
    pub grid: GridParams,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 100,
            generations: 50,
            parents: 4,
            tournament: 3,
            mutation_rate: 0.15,
            grid: GridParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Option<Solution>,
    /// Distinct configurations evaluated (repeated genomes hit a cache).
    pub evaluations: u32,
}

/// Evolves data-edge subsets for one cooperation degree. `None` when the
/// degree has no uniform graph, the graph cannot mix (zero spectral gap),
/// or no feasible genome was ever seen.
pub fn ga_degree(
    topo: &Topology,
    profile: &LearningProfile,
    d_l: usize,
    params: &GaParams,
    seed: u64,
) -> Result<GaOutcome> {
    let Some(ll) = cheapest_uniform(topo, d_l) else {
        return Ok(GaOutcome {
            best: None,
            evaluations: 0,
        });
    };
    if spectral_gap(topo, &ll) <= 0.0 {
        return Ok(GaOutcome {
            best: None,
            evaluations: 0,
        });
    }

    let m = topo.il_candidates.len();
    let pop_size = params.population.max(1);
    let parents = params.parents.clamp(1, pop_size);
    let tournament = params.tournament.max(1);

    // Penalty scale: no feasible configuration can cost more than running
    // everything for the full epoch cap. The floor keeps feasible and
    // infeasible genomes separated even when all costs are zero.
    let full: BTreeSet<usize> = (0..m).collect();
    let c_max = (f64::from(EPOCH_CAP)
        * per_epoch_cost(topo, &Selection::new(ll.clone(), full, 1)))
    .max(1.0);

    let mut evaluator = Evaluator::new(topo, profile, params.grid);
    let mut cache: HashMap<Vec<bool>, (f64, Evaluation)> = HashMap::new();
    let mut evaluations = 0u32;
    let mut fitness_of = |genome: &Vec<bool>,
                          evaluator: &mut Evaluator,
                          evaluations: &mut u32|
     -> Result<(f64, Evaluation)> {
        if let Some(hit) = cache.get(genome) {
            return Ok(hit.clone());
        }
        let il: BTreeSet<usize> = genome
            .iter()
            .enumerate()
            .filter_map(|(i, &bit)| bit.then_some(i))
            .collect();
        let eval = evaluator.evaluate(&ll, &il)?;
        *evaluations += 1;
        let fitness = if eval.feasible {
            -eval.cost
        } else {
            -c_max * (2.0 - eval.margin)
        };
        cache.insert(genome.clone(), (fitness, eval.clone()));
        Ok((fitness, eval))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut population: Vec<Vec<bool>> = (0..pop_size)
        .map(|_| (0..m).map(|_| rng.random::<bool>()).collect())
        .collect();

    let mut best: Option<(f64, Vec<bool>, Evaluation)> = None;
    for generation in 0..=params.generations {
        let mut scored: Vec<f64> = Vec::with_capacity(pop_size);
        for genome in &population {
            let (fitness, eval) = fitness_of(genome, &mut evaluator, &mut evaluations)?;
            if best.as_ref().map_or(true, |(b, _, _)| fitness > *b) {
                best = Some((fitness, genome.clone(), eval));
            }
            scored.push(fitness);
        }
        if generation == params.generations {
            break;
        }

        // Tournament selection fills the mating pool; the pool survives
        // unchanged (steady state), children fill the rest.
        let mut pool: Vec<usize> = Vec::with_capacity(parents);
        for _ in 0..parents {
            let mut winner = rng.random_range(0..pop_size);
            for _ in 1..tournament {
                let rival = rng.random_range(0..pop_size);
                if scored[rival] > scored[winner] {
                    winner = rival;
                }
            }
            pool.push(winner);
        }
        let mut next: Vec<Vec<bool>> = pool.iter().map(|&i| population[i].clone()).collect();
        while next.len() < pop_size {
            let pa = &population[pool[rng.random_range(0..parents)]];
            let pb = &population[pool[rng.random_range(0..parents)]];
            let mut child: Vec<bool> = if m >= 2 {
                let point = rng.random_range(1..m);
                pa[..point]
                    .iter()
                    .chain(pb[point..].iter())
                    .copied()
                    .collect()
            } else {
                pa.clone()
            };
            if m > 0 {
                let flips = ((params.mutation_rate * m as f64).round() as usize).max(1);
                for _ in 0..flips {
                    let at = rng.random_range(0..m);
                    child[at] = !child[at];
                }
            }
            next.push(child);
        }
        population = next;
    }

    let best = best.and_then(|(_, genome, eval)| {
        eval.feasible.then(|| Solution {
            ll_edges: ll.clone(),
            il_edges: genome
                .iter()
                .enumerate()
                .filter_map(|(i, &bit)| bit.then_some(i))
                .collect(),
            evaluation: eval,
        })
    });
    Ok(GaOutcome { best, evaluations })
}

/// Outer sweep: runs [`ga_degree`] for every cooperation degree (seed
/// offset by the degree so streams differ) and keeps the cheapest
/// feasible result.
pub fn ga(
    topo: &Topology,
    profile: &LearningProfile,
    params: &GaParams,
    seed: u64,
) -> Result<GaOutcome> {
    let mut best: Option<Solution> = None;
    let mut evaluations = 0u32;
    for d_l in cooperation_degrees(topo.l_count()) {
        let outcome = ga_degree(topo, profile, d_l, params, seed.wrapping_add(d_l as u64))?;
        evaluations += outcome.evaluations;
        if let Some(sol) = outcome.best {
            if sol.cost() < solution_cost(&best) {
                best = Some(sol);
            }
        }
    }
    Ok(GaOutcome { best, evaluations })
}
