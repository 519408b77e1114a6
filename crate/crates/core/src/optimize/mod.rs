//! Topology planners.
//!
//! All planners search the same design space: a uniform-degree cooperation
//! graph over the learners (degree d picked from `cooperation_degrees`,
//! edges picked by [`cheapest_uniform`]) plus an arbitrary subset of the
//! candidate data edges, with the epoch count planned per configuration by
//! the evaluator. They differ in how they walk that space:
//!
//! * [`double_climb`]: outer pass over cooperation degrees, inner greedy
//!   climb that buys data edges by benefit per unit cost until the
//!   configuration is feasible. Cheap, with a bounded evaluation count.
//! * [`opt_unif`]: restricts data edges to a uniform per-learner degree
//!   and sweeps both degrees.
//! * [`brute_force`]: exhaustive over data-edge subsets for each degree,
//!   with cost-ordered pruning. Exact within the design space, exponential.
//! * [`ga`](ga::ga): genetic search over data-edge subsets per degree.

pub mod ga;
pub mod regular;

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{
    min_epochs, total_cost, EpochCount, Evaluation, Evaluator, LearningProfile,
};
use crate::model::{spectral_gap, Selection, Topology};
use crate::stochastic::GridParams;

pub use regular::cheapest_uniform;

/// Margin gains at or below this are treated as noise, not improvement.
pub const MARGIN_TOL: f64 = 1e-9;

/// A planned configuration: selected edges plus the evaluation that
/// priced it. Planners return `Option<Solution>`, `None` when nothing
/// feasible was found.
#[derive(Debug, Clone)]
pub struct Solution {
    pub ll_edges: BTreeSet<usize>,
    pub il_edges: BTreeSet<usize>,
    pub evaluation: Evaluation,
}

impl Solution {
    pub fn selection(&self) -> Selection {
        Selection::new(
            self.ll_edges.clone(),
            self.il_edges.clone(),
            self.evaluation.epochs,
        )
    }

    pub fn cost(&self) -> f64 {
        self.evaluation.cost
    }
}

/// Cost of an optional solution, infinite when absent. Keeps comparisons
/// against "no solution yet" one-sided.
pub fn solution_cost(solution: &Option<Solution>) -> f64 {
    solution.as_ref().map_or(f64::INFINITY, Solution::cost)
}

/// One step of a planner run. `edge_kind` is `base` for the cooperation
/// graph a degree starts from, `data` for an accepted data edge, `skip`
/// for a degree that was never tried (`edge_id` then carries the reason).
/// `cost` is the per-epoch cost of the selection after the step; the
/// ratios mirror [`Evaluation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: u32,
    #[serde(rename = "d_L")]
    pub d_l: usize,
    pub edge_kind: String,
    pub edge_id: String,
    pub cost: f64,
    pub g: f64,
    pub g1: f64,
    pub g2: f64,
    pub feasible: bool,
}

/// Writes a planner trace as CSV with a fixed header:
/// `step,d_L,edge_kind,edge_id,cost,g,g1,g2,feasible`. The header is
/// written even when there are no rows.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    if trace.is_empty() {
        out.write_record([
            "step", "d_L", "edge_kind", "edge_id", "cost", "g", "g1", "g2", "feasible",
        ])
        .map_err(|e| Error::Csv {
            record: 0,
            reason: e.to_string(),
        })?;
    }
    for entry in trace {
        out.serialize(entry).map_err(|e| Error::Csv {
            record: entry.step as usize,
            reason: e.to_string(),
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Cooperation degrees a planner sweeps: a single learner cooperates with
/// nobody, otherwise every degree that keeps the graph simple and leaves
/// room for disagreement (a complete graph needs no search).
pub(crate) fn cooperation_degrees(l_count: usize) -> Vec<usize> {
    if l_count == 1 {
        vec![0]
    } else {
        (1..l_count).collect()
    }
}

fn edge_cost_sums(topo: &Topology, ll: &BTreeSet<usize>, il: &BTreeSet<usize>) -> (f64, f64) {
    let ll_sum = ll.iter().map(|&e| topo.ll_candidates[e].cost).sum();
    let il_sum = il.iter().map(|&e| topo.il_candidates[e].cost).sum();
    (ll_sum, il_sum)
}

fn il_edge_label(topo: &Topology, e: usize) -> String {
    let cand = &topo.il_candidates[e];
    format!(
        "{}-{}",
        topo.i_nodes[cand.i].id, topo.l_nodes[cand.l].id
    )
}

/// Greedy cover: grow a set until `set_value` reaches `threshold`, each
/// round adding the element with the smallest cost per unit of value
/// gained (ties to the cheaper element, then the smaller element). Stops
/// early when no remaining element improves the value by more than
/// [`MARGIN_TOL`]. Returns the set and its final value.
pub fn greedy_submodular<E, C, V>(
    elements: &[E],
    mut element_cost: C,
    mut set_value: V,
    threshold: f64,
) -> (BTreeSet<E>, f64)
where
    E: Copy + Ord,
    C: FnMut(E) -> f64,
    V: FnMut(&BTreeSet<E>) -> f64,
{
    let mut chosen: BTreeSet<E> = BTreeSet::new();
    let mut value = set_value(&chosen);
    while value < threshold {
        let mut best: Option<(f64, f64, E, f64)> = None;
        for &e in elements {
            if chosen.contains(&e) {
                continue;
            }
            chosen.insert(e);
            let with_e = set_value(&chosen);
            chosen.remove(&e);
            let gain = with_e - value;
            if gain <= MARGIN_TOL {
                continue;
            }
            let cost = element_cost(e);
            let ratio = cost / gain;
            let better = match &best {
                None => true,
                Some((b_ratio, b_cost, b_elem, _)) => {
                    match ratio.total_cmp(b_ratio).then(cost.total_cmp(b_cost)) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Greater => false,
                        std::cmp::Ordering::Equal => e < *b_elem,
                    }
                }
            };
            if better {
                best = Some((ratio, cost, e, with_e));
            }
        }
        let Some((_, _, elem, new_value)) = best else {
            break;
        };
        chosen.insert(elem);
        value = new_value;
    }
    (chosen, value)
}

#[derive(Debug, Clone, Copy)]
pub struct DoubleClimbParams {
    pub grid: GridParams,
    /// Stop sweeping higher degrees once both edge-cost components of the
    /// current feasible configuration strictly exceed the incumbent's.
    pub use_break_rule: bool,
}

impl Default for DoubleClimbParams {
    fn default() -> Self {
        DoubleClimbParams {
            grid: GridParams::default(),
            use_break_rule: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DoubleClimbOutcome {
    pub best: Option<Solution>,
    pub trace: Vec<TraceEntry>,
    /// Number of configuration evaluations spent, over the whole run.
    pub evaluations: u32,
}

/// Two nested climbs. The outer loop walks cooperation degrees; for each
/// one it prices the cheapest uniform graph, then greedily buys data edges
/// with the best margin gain per unit cost until the configuration turns
/// feasible or nothing helps (the [`greedy_submodular`] rule, inlined here
/// so every evaluation is counted and traced). The cheapest feasible
/// configuration across degrees wins.
pub fn double_climb(
    topo: &Topology,
    profile: &LearningProfile,
    params: &DoubleClimbParams,
) -> Result<DoubleClimbOutcome> {
    let mut evaluator = Evaluator::new(topo, profile, params.grid);
    let mut best: Option<Solution> = None;
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut evaluations = 0u32;
    let mut step = 0u32;
    let mut push = |trace: &mut Vec<TraceEntry>,
                    d_l: usize,
                    kind: &str,
                    id: String,
                    cost: f64,
                    eval: Option<&Evaluation>| {
        step += 1;
        let (g, g1, g2, feasible) = match eval {
            Some(ev) => (ev.margin, ev.g1, ev.g2, ev.feasible),
            None => (0.0, 0.0, 0.0, false),
        };
        trace.push(TraceEntry {
            step,
            d_l,
            edge_kind: kind.to_string(),
            edge_id: id,
            cost,
            g,
            g1,
            g2,
            feasible,
        });
    };

    for d_l in cooperation_degrees(topo.l_count()) {
        if (d_l * topo.l_count()) % 2 == 1 {
            push(&mut trace, d_l, "skip", "odd-degree".to_string(), 0.0, None);
            continue;
        }
        let Some(ll) = cheapest_uniform(topo, d_l) else {
            push(
                &mut trace,
                d_l,
                "skip",
                "no-regular-graph".to_string(),
                0.0,
                None,
            );
            continue;
        };
        let mut il: BTreeSet<usize> = BTreeSet::new();
        let mut current = evaluator.evaluate(&ll, &il)?;
        evaluations += 1;
        let per_epoch = |ll: &BTreeSet<usize>, il: &BTreeSet<usize>, epochs: u32| {
            crate::learning::per_epoch_cost(
                topo,
                &Selection::new(ll.clone(), il.clone(), epochs.max(1)),
            )
        };
        push(
            &mut trace,
            d_l,
            "base",
            "-".to_string(),
            per_epoch(&ll, &il, current.epochs),
            Some(&current),
        );

        while !current.feasible {
            let mut chosen: Option<(f64, f64, usize, Evaluation)> = None;
            for e in 0..topo.il_candidates.len() {
                if il.contains(&e) {
                    continue;
                }
                il.insert(e);
                let cand = evaluator.evaluate(&ll, &il)?;
                il.remove(&e);
                evaluations += 1;
                let gain = cand.margin - current.margin;
                if gain <= MARGIN_TOL {
                    continue;
                }
                let cost = topo.il_candidates[e].cost;
                let ratio = cost / gain;
                let better = match &chosen {
                    None => true,
                    Some((b_ratio, b_cost, b_e, _)) => {
                        match ratio.total_cmp(b_ratio).then(cost.total_cmp(b_cost)) {
                            std::cmp::Ordering::Less => true,
                            std::cmp::Ordering::Greater => false,
                            std::cmp::Ordering::Equal => e < *b_e,
                        }
                    }
                };
                if better {
                    chosen = Some((ratio, cost, e, cand));
                }
            }
            let Some((_, _, e, eval)) = chosen else {
                break;
            };
            il.insert(e);
            current = eval;
            push(
                &mut trace,
                d_l,
                "data",
                il_edge_label(topo, e),
                per_epoch(&ll, &il, current.epochs),
                Some(&current),
            );
        }

        if current.feasible && current.cost < solution_cost(&best) {
            best = Some(Solution {
                ll_edges: ll.clone(),
                il_edges: il.clone(),
                evaluation: current.clone(),
            });
        }

        if params.use_break_rule && current.feasible {
            if let Some(incumbent) = &best {
                let (ll_cur, il_cur) = edge_cost_sums(topo, &ll, &il);
                let (ll_best, il_best) =
                    edge_cost_sums(topo, &incumbent.ll_edges, &incumbent.il_edges);
                let k_cur = f64::from(current.epochs);
                let k_best = f64::from(incumbent.evaluation.epochs);
                // Higher degrees only add cooperation edges; once both
                // edge bills already exceed the incumbent's, no later
                // degree can undercut it.
                if k_cur * ll_cur > k_best * ll_best && k_cur * il_cur > k_best * il_best {
                    break;
                }
            }
        }
    }

    Ok(DoubleClimbOutcome {
        best,
        trace,
        evaluations,
    })
}

#[derive(Debug, Clone)]
pub struct OptUnifOutcome {
    pub best: Option<Solution>,
    pub evaluations: u32,
}

/// Uniform-degree sweep: every learner gets the same number of data feeds
/// (its cheapest candidates), every cooperation graph is uniform. The
/// cheapest feasible pair of degrees wins. Data degree 0 is included, so
/// the sweep covers pure cooperation.
pub fn opt_unif(
    topo: &Topology,
    profile: &LearningProfile,
    grid: GridParams,
) -> Result<OptUnifOutcome> {
    let mut evaluator = Evaluator::new(topo, profile, grid);
    let mut best: Option<Solution> = None;
    let mut evaluations = 0u32;

    let mut feeds: Vec<Vec<usize>> = vec![Vec::new(); topo.l_count()];
    for (idx, cand) in topo.il_candidates.iter().enumerate() {
        feeds[cand.l].push(idx);
    }
    for list in &mut feeds {
        list.sort_by(|&x, &y| {
            topo.il_candidates[x]
                .cost
                .total_cmp(&topo.il_candidates[y].cost)
                .then(x.cmp(&y))
        });
    }
    // A uniform data degree must be honored by every learner.
    let max_d_i = feeds.iter().map(Vec::len).min().unwrap_or(0);

    for d_l in cooperation_degrees(topo.l_count()) {
        let Some(ll) = cheapest_uniform(topo, d_l) else {
            continue;
        };
        for d_i in 0..=max_d_i {
            let il: BTreeSet<usize> = feeds
                .iter()
                .flat_map(|list| list[..d_i].iter().copied())
                .collect();
            let eval = evaluator.evaluate(&ll, &il)?;
            evaluations += 1;
            if eval.feasible && eval.cost < solution_cost(&best) {
                best = Some(Solution {
                    ll_edges: ll.clone(),
                    il_edges: il,
                    evaluation: eval,
                });
            }
        }
    }

    Ok(OptUnifOutcome { best, evaluations })
}

#[derive(Debug, Clone, Copy)]
pub struct BruteForceParams {
    pub grid: GridParams,
    /// Upper bound on degree count times data-edge subsets.
    pub max_states: u128,
}

impl Default for BruteForceParams {
    fn default() -> Self {
        BruteForceParams {
            grid: GridParams::default(),
            max_states: 1 << 22,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceOutcome {
    pub best: Option<Solution>,
    /// Search-space size that was admitted against `max_states`.
    pub states: u128,
    /// Full (timed) evaluations actually performed after pruning.
    pub evaluations: u32,
}

/// Exhaustive search over data-edge subsets for every cooperation degree.
///
/// The expensive part of an evaluation is the learning-time analysis, so
/// subsets are first ranked by total cost using only the epoch planner
/// (cheap), then checked against the deadline in cost order. The first
/// subset that passes is that degree's optimum: the deadline check never
/// changes a configuration's cost, only its admissibility. Fails fast with
/// [`Error::BruteForceTooLarge`] when the state count exceeds the bound.
pub fn brute_force(
    topo: &Topology,
    profile: &LearningProfile,
    params: &BruteForceParams,
) -> Result<BruteForceOutcome> {
    let m = topo.il_candidates.len();
    let mut degree_graphs: Vec<(usize, BTreeSet<usize>)> = Vec::new();
    for d_l in cooperation_degrees(topo.l_count()) {
        if let Some(ll) = cheapest_uniform(topo, d_l) {
            degree_graphs.push((d_l, ll));
        }
    }
    let per_degree: u128 = if m >= 127 { u128::MAX } else { 1u128 << m };
    let states = (degree_graphs.len() as u128).saturating_mul(per_degree);
    if states > params.max_states || (m >= 64 && !degree_graphs.is_empty()) {
        return Err(Error::BruteForceTooLarge {
            states,
            bound: params.max_states,
        });
    }

    let mut evaluator = Evaluator::new(topo, profile, params.grid);
    let mut best: Option<Solution> = None;
    let mut evaluations = 0u32;

    for (_, ll) in &degree_graphs {
        let gap = spectral_gap(topo, ll);
        if gap <= 0.0 {
            continue;
        }
        // Rank all error-feasible subsets by total cost without touching
        // the stochastic engine.
        let mut ranked: Vec<(f64, u64)> = Vec::new();
        for mask in 0..(1u64 << m) {
            let il = mask_to_set(mask);
            if let EpochCount::Feasible(k) = min_epochs(topo, profile, &il, gap)? {
                let selection = Selection::new(ll.clone(), il, k);
                ranked.push((total_cost(topo, &selection), mask));
            }
        }
        ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for (cost, mask) in ranked {
            // A subset at least as dear as the incumbent cannot win.
            if cost >= solution_cost(&best) {
                break;
            }
            let il = mask_to_set(mask);
            let eval = evaluator.evaluate(ll, &il)?;
            evaluations += 1;
            if eval.feasible {
                debug_assert!((eval.cost - cost).abs() <= 1e-9 * cost.max(1.0));
                best = Some(Solution {
                    ll_edges: ll.clone(),
                    il_edges: il,
                    evaluation: eval,
                });
                break;
            }
        }
    }

    Ok(BruteForceOutcome {
        best,
        states,
        evaluations,
    })
}

fn mask_to_set(mask: u64) -> BTreeSet<usize> {
    (0..64).filter(|&b| mask & (1u64 << b) != 0).collect()
}
