//! Monte Carlo replica of the epoch process.
//!
//! Each replication plays the selected configuration forward: every epoch,
//! connected I-nodes draw generation times, every learner waits for its
//! slowest feed, computes on its accumulated data, and the epoch ends when
//! the slowest learner finishes.
//!
//! Reproducibility contract: draws come from ChaCha8 streams keyed by
//! (replication, epoch, node), with a fixed draw order inside each stream,
//! and replications are aggregated in fixed 8192-rep chunks combined in
//! chunk order. Results are therefore byte-identical for a given seed no
//! matter how many threads run the chunks.

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Selection, Topology};

/// How an I-node's generation time relates to its outgoing deliveries.
/// `Independent` draws a fresh time per selected edge; `Shared` draws once
/// per epoch and every delivery from that node takes the same time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawMode {
    Independent,
    Shared,
}

/// One bar of activity: delivery bars carry kind 'I' (one per selected
/// edge, all starting at the epoch start), compute bars carry kind 'L'
/// (one per learner per epoch, starting when its last feed lands).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanttEvent {
    pub node: String,
    pub kind: char,
    pub epoch: u32,
    pub start: f64,
    pub end: f64,
}

/// Aggregates over all replications; standard errors are sample standard
/// deviations divided by sqrt(reps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub per_epoch_mean: Vec<f64>,
    pub per_epoch_std_error: Vec<f64>,
    pub total_mean: f64,
    pub total_std_error: f64,
    pub reps: u64,
    pub seed: u64,
}

const CHUNK_REPS: u64 = 8192;

/// Stream id layout: replication (28 bits) | epoch (20) | kind (1) | node (15).
const REP_BITS: u32 = 28;
const EPOCH_BITS: u32 = 20;
const NODE_BITS: u32 = 15;

#[derive(Clone, Copy)]
enum StreamKind {
    Delivery = 0,
    Compute = 1,
}

fn stream_for(rep: u64, epoch: u32, kind: StreamKind, node: usize) -> u64 {
    debug_assert!(rep < 1 << REP_BITS);
    debug_assert!((epoch as u64) < 1 << EPOCH_BITS);
    debug_assert!((node as u64) < 1 << NODE_BITS);
    (rep << (EPOCH_BITS + 1 + NODE_BITS))
        | ((epoch as u64) << (1 + NODE_BITS))
        | ((kind as u64) << NODE_BITS)
        | node as u64
}

/// Selection-dependent tables shared by every replication.
struct Layout {
    /// Per I-node: selected (l, edge index) pairs, sorted by l. The sort
    /// order fixes the draw order inside the node's stream.
    edges_by_i: Vec<Vec<(usize, usize)>>,
    /// Per L-node: selected incoming edge indices.
    feeds_by_l: Vec<Vec<usize>>,
    /// Per L-node: total selected feed rate (samples per epoch).
    rate_into: Vec<f64>,
}

fn build_layout(topo: &Topology, selection: &Selection) -> Result<Layout> {
    let mut edges_by_i = vec![Vec::new(); topo.i_count()];
    let mut feeds_by_l = vec![Vec::new(); topo.l_count()];
    let mut rate_into = vec![0.0; topo.l_count()];
    for &e in &selection.il_edges {
        let cand = topo.il_candidates.get(e).ok_or(Error::NodeIndexOutOfRange {
            kind: 'e',
            index: e,
            len: topo.il_candidates.len(),
        })?;
        edges_by_i[cand.i].push((cand.l, e));
        feeds_by_l[cand.l].push(e);
        rate_into[cand.l] += topo.i_nodes[cand.i].rate;
    }
    for edges in &mut edges_by_i {
        edges.sort_unstable();
    }
    for node in &topo.l_nodes {
        if node.initial_samples <= 0.0 {
            return Err(Error::ZeroBaseSamples(node.id.clone()));
        }
    }
    Ok(Layout {
        edges_by_i,
        feeds_by_l,
        rate_into,
    })
}

/// Play one replication; `durations` receives one entry per epoch, and
/// `gantt`, when present, one bar per delivery and per compute period.
fn replicate(
    topo: &Topology,
    layout: &Layout,
    epochs: u32,
    template: &ChaCha8Rng,
    rep: u64,
    mode: DrawMode,
    delivery: &mut HashMap<usize, f64>,
    durations: &mut Vec<f64>,
    mut gantt: Option<&mut Vec<GanttEvent>>,
) {
    durations.clear();
    let mut clock = 0.0;
    for k in 1..=epochs {
        let start = clock;
        for (i, edges) in layout.edges_by_i.iter().enumerate() {
            if edges.is_empty() {
                continue;
            }
            let mut rng = template.clone();
            rng.set_stream(stream_for(rep, k, StreamKind::Delivery, i));
            let mut shared_draw = None;
            for &(_, e) in edges {
                let d = match mode {
                    DrawMode::Independent => topo.i_nodes[i].gen_time.sample(&mut rng),
                    DrawMode::Shared => *shared_draw
                        .get_or_insert_with(|| topo.i_nodes[i].gen_time.sample(&mut rng)),
                };
                delivery.insert(e, d);
                if let Some(events) = gantt.as_deref_mut() {
                    events.push(GanttEvent {
                        node: topo.i_nodes[i].id.clone(),
                        kind: 'I',
                        epoch: k,
                        start,
                        end: start + d,
                    });
                }
            }
        }
        let mut barrier = start;
        for (l, node) in topo.l_nodes.iter().enumerate() {
            let ready = start
                + layout.feeds_by_l[l]
                    .iter()
                    .map(|e| delivery[e])
                    .fold(0.0, f64::max);
            let scale =
                (node.initial_samples + (k - 1) as f64 * layout.rate_into[l]) / node.initial_samples;
            let mut rng = template.clone();
            rng.set_stream(stream_for(rep, k, StreamKind::Compute, l));
            let end = ready + node.base_compute.sample(&mut rng) * scale;
            if let Some(events) = gantt.as_deref_mut() {
                events.push(GanttEvent {
                    node: node.id.clone(),
                    kind: 'L',
                    epoch: k,
                    start: ready,
                    end,
                });
            }
            barrier = barrier.max(end);
        }
        durations.push(barrier - start);
        clock = barrier;
    }
}

/// Per-epoch durations of one replication.
pub fn run_replication(
    topo: &Topology,
    selection: &Selection,
    seed: u64,
    rep: u64,
    mode: DrawMode,
) -> Result<Vec<f64>> {
    let layout = build_layout(topo, selection)?;
    let template = ChaCha8Rng::seed_from_u64(seed);
    let mut delivery = HashMap::new();
    let mut durations = Vec::with_capacity(selection.epochs as usize);
    replicate(
        topo,
        &layout,
        selection.epochs,
        &template,
        rep,
        mode,
        &mut delivery,
        &mut durations,
        None,
    );
    Ok(durations)
}

/// Schedule bars of one replication, alongside its per-epoch durations.
pub fn replication_gantt(
    topo: &Topology,
    selection: &Selection,
    seed: u64,
    rep: u64,
    mode: DrawMode,
) -> Result<(Vec<f64>, Vec<GanttEvent>)> {
    let layout = build_layout(topo, selection)?;
    let template = ChaCha8Rng::seed_from_u64(seed);
    let mut delivery = HashMap::new();
    let mut durations = Vec::with_capacity(selection.epochs as usize);
    let mut events = Vec::new();
    replicate(
        topo,
        &layout,
        selection.epochs,
        &template,
        rep,
        mode,
        &mut delivery,
        &mut durations,
        Some(&mut events),
    );
    Ok((durations, events))
}

struct ChunkSums {
    epoch_sum: Vec<f64>,
    epoch_sumsq: Vec<f64>,
    total_sum: f64,
    total_sumsq: f64,
}

fn run_chunk(
    topo: &Topology,
    layout: &Layout,
    epochs: u32,
    template: &ChaCha8Rng,
    mode: DrawMode,
    rep_lo: u64,
    rep_hi: u64,
) -> ChunkSums {
    let k = epochs as usize;
    let mut sums = ChunkSums {
        epoch_sum: vec![0.0; k],
        epoch_sumsq: vec![0.0; k],
        total_sum: 0.0,
        total_sumsq: 0.0,
    };
    let mut delivery = HashMap::new();
    let mut durations = Vec::with_capacity(k);
    for rep in rep_lo..rep_hi {
        replicate(
            topo,
            layout,
            epochs,
            template,
            rep,
            mode,
            &mut delivery,
            &mut durations,
            None,
        );
        let mut total = 0.0;
        for (idx, &d) in durations.iter().enumerate() {
            sums.epoch_sum[idx] += d;
            sums.epoch_sumsq[idx] += d * d;
            total += d;
        }
        sums.total_sum += total;
        sums.total_sumsq += total * total;
    }
    sums
}

fn mean_and_se(sum: f64, sumsq: f64, n: f64) -> (f64, f64) {
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Estimate per-epoch and total expected durations over `reps`
/// replications. Chunks of 8192 replications are simulated in parallel and
/// combined in chunk order, so the result depends only on the seed.
pub fn monte_carlo(
    topo: &Topology,
    selection: &Selection,
    reps: u64,
    seed: u64,
    mode: DrawMode,
) -> Result<SimStats> {
    if reps < 100 {
        return Err(Error::TooFewReplications(reps));
    }
    assert!(reps < 1 << REP_BITS, "replication count exceeds the stream space");
    assert!(
        (selection.epochs as u64) < 1 << EPOCH_BITS,
        "epoch count exceeds the stream space"
    );
    assert!(
        topo.l_count().max(topo.i_count()) < 1 << NODE_BITS,
        "node count exceeds the stream space"
    );
    let layout = build_layout(topo, selection)?;
    let template = ChaCha8Rng::seed_from_u64(seed);
    let chunk_count = reps.div_ceil(CHUNK_REPS);
    let chunks: Vec<ChunkSums> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK_REPS;
            let hi = (lo + CHUNK_REPS).min(reps);
            run_chunk(topo, &layout, selection.epochs, &template, mode, lo, hi)
        })
        .collect();
    let k = selection.epochs as usize;
    let mut epoch_sum = vec![0.0; k];
    let mut epoch_sumsq = vec![0.0; k];
    let mut total_sum = 0.0;
    let mut total_sumsq = 0.0;
    for c in &chunks {
        for idx in 0..k {
            epoch_sum[idx] += c.epoch_sum[idx];
            epoch_sumsq[idx] += c.epoch_sumsq[idx];
        }
        total_sum += c.total_sum;
        total_sumsq += c.total_sumsq;
    }
    let n = reps as f64;
    let mut per_epoch_mean = Vec::with_capacity(k);
    let mut per_epoch_std_error = Vec::with_capacity(k);
    for idx in 0..k {
        let (mean, se) = mean_and_se(epoch_sum[idx], epoch_sumsq[idx], n);
        per_epoch_mean.push(mean);
        per_epoch_std_error.push(se);
    }
    let (total_mean, total_std_error) = mean_and_se(total_sum, total_sumsq, n);
    Ok(SimStats {
        per_epoch_mean,
        per_epoch_std_error,
        total_mean,
        total_std_error,
        reps,
        seed,
    })
}

/// Write bars as CSV with header `node,kind,epoch,start,end`.
pub fn write_gantt_csv<W: Write>(events: &[GanttEvent], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for event in events {
        w.serialize(event).map_err(|e| Error::Csv {
            record: 0,
            reason: e.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IlCandidate, INode, LNode};
    use crate::stochastic::{closed_form_time_exponential, DistributionSpec};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeSet;

    fn exp_instance(l_count: usize, i_count: usize, rate: f64) -> (Topology, BTreeSet<usize>) {
        let l_nodes = (0..l_count)
            .map(|l| LNode {
                id: format!("l{l}"),
                op_cost: 0.0,
                base_compute: DistributionSpec::Exponential { rate: 0.6 },
                initial_samples: 100.0,
            })
            .collect();
        let i_nodes = (0..i_count)
            .map(|i| INode {
                id: format!("i{i}"),
                op_cost: 0.0,
                gen_time: DistributionSpec::Exponential { rate: 1.0 },
                rate,
            })
            .collect();
        let mut il_candidates = Vec::new();
        for i in 0..i_count {
            for l in 0..l_count {
                il_candidates.push(IlCandidate { i, l, cost: 0.1 });
            }
        }
        let edges = (0..il_candidates.len()).collect();
        (
            Topology {
                l_nodes,
                i_nodes,
                ll_candidates: vec![],
                il_candidates,
            },
            edges,
        )
    }

    #[test]
    fn same_seed_reproduces_stats_exactly() {
        let (topo, edges) = exp_instance(2, 2, 50.0);
        let sel = Selection::new(BTreeSet::new(), edges, 2);
        let a = monte_carlo(&topo, &sel, 500, 11, DrawMode::Independent).unwrap();
        let b = monte_carlo(&topo, &sel, 500, 11, DrawMode::Independent).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(&topo, &sel, 500, 12, DrawMode::Independent).unwrap();
        assert_ne!(a.total_mean, c.total_mean);
    }

    #[test]
    fn stats_match_a_manual_replication_loop_bit_for_bit() {
        let (topo, edges) = exp_instance(2, 1, 0.0);
        let sel = Selection::new(BTreeSet::new(), edges, 3);
        let stats = monte_carlo(&topo, &sel, 100, 3, DrawMode::Independent).unwrap();
        let mut total_sum = 0.0;
        let mut first_epoch_sum = 0.0;
        for rep in 0..100 {
            let d = run_replication(&topo, &sel, 3, rep, DrawMode::Independent).unwrap();
            first_epoch_sum += d[0];
            total_sum += d.iter().sum::<f64>();
        }
        assert_eq!(stats.total_mean, total_sum / 100.0);
        assert_eq!(stats.per_epoch_mean[0], first_epoch_sum / 100.0);
    }

    #[test]
    fn estimates_agree_with_the_exact_mean() {
        // Two learners, two feeds, data growth doubling epoch-2 compute:
        // the exact mean comes from the closed form.
        let (topo, edges) = exp_instance(2, 2, 50.0);
        let sel = Selection::new(BTreeSet::new(), edges.clone(), 2);
        let exact = closed_form_time_exponential(&topo, &sel).unwrap();
        let stats = monte_carlo(&topo, &sel, 200_000, 7, DrawMode::Independent).unwrap();
        let dev = (stats.total_mean - exact).abs();
        assert!(
            dev <= 3.0 * stats.total_std_error,
            "mc {} vs exact {} (se {})",
            stats.total_mean,
            exact,
            stats.total_std_error
        );
    }

    #[test]
    fn shared_draws_remove_the_across_learner_delivery_spread() {
        // One generator feeding two learners whose compute is negligible:
        // independent draws make the barrier the max of two Exp(1) draws
        // (mean 1.5); a shared draw makes it a single Exp(1) (mean 1.0).
        let (mut topo, edges) = exp_instance(2, 1, 0.0);
        topo.l_nodes[0].base_compute = DistributionSpec::Exponential { rate: 1e6 };
        topo.l_nodes[1].base_compute = DistributionSpec::Exponential { rate: 1e6 };
        let sel = Selection::new(BTreeSet::new(), edges, 1);
        let ind = monte_carlo(&topo, &sel, 100_000, 5, DrawMode::Independent).unwrap();
        let sha = monte_carlo(&topo, &sel, 100_000, 5, DrawMode::Shared).unwrap();
        assert_abs_diff_eq!(ind.total_mean, 1.5, epsilon = 0.02);
        assert_abs_diff_eq!(sha.total_mean, 1.0, epsilon = 0.02);
    }

    #[test]
    fn too_few_replications_is_rejected() {
        let (topo, edges) = exp_instance(1, 1, 0.0);
        let sel = Selection::new(BTreeSet::new(), edges, 1);
        let err = monte_carlo(&topo, &sel, 99, 1, DrawMode::Independent).unwrap_err();
        assert!(matches!(err, Error::TooFewReplications(99)));
    }

    #[test]
    fn gantt_bars_follow_the_epoch_structure() {
        let (topo, edges) = exp_instance(2, 2, 50.0);
        let sel = Selection::new(BTreeSet::new(), edges, 3);
        let (durations, events) = replication_gantt(&topo, &sel, 9, 0, DrawMode::Independent).unwrap();
        assert_eq!(durations.len(), 3);
        // One bar per selected edge and per learner, each epoch.
        assert_eq!(events.iter().filter(|e| e.kind == 'I').count(), 4 * 3);
        assert_eq!(events.iter().filter(|e| e.kind == 'L').count(), 2 * 3);
        for e in &events {
            assert!(e.end >= e.start);
        }
        // Compute bars of one learner never overlap across epochs.
        for l in ["l0", "l1"] {
            let mut bars: Vec<(f64, f64)> = events
                .iter()
                .filter(|e| e.kind == 'L' && e.node == l)
                .map(|e| (e.start, e.end))
                .collect();
            bars.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in bars.windows(2) {
                assert!(w[1].0 >= w[0].1);
            }
        }
        // Epoch boundaries: every epoch-k bar starts at or after the end of
        // the slowest epoch-(k-1) compute bar.
        for k in 2..=3u32 {
            let prev_end = events
                .iter()
                .filter(|e| e.kind == 'L' && e.epoch == k - 1)
                .map(|e| e.end)
                .fold(0.0, f64::max);
            for e in events.iter().filter(|e| e.epoch == k) {
                assert!(e.start >= prev_end - 1e-12);
            }
        }
    }

    #[test]
    fn gantt_csv_has_the_pinned_header() {
        let events = vec![GanttEvent {
            node: "l0".into(),
            kind: 'L',
            epoch: 1,
            start: 0.0,
            end: 1.5,
        }];
        let mut buf = Vec::new();
        write_gantt_csv(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "node,kind,epoch,start,end\nl0,L,1,0.0,1.5\n");
    }
}
