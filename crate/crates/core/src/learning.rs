//! Error law, epoch planning, costs, and the feasibility margin.
//!
//! A trained configuration reaches error
//! `c1 + c2 * ln(c3 + X) / sqrt(K * gamma)` after K epochs, where gamma is
//! the spectral gap of the cooperation graph and X the average dataset
//! size over nodes and epochs. Feeding more data raises X, which raises
//! the predicted error and in turn the epoch count; it pays off only
//! through the task-level accuracy the profile constants were fitted on.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{average_dataset_size, spectral_gap, Selection, Topology, FORMAT_VERSION};
use crate::stochastic::{EpochEngine, GridParams};

/// Largest epoch count any planner will consider.
pub const EPOCH_CAP: u32 = 1_000_000;

/// Fitted error-law constants and the targets a plan must meet. `t_max`
/// may be infinite when there is no deadline.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningProfile {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub eps_max: f64,
    pub t_max: f64,
}

impl LearningProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(msg));
        if !self.c1.is_finite() || self.c1 < 0.0 {
            return bad(format!("c1 = {} must be finite and >= 0", self.c1));
        }
        if !self.c2.is_finite() || self.c2 < 0.0 {
            return bad(format!("c2 = {} must be finite and >= 0", self.c2));
        }
        if !self.c3.is_finite() || self.c3 < 0.0 {
            return bad(format!("c3 = {} must be finite and >= 0", self.c3));
        }
        if !self.eps_max.is_finite() || self.eps_max <= 0.0 {
            return bad(format!("eps_max = {} must be finite and > 0", self.eps_max));
        }
        if self.t_max.is_nan() || self.t_max <= 0.0 {
            return bad(format!("t_max = {} must be > 0 (or infinite)", self.t_max));
        }
        Ok(())
    }
}

fn format_version_default() -> u32 {
    FORMAT_VERSION
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    #[serde(default = "format_version_default")]
    format_version: u32,
    c1: f64,
    c2: f64,
    c3: f64,
    eps_max: f64,
    /// Absent or null means no deadline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
}

impl LearningProfile {
    pub fn from_json(text: &str) -> Result<LearningProfile> {
        let file: ProfileFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::InvalidProfile(format!(
                "unsupported format_version {} (expected {})",
                file.format_version, FORMAT_VERSION
            )));
        }
        let profile = LearningProfile {
            c1: file.c1,
            c2: file.c2,
            c3: file.c3,
            eps_max: file.eps_max,
            t_max: file.t_max.unwrap_or(f64::INFINITY),
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_json(&self) -> String {
        let file = ProfileFile {
            format_version: FORMAT_VERSION,
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            eps_max: self.eps_max,
            t_max: self.t_max.is_finite().then_some(self.t_max),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("profile serializes");
        text.push('\n');
        text
    }
}

/// Error reached after `epochs` epochs at spectral gap `gamma` with average
/// dataset size `avg_dataset`.
pub fn predicted_error(
    profile: &LearningProfile,
    epochs: u32,
    gamma: f64,
    avg_dataset: f64,
) -> Result<f64> {
    if epochs == 0 {
        return Err(Error::ZeroEpochIndex);
    }
    if gamma <= 0.0 {
        return Err(Error::DisconnectedCooperationGraph(gamma));
    }
    let arg = profile.c3 + avg_dataset;
    if arg <= 0.0 {
        return Err(Error::NonPositiveLogArgument(arg));
    }
    Ok(profile.c1 + profile.c2 * arg.ln() / (f64::from(epochs) * gamma).sqrt())
}

/// Cost of operating one epoch: every learner's operating cost, each
/// selected cooperation and data edge's cost (cooperation edges count once
/// per unordered pair), and the operating cost of each I-node with at
/// least one selected outgoing edge.
pub fn per_epoch_cost(topo: &Topology, selection: &Selection) -> f64 {
    let mut cost: f64 = topo.l_nodes.iter().map(|n| n.op_cost).sum();
    for &e in &selection.ll_edges {
        cost += topo.ll_candidates[e].cost;
    }
    let mut i_used = vec![false; topo.i_count()];
    for &e in &selection.il_edges {
        cost += topo.il_candidates[e].cost;
        i_used[topo.il_candidates[e].i] = true;
    }
    for (i, used) in i_used.iter().enumerate() {
        if *used {
            cost += topo.i_nodes[i].op_cost;
        }
    }
    cost
}

/// Per-epoch cost times the selected epoch count.
pub fn total_cost(topo: &Topology, selection: &Selection) -> f64 {
    f64::from(selection.epochs) * per_epoch_cost(topo, selection)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// The target sits at or below the error floor c1.
    ErrorFloor,
    /// Convergence is too slow to hit the target within the epoch cap.
    EpochCapExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochCount {
    Feasible(u32),
    Infeasible { reason: InfeasibleReason },
}

/// Smallest epoch count whose predicted error meets the target, scanning
/// K = 1.. up to [`EPOCH_CAP`]. The scan is exact: the error is not
/// monotone in K for small K (the dataset keeps growing), so no bisection
/// shortcut is taken.
pub fn min_epochs(
    topo: &Topology,
    profile: &LearningProfile,
    il_edges: &BTreeSet<usize>,
    gamma: f64,
) -> Result<EpochCount> {
    profile.validate()?;
    if gamma <= 0.0 {
        return Err(Error::DisconnectedCooperationGraph(gamma));
    }
    // Same arithmetic as average_dataset_size, hoisted out of the scan.
    let l_count = topo.l_count() as f64;
    let base: f64 = topo.l_nodes.iter().map(|n| n.initial_samples).sum::<f64>() / l_count;
    let rate_sum = topo.rate_total(il_edges);
    let avg = |k: u32| base + (f64::from(k) + 1.0) / 2.0 * rate_sum / l_count;
    debug_assert_eq!(avg(1), average_dataset_size(topo, il_edges, 1));
    // X never shrinks with K, so when ln(c3 + X) stays nonnegative the
    // error never drops below c1 and a target at or under it is hopeless.
    if profile.eps_max <= profile.c1 && profile.c3 + avg(1) >= 1.0 {
        return Ok(EpochCount::Infeasible {
            reason: InfeasibleReason::ErrorFloor,
        });
    }
    for k in 1..=EPOCH_CAP {
        if predicted_error(profile, k, gamma, avg(k))? <= profile.eps_max {
            return Ok(EpochCount::Feasible(k));
        }
    }
    Ok(EpochCount::Infeasible {
        reason: InfeasibleReason::EpochCapExceeded,
    })
}

/// Everything known about a candidate configuration after planning its
/// epoch count: predicted error and time, the two feasibility ratios
/// (g1 = eps_max / error, g2 = t_max / time), their minimum as the margin,
/// and the total cost. Infeasible configurations carry infinite cost; when
/// the error target itself is unreachable, the fields are reported at the
/// epoch cap and the deadline ratio is left untested (infinite).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub epochs: u32,
    pub error: f64,
    pub time: f64,
    pub g1: f64,
    pub g2: f64,
    pub margin: f64,
    pub feasible: bool,
    pub cost: f64,
    pub spectral_gap: f64,
    pub avg_dataset: f64,
}

/// Evaluates configurations against one topology and profile, reusing the
/// stochastic engine's per-node caches across calls.
pub struct Evaluator<'t> {
    topo: &'t Topology,
    profile: LearningProfile,
    engine: EpochEngine<'t>,
}

impl<'t> Evaluator<'t> {
    pub fn new(topo: &'t Topology, profile: &LearningProfile, params: GridParams) -> Self {
        Evaluator {
            topo,
            profile: profile.clone(),
            engine: EpochEngine::new(topo, params),
        }
    }

    pub fn topology(&self) -> &'t Topology {
        self.topo
    }

    pub fn profile(&self) -> &LearningProfile {
        &self.profile
    }

    pub fn evaluate(
        &mut self,
        ll_edges: &BTreeSet<usize>,
        il_edges: &BTreeSet<usize>,
    ) -> Result<Evaluation> {
        let gap = spectral_gap(self.topo, ll_edges);
        if gap <= 0.0 {
            return Ok(Evaluation {
                epochs: EPOCH_CAP,
                error: f64::INFINITY,
                time: f64::INFINITY,
                g1: 0.0,
                g2: 0.0,
                margin: 0.0,
                feasible: false,
                cost: f64::INFINITY,
                spectral_gap: gap,
                avg_dataset: average_dataset_size(self.topo, il_edges, EPOCH_CAP),
            });
        }
        match min_epochs(self.topo, &self.profile, il_edges, gap)? {
            EpochCount::Infeasible { .. } => {
                let avg = average_dataset_size(self.topo, il_edges, EPOCH_CAP);
                let error = predicted_error(&self.profile, EPOCH_CAP, gap, avg)?;
                let g1 = self.profile.eps_max / error;
                Ok(Evaluation {
                    epochs: EPOCH_CAP,
                    error,
                    time: f64::INFINITY,
                    g1,
                    g2: f64::INFINITY,
                    margin: g1,
                    feasible: false,
                    cost: f64::INFINITY,
                    spectral_gap: gap,
                    avg_dataset: avg,
                })
            }
            EpochCount::Feasible(epochs) => {
                let avg = average_dataset_size(self.topo, il_edges, epochs);
                let error = predicted_error(&self.profile, epochs, gap, avg)?;
                let selection = Selection::new(ll_edges.clone(), il_edges.clone(), epochs);
                let time = self.engine.expected_time(&selection)?;
                let g1 = self.profile.eps_max / error;
                let g2 = self.profile.t_max / time;
                let margin = g1.min(g2);
                let feasible = margin >= 1.0;
                Ok(Evaluation {
                    epochs,
                    error,
                    time,
                    g1,
                    g2,
                    margin,
                    feasible,
                    cost: if feasible {
                        total_cost(self.topo, &selection)
                    } else {
                        f64::INFINITY
                    },
                    spectral_gap: gap,
                    avg_dataset: avg,
                })
            }
        }
    }
}

/// One-shot evaluation with a fresh engine.
pub fn evaluate(
    topo: &Topology,
    profile: &LearningProfile,
    ll_edges: &BTreeSet<usize>,
    il_edges: &BTreeSet<usize>,
    params: GridParams,
) -> Result<Evaluation> {
    Evaluator::new(topo, profile, params).evaluate(ll_edges, il_edges)
}

/// One fitted-law observation: a training run that reached `error` after
/// `k` epochs at spectral gap `gamma` with average dataset size `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileObservation {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "K")]
    pub k: u32,
    pub gamma: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub mse: f64,
}

fn validate_observations(obs: &[ProfileObservation]) -> Result<()> {
    if obs.len() < 4 {
        return Err(Error::TooFewObservations(obs.len()));
    }
    for (index, o) in obs.iter().enumerate() {
        let bad = |reason: &str| Err(Error::BadObservation {
            index,
            reason: reason.into(),
        });
        if !o.x.is_finite() || o.x < 0.0 {
            return bad("X must be finite and >= 0");
        }
        if o.k == 0 {
            return bad("K must be >= 1");
        }
        if !o.gamma.is_finite() || o.gamma <= 0.0 {
            return bad("gamma must be finite and > 0");
        }
        if !o.error.is_finite() {
            return bad("error must be finite");
        }
    }
    let first = obs[0].x;
    if obs.iter().all(|o| o.x == first) {
        return Err(Error::DegenerateObservations);
    }
    Ok(())
}

/// Least-squares (c1, c2) for a fixed c3 on the basis
/// phi = ln(c3 + X) / sqrt(K * gamma); returns the mean squared error.
/// Fits with c2 < 0 are rejected (the law's data term never helps error).
fn fit_for_c3(obs: &[ProfileObservation], c3: f64) -> Option<(f64, f64, f64)> {
    let n = obs.len() as f64;
    let mut s_phi = 0.0;
    let mut s_phi2 = 0.0;
    let mut s_y = 0.0;
    let mut s_phiy = 0.0;
    for o in obs {
        let arg = c3 + o.x;
        if arg <= 0.0 {
            return None;
        }
        let phi = arg.ln() / (f64::from(o.k) * o.gamma).sqrt();
        s_phi += phi;
        s_phi2 += phi * phi;
        s_y += o.error;
        s_phiy += phi * o.error;
    }
    let det = n * s_phi2 - s_phi * s_phi;
    if det.abs() < 1e-300 {
        return None;
    }
    let c1 = (s_y * s_phi2 - s_phi * s_phiy) / det;
    let c2 = (n * s_phiy - s_phi * s_y) / det;
    if c2 < 0.0 {
        return None;
    }
    let mut mse = 0.0;
    for o in obs {
        let phi = (c3 + o.x).ln() / (f64::from(o.k) * o.gamma).sqrt();
        let r = o.error - c1 - c2 * phi;
        mse += r * r;
    }
    Some((c1, c2, mse / n))
}

/// Fit the error-law constants to observations: closed-form least squares
/// in (c1, c2) nested inside a log-spaced scan over c3, refined by golden
/// section around the best scan point.
pub fn fit_profile(obs: &[ProfileObservation]) -> Result<FitResult> {
    validate_observations(obs)?;
    // c3 = 0 plus a light log-spaced sweep over 18 decades.
    let mut candidates = vec![0.0];
    let points = 120;
    for idx in 0..points {
        let exp = -6.0 + 18.0 * idx as f64 / (points - 1) as f64;
        candidates.push(10f64.powf(exp));
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, &c3) in candidates.iter().enumerate() {
        if let Some((_, _, mse)) = fit_for_c3(obs, c3) {
            if best.map_or(true, |(_, best_mse)| mse < best_mse) {
                best = Some((idx, mse));
            }
        }
    }
    let Some((best_idx, _)) = best else {
        // Degenerate data (e.g. constant error): flat law with no data term.
        let mean = obs.iter().map(|o| o.error).sum::<f64>() / obs.len() as f64;
        let mse =
            obs.iter().map(|o| (o.error - mean).powi(2)).sum::<f64>() / obs.len() as f64;
        return Ok(FitResult {
            c1: mean.max(0.0),
            c2: 0.0,
            c3: 0.0,
            mse,
        });
    };
    let mse_at = |c3: f64| fit_for_c3(obs, c3).map_or(f64::INFINITY, |(_, _, m)| m);
    // Refine between the scan neighbors of the winner. Around c3 = 0 the
    // bracket is linear; elsewhere it is golden section in log space.
    let refined = if best_idx == 0 {
        golden_min(&|t| mse_at(t), 0.0, candidates[1])
    } else {
        let lo = candidates[best_idx - 1].ln();
        let hi = candidates[(best_idx + 1).min(candidates.len() - 1)].ln();
        golden_min(&|t| mse_at(t.exp()), lo, hi).exp()
    };
    let best_c3 = if mse_at(refined) < mse_at(candidates[best_idx]) {
        refined
    } else {
        candidates[best_idx]
    };
    let (c1, c2, mse) = fit_for_c3(obs, best_c3).expect("winning c3 fits");
    Ok(FitResult {
        c1,
        c2,
        c3: best_c3,
        mse,
    })
}

/// Golden-section minimizer on [lo, hi], tolerance scaled to the bracket.
fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let tol = 1e-12 * (hi - lo).abs().max(1e-12);
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while (hi - lo).abs() > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Read observations as CSV with header `X,K,gamma,error`.
pub fn read_observations_csv<R: Read>(reader: R) -> Result<Vec<ProfileObservation>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (record, row) in r.deserialize().enumerate() {
        let obs: ProfileObservation = row.map_err(|e| Error::Csv {
            record: record + 1,
            reason: e.to_string(),
        })?;
        out.push(obs);
    }
    Ok(out)
}

/// Write observations as CSV with header `X,K,gamma,error`.
pub fn write_observations_csv<W: Write>(obs: &[ProfileObservation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for o in obs {
        w.serialize(o).map_err(|e| Error::Csv {
            record: 0,
            reason: e.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}
