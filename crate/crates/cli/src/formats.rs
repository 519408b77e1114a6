//! On-disk formats owned by the front end: solution files, fit results,
//! and the row shapes of the comparison CSVs. Instances and profiles are
//! parsed by the library itself.

use std::collections::{BTreeSet, HashMap};

use anyhow::{bail, Context};
use netlearn::{Evaluation, Selection, Solution, Topology, FORMAT_VERSION};
use serde::{Deserialize, Serialize};

fn version_default() -> u32 {
    FORMAT_VERSION
}

/// Kept finite on disk: non-finite metrics (no deadline, infinite cost)
/// become nulls and read back as `None`.
fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    #[serde(default = "version_default")]
    pub format_version: u32,
    pub algorithm: String,
    pub feasible: bool,
    /// Cooperation edges as id pairs, in candidate order.
    #[serde(default)]
    pub ll_edges: Vec<(String, String)>,
    /// Data edges as (source id, learner id) pairs.
    #[serde(default)]
    pub il_edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_dataset: Option<f64>,
    /// Configuration evaluations the planner spent.
    pub evaluations: u32,
}

impl SolutionFile {
    pub fn from_solution(
        topo: &Topology,
        algorithm: &str,
        solution: &Solution,
        evaluations: u32,
    ) -> SolutionFile {
        let eval: &Evaluation = &solution.evaluation;
        SolutionFile {
            format_version: FORMAT_VERSION,
            algorithm: algorithm.to_string(),
            feasible: eval.feasible,
            ll_edges: solution
                .ll_edges
                .iter()
                .map(|&e| {
                    let c = &topo.ll_candidates[e];
                    (topo.l_nodes[c.a].id.clone(), topo.l_nodes[c.b].id.clone())
                })
                .collect(),
            il_edges: solution
                .il_edges
                .iter()
                .map(|&e| {
                    let c = &topo.il_candidates[e];
                    (topo.i_nodes[c.i].id.clone(), topo.l_nodes[c.l].id.clone())
                })
                .collect(),
            epochs: Some(eval.epochs),
            error: finite(eval.error),
            time: finite(eval.time),
            cost: finite(eval.cost),
            g1: finite(eval.g1),
            g2: finite(eval.g2),
            margin: finite(eval.margin),
            spectral_gap: finite(eval.spectral_gap),
            avg_dataset: finite(eval.avg_dataset),
            evaluations,
        }
    }

    pub fn infeasible(algorithm: &str, evaluations: u32) -> SolutionFile {
        SolutionFile {
            format_version: FORMAT_VERSION,
            algorithm: algorithm.to_string(),
            feasible: false,
            ll_edges: Vec::new(),
            il_edges: Vec::new(),
            epochs: None,
            error: None,
            time: None,
            cost: None,
            g1: None,
            g2: None,
            margin: None,
            spectral_gap: None,
            avg_dataset: None,
            evaluations,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("solution serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> anyhow::Result<SolutionFile> {
        let file: SolutionFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            bail!(
                "unsupported solution format_version {} (expected {})",
                file.format_version,
                FORMAT_VERSION
            );
        }
        Ok(file)
    }

    /// Maps the id pairs back onto the instance's candidate edges.
    /// Cooperation pairs are accepted in either order.
    pub fn resolve(&self, topo: &Topology) -> anyhow::Result<Selection> {
        let norm = |a: &str, b: &str| {
            if a <= b {
                (a.to_string(), b.to_string())
            } else {
                (b.to_string(), a.to_string())
            }
        };
        let mut ll_index: HashMap<(String, String), usize> = HashMap::new();
        for (idx, c) in topo.ll_candidates.iter().enumerate() {
            ll_index.insert(norm(&topo.l_nodes[c.a].id, &topo.l_nodes[c.b].id), idx);
        }
        let mut il_index: HashMap<(String, String), usize> = HashMap::new();
        for (idx, c) in topo.il_candidates.iter().enumerate() {
            il_index.insert(
                (topo.i_nodes[c.i].id.clone(), topo.l_nodes[c.l].id.clone()),
                idx,
            );
        }
        let mut ll = BTreeSet::new();
        for (a, b) in &self.ll_edges {
            let idx = ll_index
                .get(&norm(a, b))
                .with_context(|| format!("solution references unknown cooperation edge {a}-{b}"))?;
            ll.insert(*idx);
        }
        let mut il = BTreeSet::new();
        for (i, l) in &self.il_edges {
            let idx = il_index
                .get(&(i.clone(), l.clone()))
                .with_context(|| format!("solution references unknown data edge {i}-{l}"))?;
            il.insert(*idx);
        }
        let epochs = self
            .epochs
            .context("solution file has no epoch count")?;
        Ok(Selection::new(ll, il, epochs))
    }
}

/// Output of `fit`: coefficients plus the fit's mean squared error. With
/// `eps_max` (and optionally `t_max`) present the file doubles as a
/// learning profile.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitFile {
    #[serde(default = "version_default")]
    pub format_version: u32,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

impl FitFile {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("fit result serializes");
        text.push('\n');
        text
    }
}

/// One planner per row; the shape columns are normalized so instances of
/// different sizes plot together.
#[derive(Debug, Serialize)]
pub struct CompareRow {
    pub algorithm: String,
    pub feasible: bool,
    pub cost: f64,
    pub d_l_normalized: f64,
    pub il_fraction: f64,
    pub extra_samples_per_epoch: f64,
}

impl CompareRow {
    pub fn new(topo: &Topology, algorithm: &str, best: &Option<Solution>) -> CompareRow {
        match best {
            None => CompareRow {
                algorithm: algorithm.to_string(),
                feasible: false,
                cost: f64::INFINITY,
                d_l_normalized: 0.0,
                il_fraction: 0.0,
                extra_samples_per_epoch: 0.0,
            },
            Some(sol) => {
                let l = topo.l_count() as f64;
                let d_l_normalized = if topo.l_count() > 1 {
                    (2.0 * sol.ll_edges.len() as f64 / l) / (l - 1.0)
                } else {
                    0.0
                };
                let il_fraction = if topo.il_candidates.is_empty() {
                    0.0
                } else {
                    sol.il_edges.len() as f64 / topo.il_candidates.len() as f64
                };
                // fold from +0.0: an empty sum would otherwise be -0.0
                let extra_samples_per_epoch = sol
                    .il_edges
                    .iter()
                    .fold(0.0, |acc, &e| acc + topo.i_nodes[topo.il_candidates[e].i].rate)
                    / l;
                CompareRow {
                    algorithm: algorithm.to_string(),
                    feasible: true,
                    cost: sol.cost(),
                    d_l_normalized,
                    il_fraction,
                    extra_samples_per_epoch,
                }
            }
        }
    }
}

/// One analytic-vs-simulated comparison per epoch plus a total row.
#[derive(Debug, Serialize)]
pub struct AgreementRow {
    pub quantity: String,
    pub analytic: f64,
    pub simulated: f64,
    pub std_error: f64,
    /// |analytic - simulated| in standard errors.
    pub deviation: f64,
}

impl AgreementRow {
    pub fn new(quantity: String, analytic: f64, simulated: f64, std_error: f64) -> AgreementRow {
        let gap = (analytic - simulated).abs();
        let deviation = if std_error > 0.0 {
            gap / std_error
        } else if gap <= 1e-12 * analytic.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        };
        AgreementRow {
            quantity,
            analytic,
            simulated,
            std_error,
            deviation,
        }
    }
}
