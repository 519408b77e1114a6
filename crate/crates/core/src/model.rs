//! Network model: the two node populations, candidate edges, selections,
//! and the graph quantities the error law consumes.
//!
//! L-nodes train and exchange model state over selected L-L edges; I-nodes
//! stream fresh samples to L-nodes over selected I-L edges. Candidate edges
//! are fixed by the instance; optimizers pick subsets of them by index.

use std::collections::{BTreeSet, HashMap, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::DistributionSpec;

/// Learning node: trains on its local dataset each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LNode {
    pub id: String,
    /// Per-epoch operating cost, charged whether or not any edge touches the node.
    pub op_cost: f64,
    /// Epoch compute-time law at the initial dataset size.
    pub base_compute: DistributionSpec,
    /// Dataset size X^0 available before the first epoch.
    pub initial_samples: f64,
}

/// Information node: generates `rate` fresh samples per epoch and ships them
/// to each L-node it is wired to.
#[derive(Debug, Clone, PartialEq)]
pub struct INode {
    pub id: String,
    /// Per-epoch operating cost, charged only if at least one of its edges is selected.
    pub op_cost: f64,
    /// Delivery-time law for one epoch's batch.
    pub gen_time: DistributionSpec,
    /// Samples generated per epoch.
    pub rate: f64,
}

/// Candidate cooperation edge between two L-nodes (indices into `l_nodes`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlCandidate {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
}

/// Candidate data edge from an I-node to an L-node (indices into `i_nodes` / `l_nodes`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlCandidate {
    pub i: usize,
    pub l: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub l_nodes: Vec<LNode>,
    pub i_nodes: Vec<INode>,
    pub ll_candidates: Vec<LlCandidate>,
    pub il_candidates: Vec<IlCandidate>,
}

/// A solved configuration: chosen edge subsets (by candidate index) plus the
/// epoch count the plan runs for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub ll_edges: BTreeSet<usize>,
    pub il_edges: BTreeSet<usize>,
    pub epochs: u32,
}

impl Selection {
    pub fn new(ll_edges: BTreeSet<usize>, il_edges: BTreeSet<usize>, epochs: u32) -> Self {
        Selection {
            ll_edges,
            il_edges,
            epochs,
        }
    }
}

impl Topology {
    pub fn l_count(&self) -> usize {
        self.l_nodes.len()
    }

    pub fn i_count(&self) -> usize {
        self.i_nodes.len()
    }

    /// Indices of I-nodes wired to `l` under `il_edges`, ascending.
    pub fn connected_i_nodes(&self, il_edges: &BTreeSet<usize>, l: usize) -> Vec<usize> {
        let mut out: Vec<usize> = il_edges
            .iter()
            .map(|&e| &self.il_candidates[e])
            .filter(|c| c.l == l)
            .map(|c| c.i)
            .collect();
        out.sort_unstable();
        out
    }

    /// Sum of per-epoch sample rates arriving at `l` under `il_edges`.
    pub fn rate_into(&self, il_edges: &BTreeSet<usize>, l: usize) -> f64 {
        il_edges
            .iter()
            .map(|&e| &self.il_candidates[e])
            .filter(|c| c.l == l)
            .map(|c| self.i_nodes[c.i].rate)
            .sum()
    }

    /// Sum of per-epoch sample rates over all selected I-L edges.
    pub fn rate_total(&self, il_edges: &BTreeSet<usize>) -> f64 {
        il_edges
            .iter()
            .map(|&e| self.i_nodes[self.il_candidates[e].i].rate)
            .sum()
    }

    pub fn l_index(&self, id: &str) -> Result<usize> {
        self.l_nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| Error::UnknownNodeId(id.to_string()))
    }

    pub fn i_index(&self, id: &str) -> Result<usize> {
        self.i_nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| Error::UnknownNodeId(id.to_string()))
    }
}

/// Structural validation: ids unique, indices in range, costs and rates
/// nonnegative, no self-loops, no duplicate candidate edges, distribution
/// parameters well formed. Errors name the offending node or edge.
pub fn validate_topology(topo: &Topology) -> Result<()> {
    if topo.l_nodes.is_empty() {
        return Err(Error::NoLNodes);
    }
    let mut seen = HashSet::new();
    for node in topo.l_nodes.iter().map(|n| &n.id).chain(topo.i_nodes.iter().map(|n| &n.id)) {
        if !seen.insert(node.clone()) {
            return Err(Error::DuplicateNodeId(node.clone()));
        }
    }
    for n in &topo.l_nodes {
        if !(n.op_cost >= 0.0) {
            return Err(Error::NegativeCost {
                what: "L-node",
                id: n.id.clone(),
            });
        }
        if !(n.initial_samples >= 0.0) {
            return Err(Error::NegativeInitialSamples(n.id.clone()));
        }
        n.base_compute
            .validate()
            .map_err(|reason| Error::InvalidDistribution {
                id: n.id.clone(),
                reason,
            })?;
    }
    for n in &topo.i_nodes {
        if !(n.op_cost >= 0.0) {
            return Err(Error::NegativeCost {
                what: "I-node",
                id: n.id.clone(),
            });
        }
        if !(n.rate >= 0.0) {
            return Err(Error::NegativeRate(n.id.clone()));
        }
        n.gen_time
            .validate()
            .map_err(|reason| Error::InvalidDistribution {
                id: n.id.clone(),
                reason,
            })?;
    }
    let mut ll_seen = HashSet::new();
    for (idx, e) in topo.ll_candidates.iter().enumerate() {
        for end in [e.a, e.b] {
            if end >= topo.l_nodes.len() {
                return Err(Error::NodeIndexOutOfRange {
                    kind: 'L',
                    index: end,
                    len: topo.l_nodes.len(),
                });
            }
        }
        if e.a == e.b {
            return Err(Error::SelfLoop {
                index: idx,
                id: topo.l_nodes[e.a].id.clone(),
            });
        }
        if !(e.cost >= 0.0) {
            return Err(Error::NegativeCost {
                what: "L-L edge",
                id: format!("{}-{}", topo.l_nodes[e.a].id, topo.l_nodes[e.b].id),
            });
        }
        let key = (e.a.min(e.b), e.a.max(e.b));
        if !ll_seen.insert(key) {
            return Err(Error::DuplicateLlEdge {
                a: topo.l_nodes[key.0].id.clone(),
                b: topo.l_nodes[key.1].id.clone(),
            });
        }
    }
    let mut il_seen = HashSet::new();
    for e in &topo.il_candidates {
        if e.i >= topo.i_nodes.len() {
            return Err(Error::NodeIndexOutOfRange {
                kind: 'I',
                index: e.i,
                len: topo.i_nodes.len(),
            });
        }
        if e.l >= topo.l_nodes.len() {
            return Err(Error::NodeIndexOutOfRange {
                kind: 'L',
                index: e.l,
                len: topo.l_nodes.len(),
            });
        }
        if !(e.cost >= 0.0) {
            return Err(Error::NegativeCost {
                what: "I-L edge",
                id: format!("{}->{}", topo.i_nodes[e.i].id, topo.l_nodes[e.l].id),
            });
        }
        if !il_seen.insert((e.i, e.l)) {
            return Err(Error::DuplicateIlEdge {
                i: topo.i_nodes[e.i].id.clone(),
                l: topo.l_nodes[e.l].id.clone(),
            });
        }
    }
    Ok(())
}

/// Comparisons on eigenvalue moduli treat differences below this as zero.
pub const MODULUS_TOL: f64 = 1e-9;

/// Spectral gap of the cooperation graph: the difference between the two
/// largest eigenvalue moduli of the binary symmetric adjacency matrix built
/// from `ll_edges` (no self-loops). Single-node graphs have gap 1 by
/// convention. A zero gap means consensus cannot mix: disconnected graphs,
/// and bipartite ones such as perfect matchings and even cycles, land there.
pub fn spectral_gap(topo: &Topology, ll_edges: &BTreeSet<usize>) -> f64 {
    let n = topo.l_nodes.len();
    if n == 1 {
        return 1.0;
    }
    let mut adj = DMatrix::<f64>::zeros(n, n);
    for &e in ll_edges {
        let c = &topo.ll_candidates[e];
        adj[(c.a, c.b)] = 1.0;
        adj[(c.b, c.a)] = 1.0;
    }
    let mut moduli: Vec<f64> = adj
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .collect();
    moduli.sort_by(|x, y| y.partial_cmp(x).expect("eigenvalues are finite"));
    let gap = moduli[0] - moduli[1];
    if gap < MODULUS_TOL {
        0.0
    } else {
        gap
    }
}

/// Expected samples held by L-node `l` after `k` epochs of deliveries:
/// X^k_l = X^0_l + k * sum of rates over selected edges into `l`.
/// `k = 0` is the initial dataset.
pub fn samples_at(
    topo: &Topology,
    il_edges: &BTreeSet<usize>,
    l: usize,
    k: u32,
) -> Result<f64> {
    if l >= topo.l_nodes.len() {
        return Err(Error::NodeIndexOutOfRange {
            kind: 'L',
            index: l,
            len: topo.l_nodes.len(),
        });
    }
    Ok(topo.l_nodes[l].initial_samples + f64::from(k) * topo.rate_into(il_edges, l))
}

/// Dataset size averaged over nodes and over epochs 1..=K, the X the error
/// law consumes. Equal to mean(X^0_l) + ((K + 1) / 2) * (sum of selected
/// rates) / |L|; the closed form is exercised against direct summation in
/// the property tests.
pub fn average_dataset_size(topo: &Topology, il_edges: &BTreeSet<usize>, epochs: u32) -> f64 {
    assert!(epochs >= 1, "average_dataset_size needs at least one epoch");
    let l_count = topo.l_nodes.len() as f64;
    let base: f64 = topo.l_nodes.iter().map(|n| n.initial_samples).sum::<f64>() / l_count;
    let rate_sum = topo.rate_total(il_edges);
    base + (f64::from(epochs) + 1.0) / 2.0 * rate_sum / l_count
}

// --- instance file format -------------------------------------------------

pub const FORMAT_VERSION: u32 = 1;

fn format_version_default() -> u32 {
    FORMAT_VERSION
}

#[derive(Serialize, Deserialize)]
struct LNodeFile {
    id: String,
    op_cost: f64,
    base_compute: DistributionSpec,
    initial_samples: f64,
}

#[derive(Serialize, Deserialize)]
struct INodeFile {
    id: String,
    op_cost: f64,
    gen_time: DistributionSpec,
    rate: f64,
}

#[derive(Serialize, Deserialize)]
struct LlEdgeFile {
    a: String,
    b: String,
    cost: f64,
}

#[derive(Serialize, Deserialize)]
struct IlEdgeFile {
    i: String,
    l: String,
    cost: f64,
}

/// On-disk instance schema: node references by id rather than index.
#[derive(Serialize, Deserialize)]
struct TopologyFile {
    #[serde(default = "format_version_default")]
    format_version: u32,
    l_nodes: Vec<LNodeFile>,
    i_nodes: Vec<INodeFile>,
    ll_edges: Vec<LlEdgeFile>,
    il_edges: Vec<IlEdgeFile>,
}

impl Topology {
    /// Parse and validate an instance from its JSON form.
    pub fn from_json(text: &str) -> Result<Topology> {
        let file: TopologyFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::InvalidProfile(format!(
                "unsupported instance format_version {}",
                file.format_version
            )));
        }
        let l_nodes: Vec<LNode> = file
            .l_nodes
            .into_iter()
            .map(|n| LNode {
                id: n.id,
                op_cost: n.op_cost,
                base_compute: n.base_compute,
                initial_samples: n.initial_samples,
            })
            .collect();
        let i_nodes: Vec<INode> = file
            .i_nodes
            .into_iter()
            .map(|n| INode {
                id: n.id,
                op_cost: n.op_cost,
                gen_time: n.gen_time,
                rate: n.rate,
            })
            .collect();
        let l_ids: HashMap<&str, usize> = l_nodes
            .iter()
            .enumerate()
            .map(|(idx, n)| (n.id.as_str(), idx))
            .collect();
        let i_ids: HashMap<&str, usize> = i_nodes
            .iter()
            .enumerate()
            .map(|(idx, n)| (n.id.as_str(), idx))
            .collect();
        let lookup = |ids: &HashMap<&str, usize>, id: &str| -> Result<usize> {
            ids.get(id)
                .copied()
                .ok_or_else(|| Error::UnknownNodeId(id.to_string()))
        };
        let ll_candidates = file
            .ll_edges
            .iter()
            .map(|e| {
                Ok(LlCandidate {
                    a: lookup(&l_ids, &e.a)?,
                    b: lookup(&l_ids, &e.b)?,
                    cost: e.cost,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let il_candidates = file
            .il_edges
            .iter()
            .map(|e| {
                Ok(IlCandidate {
                    i: lookup(&i_ids, &e.i)?,
                    l: lookup(&l_ids, &e.l)?,
                    cost: e.cost,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let topo = Topology {
            l_nodes,
            i_nodes,
            ll_candidates,
            il_candidates,
        };
        validate_topology(&topo)?;
        Ok(topo)
    }

    pub fn to_json(&self) -> String {
        let file = TopologyFile {
            format_version: FORMAT_VERSION,
            l_nodes: self
                .l_nodes
                .iter()
                .map(|n| LNodeFile {
                    id: n.id.clone(),
                    op_cost: n.op_cost,
                    base_compute: n.base_compute.clone(),
                    initial_samples: n.initial_samples,
                })
                .collect(),
            i_nodes: self
                .i_nodes
                .iter()
                .map(|n| INodeFile {
                    id: n.id.clone(),
                    op_cost: n.op_cost,
                    gen_time: n.gen_time.clone(),
                    rate: n.rate,
                })
                .collect(),
            ll_edges: self
                .ll_candidates
                .iter()
                .map(|e| LlEdgeFile {
                    a: self.l_nodes[e.a].id.clone(),
                    b: self.l_nodes[e.b].id.clone(),
                    cost: e.cost,
                })
                .collect(),
            il_edges: self
                .il_candidates
                .iter()
                .map(|e| IlEdgeFile {
                    i: self.i_nodes[e.i].id.clone(),
                    l: self.l_nodes[e.l].id.clone(),
                    cost: e.cost,
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("topology serializes");
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::DistributionSpec as D;

    fn l(id: &str, samples: f64) -> LNode {
        LNode {
            id: id.into(),
            op_cost: 1.0,
            base_compute: D::Exponential { rate: 1.0 },
            initial_samples: samples,
        }
    }

    fn i(id: &str, rate: f64) -> INode {
        INode {
            id: id.into(),
            op_cost: 0.5,
            gen_time: D::Exponential { rate: 1.0 },
            rate,
        }
    }

    fn complete_ll(n: usize) -> Vec<LlCandidate> {
        let mut out = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                out.push(LlCandidate { a, b, cost: 0.1 });
            }
        }
        out
    }

    fn all_edges(set: &[LlCandidate]) -> BTreeSet<usize> {
        (0..set.len()).collect()
    }

    #[test]
    fn validate_accepts_single_learner_without_information_nodes() {
        let topo = Topology {
            l_nodes: vec![l("l0", 10.0)],
            i_nodes: vec![],
            ll_candidates: vec![],
            il_candidates: vec![],
        };
        validate_topology(&topo).unwrap();
    }

    #[test]
    fn validate_rejects_negative_edge_cost_naming_the_edge() {
        let topo = Topology {
            l_nodes: vec![l("l0", 1.0), l("l1", 1.0)],
            i_nodes: vec![],
            ll_candidates: vec![LlCandidate {
                a: 0,
                b: 1,
                cost: -0.5,
            }],
            il_candidates: vec![],
        };
        let err = validate_topology(&topo).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("l0-l1"), "message should name the edge: {msg}");
    }

    #[test]
    fn validate_rejects_duplicate_il_edge() {
        let topo = Topology {
            l_nodes: vec![l("l0", 1.0)],
            i_nodes: vec![i("i0", 10.0)],
            ll_candidates: vec![],
            il_candidates: vec![
                IlCandidate { i: 0, l: 0, cost: 0.2 },
                IlCandidate { i: 0, l: 0, cost: 0.3 },
            ],
        };
        let err = validate_topology(&topo).unwrap_err();
        assert!(matches!(err, Error::DuplicateIlEdge { .. }));
    }

    #[test]
    fn gap_of_complete_graph_is_node_count_minus_two_plus_one() {
        // K_n has eigenvalues n-1 and -1, so the moduli gap is n-2.
        let n = 10;
        let topo = Topology {
            l_nodes: (0..n).map(|k| l(&format!("l{k}"), 1.0)).collect(),
            i_nodes: vec![],
            ll_candidates: complete_ll(n),
            il_candidates: vec![],
        };
        let gap = spectral_gap(&topo, &all_edges(&topo.ll_candidates));
        assert!((gap - 8.0).abs() < MODULUS_TOL, "gap = {gap}");
    }

    #[test]
    fn gap_of_five_cycle_matches_cosine_formula() {
        let n = 5;
        let ll: Vec<LlCandidate> = (0..n)
            .map(|k| LlCandidate {
                a: k,
                b: (k + 1) % n,
                cost: 0.1,
            })
            .collect();
        let topo = Topology {
            l_nodes: (0..n).map(|k| l(&format!("l{k}"), 1.0)).collect(),
            i_nodes: vec![],
            ll_candidates: ll,
            il_candidates: vec![],
        };
        let gap = spectral_gap(&topo, &all_edges(&topo.ll_candidates));
        let expected = 2.0 - (2.0 * (4.0 * std::f64::consts::PI / 5.0).cos()).abs();
        assert!((gap - expected).abs() < 1e-9, "gap = {gap}, want {expected}");
    }

    #[test]
    fn gap_of_empty_graph_is_zero_and_single_node_is_one() {
        let topo = Topology {
            l_nodes: vec![l("l0", 1.0), l("l1", 1.0), l("l2", 1.0)],
            i_nodes: vec![],
            ll_candidates: complete_ll(3),
            il_candidates: vec![],
        };
        assert_eq!(spectral_gap(&topo, &BTreeSet::new()), 0.0);

        let single = Topology {
            l_nodes: vec![l("l0", 1.0)],
            i_nodes: vec![],
            ll_candidates: vec![],
            il_candidates: vec![],
        };
        assert_eq!(spectral_gap(&single, &BTreeSet::new()), 1.0);
    }

    #[test]
    fn gap_of_single_cooperation_pair_is_zero_because_bipartite() {
        // K_2 has eigenvalues +1 and -1: equal moduli, no mixing.
        let topo = Topology {
            l_nodes: vec![l("l0", 1.0), l("l1", 1.0)],
            i_nodes: vec![],
            ll_candidates: complete_ll(2),
            il_candidates: vec![],
        };
        assert_eq!(spectral_gap(&topo, &all_edges(&topo.ll_candidates)), 0.0);
    }

    #[test]
    fn samples_grow_linearly_with_epochs() {
        let topo = Topology {
            l_nodes: vec![l("l0", 0.0)],
            i_nodes: vec![i("i0", 10.0)],
            ll_candidates: vec![],
            il_candidates: vec![IlCandidate { i: 0, l: 0, cost: 0.2 }],
        };
        let sel: BTreeSet<usize> = [0].into();
        assert_eq!(samples_at(&topo, &sel, 0, 0).unwrap(), 0.0);
        assert_eq!(samples_at(&topo, &sel, 0, 3).unwrap(), 30.0);
        assert_eq!(samples_at(&topo, &BTreeSet::new(), 0, 3).unwrap(), 0.0);
        assert!(samples_at(&topo, &sel, 5, 1).is_err());
    }

    #[test]
    fn average_dataset_size_matches_hand_computed_cases() {
        // Four nodes with initial data only: plain mean.
        let topo = Topology {
            l_nodes: vec![l("a", 10.0), l("b", 20.0), l("c", 30.0), l("d", 40.0)],
            i_nodes: vec![],
            ll_candidates: vec![],
            il_candidates: vec![],
        };
        assert_eq!(average_dataset_size(&topo, &BTreeSet::new(), 7), 25.0);

        // Two nodes, one fed at rate 10, averaged over K = 3 epochs:
        // node means are (10+20+30)/3 = 20 and 0, so the average is 10.
        let topo = Topology {
            l_nodes: vec![l("a", 0.0), l("b", 0.0)],
            i_nodes: vec![i("i0", 10.0)],
            ll_candidates: vec![],
            il_candidates: vec![IlCandidate { i: 0, l: 0, cost: 0.2 }],
        };
        let sel: BTreeSet<usize> = [0].into();
        assert_eq!(average_dataset_size(&topo, &sel, 3), 10.0);
        // No selected edges: constant in K.
        assert_eq!(
            average_dataset_size(&topo, &BTreeSet::new(), 1),
            average_dataset_size(&topo, &BTreeSet::new(), 100)
        );
    }

    #[test]
    fn topology_json_round_trip_preserves_structure() {
        let topo = Topology {
            l_nodes: vec![l("l0", 5.0), l("l1", 7.0)],
            i_nodes: vec![i("cam", 12.5)],
            ll_candidates: vec![LlCandidate { a: 0, b: 1, cost: 0.25 }],
            il_candidates: vec![IlCandidate { i: 0, l: 1, cost: 0.75 }],
        };
        let text = topo.to_json();
        let back = Topology::from_json(&text).unwrap();
        assert_eq!(topo, back);
    }

    #[test]
    fn topology_json_rejects_dangling_node_reference() {
        let text = r#"{
            "format_version": 1,
            "l_nodes": [{"id": "l0", "op_cost": 0.0,
                         "base_compute": {"kind": "exponential", "rate": 1.0},
                         "initial_samples": 1.0}],
            "i_nodes": [],
            "ll_edges": [],
            "il_edges": [{"i": "ghost", "l": "l0", "cost": 0.1}]
        }"#;
        let err = Topology::from_json(text).unwrap_err();
        assert!(matches!(err, Error::UnknownNodeId(id) if id == "ghost"));
    }
}
