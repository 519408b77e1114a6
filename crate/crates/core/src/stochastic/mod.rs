//! Distributions on a uniform time grid and the per-epoch duration pipeline.
//!
//! Every law is carried as a sampled pdf on an evenly spaced grid. The
//! pipeline composes three operations: the slowest-delivery law of a node's
//! information feeds (product of CDFs), the sum with its compute time
//! (convolution), and the global epoch barrier (product of CDFs again).
//! Compute time stretches with the data held at the start of the epoch:
//! a law T^0 scaled to X samples becomes (X / X^0) * T^0, so the pdf is
//! rescaled in both axes and stays normalized.
//!
//! Accuracy notes: grid pdfs integrate to 1 within 1e-4 before any
//! renormalization (asserted in tests); exponential tails are truncated at
//! the 1 - `quantile_cut` quantile; CDF products interpolate linearly.

mod closed_form;

pub use closed_form::{closed_form_time_exponential, closed_form_time_uniform};

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::collections::HashMap;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{samples_at, Selection, Topology};

/// Parametric law attached to a node, or a tabulated density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Uniform { a: f64, b: f64 },
    Exponential { rate: f64 },
    Grid { t0: f64, dt: f64, density: Vec<f64> },
}

impl DistributionSpec {
    /// Well-formedness check; the reason string names the violated rule.
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            DistributionSpec::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err("uniform bounds must be finite".into());
                }
                if !(*a >= 0.0) {
                    return Err(format!("uniform lower bound {a} must be >= 0"));
                }
                if !(b > a) {
                    return Err(format!("uniform needs a < b, got [{a}, {b}]"));
                }
                Ok(())
            }
            DistributionSpec::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(format!("exponential rate {rate} must be positive"));
                }
                Ok(())
            }
            DistributionSpec::Grid { t0, dt, density } => {
                if !(t0.is_finite() && *t0 >= 0.0) {
                    return Err(format!("grid origin {t0} must be >= 0"));
                }
                if !(dt.is_finite() && *dt > 0.0) {
                    return Err(format!("grid step {dt} must be positive"));
                }
                if density.len() < 2 {
                    return Err("grid needs at least 2 density samples".into());
                }
                if density.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err("grid density must be finite and nonnegative".into());
                }
                let integral = trapezoid(*dt, density);
                if (integral - 1.0).abs() > 1e-6 {
                    return Err(format!(
                        "grid density integrates to {integral}, expected 1 within 1e-6"
                    ));
                }
                Ok(())
            }
        }
    }

    /// Exact mean for parametric laws, trapezoid mean for tabulated ones.
    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Uniform { a, b } => 0.5 * (a + b),
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Grid { t0, dt, density } => {
                let g = GridFunction {
                    t0: *t0,
                    dt: *dt,
                    values: density.clone(),
                };
                g.expectation() / g.integral()
            }
        }
    }

    /// One draw from the law using a single uniform variate. Tabulated
    /// densities sample a cell by trapezoid mass and spread uniformly
    /// within it, which is exact in the limit of fine grids.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            DistributionSpec::Uniform { a, b } => a + u * (b - a),
            DistributionSpec::Exponential { rate } => -(1.0 - u).ln() / rate,
            DistributionSpec::Grid { t0, dt, density } => {
                let total = trapezoid(*dt, density);
                let target = u * total;
                let mut acc = 0.0;
                for c in 0..density.len() - 1 {
                    let mass = 0.5 * (density[c] + density[c + 1]) * dt;
                    if acc + mass >= target || c == density.len() - 2 {
                        let frac = if mass > 0.0 {
                            ((target - acc) / mass).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        return t0 + (c as f64 + frac) * dt;
                    }
                    acc += mass;
                }
                *t0
            }
        }
    }
}

/// Discretization parameters for the grid engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    /// Points per grid.
    pub resolution: usize,
    /// Tail mass dropped when truncating unbounded supports.
    pub quantile_cut: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            resolution: 4096,
            quantile_cut: 1e-9,
        }
    }
}

/// A function sampled at `t0 + i * dt` for `i < values.len()`.
/// Used both for pdfs and (internally) for CDF knot tables.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Trapezoid integral of the sampled function.
    pub fn integral(&self) -> f64 {
        trapezoid(self.dt, &self.values)
    }

    /// Trapezoid integral of t * f(t): the mean when `self` is a pdf.
    pub fn expectation(&self) -> f64 {
        let n = self.values.len();
        let mut weighted: f64 = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            weighted += w * self.time(i) * v;
        }
        weighted * self.dt
    }

    /// Linear interpolation, zero outside the support.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x < 0.0 || x > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Cumulative trapezoid knots; same grid, starts at 0.
    pub fn cumulative(&self) -> GridFunction {
        let mut acc = Vec::with_capacity(self.values.len());
        let mut run = 0.0;
        acc.push(0.0);
        for i in 1..self.values.len() {
            run += 0.5 * (self.values[i - 1] + self.values[i]) * self.dt;
            acc.push(run);
        }
        GridFunction {
            t0: self.t0,
            dt: self.dt,
            values: acc,
        }
    }

    /// CDF lookup against cumulative knots: clamped to [0, total] outside.
    fn cdf_at(&self, t: f64) -> f64 {
        if t <= self.t0 {
            return 0.0;
        }
        if t >= self.end() {
            return *self.values.last().unwrap();
        }
        self.value_at(t)
    }

    /// Time axis stretched by `s > 0`; density compensated so mass is kept.
    pub fn scale_time(&self, s: f64) -> GridFunction {
        assert!(s > 0.0, "time scale must be positive");
        GridFunction {
            t0: self.t0 * s,
            dt: self.dt * s,
            values: self.values.iter().map(|v| v / s).collect(),
        }
    }

    /// Resample onto a new uniform grid by linear interpolation.
    pub fn resample(&self, t0: f64, dt: f64, n: usize) -> GridFunction {
        let values = (0..n)
            .map(|i| self.value_at(t0 + i as f64 * dt))
            .collect();
        GridFunction { t0, dt, values }
    }

    fn clamp_negative(mut self) -> GridFunction {
        for v in &mut self.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self
    }

    fn renormalized(mut self) -> GridFunction {
        let integral = self.integral();
        assert!(
            integral > 0.0,
            "cannot normalize a grid with nonpositive mass"
        );
        for v in &mut self.values {
            *v /= integral;
        }
        self
    }
}

fn trapezoid(dt: f64, values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values.iter().sum::<f64>()
        - 0.5 * (values[0] + values[values.len() - 1]);
    inner * dt
}

/// Sample a law onto a pdf grid. Uniform supports are kept exact;
/// exponential tails stop at the 1 - quantile_cut quantile; tabulated
/// densities are resampled over their own span. The result is normalized.
pub fn to_grid(spec: &DistributionSpec, params: &GridParams) -> GridFunction {
    let n = params.resolution.max(8);
    match spec {
        DistributionSpec::Uniform { a, b } => {
            let dt = (b - a) / (n - 1) as f64;
            GridFunction {
                t0: *a,
                dt,
                values: vec![1.0 / (b - a); n],
            }
        }
        DistributionSpec::Exponential { rate } => {
            let end = -params.quantile_cut.ln() / rate;
            let dt = end / (n - 1) as f64;
            let values = (0..n)
                .map(|i| rate * (-rate * (i as f64 * dt)).exp())
                .collect();
            GridFunction {
                t0: 0.0,
                dt,
                values,
            }
            .renormalized()
        }
        DistributionSpec::Grid { t0, dt, density } => {
            let src = GridFunction {
                t0: *t0,
                dt: *dt,
                values: density.clone(),
            };
            let span = src.end() - src.t0;
            let new_dt = span / (n - 1) as f64;
            src.resample(*t0, new_dt, n).renormalized()
        }
    }
}

/// pdf of the maximum of independent draws, one from each spec: the CDFs
/// are multiplied on a shared grid and differentiated centrally.
pub fn max_of_independent(specs: &[DistributionSpec], params: &GridParams) -> GridFunction {
    assert!(!specs.is_empty(), "max over an empty family is undefined");
    if specs.len() == 1 {
        return to_grid(&specs[0], params);
    }
    let grids: Vec<GridFunction> = specs.iter().map(|s| to_grid(s, params)).collect();
    let cdfs: Vec<GridFunction> = grids.iter().map(|g| g.cumulative()).collect();
    product_cdf_pdf(&cdfs, params)
}

/// Differentiate the product of CDFs on a common grid. CDF tables are each
/// normalized by their final knot so truncation error does not compound.
fn product_cdf_pdf(cdfs: &[GridFunction], params: &GridParams) -> GridFunction {
    let n = params.resolution.max(8);
    // The product is zero until every factor is positive, so the support
    // starts at the latest of the factor supports.
    let t_start = cdfs.iter().map(|c| c.t0).fold(f64::MIN, f64::max);
    let t_end = cdfs.iter().map(|c| c.end()).fold(f64::MIN, f64::max);
    let dt = (t_end - t_start) / (n - 1) as f64;
    let totals: Vec<f64> = cdfs.iter().map(|c| *c.values.last().unwrap()).collect();
    let h: Vec<f64> = (0..n)
        .map(|idx| {
            let t = t_start + idx as f64 * dt;
            cdfs.iter()
                .zip(&totals)
                .map(|(c, total)| (c.cdf_at(t) / total).clamp(0.0, 1.0))
                .product()
        })
        .collect();
    let values: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                (h[1] - h[0]) / dt
            } else if i == n - 1 {
                (h[n - 1] - h[n - 2]) / dt
            } else {
                (h[i + 1] - h[i - 1]) / (2.0 * dt)
            }
        })
        .collect();
    GridFunction {
        t0: t_start,
        dt,
        values,
    }
    .clamp_negative()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// pdf of the sum of two independent laws, by FFT convolution on the finer
/// of the two steps. Support is the Minkowski sum of the input supports.
pub fn convolve(p: &GridFunction, q: &GridFunction) -> GridFunction {
    let dt = p.dt.min(q.dt);
    let np = ((p.end() - p.t0) / dt).round() as usize + 1;
    let nq = ((q.end() - q.t0) / dt).round() as usize + 1;
    let mut pr = p.resample(p.t0, dt, np.max(2));
    let mut qr = q.resample(q.t0, dt, nq.max(2));
    // Halve the endpoint samples so the discrete sum is the trapezoid rule
    // for the convolution integral; otherwise densities with mass at their
    // support edges (uniforms, exponentials at 0) gain O(dt) spurious mass.
    for g in [&mut pr, &mut qr] {
        *g.values.first_mut().unwrap() *= 0.5;
        *g.values.last_mut().unwrap() *= 0.5;
    }
    let n_out = pr.len() + qr.len() - 1;
    let size = n_out.next_power_of_two();
    let mut fa: Vec<Complex<f64>> = pr
        .values
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut fb: Vec<Complex<f64>> = qr
        .values
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut fa);
        fft.process(&mut fb);
        for (a, b) in fa.iter_mut().zip(&fb) {
            *a *= b;
        }
        let ifft = planner.plan_fft_inverse(size);
        ifft.process(&mut fa);
    });
    let scale = dt / size as f64;
    let values: Vec<f64> = fa[..n_out].iter().map(|c| c.re * scale).collect();
    GridFunction {
        t0: pr.t0 + qr.t0,
        dt,
        values,
    }
    .clamp_negative()
}

/// Mean of a pdf grid.
pub fn expectation(pdf: &GridFunction) -> f64 {
    pdf.expectation()
}

/// Caches the per-node building blocks of the epoch pipeline so optimizer
/// loops that revisit the same per-node configurations pay for each once.
/// Keys are (L-node, connected I-set) for delivery laws and additionally
/// the epoch index for the node's sum CDF (the compute scale moves with k).
pub struct EpochEngine<'t> {
    topo: &'t Topology,
    params: GridParams,
    delivery: HashMap<(usize, Vec<usize>), GridFunction>,
    node_cdf: HashMap<(usize, Vec<usize>, u32), GridFunction>,
}

/// Bound on cached per-node CDFs; the map is cleared when it fills.
const NODE_CDF_CACHE_CAP: usize = 4096;

impl<'t> EpochEngine<'t> {
    pub fn new(topo: &'t Topology, params: GridParams) -> Self {
        EpochEngine {
            topo,
            params,
            delivery: HashMap::new(),
            node_cdf: HashMap::new(),
        }
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    fn delivery_pdf(&mut self, l: usize, i_set: &[usize]) -> GridFunction {
        if let Some(hit) = self.delivery.get(&(l, i_set.to_vec())) {
            return hit.clone();
        }
        let specs: Vec<DistributionSpec> = i_set
            .iter()
            .map(|&i| self.topo.i_nodes[i].gen_time.clone())
            .collect();
        let pdf = max_of_independent(&specs, &self.params);
        self.delivery
            .insert((l, i_set.to_vec()), pdf.clone());
        pdf
    }

    /// Normalized CDF knots of one node's epoch duration (delivery max plus
    /// scaled compute) at epoch `k >= 1`.
    fn node_sum_cdf(
        &mut self,
        l: usize,
        i_set: &[usize],
        il_edges: &BTreeSet<usize>,
        k: u32,
    ) -> Result<GridFunction> {
        let key = (l, i_set.to_vec(), k);
        if let Some(hit) = self.node_cdf.get(&key) {
            return Ok(hit.clone());
        }
        let node = &self.topo.l_nodes[l];
        if node.initial_samples <= 0.0 {
            return Err(Error::ZeroBaseSamples(node.id.clone()));
        }
        let scale = samples_at(self.topo, il_edges, l, k - 1)? / node.initial_samples;
        let compute = to_grid(&node.base_compute, &self.params).scale_time(scale);
        let sum = if i_set.is_empty() {
            compute
        } else {
            let delivery = self.delivery_pdf(l, i_set);
            convolve(&delivery, &compute)
        };
        let mut cdf = sum.cumulative();
        let total = *cdf.values.last().unwrap();
        for v in &mut cdf.values {
            *v /= total;
        }
        if self.node_cdf.len() >= NODE_CDF_CACHE_CAP {
            self.node_cdf.clear();
        }
        self.node_cdf.insert(key, cdf.clone());
        Ok(cdf)
    }

    /// pdf of the k-th epoch duration under `il_edges` (the barrier over all
    /// L-nodes). `k` is 1-based; the compute scale uses the data held when
    /// the epoch starts, X^{k-1}.
    pub fn epoch_pdf(&mut self, il_edges: &BTreeSet<usize>, k: u32) -> Result<GridFunction> {
        if k == 0 {
            return Err(Error::ZeroEpochIndex);
        }
        let l_count = self.topo.l_count();
        let mut cdfs = Vec::with_capacity(l_count);
        for l in 0..l_count {
            let i_set = self.topo.connected_i_nodes(il_edges, l);
            cdfs.push(self.node_sum_cdf(l, &i_set, il_edges, k)?);
        }
        if cdfs.len() == 1 {
            // Single learner: the barrier is the node law itself; return the
            // pdf reconstructed from its normalized CDF to keep one code path
            // for normalization.
            let cdf = &cdfs[0];
            return Ok(cdf_to_pdf(cdf).renormalized());
        }
        Ok(product_cdf_pdf(&cdfs, &self.params).renormalized())
    }

    /// Sum of per-epoch expected durations for `selection.epochs` epochs.
    pub fn expected_time(&mut self, selection: &Selection) -> Result<f64> {
        let mut total = 0.0;
        for k in 1..=selection.epochs {
            total += self.epoch_pdf(&selection.il_edges, k)?.expectation();
        }
        Ok(total)
    }
}

fn cdf_to_pdf(cdf: &GridFunction) -> GridFunction {
    let n = cdf.len();
    let dt = cdf.dt;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                (cdf.values[1] - cdf.values[0]) / dt
            } else if i == n - 1 {
                (cdf.values[n - 1] - cdf.values[n - 2]) / dt
            } else {
                (cdf.values[i + 1] - cdf.values[i - 1]) / (2.0 * dt)
            }
        })
        .collect();
    GridFunction {
        t0: cdf.t0,
        dt,
        values,
    }
    .clamp_negative()
}

/// pdf of the duration of epoch `k` for the selected configuration.
pub fn epoch_duration_pdf(
    topo: &Topology,
    selection: &Selection,
    k: u32,
    params: &GridParams,
) -> Result<GridFunction> {
    EpochEngine::new(topo, *params).epoch_pdf(&selection.il_edges, k)
}

/// Expected total learning time over `selection.epochs` epochs: the sum of
/// the per-epoch pdf means.
pub fn expected_learning_time(
    topo: &Topology,
    selection: &Selection,
    params: &GridParams,
) -> Result<f64> {
    EpochEngine::new(topo, *params).expected_time(selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IlCandidate, INode, LNode};
    use approx::assert_abs_diff_eq;

    fn params() -> GridParams {
        GridParams::default()
    }

    #[test]
    fn uniform_grid_keeps_exact_support_and_mass() {
        let g = to_grid(
            &DistributionSpec::Uniform { a: 0.1, b: 1.9 },
            &params(),
        );
        assert_eq!(g.t0, 0.1);
        assert_abs_diff_eq!(g.end(), 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(g.integral(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.expectation(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn exponential_grid_truncates_at_requested_tail_mass() {
        let g = to_grid(
            &DistributionSpec::Exponential { rate: 1.0 },
            &params(),
        );
        let expected_end = -(1e-9f64).ln();
        assert_abs_diff_eq!(g.end(), expected_end, epsilon = 1e-9);
        assert_abs_diff_eq!(g.integral(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.expectation(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn tabulated_grid_round_trips_within_interpolation_tolerance() {
        let src = DistributionSpec::Grid {
            t0: 1.0,
            dt: 0.25,
            density: vec![0.0, 1.0, 2.0, 1.0, 0.0],
        };
        src.validate().unwrap();
        let g = to_grid(&src, &params());
        assert_abs_diff_eq!(g.integral(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.t0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.end(), 2.0, epsilon = 1e-12);
        // Mean of the symmetric triangle sits at its center.
        assert_abs_diff_eq!(g.expectation(), 1.5, epsilon = 1e-6);
    }

    #[test]
    fn raw_pipeline_outputs_integrate_to_one_within_tolerance() {
        // Normalization invariant checked on the unnormalized results.
        let m = max_of_independent(
            &[
                DistributionSpec::Uniform { a: 0.1, b: 1.9 },
                DistributionSpec::Uniform { a: 0.1, b: 1.9 },
                DistributionSpec::Exponential { rate: 2.0 },
            ],
            &params(),
        );
        assert!((m.integral() - 1.0).abs() < 1e-4, "max integral {}", m.integral());
        let c = convolve(
            &to_grid(&DistributionSpec::Uniform { a: 0.0, b: 1.0 }, &params()),
            &to_grid(&DistributionSpec::Exponential { rate: 1.0 }, &params()),
        );
        assert!((c.integral() - 1.0).abs() < 1e-4, "conv integral {}", c.integral());
        assert!(c.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn max_of_five_uniform_draws_has_known_mean() {
        // E[max of n iid U(a,b)] = a + (b-a) * n / (n+1).
        let specs = vec![DistributionSpec::Uniform { a: 0.1, b: 1.9 }; 5];
        let m = max_of_independent(&specs, &params());
        assert_abs_diff_eq!(m.expectation(), 1.6, epsilon = 1e-3);
    }

    #[test]
    fn max_of_two_unit_exponentials_has_mean_three_halves() {
        let specs = vec![DistributionSpec::Exponential { rate: 1.0 }; 2];
        let m = max_of_independent(&specs, &params());
        assert_abs_diff_eq!(m.expectation(), 1.5, epsilon = 1e-3);
    }

    #[test]
    fn convolution_adds_means_and_supports() {
        let u = to_grid(&DistributionSpec::Uniform { a: 1.0, b: 2.0 }, &params());
        let e = to_grid(&DistributionSpec::Exponential { rate: 2.0 }, &params());
        let s = convolve(&u, &e);
        assert_abs_diff_eq!(s.t0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.expectation(), 1.5 + 0.5, epsilon = 2e-3);
    }

    #[test]
    fn convolving_two_unit_uniforms_gives_the_triangle_law() {
        let u = to_grid(&DistributionSpec::Uniform { a: 0.0, b: 1.0 }, &params());
        let s = convolve(&u, &u);
        assert_abs_diff_eq!(s.expectation(), 1.0, epsilon = 1e-3);
        // Peak density 1 at t = 1.
        assert_abs_diff_eq!(s.value_at(1.0), 1.0, epsilon = 1e-2);
        assert_abs_diff_eq!(s.value_at(0.25), 0.25, epsilon = 1e-2);
    }

    #[test]
    fn time_scaling_stretches_mean_exactly() {
        let e = to_grid(&DistributionSpec::Exponential { rate: 1.0 }, &params());
        let scaled = e.scale_time(2.5);
        assert_abs_diff_eq!(scaled.integral(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled.expectation(), 2.5 * e.expectation(), epsilon = 1e-12);
    }

    fn two_node_topo() -> Topology {
        Topology {
            l_nodes: vec![LNode {
                id: "l0".into(),
                op_cost: 0.0,
                base_compute: DistributionSpec::Exponential { rate: 1.0 },
                initial_samples: 100.0,
            }],
            i_nodes: vec![INode {
                id: "i0".into(),
                op_cost: 0.0,
                gen_time: DistributionSpec::Exponential { rate: 1.0 },
                rate: 100.0,
            }],
            ll_candidates: vec![],
            il_candidates: vec![IlCandidate { i: 0, l: 0, cost: 0.1 }],
        }
    }

    #[test]
    fn first_epoch_of_exp_pair_has_mean_two() {
        // One learner fed by one generator, both Exp(1): epoch 1 runs at the
        // base scale, so the mean is E[Exp] + E[Exp] = 2.
        let topo = two_node_topo();
        let sel = Selection::new(BTreeSet::new(), [0].into(), 1);
        let pdf = epoch_duration_pdf(&topo, &sel, 1, &params()).unwrap();
        assert_abs_diff_eq!(pdf.expectation(), 2.0, epsilon = 2e-3);
        assert_abs_diff_eq!(pdf.integral(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn second_epoch_scales_compute_with_accumulated_data() {
        // After one epoch the learner holds 200 of the base 100 samples, so
        // epoch 2 compute stretches by 2 and the epoch mean is 1 + 2.
        let topo = two_node_topo();
        let sel = Selection::new(BTreeSet::new(), [0].into(), 2);
        let pdf = epoch_duration_pdf(&topo, &sel, 2, &params()).unwrap();
        assert_abs_diff_eq!(pdf.expectation(), 3.0, epsilon = 4e-3);
    }

    #[test]
    fn unconnected_learner_keeps_plain_compute_law() {
        let topo = two_node_topo();
        let sel = Selection::new(BTreeSet::new(), BTreeSet::new(), 1);
        let pdf = epoch_duration_pdf(&topo, &sel, 1, &params()).unwrap();
        assert_abs_diff_eq!(pdf.expectation(), 1.0, epsilon = 2e-3);
    }

    #[test]
    fn learning_time_sums_constant_epochs() {
        // No data edges: every epoch is the same law, so K epochs cost K means.
        let mut topo = two_node_topo();
        topo.l_nodes[0].base_compute = DistributionSpec::Exponential { rate: 0.5 };
        let sel = Selection::new(BTreeSet::new(), BTreeSet::new(), 3);
        let t = expected_learning_time(&topo, &sel, &params()).unwrap();
        assert_abs_diff_eq!(t, 6.0, epsilon = 6e-3);
    }

    #[test]
    fn zero_initial_samples_is_a_configuration_error() {
        let mut topo = two_node_topo();
        topo.l_nodes[0].initial_samples = 0.0;
        let sel = Selection::new(BTreeSet::new(), [0].into(), 1);
        let err = expected_learning_time(&topo, &sel, &params()).unwrap_err();
        assert!(matches!(err, Error::ZeroBaseSamples(id) if id == "l0"));
    }

    #[test]
    fn epoch_zero_index_is_rejected() {
        let topo = two_node_topo();
        let sel = Selection::new(BTreeSet::new(), BTreeSet::new(), 1);
        assert!(matches!(
            epoch_duration_pdf(&topo, &sel, 0, &params()),
            Err(Error::ZeroEpochIndex)
        ));
    }

    #[test]
    fn grid_sampling_tracks_the_density() {
        use rand::SeedableRng;
        let spec = DistributionSpec::Grid {
            t0: 0.0,
            dt: 0.5,
            density: vec![0.0, 1.0, 1.0, 0.0],
        };
        spec.validate().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| spec.sample(&mut rng)).sum::<f64>() / n as f64;
        // Symmetric density centered at 0.75.
        assert_abs_diff_eq!(mean, 0.75, epsilon = 5e-3);
    }
}
