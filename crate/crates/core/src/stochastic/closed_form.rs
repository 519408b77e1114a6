//! Exact expected learning times for symmetric configurations, used as an
//! independent route against the grid pipeline.
//!
//! Both forms assume a symmetric instance: every learner has the same
//! compute law, initial data and selected feed rate, every feed set has the
//! same size, and all generation laws coincide. The epoch barrier is then
//! the maximum of iid per-node durations, and its mean expands into a
//! finite composition sum over the terms of the per-node CDF.
//!
//! The alternating sums cancel heavily, so these forms are only numerically
//! trustworthy for small populations; the composition-count guard refuses
//! anything large enough to be doubtful on other grounds anyway.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{samples_at, Selection, Topology};
use crate::stochastic::DistributionSpec;

/// Refuse composition sums larger than this.
const COMPOSITION_BOUND: f64 = 2e6;

/// Relative distance to a pole below which the exponential form refuses.
const POLE_REL_TOL: f64 = 1e-12;

fn shape_err(id: &str, reason: &str) -> Error {
    Error::InvalidDistribution {
        id: id.into(),
        reason: reason.into(),
    }
}

/// Validate the symmetry requirements and return the common feed-set size
/// together with the sorted union of connected I-nodes.
fn symmetric_feeds(topo: &Topology, il_edges: &BTreeSet<usize>) -> Result<(usize, Vec<usize>)> {
    let first = &topo.l_nodes[0];
    let feed_count = topo.connected_i_nodes(il_edges, 0).len();
    let mut union: Vec<usize> = Vec::new();
    for l in 0..topo.l_count() {
        let node = &topo.l_nodes[l];
        let feeds = topo.connected_i_nodes(il_edges, l);
        if feeds.len() != feed_count {
            return Err(shape_err(
                &node.id,
                "closed form needs the same feed count on every learner",
            ));
        }
        if node.initial_samples != first.initial_samples {
            return Err(shape_err(
                &node.id,
                "closed form needs the same initial samples on every learner",
            ));
        }
        if topo.rate_into(il_edges, l) != topo.rate_into(il_edges, 0) {
            return Err(shape_err(
                &node.id,
                "closed form needs the same selected feed rate on every learner",
            ));
        }
        union.extend(feeds);
    }
    union.sort_unstable();
    union.dedup();
    Ok((feed_count, union))
}

/// Compute-law stretch factor for epoch `k >= 1`.
fn compute_scale(topo: &Topology, il_edges: &BTreeSet<usize>, k: u32) -> Result<f64> {
    let node = &topo.l_nodes[0];
    if node.initial_samples <= 0.0 {
        return Err(Error::ZeroBaseSamples(node.id.clone()));
    }
    Ok(samples_at(topo, il_edges, 0, k - 1)? / node.initial_samples)
}

fn binom_f(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 1..=k {
        r *= (n - k + i) as f64 / i as f64;
    }
    r
}

/// Multinomial coefficient total! / prod(parts!), as a product of binomials
/// over prefix sums.
fn multinomial_f(parts: &[u32]) -> f64 {
    let mut r = 1.0;
    let mut acc = 0usize;
    for &p in parts {
        acc += p as usize;
        r *= binom_f(acc, p as usize);
    }
    r
}

fn guard_compositions(total: usize, parts: usize) -> Result<()> {
    let count = binom_f(total + parts - 1, parts - 1);
    if count > COMPOSITION_BOUND {
        return Err(Error::ClosedFormTooLarge {
            compositions: count as u128,
            bound: COMPOSITION_BOUND as u128,
        });
    }
    Ok(())
}

/// Call `f` for every way of writing `total` as an ordered sum of `parts`
/// nonnegative integers.
fn for_each_composition<F: FnMut(&[u32])>(total: u32, parts: usize, f: &mut F) {
    fn rec<F: FnMut(&[u32])>(buf: &mut Vec<u32>, remaining: u32, parts_left: usize, f: &mut F) {
        if parts_left == 1 {
            buf.push(remaining);
            f(buf);
            buf.pop();
            return;
        }
        for v in 0..=remaining {
            buf.push(v);
            rec(buf, remaining - v, parts_left - 1, f);
            buf.pop();
        }
    }
    debug_assert!(parts >= 1);
    let mut buf = Vec::with_capacity(parts);
    rec(&mut buf, total, parts, f);
}

fn coef_power_product(coefs: &[f64], counts: &[u32]) -> f64 {
    coefs
        .iter()
        .zip(counts)
        .map(|(c, &a)| c.powi(a as i32))
        .product()
}

/// Mean epoch barrier for `l_count` iid nodes, each the sum of the max of
/// `n` Exp(lambda_i) deliveries and an Exp(mu) compute draw.
///
/// The per-node CDF is a mixture of exponentials: the max expands by
/// inclusion-exclusion into terms exp(-w lambda t), and convolving with the
/// compute law keeps the basis {exp(-w lambda t), 1, exp(-mu t)}. Raising
/// to the l_count-th power is a multinomial sum over that basis, and each
/// product term integrates in closed form.
fn exp_epoch_mean(
    l_count: usize,
    n: usize,
    lambda_i: f64,
    mu: f64,
    epoch: usize,
) -> Result<f64> {
    for w in 1..=n {
        let wl = w as f64 * lambda_i;
        if (wl - mu).abs() <= POLE_REL_TOL * wl.max(mu) {
            return Err(Error::ClosedFormPole {
                lambda_l: mu,
                w,
                epoch,
            });
        }
    }
    guard_compositions(l_count, n + 2)?;
    // (coefficient, decay rate) of each CDF term; rate 0 marks the constant.
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(n + 2);
    let mut coef_sum = 0.0;
    for w in 1..=n {
        let sign = if w % 2 == 1 { 1.0 } else { -1.0 };
        let coef = binom_f(n, w) * sign * mu / (w as f64 * lambda_i - mu);
        terms.push((coef, w as f64 * lambda_i));
        coef_sum += coef;
    }
    terms.push((1.0, 0.0));
    // H(0) = 0 pins the compute-rate coefficient.
    terms.push((-1.0 - coef_sum, mu));

    let mut mean = 0.0;
    for_each_composition(l_count as u32, n + 2, &mut |a| {
        let decay: f64 = a
            .iter()
            .zip(&terms)
            .map(|(&cnt, (_, rate))| cnt as f64 * rate)
            .sum();
        if decay <= 0.0 {
            // All mass on the constant term: the leading 1 of 1 - H^l.
            return;
        }
        let mut prod = multinomial_f(a);
        for (&cnt, (coef, _)) in a.iter().zip(&terms) {
            prod *= coef.powi(cnt as i32);
        }
        mean -= prod / decay;
    });
    Ok(mean)
}

/// Expected total learning time when every compute law is Exp(lambda_L) and
/// every generation law is Exp(lambda_I), summed over `selection.epochs`.
/// Epoch k runs compute at rate lambda_L / scale_k, so poles (where the
/// scaled compute rate hits a multiple of lambda_I) are checked per epoch.
pub fn closed_form_time_exponential(topo: &Topology, selection: &Selection) -> Result<f64> {
    let (n, feeds) = symmetric_feeds(topo, &selection.il_edges)?;
    let lambda_l = match &topo.l_nodes[0].base_compute {
        DistributionSpec::Exponential { rate } => *rate,
        _ => {
            return Err(shape_err(
                &topo.l_nodes[0].id,
                "exponential closed form needs exponential compute laws",
            ))
        }
    };
    for node in &topo.l_nodes {
        match &node.base_compute {
            DistributionSpec::Exponential { rate } if *rate == lambda_l => {}
            _ => {
                return Err(shape_err(
                    &node.id,
                    "exponential closed form needs one shared compute rate",
                ))
            }
        }
    }
    let mut lambda_i = 0.0;
    for (pos, &i) in feeds.iter().enumerate() {
        match &topo.i_nodes[i].gen_time {
            DistributionSpec::Exponential { rate } => {
                if pos == 0 {
                    lambda_i = *rate;
                } else if *rate != lambda_i {
                    return Err(shape_err(
                        &topo.i_nodes[i].id,
                        "exponential closed form needs one shared generation rate",
                    ));
                }
            }
            _ => {
                return Err(shape_err(
                    &topo.i_nodes[i].id,
                    "exponential closed form needs exponential generation laws",
                ))
            }
        }
    }
    let mut total = 0.0;
    for k in 1..=selection.epochs {
        let scale = compute_scale(topo, &selection.il_edges, k)?;
        let mu = lambda_l / scale;
        total += exp_epoch_mean(topo.l_count(), n, lambda_i, mu, k as usize)?;
    }
    Ok(total)
}

/// Evaluate a CDF piece stored over the basis {t, t^2, ..., t^{n+1}, 1}.
fn eval_basis(coefs: &[f64], t: f64) -> f64 {
    let m = coefs.len();
    let mut v = coefs[m - 1];
    for w in 1..m {
        v += coefs[w - 1] * t.powi(w as i32);
    }
    v
}

/// Mean epoch barrier for `l_count` iid nodes, each the sum of the max of
/// `n` U(a_i, b_i) deliveries and a U(a_l, b_l) compute draw, requiring
/// a_l <= a_i <= b_i <= b_l.
///
/// The per-node CDF has three polynomial pieces separated at
/// a_l + b_i and b_l + a_i; each piece is expanded over the basis
/// {t..t^{n+1}, 1} so the l_count-th power is again a composition sum whose
/// terms integrate piecewise.
fn uniform_epoch_mean(
    l_count: usize,
    n: usize,
    a_i: f64,
    b_i: f64,
    a_l: f64,
    b_l: f64,
    epoch: usize,
) -> Result<f64> {
    if n == 0 {
        // No deliveries: barrier over iid uniform compute draws.
        let lf = l_count as f64;
        return Ok(a_l + (b_l - a_l) * lf / (lf + 1.0));
    }
    if !(a_l <= a_i && b_i <= b_l) {
        return Err(Error::ClosedFormOrdering(epoch));
    }
    guard_compositions(l_count, n + 2)?;
    let d_i = b_i - a_i;
    let d_l = b_l - a_l;
    let lead = (n as f64 + 1.0) * d_i.powi(n as i32) * d_l;
    // Support and knees of the per-node sum.
    let t_min = a_l + a_i;
    let t_low = a_l + b_i;
    let t_high = b_l + a_i;
    let t_max = b_l + b_i;

    let m = n + 2;
    let mut p1 = vec![0.0; m];
    let mut p2 = vec![0.0; m];
    let mut p3 = vec![0.0; m];
    // Piece 1 on [t_min, t_low]: (t - t_min)^{n+1} / lead.
    for w in 1..=n + 1 {
        p1[w - 1] = binom_f(n + 1, w) * (-t_min).powi((n + 1 - w) as i32) / lead;
    }
    p1[m - 1] = (-t_min).powi((n + 1) as i32) / lead;
    // Piece 2 on [t_low, t_high]: linear.
    p2[0] = 1.0 / d_l;
    p2[m - 1] = d_i / ((n as f64 + 1.0) * d_l) - t_low / d_l;
    // Piece 3 on [t_high, t_max]: piece 2 minus (t - t_high)^{n+1} / lead.
    p3[0] = 1.0 / d_l - (-t_high).powi(n as i32) / (d_i.powi(n as i32) * d_l);
    for w in 2..=n + 1 {
        p3[w - 1] = -binom_f(n + 1, w) * (-t_high).powi((n + 1 - w) as i32) / lead;
    }
    p3[m - 1] = p2[m - 1] - (-t_high).powi((n + 1) as i32) / lead;

    // Continuity and boundary anchors of the piecewise CDF.
    let anchor_tol = 1e-7 * (1.0 + (t_max.powi((n + 1) as i32) / lead).abs());
    debug_assert!(eval_basis(&p1, t_min).abs() <= anchor_tol);
    debug_assert!((eval_basis(&p1, t_low) - eval_basis(&p2, t_low)).abs() <= anchor_tol);
    debug_assert!((eval_basis(&p2, t_high) - eval_basis(&p3, t_high)).abs() <= anchor_tol);
    debug_assert!((eval_basis(&p3, t_max) - 1.0).abs() <= anchor_tol);

    // E = t_max - integral of H^l over the support.
    let mut integral = 0.0;
    for_each_composition(l_count as u32, m, &mut |a| {
        // Power of t in the product, plus one for the antiderivative.
        let power = a[..m - 1]
            .iter()
            .enumerate()
            .map(|(idx, &cnt)| (idx + 1) as u32 * cnt)
            .sum::<u32>()
            + 1;
        let pw = power as i32;
        let pf = power as f64;
        let mult = multinomial_f(a);
        let seg = |coefs: &[f64], lo: f64, hi: f64| {
            coef_power_product(coefs, a) * (hi.powi(pw) - lo.powi(pw)) / pf
        };
        integral += mult
            * (seg(&p1, t_min, t_low) + seg(&p2, t_low, t_high) + seg(&p3, t_high, t_max));
    });
    Ok(t_max - integral)
}

/// Expected total learning time when every compute law is U(a_L, b_L) and
/// every generation law is U(a_I, b_I), summed over `selection.epochs`.
/// Epoch k stretches the compute law bounds by scale_k; the ordering
/// requirement applies to the stretched bounds, per epoch.
pub fn closed_form_time_uniform(topo: &Topology, selection: &Selection) -> Result<f64> {
    let (n, feeds) = symmetric_feeds(topo, &selection.il_edges)?;
    let (a_l, b_l) = match &topo.l_nodes[0].base_compute {
        DistributionSpec::Uniform { a, b } => (*a, *b),
        _ => {
            return Err(shape_err(
                &topo.l_nodes[0].id,
                "uniform closed form needs uniform compute laws",
            ))
        }
    };
    for node in &topo.l_nodes {
        match &node.base_compute {
            DistributionSpec::Uniform { a, b } if *a == a_l && *b == b_l => {}
            _ => {
                return Err(shape_err(
                    &node.id,
                    "uniform closed form needs one shared compute law",
                ))
            }
        }
    }
    let mut gen_bounds = (0.0, 0.0);
    for (pos, &i) in feeds.iter().enumerate() {
        match &topo.i_nodes[i].gen_time {
            DistributionSpec::Uniform { a, b } => {
                if pos == 0 {
                    gen_bounds = (*a, *b);
                } else if (*a, *b) != gen_bounds {
                    return Err(shape_err(
                        &topo.i_nodes[i].id,
                        "uniform closed form needs one shared generation law",
                    ));
                }
            }
            _ => {
                return Err(shape_err(
                    &topo.i_nodes[i].id,
                    "uniform closed form needs uniform generation laws",
                ))
            }
        }
    }
    let mut total = 0.0;
    for k in 1..=selection.epochs {
        let scale = compute_scale(topo, &selection.il_edges, k)?;
        total += uniform_epoch_mean(
            topo.l_count(),
            n,
            gen_bounds.0,
            gen_bounds.1,
            scale * a_l,
            scale * b_l,
            k as usize,
        )?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IlCandidate, INode, LNode};
    use crate::stochastic::{expected_learning_time, GridParams};
    use approx::assert_abs_diff_eq;

    /// Symmetric instance: every learner connected to every generator.
    fn symmetric(
        l_count: usize,
        i_count: usize,
        compute: DistributionSpec,
        gen: DistributionSpec,
        rate: f64,
    ) -> (Topology, BTreeSet<usize>) {
        let l_nodes = (0..l_count)
            .map(|l| LNode {
                id: format!("l{l}"),
                op_cost: 0.0,
                base_compute: compute.clone(),
                initial_samples: 100.0,
            })
            .collect();
        let i_nodes = (0..i_count)
            .map(|i| INode {
                id: format!("i{i}"),
                op_cost: 0.0,
                gen_time: gen.clone(),
                rate,
            })
            .collect();
        let mut il_candidates = Vec::new();
        for i in 0..i_count {
            for l in 0..l_count {
                il_candidates.push(IlCandidate { i, l, cost: 0.1 });
            }
        }
        let edges: BTreeSet<usize> = (0..il_candidates.len()).collect();
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
    fn lone_exponential_learner_recovers_plain_means() {
        let (topo, _) = symmetric(
            1,
            0,
            DistributionSpec::Exponential { rate: 2.0 },
            DistributionSpec::Exponential { rate: 1.0 },
            0.0,
        );
        let sel = Selection::new(BTreeSet::new(), BTreeSet::new(), 1);
        assert_abs_diff_eq!(
            closed_form_time_exponential(&topo, &sel).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let sel3 = Selection::new(BTreeSet::new(), BTreeSet::new(), 3);
        assert_abs_diff_eq!(
            closed_form_time_exponential(&topo, &sel3).unwrap(),
            1.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn exponential_barrier_over_three_learners_is_harmonic() {
        // max of 3 iid Exp(1) has mean 1 + 1/2 + 1/3.
        let (topo, _) = symmetric(
            3,
            0,
            DistributionSpec::Exponential { rate: 1.0 },
            DistributionSpec::Exponential { rate: 1.0 },
            0.0,
        );
        let sel = Selection::new(BTreeSet::new(), BTreeSet::new(), 1);
        assert_abs_diff_eq!(
            closed_form_time_exponential(&topo, &sel).unwrap(),
            11.0 / 6.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_feeds_and_compute_at_equal_rates_sits_next_to_a_pole() {
        // lambda_L = lambda_I is a pole; just off it the value must match
        // E[max of 2 Exp(1)] + E[Exp(1)] = 2.5.
        let (topo, edges) = symmetric(
            1,
            2,
            DistributionSpec::Exponential { rate: 1.0 + 1e-9 },
            DistributionSpec::Exponential { rate: 1.0 },
            0.0,
        );
        let sel = Selection::new(BTreeSet::new(), edges, 1);
        assert_abs_diff_eq!(
            closed_form_time_exponential(&topo, &sel).unwrap(),
            2.5,
            epsilon = 1e-5
        );
    }

    #[test]
    fn exponential_pole_is_reported_not_computed() {
        let (topo, edges) = symmetric(
            1,
            2,
            DistributionSpec::Exponential { rate: 2.0 },
            DistributionSpec::Exponential { rate: 1.0 },
            0.0,
        );
        let sel = Selection::new(BTreeSet::new(), edges, 1);
        let err = closed_form_time_exponential(&topo, &sel).unwrap_err();
        assert!(matches!(
            err,
            Error::ClosedFormPole { w: 2, epoch: 1, .. }
        ));
    }

    #[test]
    fn exponential_closed_form_matches_grid_pipeline_with_data_growth() {
        // Rates make the second epoch stretch compute by 2, so both the
        // scaling path and the pole bookkeeping on scaled rates are crossed.
        let (topo, edges) = symmetric(
            2,
            2,
            DistributionSpec::Exponential { rate: 0.6 },
            DistributionSpec::Exponential { rate: 1.0 },
            50.0,
        );
        let sel = Selection::new(BTreeSet::new(), edges, 2);
        let exact = closed_form_time_exponential(&topo, &sel).unwrap();
        let grid = expected_learning_time(&topo, &sel, &GridParams::default()).unwrap();
        assert!(
            (exact - grid).abs() / exact < 5e-3,
            "closed {exact} vs grid {grid}"
        );
    }

    #[test]
    fn single_uniform_pair_has_known_exact_mean() {
        // U(1,2) delivery plus U(0,3) compute: mean 1.5 + 1.5 = 3, and the
        // piecewise machinery must reproduce it exactly.
        let (topo, edges) = symmetric(
            1,
            1,
            DistributionSpec::Uniform { a: 0.0, b: 3.0 },
            DistributionSpec::Uniform { a: 1.0, b: 2.0 },
            0.0,
        );
        let sel = Selection::new(BTreeSet::new(), edges, 1);
        assert_abs_diff_eq!(
            closed_form_time_uniform(&topo, &sel).unwrap(),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn uniform_closed_form_matches_grid_pipeline() {
        let (topo, edges) = symmetric(
            2,
            2,
            DistributionSpec::Uniform { a: 0.0, b: 3.0 },
            DistributionSpec::Uniform { a: 1.0, b: 2.0 },
            0.0,
        );
        let sel = Selection::new(BTreeSet::new(), edges, 1);
        let exact = closed_form_time_uniform(&topo, &sel).unwrap();
        let grid = expected_learning_time(&topo, &sel, &GridParams::default()).unwrap();
        assert!(
            (exact - grid).abs() / exact < 5e-3,
            "closed {exact} vs grid {grid}"
        );
    }

    #[test]
    fn uniform_barrier_without_feeds_uses_order_statistic_mean() {
        // max of 3 iid U(0,3) has mean 3 * 3/4.
        let (topo, _) = symmetric(
            3,
            0,
            DistributionSpec::Uniform { a: 0.0, b: 3.0 },
            DistributionSpec::Uniform { a: 1.0, b: 2.0 },
            0.0,
        );
        let sel = Selection::new(BTreeSet::new(), BTreeSet::new(), 1);
        assert_abs_diff_eq!(
            closed_form_time_uniform(&topo, &sel).unwrap(),
            2.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn uniform_ordering_violations_name_the_epoch() {
        // Epoch 1 satisfies a_L <= a_I, but data growth doubles the compute
        // bounds at epoch 2 and pushes its lower bound past a_I.
        let (topo, edges) = symmetric(
            1,
            1,
            DistributionSpec::Uniform { a: 0.6, b: 3.0 },
            DistributionSpec::Uniform { a: 1.0, b: 2.0 },
            100.0,
        );
        let sel1 = Selection::new(BTreeSet::new(), edges.clone(), 1);
        assert!(closed_form_time_uniform(&topo, &sel1).is_ok());
        let sel2 = Selection::new(BTreeSet::new(), edges, 2);
        assert!(matches!(
            closed_form_time_uniform(&topo, &sel2).unwrap_err(),
            Error::ClosedFormOrdering(2)
        ));
    }

    #[test]
    fn asymmetric_feed_counts_are_rejected() {
        let (topo, mut edges) = symmetric(
            2,
            2,
            DistributionSpec::Exponential { rate: 0.6 },
            DistributionSpec::Exponential { rate: 1.0 },
            0.0,
        );
        // Drop one edge so the learners see different feed counts.
        let dropped = *edges.iter().next().unwrap();
        edges.remove(&dropped);
        let sel = Selection::new(BTreeSet::new(), edges, 1);
        let err = closed_form_time_exponential(&topo, &sel).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution { .. }));
    }

    #[test]
    fn scaled_uniform_epochs_match_grid_pipeline() {
        // One learner, one feed, doubling data: epoch 2 compute is U(1, 4).
        let (topo, edges) = symmetric(
            1,
            1,
            DistributionSpec::Uniform { a: 0.5, b: 2.0 },
            DistributionSpec::Uniform { a: 1.0, b: 2.0 },
            100.0,
        );
        let sel = Selection::new(BTreeSet::new(), edges, 2);
        let exact = closed_form_time_uniform(&topo, &sel).unwrap();
        let grid = expected_learning_time(&topo, &sel, &GridParams::default()).unwrap();
        assert!(
            (exact - grid).abs() / exact < 5e-3,
            "closed {exact} vs grid {grid}"
        );
    }
}
