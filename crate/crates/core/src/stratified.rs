//! Stratified planning: per-stratum variance prediction, Neyman allocation,
//! and breakpoint optimization over claim totals.
//!
//! Strata are half-open intervals [low, high) of the claim total; the
//! largest total always lands in the last stratum. Planning variance is
//!
//!   Var(tau_hat) = sum_h N_h^2 sigma_h^2 / n_h * (N_h - n_h)/(N_h - 1)
//!
//! with sigma_h^2 the model-predicted within-stratum error variance from the
//! matching design module, applied stratum-locally.

use crate::aon::EstimatorKind;
use crate::montecarlo::ErrorModel;
use crate::population::{ClaimPopulation, ClaimSums, PopulationMoments};
use crate::{Error, Result};

use rayon::prelude::*;

/// One stratum of a plan, claim totals in [low, high).
#[derive(Debug, Clone, PartialEq)]
pub struct StratumSummary {
    pub index: usize,
    /// Smallest claim total in the stratum, cents.
    pub low_cents: i64,
    /// Exclusive upper bound (the next breakpoint), cents; None for the top
    /// stratum.
    pub high_cents: Option<i64>,
    pub n_pop: usize,
    pub moments: PopulationMoments,
    /// Model-predicted within-stratum variance of the error amounts,
    /// dollars squared.
    pub predicted_variance: f64,
    pub n_sample: usize,
    pub(crate) sums: ClaimSums,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratificationPlan {
    /// Interior breakpoints, cents, strictly increasing, length L-1.
    pub breakpoints_cents: Vec<i64>,
    pub strata: Vec<StratumSummary>,
    pub estimator: EstimatorKind,
    pub model: ErrorModel,
    pub n_total: usize,
    /// Predicted variance of the stratified total estimate, dollars squared.
    pub total_variance: f64,
    pub warnings: Vec<String>,
}

impl StratificationPlan {
    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }
}

/// Within-stratum error variance under the given estimator and model,
/// evaluated from exact stratum sums. Each arm is the corresponding design
/// module's formula applied to the stratum as if it were a population.
pub(crate) fn stratum_sigma2(
    sums: &ClaimSums,
    estimator: EstimatorKind,
    model: ErrorModel,
) -> Result<f64> {
    let value = match (estimator, model) {
        (EstimatorKind::SimpleExpansion, ErrorModel::AllOrNothing { pi }) => {
            let n = sums.n as f64;
            let mu = sums.s1 as f64 / n / 100.0;
            let mu2 = sums.s2 as f64 / n / 1e4;
            pi * mu2 - (pi * mu) * (pi * mu) - pi * (1.0 - pi) * mu2 / n
        }
        (EstimatorKind::SimpleExpansion, ErrorModel::LineItem { pi, pi_l }) => {
            let coef = crate::partial::partial_y_from_sums(sums);
            coef.surface().eval(pi, pi_l)
        }
        (EstimatorKind::Ratio, ErrorModel::AllOrNothing { pi }) => {
            let a = crate::ratio::partial_r_a_from_sums(sums)?;
            pi * (1.0 - pi) * a[0]
        }
        (EstimatorKind::Ratio, ErrorModel::LineItem { pi, pi_l }) => {
            let a = crate::ratio::partial_r_a_from_sums(sums)?;
            a[0] * pi * (1.0 - pi)
                + a[1] * (1.0 - pi) * pi_l * pi_l
                + a[2] * (1.0 - pi) * pi_l * (1.0 - pi_l)
                + a[3] * pi * (1.0 - pi) * pi_l
                + a[4] * (1.0 - pi) * (1.0 - pi) * pi_l * pi_l
        }
    };
    // Exact expectations of nonnegative statistics; only roundoff can dip
    // below zero.
    Ok(value.max(0.0))
}

/// Search-time variant: under the ratio estimator with all-or-nothing
/// errors the stratum variance is pi (1-pi) times a pi-free coefficient, so
/// the common factor cannot move the argmin. Dropping it keeps the chosen
/// breakpoints bit-identical for every error rate.
fn stratum_sigma2_search(
    sums: &ClaimSums,
    estimator: EstimatorKind,
    model: ErrorModel,
) -> Result<f64> {
    if let (EstimatorKind::Ratio, ErrorModel::AllOrNothing { .. }) = (estimator, model) {
        let a = crate::ratio::partial_r_a_from_sums(sums)?;
        return Ok(a[0].max(0.0));
    }
    stratum_sigma2(sums, estimator, model)
}

/// (N_h, sigma_h^2, n_h) triple for the variance combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumTerm {
    pub n_pop: usize,
    pub variance: f64,
    pub n_sample: usize,
}

/// Combines per-stratum terms into the stratified variance. Single-claim
/// strata contribute zero with a warning; census strata contribute zero
/// through the finite population correction.
pub fn combine_strata(terms: &[StratumTerm]) -> Result<(f64, Vec<String>)> {
    let mut total = 0.0;
    let mut warnings = Vec::new();
    for (h, t) in terms.iter().enumerate() {
        if t.n_pop == 0 {
            return Err(Error::InvalidBreakpoints);
        }
        if t.n_sample == 0 {
            return Err(Error::InvalidStratumAllocation {
                index: h,
                n_h: t.n_sample,
                n_pop_h: t.n_pop,
            });
        }
        if t.n_sample > t.n_pop {
            return Err(Error::InvalidStratumAllocation {
                index: h,
                n_h: t.n_sample,
                n_pop_h: t.n_pop,
            });
        }
        if t.n_pop == 1 {
            warnings.push(format!(
                "stratum {} holds a single claim and contributes no variance",
                h + 1
            ));
            continue;
        }
        let nh = t.n_pop as f64;
        let n = t.n_sample as f64;
        total += nh * nh * t.variance / n * (nh - n) / (nh - 1.0);
    }
    Ok((total, warnings))
}

/// Re-evaluates a plan's variance under a possibly different error model,
/// keeping its breakpoints and allocations.
pub fn stratified_variance(plan: &StratificationPlan, model: ErrorModel) -> Result<f64> {
    model.validate()?;
    let terms = plan
        .strata
        .iter()
        .map(|s| {
            Ok(StratumTerm {
                n_pop: s.n_pop,
                variance: stratum_sigma2(&s.sums, plan.estimator, model)?,
                n_sample: s.n_sample,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_strata(&terms)?.0)
}

/// Neyman allocation of n_total across strata: quotas proportional to
/// N_h sigma_h, rounded by largest remainder, then raised to the floor of 2
/// (or the stratum size when smaller) and capped at N_h, rebalancing the
/// excess by distance from quota. Zero total weight falls back to
/// proportional-to-size quotas.
pub fn allocate(sizes: &[usize], sigmas: &[f64], n_total: usize) -> Result<Vec<usize>> {
    assert_eq!(sizes.len(), sigmas.len());
    let n_pop: usize = sizes.iter().sum();
    if n_total > n_pop {
        return Err(Error::AllocationTooLarge { n_total, n_pop });
    }
    let needed: usize = sizes.iter().map(|&s| s.min(2)).sum();
    if n_total < needed {
        return Err(Error::AllocationTooSmall { n_total, needed });
    }
    let weights: Vec<f64> = sizes
        .iter()
        .zip(sigmas)
        .map(|(&nh, &s)| nh as f64 * s.max(0.0))
        .collect();
    let total_w: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if total_w > 0.0 {
        weights
            .iter()
            .map(|w| n_total as f64 * w / total_w)
            .collect()
    } else {
        sizes
            .iter()
            .map(|&nh| n_total as f64 * nh as f64 / n_pop as f64)
            .collect()
    };

    let mut n: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = n.iter().sum();
    let mut order: Vec<usize> = (0..n.len()).collect();
    // Largest fractional remainder first; ties go to the earlier stratum.
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &h in order.iter().take(n_total.saturating_sub(assigned)) {
        n[h] += 1;
    }

    let floors: Vec<usize> = sizes.iter().map(|&s| s.min(2)).collect();
    for h in 0..n.len() {
        n[h] = n[h].clamp(floors[h], sizes[h]);
    }
    // Rebalance after clamping: shrink the strata furthest above quota,
    // grow the ones furthest below, always by whole units.
    loop {
        let sum: usize = n.iter().sum();
        if sum == n_total {
            break;
        }
        if sum > n_total {
            let h = (0..n.len())
                .filter(|&h| n[h] > floors[h])
                .max_by(|&a, &b| {
                    let da = n[a] as f64 - quotas[a];
                    let db = n[b] as f64 - quotas[b];
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("sum > n_total >= sum of floors implies slack");
            n[h] -= 1;
        } else {
            let h = (0..n.len())
                .filter(|&h| n[h] < sizes[h])
                .max_by(|&a, &b| {
                    let da = quotas[a] - n[a] as f64;
                    let db = quotas[b] - n[b] as f64;
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("sum < n_total <= population implies room");
            n[h] += 1;
        }
    }
    Ok(n)
}

/// Claims sorted by total; the working form for every partition operation.
struct SortedClaims {
    /// Totals in sorted order, cents.
    totals: Vec<i64>,
    /// prefix[i] holds sums over the first i sorted claims.
    prefix: Vec<ClaimSums>,
}

impl SortedClaims {
    fn build(pop: &ClaimPopulation) -> Self {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by_key(|&i| pop.claims()[i].total_cents());
        let totals: Vec<i64> = order
            .iter()
            .map(|&i| pop.claims()[i].total_cents())
            .collect();
        let mut prefix = Vec::with_capacity(pop.len() + 1);
        prefix.push(ClaimSums::default());
        for &i in &order {
            let mut s = *prefix.last().unwrap();
            s.add_claim(&pop.claims()[i]);
            prefix.push(s);
        }
        SortedClaims { totals, prefix }
    }

    fn segment(&self, start: usize, end: usize) -> ClaimSums {
        self.prefix[end].minus(&self.prefix[start])
    }

    /// Positions where the sorted total changes; cutting at position p puts
    /// claims [p..] into the next stratum, so these are exactly the valid
    /// breakpoints.
    fn cut_positions(&self) -> Vec<usize> {
        (1..self.totals.len())
            .filter(|&p| self.totals[p] != self.totals[p - 1])
            .collect()
    }

    fn moments_for(&self, start: usize, end: usize) -> PopulationMoments {
        let sums = self.segment(start, end);
        let mu_c = sums.s1 as f64 / sums.n as f64;
        let mut m3 = 0.0;
        for &t in &self.totals[start..end] {
            let d = t as f64 - mu_c;
            m3 += d * d * d;
        }
        sums.moments(m3)
    }
}

/// Builds a full plan for explicit breakpoints: partition, per-stratum
/// prediction, Neyman allocation, combined variance.
pub fn build_plan(
    pop: &ClaimPopulation,
    breakpoints_cents: &[i64],
    estimator: EstimatorKind,
    model: ErrorModel,
    n_total: usize,
) -> Result<StratificationPlan> {
    model.validate()?;
    if breakpoints_cents.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidBreakpoints);
    }
    let sorted = SortedClaims::build(pop);
    let mut bounds = Vec::with_capacity(breakpoints_cents.len() + 2);
    bounds.push(0usize);
    for &bp in breakpoints_cents {
        let pos = sorted.totals.partition_point(|&t| t < bp);
        bounds.push(pos);
    }
    bounds.push(sorted.totals.len());
    if bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidBreakpoints);
    }
    plan_for_bounds(
        &sorted,
        &bounds,
        breakpoints_cents,
        estimator,
        model,
        n_total,
    )
}

fn plan_for_bounds(
    sorted: &SortedClaims,
    bounds: &[usize],
    breakpoints_cents: &[i64],
    estimator: EstimatorKind,
    model: ErrorModel,
    n_total: usize,
) -> Result<StratificationPlan> {
    let l = bounds.len() - 1;
    let mut sizes = Vec::with_capacity(l);
    let mut sigmas = Vec::with_capacity(l);
    let mut sums_list = Vec::with_capacity(l);
    for h in 0..l {
        let sums = sorted.segment(bounds[h], bounds[h + 1]);
        let v = stratum_sigma2(&sums, estimator, model)?;
        sizes.push(sums.n as usize);
        sigmas.push(v.sqrt());
        sums_list.push((sums, v));
    }
    let alloc = allocate(&sizes, &sigmas, n_total)?;
    let mut strata = Vec::with_capacity(l);
    for h in 0..l {
        let (sums, v) = sums_list[h];
        strata.push(StratumSummary {
            index: h,
            low_cents: sorted.totals[bounds[h]],
            high_cents: breakpoints_cents.get(h).copied(),
            n_pop: sizes[h],
            moments: sorted.moments_for(bounds[h], bounds[h + 1]),
            predicted_variance: v,
            n_sample: alloc[h],
            sums,
        });
    }
    let terms: Vec<StratumTerm> = strata
        .iter()
        .map(|s| StratumTerm {
            n_pop: s.n_pop,
            variance: s.predicted_variance,
            n_sample: s.n_sample,
        })
        .collect();
    let (total_variance, warnings) = combine_strata(&terms)?;
    Ok(StratificationPlan {
        breakpoints_cents: breakpoints_cents.to_vec(),
        strata,
        estimator,
        model,
        n_total,
        total_variance,
        warnings,
    })
}

/// Search objective for one candidate partition: the combined variance under
/// Neyman allocation, or None when the allocation is infeasible.
fn partition_objective(
    sorted: &SortedClaims,
    bounds: &[usize],
    estimator: EstimatorKind,
    model: ErrorModel,
    n_total: usize,
) -> Result<Option<f64>> {
    let l = bounds.len() - 1;
    let mut sizes = Vec::with_capacity(l);
    let mut sigmas = Vec::with_capacity(l);
    let mut variances = Vec::with_capacity(l);
    for h in 0..l {
        let sums = sorted.segment(bounds[h], bounds[h + 1]);
        let v = stratum_sigma2_search(&sums, estimator, model)?;
        sizes.push(sums.n as usize);
        sigmas.push(v.sqrt());
        variances.push(v);
    }
    let alloc = match allocate(&sizes, &sigmas, n_total) {
        Ok(a) => a,
        Err(Error::AllocationTooSmall { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let terms: Vec<StratumTerm> = (0..l)
        .map(|h| StratumTerm {
            n_pop: sizes[h],
            variance: variances[h],
            n_sample: alloc[h],
        })
        .collect();
    Ok(Some(combine_strata(&terms)?.0))
}

/// How many grid nodes the dynamic program keeps when there are more
/// distinct totals than this.
const DP_GRID_MAX: usize = 200;

/// Finds breakpoints minimizing the stratified variance with Neyman
/// allocation of n_total. For L of 2 or 3 the search is exhaustive over
/// every boundary between distinct claim totals. For larger L a dynamic
/// program over a quantile grid of candidate boundaries minimizes the
/// Neyman-optimal proxy sum of N_h sigma_h, and the winning cuts are then
/// evaluated exactly. Ties break toward the lexicographically smallest
/// breakpoint vector.
pub fn optimize_breakpoints(
    pop: &ClaimPopulation,
    l: usize,
    estimator: EstimatorKind,
    model: ErrorModel,
    n_total: usize,
) -> Result<StratificationPlan> {
    model.validate()?;
    if l < 2 {
        return Err(Error::InvalidStratumCount(l));
    }
    if n_total > pop.len() {
        return Err(Error::AllocationTooLarge {
            n_total,
            n_pop: pop.len(),
        });
    }
    let sorted = SortedClaims::build(pop);
    let cuts = sorted.cut_positions();
    let distinct = cuts.len() + 1;
    if l > distinct {
        return Err(Error::StratumCount {
            requested: l,
            distinct,
        });
    }

    let best_bounds = if l <= 3 {
        exhaustive_search(&sorted, &cuts, l, estimator, model, n_total)?
    } else {
        dp_search(&sorted, &cuts, l, estimator, model, n_total)?
    };
    let Some(bounds) = best_bounds else {
        return Err(Error::AllocationTooSmall {
            n_total,
            needed: 2 * l,
        });
    };
    let breakpoints: Vec<i64> = bounds[1..bounds.len() - 1]
        .iter()
        .map(|&p| sorted.totals[p])
        .collect();
    plan_for_bounds(&sorted, &bounds, &breakpoints, estimator, model, n_total)
}

type Candidate = (f64, Vec<usize>);

/// Keeps the strictly better candidate; exact ties keep `a` (callers feed
/// candidates in lexicographic order).
fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (None, b) => b,
        (a, None) => a,
        (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
    }
}

fn exhaustive_search(
    sorted: &SortedClaims,
    cuts: &[usize],
    l: usize,
    estimator: EstimatorKind,
    model: ErrorModel,
    n_total: usize,
) -> Result<Option<Vec<usize>>> {
    let n = sorted.totals.len();
    let best: Option<Candidate> = match l {
        2 => cuts
            .par_iter()
            .map(|&p| {
                let bounds = vec![0, p, n];
                Ok(
                    partition_objective(sorted, &bounds, estimator, model, n_total)?
                        .map(|obj| (obj, bounds)),
                )
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(None, better),
        3 => (0..cuts.len())
            .into_par_iter()
            .map(|i| {
                let mut local: Option<Candidate> = None;
                for j in i + 1..cuts.len() {
                    let bounds = vec![0, cuts[i], cuts[j], n];
                    let cand = partition_objective(sorted, &bounds, estimator, model, n_total)?
                        .map(|obj| (obj, bounds));
                    local = better(local, cand);
                }
                Ok(local)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(None, better),
        _ => unreachable!("exhaustive search is limited to 3 strata"),
    };
    Ok(best.map(|(_, bounds)| bounds))
}

fn dp_search(
    sorted: &SortedClaims,
    cuts: &[usize],
    l: usize,
    estimator: EstimatorKind,
    model: ErrorModel,
    n_total: usize,
) -> Result<Option<Vec<usize>>> {
    let n = sorted.totals.len();
    // Quantile grid: evenly spaced target ranks snapped to the nearest valid
    // cut, deduplicated, so huge populations stay tractable.
    let grid: Vec<usize> = if cuts.len() <= DP_GRID_MAX {
        cuts.to_vec()
    } else {
        let mut g: Vec<usize> = (1..=DP_GRID_MAX)
            .map(|k| {
                let target = k * n / (DP_GRID_MAX + 1);
                match cuts.binary_search(&target) {
                    Ok(i) => cuts[i],
                    Err(i) => {
                        if i == 0 {
                            cuts[0]
                        } else if i == cuts.len() {
                            cuts[cuts.len() - 1]
                        } else if target - cuts[i - 1] <= cuts[i] - target {
                            cuts[i - 1]
                        } else {
                            cuts[i]
                        }
                    }
                }
            })
            .collect();
        g.dedup();
        g
    };
    if grid.len() + 1 < l {
        return Err(Error::Internal(
            "quantile grid too coarse for requested stratum count".into(),
        ));
    }

    // nodes[0] = 0, interior grid cuts, nodes[last] = n.
    let mut nodes = Vec::with_capacity(grid.len() + 2);
    nodes.push(0);
    nodes.extend_from_slice(&grid);
    nodes.push(n);
    let k = nodes.len();
    let seg_cost = |u: usize, v: usize| -> Result<f64> {
        let sums = sorted.segment(nodes[u], nodes[v]);
        let sigma2 = stratum_sigma2_search(&sums, estimator, model)?;
        Ok(sums.n as f64 * sigma2.sqrt())
    };
    // cost[u][v] for u < v; rows computed in parallel.
    let cost: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|u| {
            (0..k)
                .map(|v| if u < v { seg_cost(u, v) } else { Ok(0.0) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let inf = f64::INFINITY;
    let mut dp = vec![vec![inf; k]; l + 1];
    let mut parent = vec![vec![usize::MAX; k]; l + 1];
    for v in 1..k {
        dp[1][v] = cost[0][v];
        parent[1][v] = 0;
    }
    for g in 2..=l {
        for v in g..k {
            for u in g - 1..v {
                if dp[g - 1][u] == inf {
                    continue;
                }
                let c = dp[g - 1][u] + cost[u][v];
                // Strict improvement keeps the smallest predecessor on ties.
                if c < dp[g][v] {
                    dp[g][v] = c;
                    parent[g][v] = u;
                }
            }
        }
    }
    if dp[l][k - 1] == inf {
        return Ok(None);
    }
    let mut bounds = vec![0usize; l + 1];
    bounds[l] = n;
    let mut v = k - 1;
    for g in (1..l).rev() {
        v = parent[g + 1][v];
        bounds[g] = nodes[v];
    }
    // The DP proxy ignores allocation floors; reject if the exact evaluation
    // cannot allocate.
    if partition_objective(sorted, &bounds, estimator, model, n_total)?.is_none() {
        return Ok(None);
    }
    Ok(Some(bounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::population_from_dollars;
    use crate::rng::CounterRng;

    fn aon(pi: f64) -> ErrorModel {
        ErrorModel::AllOrNothing { pi }
    }

    #[test]
    fn combine_two_strata_arithmetic() {
        let terms = [
            StratumTerm {
                n_pop: 100,
                variance: 4.0,
                n_sample: 10,
            },
            StratumTerm {
                n_pop: 50,
                variance: 9.0,
                n_sample: 10,
            },
        ];
        let (v, warnings) = combine_strata(&terms).unwrap();
        let expect = 100.0 * 100.0 * 0.4 * (90.0 / 99.0) + 50.0 * 50.0 * 0.9 * (40.0 / 49.0);
        assert!((v - expect).abs() < 1e-9);
        assert!(warnings.is_empty());
    }

    #[test]
    fn combine_census_is_zero() {
        let terms = [
            StratumTerm {
                n_pop: 7,
                variance: 3.0,
                n_sample: 7,
            },
            StratumTerm {
                n_pop: 4,
                variance: 8.0,
                n_sample: 4,
            },
        ];
        assert_eq!(combine_strata(&terms).unwrap().0, 0.0);
    }

    #[test]
    fn combine_singleton_stratum_warns() {
        let terms = [
            StratumTerm {
                n_pop: 1,
                variance: 5.0,
                n_sample: 1,
            },
            StratumTerm {
                n_pop: 10,
                variance: 2.0,
                n_sample: 4,
            },
        ];
        let (v, warnings) = combine_strata(&terms).unwrap();
        assert!((v - 100.0 * 0.5 * (6.0 / 9.0)).abs() < 1e-12);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn combine_rejects_bad_allocations() {
        assert!(matches!(
            combine_strata(&[StratumTerm {
                n_pop: 5,
                variance: 1.0,
                n_sample: 6
            }]),
            Err(Error::InvalidStratumAllocation { .. })
        ));
        assert!(matches!(
            combine_strata(&[StratumTerm {
                n_pop: 5,
                variance: 1.0,
                n_sample: 0
            }]),
            Err(Error::InvalidStratumAllocation { .. })
        ));
    }

    #[test]
    fn allocate_worked_example() {
        // N_h sigma_h = (300, 100): quotas 6 and 2 land exactly.
        let n = allocate(&[300, 100], &[1.0, 1.0], 8).unwrap();
        assert_eq!(n, vec![6, 2]);
    }

    #[test]
    fn allocate_equal_strata_split_evenly() {
        let n = allocate(&[40, 40, 40], &[2.5, 2.5, 2.5], 12).unwrap();
        assert_eq!(n, vec![4, 4, 4]);
    }

    #[test]
    fn allocate_zero_sigma_gets_floor() {
        let n = allocate(&[100, 100], &[3.0, 0.0], 10).unwrap();
        assert_eq!(n, vec![8, 2]);
    }

    #[test]
    fn allocate_respects_caps_and_conserves_total() {
        // Tiny first stratum forces its cap; the excess must move over.
        let n = allocate(&[3, 100], &[100.0, 0.1], 20).unwrap();
        assert_eq!(n.iter().sum::<usize>(), 20);
        assert_eq!(n[0], 3);
        assert_eq!(n[1], 17);
    }

    #[test]
    fn allocate_bounds_errors() {
        assert!(matches!(
            allocate(&[10, 10], &[1.0, 1.0], 3),
            Err(Error::AllocationTooSmall { needed: 4, .. })
        ));
        assert!(matches!(
            allocate(&[3, 3], &[1.0, 1.0], 7),
            Err(Error::AllocationTooLarge { .. })
        ));
        // A single-claim stratum needs only one unit.
        assert!(allocate(&[1, 10], &[1.0, 1.0], 3).is_ok());
    }

    #[test]
    fn single_stratum_plan_matches_unstratified() {
        let pop = population_from_dollars(&[3.0, 8.0, 21.0, 34.0, 55.0, 89.0]).unwrap();
        let plan = build_plan(&pop, &[], EstimatorKind::SimpleExpansion, aon(0.3), 4).unwrap();
        let m = crate::population::compute_moments(&pop);
        let v = crate::aon::roberts_variance(&m, 0.3).unwrap().value;
        let expect = 36.0 * v / 4.0 * (6.0 - 4.0) / 5.0;
        assert!((plan.total_variance - expect).abs() <= 1e-9 * expect.max(1.0));
        assert_eq!(plan.strata.len(), 1);
        assert_eq!(plan.strata[0].n_sample, 4);
    }

    #[test]
    fn build_plan_rejects_bad_breakpoints() {
        let pop = population_from_dollars(&[10.0, 20.0, 30.0, 40.0]).unwrap();
        // Not increasing.
        assert!(matches!(
            build_plan(&pop, &[3000, 2000], EstimatorKind::Ratio, aon(0.2), 4),
            Err(Error::InvalidBreakpoints)
        ));
        // Empty bottom stratum: breakpoint at or below the smallest total.
        assert!(matches!(
            build_plan(&pop, &[1000], EstimatorKind::Ratio, aon(0.2), 4),
            Err(Error::InvalidBreakpoints)
        ));
    }

    #[test]
    fn stratified_variance_reevaluates_model() {
        let pop = population_from_dollars(&[5.0, 9.0, 14.0, 30.0, 55.0, 80.0]).unwrap();
        let plan = build_plan(&pop, &[3000], EstimatorKind::SimpleExpansion, aon(0.4), 4).unwrap();
        let same = stratified_variance(&plan, aon(0.4)).unwrap();
        assert!((same - plan.total_variance).abs() <= 1e-12 * plan.total_variance.max(1.0));
        // At a zero error rate every stratum variance vanishes.
        assert_eq!(stratified_variance(&plan, aon(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn optimize_isolates_heavy_tail_for_ratio() {
        let pop = population_from_dollars(&[10.0, 10.0, 20.0, 20.0, 100.0, 100.0]).unwrap();
        let plan = optimize_breakpoints(&pop, 2, EstimatorKind::Ratio, aon(0.3), 4).unwrap();
        assert_eq!(plan.breakpoints_cents, vec![10_000]);
        assert_eq!(plan.strata[1].n_pop, 2);
    }

    #[test]
    fn optimize_saturated_distinct_values() {
        let pop = population_from_dollars(&[10.0, 10.0, 20.0, 20.0, 100.0, 100.0]).unwrap();
        let plan =
            optimize_breakpoints(&pop, 3, EstimatorKind::SimpleExpansion, aon(0.5), 6).unwrap();
        assert_eq!(plan.breakpoints_cents, vec![2000, 10_000]);
        // Census in every stratum: no sampling variance left.
        assert_eq!(plan.total_variance, 0.0);
        assert!(matches!(
            optimize_breakpoints(&pop, 4, EstimatorKind::SimpleExpansion, aon(0.5), 6),
            Err(Error::StratumCount {
                requested: 4,
                distinct: 3
            })
        ));
    }

    #[test]
    fn optimize_rejects_undersized_budget() {
        // The cheapest 3-way partition still needs two singletons plus a
        // 2-claim floor, so a budget of 3 cannot work anywhere.
        let pop = population_from_dollars(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!(matches!(
            optimize_breakpoints(&pop, 3, EstimatorKind::SimpleExpansion, aon(0.5), 3),
            Err(Error::AllocationTooSmall { .. })
        ));
    }

    #[test]
    fn ratio_breakpoints_invariant_in_pi() {
        for seed in 0..6u64 {
            let mut rng = CounterRng::derive(17, seed);
            let amounts: Vec<f64> = (0..30).map(|_| (1 + rng.below(500)) as f64).collect();
            let pop = population_from_dollars(&amounts).unwrap();
            let reference =
                optimize_breakpoints(&pop, 3, EstimatorKind::Ratio, aon(0.5), 12).unwrap();
            for tick in 1..=9 {
                let pi = tick as f64 / 10.0;
                let plan =
                    optimize_breakpoints(&pop, 3, EstimatorKind::Ratio, aon(pi), 12).unwrap();
                assert_eq!(plan.breakpoints_cents, reference.breakpoints_cents);
            }
        }
    }

    #[test]
    fn simple_expansion_breakpoints_can_depend_on_pi() {
        // At low error rates the stratum variance is level-driven and the
        // optimal split isolates the largest claim; near certainty it is
        // spread-driven and a coarser split wins.
        let pop = population_from_dollars(&[26.0, 32.0, 49.0, 25.0, 21.0, 18.0]).unwrap();
        let low =
            optimize_breakpoints(&pop, 2, EstimatorKind::SimpleExpansion, aon(0.1), 4).unwrap();
        let high =
            optimize_breakpoints(&pop, 2, EstimatorKind::SimpleExpansion, aon(0.9), 4).unwrap();
        assert_eq!(low.breakpoints_cents, vec![4900]);
        assert_eq!(high.breakpoints_cents, vec![3200]);
    }

    #[test]
    fn dp_matches_brute_forced_surrogate() {
        // Twelve distinct totals in four tight clusters. With L = 4 the grid
        // covers every boundary, so the dynamic program must land on the
        // exact argmin of its surrogate sum of N_h sigma_h over all cut
        // triples, reproduced here by direct enumeration.
        let mut amounts = Vec::new();
        for &(center, count) in &[(1.0, 3), (10.0, 3), (50.0, 3), (200.0, 3)] {
            for i in 0..count {
                amounts.push(center + i as f64 * 0.01);
            }
        }
        let pop = population_from_dollars(&amounts).unwrap();
        let est = EstimatorKind::SimpleExpansion;
        let model = aon(0.5);
        let plan = optimize_breakpoints(&pop, 4, est, model, 8).unwrap();

        let sorted = SortedClaims::build(&pop);
        let cuts = sorted.cut_positions();
        let n = sorted.totals.len();
        let surrogate = |bounds: &[usize]| -> f64 {
            bounds
                .windows(2)
                .map(|w| {
                    let sums = sorted.segment(w[0], w[1]);
                    let s2 = stratum_sigma2_search(&sums, est, model).unwrap();
                    sums.n as f64 * s2.sqrt()
                })
                .sum()
        };
        let mut best = f64::INFINITY;
        let mut best_bounds = Vec::new();
        for i in 0..cuts.len() {
            for j in i + 1..cuts.len() {
                for k in j + 1..cuts.len() {
                    let bounds = vec![0, cuts[i], cuts[j], cuts[k], n];
                    let cost = surrogate(&bounds);
                    if cost < best {
                        best = cost;
                        best_bounds = bounds;
                    }
                }
            }
        }
        let expect: Vec<i64> = best_bounds[1..4]
            .iter()
            .map(|&p| sorted.totals[p])
            .collect();
        assert_eq!(plan.breakpoints_cents, expect);
        // The winning plan must also beat leaving the population whole.
        let flat = build_plan(&pop, &[], est, model, 8).unwrap();
        assert!(plan.total_variance < flat.total_variance);
    }

    #[test]
    fn optimizer_matches_brute_force_over_plans() {
        // Independent check: enumerate every 2-stratum plan through
        // build_plan and compare against the optimizer's pick.
        let pop = population_from_dollars(&[4.0, 7.0, 13.0, 21.0, 40.0, 66.0, 90.0]).unwrap();
        let model = ErrorModel::LineItem { pi: 0.2, pi_l: 0.5 };
        let best = optimize_breakpoints(&pop, 2, EstimatorKind::SimpleExpansion, model, 4).unwrap();
        let mut totals: Vec<i64> = pop.claims().iter().map(|c| c.total_cents()).collect();
        totals.sort_unstable();
        totals.dedup();
        let mut best_manual = f64::INFINITY;
        let mut best_bp = 0;
        for &bp in &totals[1..] {
            let plan = build_plan(&pop, &[bp], EstimatorKind::SimpleExpansion, model, 4).unwrap();
            if plan.total_variance < best_manual {
                best_manual = plan.total_variance;
                best_bp = bp;
            }
        }
        assert_eq!(best.breakpoints_cents, vec![best_bp]);
        assert!((best.total_variance - best_manual).abs() <= 1e-9 * best_manual.max(1.0));
    }

    #[test]
    fn stratification_beats_no_stratification() {
        let mut rng = CounterRng::derive(5, 0);
        let amounts: Vec<f64> = (0..60)
            .map(|i| {
                if i < 50 {
                    (1 + rng.below(40)) as f64
                } else {
                    (500 + rng.below(400)) as f64
                }
            })
            .collect();
        let pop = population_from_dollars(&amounts).unwrap();
        let flat = build_plan(&pop, &[], EstimatorKind::SimpleExpansion, aon(0.3), 10).unwrap();
        let split =
            optimize_breakpoints(&pop, 2, EstimatorKind::SimpleExpansion, aon(0.3), 10).unwrap();
        assert!(split.total_variance < flat.total_variance);
    }
}
