//! Generative simulation and verification.
//!
//! This module owns the ground truth the rest of the crate is checked
//! against: an exhaustive enumeration oracle for desk-size populations, a
//! realized-population generator for both error models, a sampling and
//! confidence-interval simulator, and the verification suite that compares
//! every closed-form surface against the oracle on randomized mini
//! populations.

use crate::aon::EstimatorKind;
use crate::population::{Claim, ClaimPopulation, LineItem};
use crate::ratio::{preference_probability_exact, ExactMode};
use crate::rng::CounterRng;
use crate::{Error, Result};

use rayon::prelude::*;

/// Pre-audit error model for a claim population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    /// Each claim errs fully with probability pi, else not at all.
    AllOrNothing { pi: f64 },
    /// Each claim errs fully with probability pi; otherwise each line errs
    /// independently with probability pi_l for its probable error amount.
    LineItem { pi: f64, pi_l: f64 },
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        crate::aon::check_rate("error rate", self.pi())?;
        if let ErrorModel::LineItem { pi_l, .. } = self {
            crate::aon::check_rate("line error rate", *pi_l)?;
        }
        Ok(())
    }

    pub fn pi(&self) -> f64 {
        match self {
            ErrorModel::AllOrNothing { pi } | ErrorModel::LineItem { pi, .. } => *pi,
        }
    }

    pub fn pi_l(&self) -> Option<f64> {
        match self {
            ErrorModel::AllOrNothing { .. } => None,
            ErrorModel::LineItem { pi_l, .. } => Some(*pi_l),
        }
    }
}

/// A population together with one realized vector of true error amounts.
#[derive(Debug, Clone)]
pub struct RealizedPopulation {
    pub base: ClaimPopulation,
    /// Realized error amount per claim, in cents, claim order.
    pub y_cents: Vec<i64>,
    pub model: ErrorModel,
    pub seed: u64,
}

impl RealizedPopulation {
    pub fn total_error_cents(&self) -> i64 {
        self.y_cents.iter().sum()
    }

    /// Skewness of the realized error amounts; normal-theory intervals
    /// degrade when this is large.
    pub fn error_skewness(&self) -> f64 {
        let n = self.y_cents.len() as f64;
        let mean = self.y_cents.iter().map(|&y| y as f64).sum::<f64>() / n;
        let (mut m2, mut m3) = (0.0, 0.0);
        for &y in &self.y_cents {
            let d = y as f64 - mean;
            m2 += d * d;
            m3 += d * d * d;
        }
        m2 /= n;
        m3 /= n;
        if m2 > 0.0 {
            m3 / m2.powf(1.5)
        } else {
            0.0
        }
    }
}

/// Draws one error realization. Each claim consumes its own derived stream,
/// so the result does not depend on evaluation order: claim i draws its
/// full-error indicator first, then one line indicator per line when needed.
pub fn realize(pop: &ClaimPopulation, model: ErrorModel, seed: u64) -> Result<RealizedPopulation> {
    model.validate()?;
    let y_cents = pop
        .claims()
        .iter()
        .enumerate()
        .map(|(i, claim)| {
            let mut rng = CounterRng::derive(seed, i as u64);
            if rng.bernoulli(model.pi()) {
                claim.total_cents()
            } else {
                match model {
                    ErrorModel::AllOrNothing { .. } => 0,
                    ErrorModel::LineItem { pi_l, .. } => claim
                        .lines
                        .iter()
                        .map(|l| {
                            if rng.bernoulli(pi_l) {
                                l.probable_error_cents
                            } else {
                                0
                            }
                        })
                        .sum(),
                }
            }
        })
        .collect();
    Ok(RealizedPopulation {
        base: pop.clone(),
        y_cents,
        model,
        seed,
    })
}

/// Exact model expectations for a desk-size population, by weighted
/// enumeration of every error indicator assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleExpectations {
    /// E over realizations of the finite-population variance of the error
    /// amounts.
    pub e_sigma_y2: f64,
    /// E of the squared deviation around the realized ratio line, with the
    /// ratio defined as 0 for the all-zero realization.
    pub e_sigma_r2: f64,
    /// P(g > 0) for the estimator-selection statistic g, which depends only
    /// on the claim-level indicators.
    pub p_g_positive: f64,
}

pub const ORACLE_MAX_BITS: usize = 12;

/// Enumerates all claim-level and line-level indicator assignments (at most
/// 2^12) and averages the exact statistics. This is the independent route
/// the closed forms are validated against, so it deliberately shares no
/// algebra with them: every statistic is computed from the realized vector.
pub fn oracle_expectations(
    pop: &ClaimPopulation,
    pi: f64,
    pi_l: f64,
) -> Result<OracleExpectations> {
    crate::aon::check_rate("error rate", pi)?;
    crate::aon::check_rate("line error rate", pi_l)?;
    let n = pop.len();
    let bits: usize = n + pop.line_count();
    if bits > ORACLE_MAX_BITS {
        return Err(Error::OracleTooLarge {
            bits,
            max: ORACLE_MAX_BITS,
        });
    }
    let m = crate::population::compute_moments(pop);
    if m.mu_x <= 0.0 {
        return Err(Error::ZeroMeanClaims);
    }
    let shift = m.mu_x + m.sigma2_x / (2.0 * m.mu_x);

    // Per-claim outcome lists: (error cents, weight, claim fully erred).
    // A fully erred claim contributes one branch of weight pi; line
    // indicators are marginalized there. Otherwise each of the 2^b line
    // patterns contributes its Bernoulli product times (1 - pi).
    let mut outcomes: Vec<Vec<(i64, f64, bool)>> = Vec::with_capacity(n);
    for claim in pop.claims() {
        let mut list = vec![(claim.total_cents(), pi, true)];
        let b = claim.lines.len();
        for mask in 0u32..(1u32 << b) {
            let mut y = 0i64;
            let mut w = 1.0 - pi;
            for (j, line) in claim.lines.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    y += line.probable_error_cents;
                    w *= pi_l;
                } else {
                    w *= 1.0 - pi_l;
                }
            }
            list.push((y, w, false));
        }
        outcomes.push(list);
    }

    let x_dollars: Vec<f64> = pop
        .claims()
        .iter()
        .map(|c| c.total_cents() as f64 / 100.0)
        .collect();
    let c_values: Vec<f64> = x_dollars.iter().map(|&x| x * (x - shift)).collect();
    let tau_x: f64 = x_dollars.iter().sum();
    let nf = n as f64;

    let mut sum_w = 0.0;
    let mut e_y2 = 0.0;
    let mut e_r2 = 0.0;
    let mut p_g = 0.0;
    let mut choice = vec![0usize; n];
    let mut y = vec![0.0f64; n];
    loop {
        let mut w = 1.0;
        let mut g = 0.0;
        for i in 0..n {
            let (cents, wi, full) = outcomes[i][choice[i]];
            w *= wi;
            y[i] = cents as f64 / 100.0;
            if full {
                g += c_values[i];
            }
        }
        if w > 0.0 {
            let mean = y.iter().sum::<f64>() / nf;
            let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            let total = mean * nf;
            let r = if total == 0.0 { 0.0 } else { total / tau_x };
            let dev = y
                .iter()
                .zip(&x_dollars)
                .map(|(&yi, &xi)| {
                    let d = yi - r * xi;
                    d * d
                })
                .sum::<f64>()
                / nf;
            sum_w += w;
            e_y2 += w * var;
            e_r2 += w * dev;
            if g > 0.0 {
                p_g += w;
            }
        }
        // Advance the mixed-radix counter over outcome choices.
        let mut i = 0;
        loop {
            if i == n {
                return Ok(OracleExpectations {
                    e_sigma_y2: e_y2 / sum_w,
                    e_sigma_r2: e_r2 / sum_w,
                    p_g_positive: p_g / sum_w,
                });
            }
            choice[i] += 1;
            if choice[i] < outcomes[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Outcome of repeated sample-and-estimate trials on one realized population.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub replicates: usize,
    pub estimator: EstimatorKind,
    pub nominal: f64,
    /// Fraction of replicates whose interval covered the true error total.
    pub attained: f64,
    /// Average half-width of the intervals, dollars.
    pub mean_margin: f64,
    /// Root mean squared estimation error, dollars.
    pub rmse: f64,
    pub seed: u64,
    pub n: usize,
    /// True total error amount of the realized population, dollars.
    pub true_total: f64,
    /// Skewness of the realized per-claim error amounts (interval-quality
    /// diagnostic).
    pub skewness_y: f64,
}

/// Realized error-amount skewness above this suggests normal-theory
/// intervals will undershoot their nominal coverage; coverage runs report it
/// so shortfalls can be flagged as expected rather than treated as defects.
pub const SKEWNESS_FLAG_THRESHOLD: f64 = 2.0;

/// Repeatedly draws a simple random sample of n claims without replacement,
/// estimates the total error amount, and checks whether the normal-theory
/// interval covers the truth.
///
/// Estimators: simple expansion N*ybar, or the ratio estimate
/// (ybar/xbar)*tau_x. Interval half-width is z * sqrt of the standard
/// variance estimate (sample variance over n-1, finite population correction
/// (N-n)/N). A zero-width interval covers only when the estimate equals the
/// truth exactly; a census replicate therefore always covers.
pub fn simulate_estimation(
    rp: &RealizedPopulation,
    n: usize,
    estimator: EstimatorKind,
    confidence: f64,
    replicates: usize,
    seed: u64,
) -> Result<CoverageReport> {
    let n_pop = rp.base.len();
    if n < 2 || n > n_pop {
        return Err(Error::InvalidSampleSize { n, n_pop });
    }
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let z = crate::numerics::normal_quantile(0.5 * (1.0 + confidence))?;
    let x_cents: Vec<f64> = rp
        .base
        .claims()
        .iter()
        .map(|c| c.total_cents() as f64)
        .collect();
    let y_cents: Vec<f64> = rp.y_cents.iter().map(|&y| y as f64).collect();
    let tau_x: f64 = x_cents.iter().sum();
    let tau_y: f64 = y_cents.iter().sum();
    let nf = n as f64;
    let npf = n_pop as f64;
    let expand = npf / nf; // exactly 1 for a census
    let fpc = (npf - nf) / npf;

    struct Rep {
        covered: bool,
        margin: f64,
        error: f64,
    }

    let outcomes: Vec<Rep> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = CounterRng::derive(seed, r);
            // Partial Fisher-Yates: the first n slots become the sample.
            let mut idx: Vec<u32> = (0..n_pop as u32).collect();
            for k in 0..n {
                let j = k + rng.below((n_pop - k) as u64) as usize;
                idx.swap(k, j);
            }
            let sample = &idx[..n];
            let sum_y: f64 = sample.iter().map(|&i| y_cents[i as usize]).sum();
            let (estimate, var_hat) = match estimator {
                EstimatorKind::SimpleExpansion => {
                    let mean = sum_y / nf;
                    let ss: f64 = sample
                        .iter()
                        .map(|&i| {
                            let d = y_cents[i as usize] - mean;
                            d * d
                        })
                        .sum();
                    let s2 = ss / (nf - 1.0);
                    (sum_y * expand, npf * npf * s2 / nf * fpc)
                }
                EstimatorKind::Ratio => {
                    let sum_x: f64 = sample.iter().map(|&i| x_cents[i as usize]).sum();
                    let r_hat = sum_y / sum_x;
                    let ss: f64 = sample
                        .iter()
                        .map(|&i| {
                            let d = y_cents[i as usize] - r_hat * x_cents[i as usize];
                            d * d
                        })
                        .sum();
                    let s2 = ss / (nf - 1.0);
                    // tau_x / sum_x is exactly 1 for a census.
                    (sum_y * (tau_x / sum_x), npf * npf * s2 / nf * fpc)
                }
            };
            let margin = z * var_hat.max(0.0).sqrt();
            Rep {
                covered: (estimate - tau_y).abs() <= margin,
                margin,
                error: estimate - tau_y,
            }
        })
        .collect();

    // Sequential reduction over the ordered replicate buffer keeps the
    // report identical for every worker count.
    let mut covered = 0usize;
    let mut sum_margin = 0.0;
    let mut sum_sq_err = 0.0;
    for rep in &outcomes {
        covered += usize::from(rep.covered);
        sum_margin += rep.margin;
        sum_sq_err += rep.error * rep.error;
    }
    let reps = replicates as f64;
    Ok(CoverageReport {
        replicates,
        estimator,
        nominal: confidence,
        attained: covered as f64 / reps,
        mean_margin: sum_margin / reps / 100.0,
        rmse: (sum_sq_err / reps).sqrt() / 100.0,
        seed,
        n,
        true_total: tau_y / 100.0,
        skewness_y: rp.error_skewness(),
    })
}

/// Random desk-size population for the verification suite: up to 4 claims,
/// up to 3 lines each with at most 8 lines total (so the oracle's indicator
/// budget holds), integer dollar amounts up to 100, probable error a random
/// integer share of each line.
pub fn mini_population(rng: &mut CounterRng) -> ClaimPopulation {
    let n = 1 + rng.below(4) as usize;
    let mut used = 0usize;
    let claims = (0..n)
        .map(|i| {
            let remaining_claims = n - i - 1;
            let max_b = (8 - used - remaining_claims).clamp(1, 3);
            let b = 1 + rng.below(max_b as u64) as usize;
            used += b;
            let lines = (0..b)
                .map(|_| {
                    let dollars = 1 + rng.below(100) as i64;
                    let pe = rng.below(dollars as u64 + 1) as i64;
                    LineItem {
                        claimed_cents: dollars * 100,
                        probable_error_cents: pe * 100,
                    }
                })
                .collect();
            Claim {
                id: format!("M{}", i + 1),
                lines,
            }
        })
        .collect();
    ClaimPopulation::new(claims).expect("generated population is valid")
}

/// Relative agreement denominator: absolute below 1, relative above.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub const VERIFY_TOLERANCE: f64 = 1e-9;
const VERIFY_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// One oracle comparison that exceeded tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyFailure {
    pub population: usize,
    pub pi: f64,
    pub pi_l: f64,
    pub quantity: &'static str,
    pub closed_form: f64,
    pub oracle: f64,
}

/// Summary of the oracle-equivalence suite.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub populations: usize,
    pub checks: usize,
    pub max_rel_err_y: f64,
    pub max_rel_err_r: f64,
    pub max_abs_err_p: f64,
    pub failures: Vec<VerifyFailure>,
    pub seed: u64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares the closed-form variance surfaces and the exhaustive preference
/// probability against the enumeration oracle on seeded random mini
/// populations, over the 5x5 rate grid. This is the crate's central
/// correctness check.
pub fn verify_suite(populations: usize, seed: u64) -> Result<VerifyReport> {
    if populations == 0 {
        return Err(Error::NoReplicates);
    }
    struct PopResult {
        max_y: f64,
        max_r: f64,
        max_p: f64,
        checks: usize,
        failures: Vec<VerifyFailure>,
    }
    let results: Vec<PopResult> = (0..populations as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = CounterRng::derive(seed, p);
            let pop = mini_population(&mut rng);
            let cy = crate::partial::partial_y_coefficients(&pop);
            let cr = crate::ratio::partial_r_coefficients(&pop)?;
            let mut out = PopResult {
                max_y: 0.0,
                max_r: 0.0,
                max_p: 0.0,
                checks: 0,
                failures: Vec::new(),
            };
            for &pi in &VERIFY_GRID {
                // P(g > 0) does not involve the line rate; check it once per
                // claim rate against the oracle's joint enumeration.
                let pref = preference_probability_exact(&pop, pi, ExactMode::Exhaustive)?;
                for &pi_l in &VERIFY_GRID {
                    let oracle = oracle_expectations(&pop, pi, pi_l)?;
                    let y = crate::partial::expected_var_y(&cy, pi, pi_l)?.value;
                    let r = crate::ratio::expected_var_r(&cr, pi, pi_l)?.value;
                    let ey = rel_err(y, oracle.e_sigma_y2);
                    let er = rel_err(r, oracle.e_sigma_r2);
                    let ep = (pref.prob_ratio_better - oracle.p_g_positive).abs();
                    out.max_y = out.max_y.max(ey);
                    out.max_r = out.max_r.max(er);
                    out.max_p = out.max_p.max(ep);
                    out.checks += 1;
                    if ey > VERIFY_TOLERANCE {
                        out.failures.push(VerifyFailure {
                            population: p as usize,
                            pi,
                            pi_l,
                            quantity: "expected variance (simple expansion)",
                            closed_form: y,
                            oracle: oracle.e_sigma_y2,
                        });
                    }
                    if er > VERIFY_TOLERANCE {
                        out.failures.push(VerifyFailure {
                            population: p as usize,
                            pi,
                            pi_l,
                            quantity: "expected variance (ratio)",
                            closed_form: r,
                            oracle: oracle.e_sigma_r2,
                        });
                    }
                    if ep > 1e-12 {
                        out.failures.push(VerifyFailure {
                            population: p as usize,
                            pi,
                            pi_l,
                            quantity: "preference probability",
                            closed_form: pref.prob_ratio_better,
                            oracle: oracle.p_g_positive,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = VerifyReport {
        populations,
        checks: 0,
        max_rel_err_y: 0.0,
        max_rel_err_r: 0.0,
        max_abs_err_p: 0.0,
        failures: Vec::new(),
        seed,
    };
    for r in results {
        report.checks += r.checks;
        report.max_rel_err_y = report.max_rel_err_y.max(r.max_y);
        report.max_rel_err_r = report.max_rel_err_r.max(r.max_r);
        report.max_abs_err_p = report.max_abs_err_p.max(r.max_p);
        report.failures.extend(r.failures);
    }
    Ok(report)
}
