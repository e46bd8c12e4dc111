//! Ratio-estimator planning: when to prefer the ratio estimator over simple
//! expansion, its predicted variance under both error models, conservative
//! maximization, and the zero-error fallback rate.

use crate::aon::{check_rate, VarianceKind, VariancePrediction};
use crate::numerics::normal_cdf;
use crate::partial::{conservative_from_surface, ConservativeSurface};
use crate::population::{ClaimPopulation, DistinctValueGroups, PopulationMoments};
use crate::rng::CounterRng;
use crate::surface::SurfaceCoefficients;
use crate::{Error, Result};

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreferenceMethod {
    NormalApprox,
    Exhaustive,
    MonteCarlo,
}

/// How confident the planner is that ratio estimation beats simple
/// expansion, i.e. P(g > 0) for the criterion statistic g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceReport {
    pub prob_ratio_better: f64,
    pub mean_g: f64,
    pub var_g: f64,
    pub method: PreferenceMethod,
    /// Standard error of the Monte Carlo estimate, when that method ran.
    pub mc_std_err: Option<f64>,
    /// Smallest distinct-value group; the normal approximation leans on
    /// every group being large.
    pub min_group_count: usize,
    pub distinct_values: usize,
    /// Set when pi sits on an endpoint and the probability is the limit
    /// value rather than a computed one.
    pub degenerate: bool,
}

/// Normal-approximation preference probability at claim error rate pi.
///
/// The criterion statistic has E(g) = pi sigma^2 / 2 and
/// Var(g) = pi (1-pi) sum(c_i^2) / N^2; the reported probability is
/// P(Z > -E/sd) = Phi(E/sd). Positive mean with pi in (0,1) keeps it
/// above one half always.
pub fn preference_probability(
    groups: &DistinctValueGroups,
    m: &PopulationMoments,
    pi: f64,
) -> Result<PreferenceReport> {
    check_rate("error rate", pi)?;
    if m.mu_x <= 0.0 {
        return Err(Error::ZeroMeanClaims);
    }
    let base = PreferenceReport {
        prob_ratio_better: 0.5,
        mean_g: 0.0,
        var_g: 0.0,
        method: PreferenceMethod::NormalApprox,
        mc_std_err: None,
        min_group_count: groups.min_count(),
        distinct_values: groups.groups.len(),
        degenerate: false,
    };
    if pi == 0.0 {
        return Ok(PreferenceReport {
            degenerate: true,
            ..base
        });
    }
    if pi == 1.0 {
        return Ok(PreferenceReport {
            prob_ratio_better: 1.0,
            mean_g: m.sigma2_x / 2.0,
            degenerate: true,
            ..base
        });
    }
    let n = m.n_pop as f64;
    let mean_g = pi * m.sigma2_x / 2.0;
    let var_g = pi * (1.0 - pi) * groups.sum_c_sq() / (n * n);
    let prob = if var_g > 0.0 {
        normal_cdf(mean_g / var_g.sqrt())
    } else {
        // Constant population: g is identically zero.
        0.5
    };
    Ok(PreferenceReport {
        prob_ratio_better: prob,
        mean_g,
        var_g,
        ..base
    })
}

pub enum ExactMode {
    /// Full enumeration over error indicator vectors; population must have
    /// at most `EXHAUSTIVE_MAX_CLAIMS` claims.
    Exhaustive,
    MonteCarlo {
        replicates: usize,
        seed: u64,
    },
}

pub const EXHAUSTIVE_MAX_CLAIMS: usize = 20;

/// P(g > 0) without the normal approximation, by enumeration or seeded
/// Monte Carlo over the claim error indicators. Ties g = 0 count as
/// not-preferred, matching the strict inequality.
pub fn preference_probability_exact(
    pop: &ClaimPopulation,
    pi: f64,
    mode: ExactMode,
) -> Result<PreferenceReport> {
    check_rate("error rate", pi)?;
    let m = crate::population::compute_moments(pop);
    if m.mu_x <= 0.0 {
        return Err(Error::ZeroMeanClaims);
    }
    let groups = crate::population::distinct_value_groups(pop)?;
    let shift = m.mu_x + m.sigma2_x / (2.0 * m.mu_x);
    let c: Vec<f64> = pop
        .claims()
        .iter()
        .map(|cl| {
            let x = cl.total_cents() as f64 / 100.0;
            x * (x - shift)
        })
        .collect();
    let n = pop.len();
    let (prob, method, se) = match mode {
        ExactMode::Exhaustive => {
            if n > EXHAUSTIVE_MAX_CLAIMS {
                return Err(Error::ExhaustiveTooLarge {
                    n,
                    max: EXHAUSTIVE_MAX_CLAIMS,
                });
            }
            let mut positive = 0.0;
            for mask in 0u64..(1u64 << n) {
                let mut g = 0.0;
                let mut errs = 0u32;
                for (i, ci) in c.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        g += ci;
                        errs += 1;
                    }
                }
                if g > 0.0 {
                    positive += pi.powi(errs as i32) * (1.0 - pi).powi((n as u32 - errs) as i32);
                }
            }
            (positive, PreferenceMethod::Exhaustive, None)
        }
        ExactMode::MonteCarlo { replicates, seed } => {
            if replicates == 0 {
                return Err(Error::NoReplicates);
            }
            // Replicates draw from per-replicate streams, so the count of
            // positives is independent of scheduling and worker count.
            let positives: u64 = (0..replicates as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = CounterRng::derive(seed, r);
                    let mut g = 0.0;
                    for ci in &c {
                        if rng.bernoulli(pi) {
                            g += ci;
                        }
                    }
                    u64::from(g > 0.0)
                })
                .sum();
            let p = positives as f64 / replicates as f64;
            let se = (p * (1.0 - p) / replicates as f64).sqrt();
            (p, PreferenceMethod::MonteCarlo, Some(se))
        }
    };
    Ok(PreferenceReport {
        prob_ratio_better: prob,
        mean_g: pi * m.sigma2_x / 2.0,
        var_g: pi * (1.0 - pi) * groups.sum_c_sq() / (n as f64 * n as f64),
        method,
        mc_std_err: se,
        min_group_count: groups.min_count(),
        distinct_values: groups.groups.len(),
        degenerate: pi == 0.0 || pi == 1.0,
    })
}

/// Expected squared deviation of the error amounts around the ratio line
/// under the all-or-nothing model:
///
///   pi (1-pi) mu2 [ 1 + (sigma^2/mu^2 + 4 mu^2/mu2 - 2 m3/(mu mu2) - 5) / N ]
///
/// with m3 the third central moment of the claim totals. The bracket keeps
/// every 1/N term, so the value matches exhaustive enumeration exactly; the
/// familiar large-population form pi (1-pi) mu2 is exposed separately.
pub fn roberts_ratio_variance(m: &PopulationMoments, pi: f64) -> Result<VariancePrediction> {
    check_rate("error rate", pi)?;
    if m.mu_x <= 0.0 {
        return Err(Error::ZeroMeanClaims);
    }
    let n = m.n_pop as f64;
    let sigma3 = m.sigma2_x.powf(1.5);
    let m3 = m.g1_skew * sigma3;
    let bracket = 1.0
        + (m.sigma2_x / (m.mu_x * m.mu_x) + 4.0 * m.mu_x * m.mu_x / m.mu_x2
            - 2.0 * m3 / (m.mu_x * m.mu_x2)
            - 5.0)
            / n;
    Ok(VariancePrediction::point(
        pi * (1.0 - pi) * m.mu_x2 * bracket,
        pi,
        None,
        VarianceKind::RobertsRatio,
    ))
}

/// Large-population shorthand pi (1-pi) mu2, for reporting next to the exact
/// value.
pub fn roberts_ratio_variance_large_n(m: &PopulationMoments, pi: f64) -> Result<f64> {
    check_rate("error rate", pi)?;
    Ok(pi * (1.0 - pi) * m.mu_x2)
}

/// When an audit sample of size n shows zero errors, the rate could still be
/// as high as 1 - (1-confidence)^(1/n) (the one-sided binomial bound with
/// zero successes). Substituting this bound into the ratio variance gives a
/// defensible fallback variance for follow-up planning.
pub fn zero_error_pi_bound(n: usize, confidence: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSampleSize { n: 0, n_pop: 0 });
    }
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    Ok(-f64::exp_m1((1.0 - confidence).ln() / n as f64))
}

/// Coefficients of the ratio-estimator analogue of the prediction surface:
///
///   g(pi, pi_l) = a1 pi (1-pi) + a2 (1-pi) pi_l^2 + a3 (1-pi) pi_l (1-pi_l)
///               + a4 pi (1-pi) pi_l + a5 (1-pi)^2 pi_l^2
///
/// built from the per-claim leverage weights k_i = -2 X_i/tau + tau2/tau^2.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    /// k_i per claim, in claim order.
    pub k: Vec<f64>,
}

impl PartialRCoefficients {
    pub(crate) fn surface(&self) -> SurfaceCoefficients {
        // a1 pi (1-pi) = a1 pi - a1 pi^2 maps onto the common surface shape.
        SurfaceCoefficients {
            q1: self.a1,
            q2: self.a2,
            q3: self.a3,
            q4: -self.a1,
            q5: self.a4,
            q6: self.a5,
        }
    }
}

/// a1..a5 from exact integer claim sums; the k_i expansions reduce every
/// term to a ratio of those sums. Exists so stratum-local coefficients can
/// be evaluated from prefix-sum differences without materializing
/// subpopulations.
pub(crate) fn partial_r_a_from_sums(s: &crate::population::ClaimSums) -> Result<[f64; 5]> {
    if s.s1 <= 0 {
        return Err(Error::ZeroMeanClaims);
    }
    let n = s.n as f64;
    let s1 = s.s1 as f64;
    let s2 = s.s2 as f64;
    let s3 = s.s3 as f64;
    let t1 = s.t1 as f64;
    let t2 = s.t2 as f64;
    let p11 = s.p11 as f64;
    let l2 = s.l2 as f64;
    let x2t = s.x2t as f64;
    let xt2 = s.xt2 as f64;
    let xl2 = s.xl2 as f64;
    let lever = s2 / (s1 * s1); // tau2 / tau^2
    let a1 = (s2 - 2.0 * s3 / s1 + lever * s2) / n;
    let a2 = (t2 - 2.0 * xt2 / s1 + lever * t2) / n;
    let a3 = (l2 - 2.0 * xl2 / s1 + lever * l2) / n;
    let s_kx = -s2 / s1;
    let s_kt = -2.0 * p11 / s1 + lever * t1;
    let s_kxt = -2.0 * x2t / s1 + lever * p11;
    let s_ktt = -2.0 * xt2 / s1 + lever * t2;
    let a4 = (s1 * s_kt + t1 * s_kx - 2.0 * s_kxt) / n;
    let a5 = (t1 * s_kt - s_ktt) / n;
    const C2: f64 = 100.0 * 100.0;
    Ok([a1 / C2, a2 / C2, a3 / C2, a4 / C2, a5 / C2])
}

/// Computes k_i and a1..a5 in one pass; cross-claim pair sums use the
/// product-minus-diagonal identity.
pub fn partial_r_coefficients(pop: &ClaimPopulation) -> Result<PartialRCoefficients> {
    let n = pop.len() as f64;
    let mut tau = 0.0;
    let mut tau2 = 0.0;
    for claim in pop.claims() {
        let x = claim.total_cents() as f64 / 100.0;
        tau += x;
        tau2 += x * x;
    }
    if tau <= 0.0 {
        return Err(Error::ZeroMeanClaims);
    }
    let k: Vec<f64> = pop
        .claims()
        .iter()
        .map(|c| -2.0 * (c.total_cents() as f64 / 100.0) / tau + tau2 / (tau * tau))
        .collect();

    let mut a1 = 0.0;
    let mut a2 = 0.0;
    let mut a3 = 0.0;
    let mut tau_t = 0.0; // sum of claim probable error totals
    let mut s_kx = 0.0; // sum k_i X_i
    let mut s_kt = 0.0; // sum k_i Xt_i
    let mut s_kxt = 0.0; // sum k_i X_i Xt_i
    let mut s_ktt = 0.0; // sum k_i Xt_i^2
    for (claim, &ki) in pop.claims().iter().zip(&k) {
        let x = claim.total_cents() as f64 / 100.0;
        let xt = claim.probable_error_cents() as f64 / 100.0;
        let line_sq: f64 = claim
            .lines
            .iter()
            .map(|l| {
                let v = l.probable_error_cents as f64 / 100.0;
                v * v
            })
            .sum();
        a1 += (1.0 + ki) * x * x;
        a2 += (1.0 + ki) * xt * xt;
        a3 += (1.0 + ki) * line_sq;
        tau_t += xt;
        s_kx += ki * x;
        s_kt += ki * xt;
        s_kxt += ki * x * xt;
        s_ktt += ki * xt * xt;
    }
    a1 /= n;
    a2 /= n;
    a3 /= n;
    let a4 = (tau * s_kt + tau_t * s_kx - 2.0 * s_kxt) / n;
    let a5 = (tau_t * s_kt - s_ktt) / n;
    Ok(PartialRCoefficients {
        a1,
        a2,
        a3,
        a4,
        a5,
        k,
    })
}

/// Expected squared deviation around the ratio line at the given rates under
/// the line-item model.
pub fn expected_var_r(
    coef: &PartialRCoefficients,
    pi: f64,
    pi_l: f64,
) -> Result<VariancePrediction> {
    check_rate("error rate", pi)?;
    check_rate("line error rate", pi_l)?;
    let value = coef.a1 * pi * (1.0 - pi)
        + coef.a2 * (1.0 - pi) * pi_l * pi_l
        + coef.a3 * (1.0 - pi) * pi_l * (1.0 - pi_l)
        + coef.a4 * pi * (1.0 - pi) * pi_l
        + coef.a5 * (1.0 - pi) * (1.0 - pi) * pi_l * pi_l;
    Ok(VariancePrediction::point(
        value,
        pi,
        Some(pi_l),
        VarianceKind::PartialR,
    ))
}

/// Global maximum of the ratio variance surface over [0,1]^2, with boundary
/// detail.
pub fn conservative_surface_r(coef: &PartialRCoefficients) -> ConservativeSurface {
    conservative_from_surface(&coef.surface(), VarianceKind::PartialR)
}

/// Global maximum of the ratio variance surface over [0,1]^2.
pub fn conservative_variance_ratio(coef: &PartialRCoefficients) -> VariancePrediction {
    conservative_surface_r(coef).prediction
}

/// Sample size for the ratio estimator at a target margin: the claim-level
/// formula with the ratio variance substituted.
pub fn ratio_sample_size(
    m: &PopulationMoments,
    variance_used: VariancePrediction,
    margin: f64,
    confidence: f64,
) -> Result<crate::aon::SampleSizePlan> {
    crate::aon::sample_size(
        m,
        variance_used,
        margin,
        confidence,
        crate::aon::EstimatorKind::Ratio,
    )
}
