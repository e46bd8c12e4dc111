//! All-or-nothing error model: variance predictions, the critical error
//! rate, conservative maximization over the rate, and the sample size
//! formula for a target margin of error.
//!
//! Under this model each claim is entirely in error with probability pi,
//! independently, and the disallowed amount is then the full claim total.

use crate::population::PopulationMoments;
use crate::{Error, Result};

/// Which variance formula produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceKind {
    /// Finite-population variance of the realized error amounts
    /// (the quantity the simple-expansion sample size formula needs).
    Roberts,
    /// Variance of one claim's error amount around the model mean.
    Total,
    /// Line-item model expectation of the population variance.
    PartialY,
    /// Ratio-estimator variance under the all-or-nothing model.
    RobertsRatio,
    /// Ratio-estimator variance under the line-item model.
    PartialR,
}

/// A predicted variance (dollars squared) with the rates it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePrediction {
    pub value: f64,
    pub at_pi: f64,
    pub at_pi_l: Option<f64>,
    pub kind: VarianceKind,
    /// True when the value is a maximum over rates rather than a point value.
    pub conservative: bool,
}

impl VariancePrediction {
    pub(crate) fn point(value: f64, pi: f64, pi_l: Option<f64>, kind: VarianceKind) -> Self {
        Self {
            value: clamp_variance(value),
            at_pi: pi,
            at_pi_l: pi_l,
            kind,
            conservative: false,
        }
    }
}

/// Predictions are variances, so tiny negative rounding residue is clamped
/// to zero; anything materially negative would be a formula bug and is kept
/// visible by the debug assertion.
pub(crate) fn clamp_variance(v: f64) -> f64 {
    debug_assert!(v > -1e-9 * v.abs().max(1.0), "variance {v} below slack");
    v.max(0.0)
}

pub(crate) fn check_rate(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(Error::InvalidRate {
            name,
            range: "[0, 1]",
            value,
        });
    }
    Ok(())
}

/// Expected finite-population variance of the error amounts when each claim
/// errs fully with probability pi:
///
///   h(pi) = pi mu2 - (pi mu)^2 - pi (1-pi) mu2 / N
///
/// where mu2 is the second raw moment of the claim totals (mu2 = sigma^2 + mu^2).
pub fn roberts_variance(m: &PopulationMoments, pi: f64) -> Result<VariancePrediction> {
    check_rate("error rate", pi)?;
    let n = m.n_pop as f64;
    let value = pi * m.mu_x2 - (pi * m.mu_x) * (pi * m.mu_x) - pi * (1.0 - pi) * m.mu_x2 / n;
    Ok(VariancePrediction::point(
        value,
        pi,
        None,
        VarianceKind::Roberts,
    ))
}

/// Variance of a single claim's error amount under the same model,
/// Var(Y) = pi mu2 - (pi mu)^2. Always at least `roberts_variance`; the two
/// converge as N grows.
pub fn total_variance(m: &PopulationMoments, pi: f64) -> Result<VariancePrediction> {
    check_rate("error rate", pi)?;
    let value = pi * m.mu_x2 - (pi * m.mu_x) * (pi * m.mu_x);
    Ok(VariancePrediction::point(
        value,
        pi,
        None,
        VarianceKind::Total,
    ))
}

/// Model mean of one claim's error amount, E(Y) = pi mu.
pub fn expected_mean_y(m: &PopulationMoments, pi: f64) -> f64 {
    pi * m.mu_x
}

/// The error rate maximizing `roberts_variance`, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiCrit {
    /// Exact stationary point; `None` when the quadratic degenerates
    /// (no interior critical point exists).
    pub value: Option<f64>,
    /// Whether the stationary point lies inside [0, 1].
    pub interior: bool,
    /// Large-population shorthand mu2 / (2 mu^2), reported for comparison
    /// only; planning always uses the exact value.
    pub large_n_approx: f64,
}

/// Stationary point of h(pi): pi_crit = (mu2 - mu2/N) / (2 (mu^2 - mu2/N)).
pub fn pi_crit(m: &PopulationMoments) -> PiCrit {
    let n = m.n_pop as f64;
    let denom = m.mu_x * m.mu_x - m.mu_x2 / n;
    let large_n_approx = if m.mu_x != 0.0 {
        m.mu_x2 / (2.0 * m.mu_x * m.mu_x)
    } else {
        f64::INFINITY
    };
    if denom <= 0.0 {
        return PiCrit {
            value: None,
            interior: false,
            large_n_approx,
        };
    }
    let value = 0.5 * (m.mu_x2 - m.mu_x2 / n) / denom;
    PiCrit {
        value: Some(value),
        interior: (0.0..=1.0).contains(&value),
        large_n_approx,
    }
}

/// Maximum of `roberts_variance` over all error rates: the boundary values
/// h(0) = 0 and h(1) = sigma^2 against the interior critical point when it
/// lies inside [0, 1]. The argmax is recorded in `at_pi` (smallest on ties).
pub fn conservative_variance_aon(m: &PopulationMoments) -> VariancePrediction {
    let mut candidates = vec![(0.0, 0.0), (1.0, m.sigma2_x)];
    if let PiCrit {
        value: Some(pc),
        interior: true,
        ..
    } = pi_crit(m)
    {
        let h = roberts_variance(m, pc).expect("pi_crit in range").value;
        candidates.push((pc, h));
    }
    let best = candidates
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let at_pi = candidates
        .iter()
        .filter(|&&(_, v)| best - v <= 1e-12 * best.abs().max(1e-300))
        .map(|&(p, _)| p)
        .fold(f64::INFINITY, f64::min);
    VariancePrediction {
        value: clamp_variance(best),
        at_pi,
        at_pi_l: None,
        kind: VarianceKind::Roberts,
        conservative: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    SimpleExpansion,
    Ratio,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::SimpleExpansion => write!(f, "simple-expansion"),
            EstimatorKind::Ratio => write!(f, "ratio"),
        }
    }
}

/// A sample size recommendation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSizePlan {
    pub n: usize,
    /// Target margin of error in dollars.
    pub margin: f64,
    pub confidence: f64,
    pub estimator: EstimatorKind,
    pub variance_used: VariancePrediction,
    pub n_pop: usize,
    /// Margin the returned n actually achieves (at most `margin` unless the
    /// population cap forced a census).
    pub achieved_margin: f64,
    /// True when n was clamped to the population size.
    pub census: bool,
}

/// Margin of error achieved by sample size n under the planning variance v:
/// z * sqrt(N^2 v / n * (N - n)/(N - 1)).
pub fn achieved_margin(n_pop: usize, v: f64, z: f64, n: usize) -> f64 {
    let nn = n_pop as f64;
    let nf = n as f64;
    z * (nn * nn * v / nf * (nn - nf) / (nn - 1.0)).sqrt()
}

/// Smallest sample size whose margin of error for the population total is at
/// most `margin` at the given confidence, assuming variance `v` among the
/// error amounts:
///
///   n = ceil( z^2 N^3 v / (E^2 (N-1) + z^2 N^2 v) )
///
/// clamped to [2, N]. The formula solves the margin equation exactly, so the
/// pre-clamp value always lies below N.
pub fn sample_size(
    m: &PopulationMoments,
    variance_used: VariancePrediction,
    margin: f64,
    confidence: f64,
    estimator: EstimatorKind,
) -> Result<SampleSizePlan> {
    if margin <= 0.0 || margin.is_nan() {
        return Err(Error::InvalidMargin(margin));
    }
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    if m.n_pop < 2 {
        return Err(Error::PopulationTooSmall { n_pop: m.n_pop });
    }
    let v = clamp_variance(variance_used.value);
    let z = crate::numerics::normal_quantile(0.5 * (1.0 + confidence))?;
    let n_pop = m.n_pop as f64;
    let raw =
        z * z * n_pop.powi(3) * v / (margin * margin * (n_pop - 1.0) + z * z * n_pop * n_pop * v);
    let n = (raw.ceil() as usize).clamp(2, m.n_pop);
    Ok(SampleSizePlan {
        n,
        margin,
        confidence,
        estimator,
        variance_used,
        n_pop: m.n_pop,
        achieved_margin: achieved_margin(m.n_pop, v, z, n),
        census: n == m.n_pop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{compute_moments, population_from_dollars};
    use proptest::prelude::*;

    fn moments(amounts: &[f64]) -> PopulationMoments {
        compute_moments(&population_from_dollars(amounts).unwrap())
    }

    #[test]
    fn roberts_two_point_half() {
        let m = moments(&[10.0, 20.0]);
        let v = roberts_variance(&m, 0.5).unwrap().value;
        assert!((v - 37.5).abs() < 1e-12);
    }

    #[test]
    fn roberts_endpoints() {
        let m = moments(&[3.0, 8.0, 21.0]);
        assert_eq!(roberts_variance(&m, 0.0).unwrap().value, 0.0);
        let at_one = roberts_variance(&m, 1.0).unwrap().value;
        assert!((at_one - m.sigma2_x).abs() < 1e-12);
    }

    #[test]
    fn total_two_point_half() {
        let m = moments(&[10.0, 20.0]);
        let v = total_variance(&m, 0.5).unwrap().value;
        assert!((v - 68.75).abs() < 1e-12);
        assert!((expected_mean_y(&m, 0.5) - 7.5).abs() < 1e-12);
        assert_eq!(total_variance(&m, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn pi_crit_small_example() {
        // X = {1,2,3}: mu2 = 14/3, mu = 2, N = 3
        // pi_crit = (14/3)(1 - 1/3) / (2 (4 - 14/9)) = 7/11
        let m = moments(&[1.0, 2.0, 3.0]);
        let pc = pi_crit(&m);
        assert!(pc.interior);
        assert!((pc.value.unwrap() - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn pi_crit_matches_grid_argmax() {
        for amounts in [
            vec![1.0, 2.0, 3.0],
            vec![5.0, 5.0, 9.0, 30.0],
            vec![2.0, 4.0, 4.0, 4.0, 100.0],
        ] {
            let m = moments(&amounts);
            let pc = pi_crit(&m).value.unwrap();
            let mut best = (0.0, f64::NEG_INFINITY);
            for i in 0..=10_000 {
                let pi = i as f64 / 10_000.0;
                let v = roberts_variance(&m, pi).unwrap().value;
                if v > best.1 {
                    best = (pi, v);
                }
            }
            let expect = pc.clamp(0.0, 1.0);
            assert!(
                (best.0 - expect).abs() <= 1e-4 + 1e-12,
                "grid argmax {} vs closed form {}",
                best.0,
                expect
            );
        }
    }

    #[test]
    fn pi_crit_degenerate_single_claim() {
        let m = moments(&[4.0]);
        let pc = pi_crit(&m);
        assert!(pc.value.is_none());
        assert!(!pc.interior);
    }

    #[test]
    fn conservative_aon_interior_beats_boundary() {
        let m = moments(&[1.0, 2.0, 3.0]);
        let c = conservative_variance_aon(&m);
        assert!(c.value > m.sigma2_x);
        assert!((c.at_pi - 7.0 / 11.0).abs() < 1e-12);
        let grid_max = (0..=1000)
            .map(|i| roberts_variance(&m, i as f64 / 1000.0).unwrap().value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(c.value >= grid_max - 1e-12);
    }

    #[test]
    fn conservative_aon_constant_population() {
        // All totals equal: sigma^2 = 0 but mid-rate uncertainty remains.
        let m = moments(&[6.0, 6.0, 6.0, 6.0]);
        let c = conservative_variance_aon(&m);
        assert!((c.at_pi - 0.5).abs() < 1e-12);
        assert!((c.value - 36.0 * (1.0 - 0.25) / 4.0).abs() < 1e-9);
    }

    #[test]
    fn sample_size_zero_variance_floor() {
        let m = moments(&[10.0, 20.0, 30.0]);
        let vp = VariancePrediction::point(0.0, 0.0, None, VarianceKind::Roberts);
        let plan = sample_size(&m, vp, 100.0, 0.95, EstimatorKind::SimpleExpansion).unwrap();
        assert_eq!(plan.n, 2);
    }

    #[test]
    fn sample_size_huge_margin_floor() {
        let m = moments(&[10.0, 20.0, 30.0, 40.0]);
        let vp = VariancePrediction::point(100.0, 0.5, None, VarianceKind::Roberts);
        let plan = sample_size(&m, vp, 1e9, 0.95, EstimatorKind::SimpleExpansion).unwrap();
        assert_eq!(plan.n, 2);
    }

    #[test]
    fn sample_size_validation() {
        let m = moments(&[10.0, 20.0]);
        let vp = VariancePrediction::point(1.0, 0.5, None, VarianceKind::Roberts);
        assert!(matches!(
            sample_size(&m, vp, 0.0, 0.95, EstimatorKind::Ratio),
            Err(Error::InvalidMargin(_))
        ));
        assert!(matches!(
            sample_size(&m, vp, 5.0, 0.5, EstimatorKind::Ratio),
            Err(Error::InvalidConfidence(_))
        ));
    }

    #[test]
    fn sample_size_against_linear_scan() {
        // The returned n must meet the margin and (pre-clamp) n-1 must not.
        let m = PopulationMoments {
            n_pop: 10_000,
            mu_x: 0.0,
            sigma2_x: 0.0,
            mu_x2: 0.0,
            tau_x: 0.0,
            tau_x2: 0.0,
            g1_skew: 0.0,
            sum_xt_sq: 0.0,
            sum_line_xt_sq: 0.0,
        };
        let vp = VariancePrediction::point(2500.0, 0.5, None, VarianceKind::Roberts);
        let plan = sample_size(&m, vp, 5000.0, 0.95, EstimatorKind::SimpleExpansion).unwrap();
        let z = crate::numerics::normal_quantile(0.975).unwrap();
        assert!(plan.achieved_margin <= 5000.0 + 1e-9);
        assert!(achieved_margin(10_000, 2500.0, z, plan.n - 1) > 5000.0);
    }

    proptest! {
        #[test]
        fn ordering_roberts_below_total(
            amounts in proptest::collection::vec(1.0f64..500.0, 2..40),
            pi_ticks in 0u32..=100
        ) {
            let m = moments(&amounts);
            let pi = pi_ticks as f64 / 100.0;
            let r = roberts_variance(&m, pi).unwrap().value;
            let t = total_variance(&m, pi).unwrap().value;
            prop_assert!(r <= t + 1e-9 * t.max(1.0));
        }

        #[test]
        fn conservative_dominates_grid(amounts in proptest::collection::vec(1.0f64..500.0, 2..30)) {
            let m = moments(&amounts);
            let c = conservative_variance_aon(&m).value;
            for i in 0..=100 {
                let v = roberts_variance(&m, i as f64 / 100.0).unwrap().value;
                prop_assert!(c >= v - 1e-9 * v.max(1.0));
            }
        }

        #[test]
        fn sample_size_monotone(
            v in 1.0f64..1e6,
            margin in 10.0f64..1e5,
            conf_ticks in 1u32..=8
        ) {
            let m = PopulationMoments {
                n_pop: 5000, mu_x: 0.0, sigma2_x: 0.0, mu_x2: 0.0, tau_x: 0.0,
                tau_x2: 0.0, g1_skew: 0.0, sum_xt_sq: 0.0, sum_line_xt_sq: 0.0,
            };
            let conf = 0.5 + 0.06 * conf_ticks as f64;
            let vp = VariancePrediction::point(v, 0.5, None, VarianceKind::Roberts);
            let base = sample_size(&m, vp, margin, conf, EstimatorKind::SimpleExpansion).unwrap().n;
            let wider = sample_size(&m, vp, margin * 1.5, conf, EstimatorKind::SimpleExpansion).unwrap().n;
            let noisier = sample_size(&m, VariancePrediction::point(v * 1.5, 0.5, None, VarianceKind::Roberts), margin, conf, EstimatorKind::SimpleExpansion).unwrap().n;
            let surer = sample_size(&m, vp, margin, (conf + 0.995) / 2.0, EstimatorKind::SimpleExpansion).unwrap().n;
            prop_assert!(wider <= base);
            prop_assert!(noisier >= base);
            prop_assert!(surer >= base);
        }
    }
}
