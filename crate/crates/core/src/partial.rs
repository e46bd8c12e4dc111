//! Line-item partial error model for the simple-expansion estimator.
//!
//! A claim errs fully with probability pi; otherwise each of its lines errs
//! independently with probability pi_l, contributing its probable error
//! amount. The expected finite-population variance of the resulting error
//! amounts is a bilinear-quadratic surface h(pi, pi_l) whose six coefficients
//! come from population sums.

use crate::aon::{check_rate, clamp_variance, VarianceKind, VariancePrediction};
use crate::population::{ClaimPopulation, ClaimSums, PopulationMoments};
use crate::surface::{self, SurfaceCoefficients, SurfaceMax};
use crate::{Error, Result};

/// Coefficients of h(pi, pi_l) in dollars squared:
///
///   h = c1 pi + c2 (1-pi) pi_l^2 + c3 (1-pi) pi_l (1-pi_l)
///     + c4 pi^2 + c5 pi (1-pi) pi_l + c6 (1-pi)^2 pi_l^2
///
/// c1..c3 scale own-claim squared amounts and are nonnegative; c4..c6 are
/// negated cross-claim products and are nonpositive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialYCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
}

impl PartialYCoefficients {
    pub(crate) fn surface(&self) -> SurfaceCoefficients {
        SurfaceCoefficients {
            q1: self.c1,
            q2: self.c2,
            q3: self.c3,
            q4: self.c4,
            q5: self.c5,
            q6: self.c6,
        }
    }
}

/// Computes c1..c6 from exact integer sums. Cross-claim pair sums use the
/// product-minus-diagonal identity, so the whole computation is one pass
/// over the lines.
pub fn partial_y_coefficients(pop: &ClaimPopulation) -> PartialYCoefficients {
    partial_y_from_sums(&ClaimSums::from_claims(pop.claims()))
}

pub(crate) fn partial_y_from_sums(s: &ClaimSums) -> PartialYCoefficients {
    let n = s.n as f64;
    let own = 1.0 / n - 1.0 / (n * n);
    // Pair sums over distinct claims (i != i'), each in cents^2.
    let xx = (s.s1 * s.s1 - s.s2) as f64;
    let xxt = (s.s1 * s.t1 - s.p11) as f64;
    let xtxt = (s.t1 * s.t1 - s.t2) as f64;
    const C2: f64 = 100.0 * 100.0;
    PartialYCoefficients {
        c1: own * s.s2 as f64 / C2,
        c2: own * s.t2 as f64 / C2,
        c3: own * s.l2 as f64 / C2,
        c4: -xx / (n * n) / C2,
        c5: -2.0 * xxt / (n * n) / C2,
        c6: -xtxt / (n * n) / C2,
    }
}

/// Expected finite-population variance of the error amounts at the given
/// rates.
pub fn expected_var_y(
    coef: &PartialYCoefficients,
    pi: f64,
    pi_l: f64,
) -> Result<VariancePrediction> {
    check_rate("error rate", pi)?;
    check_rate("line error rate", pi_l)?;
    let value = coef.surface().eval(pi, pi_l);
    Ok(VariancePrediction::point(
        value,
        pi,
        Some(pi_l),
        VarianceKind::PartialY,
    ))
}

/// Full description of a conservative maximization: the governing value plus
/// every edge maximum and any stationary points, inside the square or
/// rejected outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeSurface {
    pub prediction: VariancePrediction,
    pub detail: SurfaceMax,
}

pub(crate) fn conservative_from_surface(
    q: &SurfaceCoefficients,
    kind: VarianceKind,
) -> ConservativeSurface {
    let detail = surface::maximize(q);
    let (at_pi, at_pi_l) = detail.argmax.first().copied().unwrap_or((0.0, 0.0));
    ConservativeSurface {
        prediction: VariancePrediction {
            value: clamp_variance(detail.value),
            at_pi,
            at_pi_l: Some(at_pi_l),
            kind,
            conservative: true,
        },
        detail,
    }
}

/// Global maximum of h over both rates in [0,1]^2, with boundary detail.
pub fn conservative_surface_y(coef: &PartialYCoefficients) -> ConservativeSurface {
    conservative_from_surface(&coef.surface(), VarianceKind::PartialY)
}

/// Global maximum of h over [0,1]^2. The moments argument cross-checks the
/// certain-error edge, where the surface must collapse to the population
/// variance of the totals.
pub fn conservative_variance_partial(
    coef: &PartialYCoefficients,
    m: &PopulationMoments,
) -> VariancePrediction {
    debug_assert!(
        (coef.c1 + coef.c4 - m.sigma2_x).abs() <= 1e-9 * m.sigma2_x.max(1.0),
        "surface at certain error must equal the population variance"
    );
    conservative_surface_y(coef).prediction
}

/// h(pi, pi_l) for populations whose line errors are all-or-nothing
/// (probable error equal to the claimed amount on every line), computed by
/// an independent route from raw sums:
///
///   own (pi + (1-pi) pi_l^2) sum X_i^2 + own (1-pi) pi_l (1-pi_l) sum_ij X_ij^2
///   - (pi + (1-pi) pi_l)^2 (tau^2 - sum X_i^2) / N^2
///
/// Verifies the precondition and stays a separate formula on purpose: it is
/// the cross-check for `expected_var_y` in that regime.
pub fn expected_var_y_aon_lines(
    pop: &ClaimPopulation,
    pi: f64,
    pi_l: f64,
) -> Result<VariancePrediction> {
    check_rate("error rate", pi)?;
    check_rate("line error rate", pi_l)?;
    for claim in pop.claims() {
        if claim
            .lines
            .iter()
            .any(|l| l.probable_error_cents != l.claimed_cents)
        {
            return Err(Error::AonLinesPrecondition {
                claim_id: claim.id.clone(),
            });
        }
    }
    let n = pop.len() as f64;
    let own = 1.0 / n - 1.0 / (n * n);
    let mut sum_x_sq = 0.0f64; // sum of squared claim totals, cents^2
    let mut sum_line_sq = 0.0f64; // sum over lines of squared amounts
    let mut tau = 0.0f64;
    for claim in pop.claims() {
        let x = claim.total_cents() as f64;
        tau += x;
        sum_x_sq += x * x;
        for line in &claim.lines {
            let v = line.claimed_cents as f64;
            sum_line_sq += v * v;
        }
    }
    let p_any = pi + (1.0 - pi) * pi_l;
    let value_cents = own
        * ((pi + (1.0 - pi) * pi_l * pi_l) * sum_x_sq
            + (1.0 - pi) * pi_l * (1.0 - pi_l) * sum_line_sq)
        - p_any * p_any * (tau * tau - sum_x_sq) / (n * n);
    Ok(VariancePrediction::point(
        value_cents / 1e4,
        pi,
        Some(pi_l),
        VarianceKind::PartialY,
    ))
}
