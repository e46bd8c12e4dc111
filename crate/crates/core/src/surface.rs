//! Maximization of the two-rate variance prediction surfaces.
//!
//! Both prediction surfaces used for conservative planning share one shape in
//! the claim-level rate s and the line-level rate t:
//!
//!   F(s,t) = q1 s + q2 (1-s) t^2 + q3 (1-s) t (1-t) + q4 s^2
//!          + q5 s (1-s) t + q6 (1-s)^2 t^2
//!
//! The global maximum over the unit square is found exactly: interior
//! stationary points come from a cubic in t (with s back-solved from the
//! stationarity condition in s), and each of the four edges restricts F to a
//! quadratic in one variable. No grid search is involved.

use crate::numerics::solve_cubic_real_roots;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceCoefficients {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub q5: f64,
    pub q6: f64,
}

impl SurfaceCoefficients {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.q1 * s
            + self.q2 * (1.0 - s) * t * t
            + self.q3 * (1.0 - s) * t * (1.0 - t)
            + self.q4 * s * s
            + self.q5 * s * (1.0 - s) * t
            + self.q6 * (1.0 - s) * (1.0 - s) * t * t
    }

    fn d_ds(&self, s: f64, t: f64) -> f64 {
        self.q1 + 2.0 * self.q4 * s - (self.q2 * t * t + self.q3 * t * (1.0 - t))
            + self.q5 * (1.0 - 2.0 * s) * t
            - 2.0 * self.q6 * (1.0 - s) * t * t
    }

    fn d_dt(&self, s: f64, t: f64) -> f64 {
        (1.0 - s)
            * (2.0 * self.q2 * t
                + self.q3 * (1.0 - 2.0 * t)
                + self.q5 * s
                + 2.0 * self.q6 * (1.0 - s) * t)
    }

    fn scale(&self) -> f64 {
        [self.q1, self.q2, self.q3, self.q4, self.q5, self.q6]
            .iter()
            .fold(1.0f64, |m, q| m.max(q.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// s = 0 edge.
    SZero,
    /// s = 1 edge (F is constant there).
    SOne,
    /// t = 0 edge.
    TZero,
    /// t = 1 edge.
    TOne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMax {
    pub edge: Edge,
    pub at: (f64, f64),
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMax {
    /// Largest surface value over the closed unit square.
    pub value: f64,
    /// All maximizing points within a 1e-12 relative tie band, sorted by s
    /// then t, so the smallest claim-level rate is first.
    pub argmax: Vec<(f64, f64)>,
    /// Stationary points strictly inside the square that passed the
    /// second-order (negative semidefinite Hessian) check.
    pub interior_candidates: Vec<(f64, f64)>,
    /// Real stationary solutions discarded for lying outside the square;
    /// reported because they explain why a boundary governs.
    pub rejected_stationary: Vec<(f64, f64)>,
    /// Maximum over each of the four edges.
    pub boundary_maxima: [BoundaryMax; 4],
}

/// Maximum of the quadratic a t^2 + b t + c over [0,1]; ties resolve to the
/// smaller t.
fn quad_max_unit(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mut best_t = 0.0;
    let mut best_v = c;
    let mut consider = |t: f64| {
        let v = (a * t + b) * t + c;
        if v > best_v {
            best_v = v;
            best_t = t;
        }
    };
    consider(1.0);
    if a < 0.0 {
        let vertex = -b / (2.0 * a);
        if vertex > 0.0 && vertex < 1.0 {
            consider(vertex);
        }
    }
    (best_t, best_v)
}

pub fn maximize(q: &SurfaceCoefficients) -> SurfaceMax {
    let scale = q.scale();
    let tol = 1e-12 * scale;

    // Edge maxima. Writing F on each edge as a univariate quadratic:
    //   s=0: (q2 - q3 + q6) t^2 + q3 t
    //   s=1: constant q1 + q4
    //   t=0: q4 s^2 + q1 s
    //   t=1: F(s,1) collected below
    let (t0, v0) = quad_max_unit(q.q2 - q.q3 + q.q6, q.q3, 0.0);
    let s_zero = BoundaryMax {
        edge: Edge::SZero,
        at: (0.0, t0),
        value: v0,
    };
    let s_one = BoundaryMax {
        edge: Edge::SOne,
        at: (1.0, 0.0),
        value: q.q1 + q.q4,
    };
    let (s0, w0) = quad_max_unit(q.q4, q.q1, 0.0);
    let t_zero = BoundaryMax {
        edge: Edge::TZero,
        at: (s0, 0.0),
        value: w0,
    };
    // F(s,1) = q1 s + q2 (1-s) + q4 s^2 + q5 s(1-s) + q6 (1-s)^2
    let a = q.q4 - q.q5 + q.q6;
    let b = q.q1 - q.q2 + q.q5 - 2.0 * q.q6;
    let c = q.q2 + q.q6;
    let (s1, w1) = quad_max_unit(a, b, c);
    let t_one = BoundaryMax {
        edge: Edge::TOne,
        at: (s1, 1.0),
        value: w1,
    };
    let boundary_maxima = [s_zero, s_one, t_zero, t_one];

    // Interior stationary points: eliminating s from the two stationarity
    // conditions leaves a cubic in t.
    let qstar = q.q2 - q.q3 + q.q6;
    let a3 = -2.0 * q.q6 * (q.q2 - q.q3);
    let a2 = 3.0 * q.q5 * (q.q2 - q.q3);
    let a1 = -4.0 * qstar * q.q4 + q.q3 * q.q5 + q.q5 * q.q5 - 2.0 * q.q1 * q.q6;
    let a0 = -2.0 * q.q3 * q.q4 + q.q1 * q.q5;
    let mut interior = Vec::new();
    let mut rejected = Vec::new();
    if let Ok(cubic) = solve_cubic_real_roots(a3, a2, a1, a0) {
        for &t in &cubic.roots {
            // Back-solve s from dF/ds = 0 (linear in s); fall back to the
            // dF/dt = 0 relation when its coefficient degenerates.
            let denom = 2.0 * (q.q4 - q.q5 * t + q.q6 * t * t);
            let s = if denom.abs() > 1e-12 * scale {
                -(q.q1 - q.q2 * t * t - q.q3 * t * (1.0 - t) + q.q5 * t - 2.0 * q.q6 * t * t)
                    / denom
            } else {
                let d2 = q.q5 - 2.0 * q.q6 * t;
                if d2.abs() <= 1e-12 * scale {
                    continue;
                }
                -(2.0 * qstar * t + q.q3) / d2
            };
            if !s.is_finite() || !t.is_finite() {
                continue;
            }
            let grad_tol = 1e-7 * scale * (1.0 + s.abs()) * (1.0 + t.abs());
            if q.d_ds(s, t).abs() > grad_tol || q.d_dt(s, t).abs() > grad_tol {
                continue;
            }
            let inside = s > 1e-12 && s < 1.0 - 1e-12 && t > 1e-12 && t < 1.0 - 1e-12;
            if !inside {
                rejected.push((s, t));
                continue;
            }
            // Hessian must be negative semidefinite for a maximum.
            let f_ss = 2.0 * q.q4 - 2.0 * q.q5 * t + 2.0 * q.q6 * t * t;
            let f_st = -2.0 * q.q2 * t - q.q3 * (1.0 - 2.0 * t) + q.q5 * (1.0 - 2.0 * s)
                - 4.0 * q.q6 * (1.0 - s) * t;
            let f_tt = (1.0 - s) * (2.0 * q.q2 - 2.0 * q.q3 + 2.0 * q.q6 * (1.0 - s));
            let det = f_ss * f_tt - f_st * f_st;
            if f_ss <= tol && f_tt <= tol && det >= -tol * scale {
                interior.push((s, t));
            } else {
                rejected.push((s, t));
            }
        }
    }

    // Global maximum and the tie band of argmax points.
    let mut candidates: Vec<(f64, f64, f64)> = boundary_maxima
        .iter()
        .map(|b| (b.at.0, b.at.1, b.value))
        .chain(interior.iter().map(|&(s, t)| (s, t, q.eval(s, t))))
        .collect();
    let value = candidates
        .iter()
        .map(|&(_, _, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let band = 1e-12 * value.abs().max(scale * 1e-9).max(1e-300);
    candidates.retain(|&(_, _, v)| value - v <= band);
    candidates.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    candidates.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12 && (a.1 - b.1).abs() <= 1e-12);
    let argmax = candidates.into_iter().map(|(s, t, _)| (s, t)).collect();

    SurfaceMax {
        value,
        argmax,
        interior_candidates: interior,
        rejected_stationary: rejected,
        boundary_maxima,
    }
}
