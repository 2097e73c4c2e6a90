//! Model parameters, the scalar fixed point `q`, and closed-form constants.
//!
//! Conventions used throughout the crate:
//!
//! * The planted assignment is all-ones. A clause slot carries the label
//!   `b = +1` when its literal is false under that assignment (a negative
//!   literal) and `b = -1` when it is true.
//! * Clause density: a regular instance on `n` variables has `m = d·n/k`
//!   clauses. Each variable has `d/2` positive and `d/2` negative
//!   occurrences, so there are `d·n` literal slots and `k·m` clause slots.
//!   (A reading with `m = d·n/(2k)` would leave half of the slots unmatched.)

use serde::Serialize;

use crate::error::{precondition, Error, Result};

/// Default tolerance for scalar root finding.
pub const TOL: f64 = 1e-12;

/// `(k, d, β)` together with the derived constants `c_β` and `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub k: usize,
    pub d: usize,
    pub beta: f64,
    pub c_beta: f64,
    pub q: f64,
}

impl ModelParams {
    /// Validates `(k, d, β)` and solves for `q` at the default tolerance.
    pub fn new(k: usize, d: usize, beta: f64) -> Result<Self> {
        precondition(k >= 3, || format!("k must be at least 3 (got {k})"))?;
        precondition(d >= 2, || format!("d must be at least 2 (got {d})"))?;
        precondition(d % 2 == 0, || format!("d must be even (got {d})"))?;
        precondition(beta > 0.0 && beta.is_finite(), || {
            format!("beta must be positive and finite (got {beta})")
        })?;
        let c_beta = c_beta(beta);
        let q = solve_q_c(k, c_beta, TOL)?;
        Ok(ModelParams {
            k,
            d,
            beta,
            c_beta,
            q,
        })
    }

    /// Number of clauses of an instance on `n` variables.
    pub fn clauses(&self, n: usize) -> Result<usize> {
        clause_count(n, self.k, self.d)
    }

    pub fn half_d(&self) -> usize {
        self.d / 2
    }

    /// `|1 − c_β q^k − 2(1 − q)|`.
    pub fn q_residual(&self) -> f64 {
        q_residual(self.k, self.c_beta, self.q)
    }

    /// Probability that a `b = +1` clause has all children labelled `+1`:
    /// `e^{−β} q^{k−1} / (1 − c_β q^{k−1})`.
    pub fn all_plus_prob(&self) -> f64 {
        let qk1 = self.q.powi(self.k as i32 - 1);
        (-self.beta).exp() * qk1 / (1.0 - self.c_beta * qk1)
    }

    /// Clause kernel `f̂(η_1..η_{k−1}) = (1 − c_β ∏η)/(2 − c_β ∏η)` given the product.
    pub fn clause_kernel(&self, prod: f64) -> f64 {
        let t = self.c_beta * prod;
        (1.0 - t) / (2.0 - t)
    }

    /// Range of the clause kernel, `[(1 − c_β)/(2 − c_β), 1/2]`.
    pub fn clause_range(&self) -> (f64, f64) {
        ((1.0 - self.c_beta) / (2.0 - self.c_beta), 0.5)
    }

    /// Threshold `1 − e^{−kβ/2}` separating strongly polarized messages.
    pub fn strong_threshold(&self) -> f64 {
        -(-(self.k as f64) * self.beta / 2.0).exp_m1()
    }
}

/// `c_β = 1 − e^{−β}`, computed without cancellation for small `β`.
pub fn c_beta(beta: f64) -> f64 {
    -(-beta).exp_m1()
}

pub fn clause_count(n: usize, k: usize, d: usize) -> Result<usize> {
    precondition(d % 2 == 0, || format!("d must be even (got {d})"))?;
    precondition((d * n) % k == 0, || {
        format!("k must divide d*n (k={k}, d={d}, n={n})")
    })?;
    Ok(d * n / k)
}

pub fn q_residual(k: usize, c: f64, q: f64) -> f64 {
    (1.0 - c * q.powi(k as i32) - 2.0 * (1.0 - q)).abs()
}

/// Solves `2q − 1 − c_β q^k = 0` for `q ∈ [1/2, 1]` by bisection.
pub fn solve_q(params: &ModelParams, tol: f64) -> Result<f64> {
    solve_q_c(params.k, params.c_beta, tol)
}

/// Same as [`solve_q`] with `c_β` given directly (allows the `c_β = 1` limit).
pub fn solve_q_c(k: usize, c: f64, tol: f64) -> Result<f64> {
    precondition(tol > 0.0, || format!("tolerance must be positive (got {tol})"))?;
    let g = |q: f64| 2.0 * q - 1.0 - c * q.powi(k as i32);
    let (mut lo, mut hi) = (0.5, 1.0);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if k < 2 || !(0.0..=1.0).contains(&c) || g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::Bracket {
            lo,
            hi,
            g_lo,
            g_hi,
        });
    }
    if c == 0.0 {
        return Ok(0.5);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = if g(lo).abs() < g(hi).abs() { lo } else { hi };
    if q_residual(k, c, q) > tol {
        return Err(Error::NonConvergence {
            iters: 200,
            residual: q_residual(k, c, q),
        });
    }
    Ok(q)
}

/// Closed form of `ln E[z₁] + (d/k) ln E[z₂] − d ln E[z₃]` at the fixed point:
/// `ln 2 + (d/k) ln(1 − c_β q^k) + (d/2) ln(1/(2q)) + (d/2) ln(1/(2(1−q)))`.
pub fn closed_form_f(params: &ModelParams) -> f64 {
    let ModelParams { k, d, c_beta, q, .. } = *params;
    let (k, d) = (k as f64, d as f64);
    std::f64::consts::LN_2 + (d / k) * (-c_beta * q.powf(k)).ln_1p()
        - (d / 2.0) * (2.0 * q).ln()
        - (d / 2.0) * (2.0 * (1.0 - q)).ln()
}

/// `k (2^k ln 2 − k ln 2 / 2)`, the leading terms of the satisfiability
/// threshold in degree units. Accurate to O(k) only.
pub fn d_sat_approx(k: usize) -> f64 {
    let k = k as f64;
    let ln2 = std::f64::consts::LN_2;
    k * (2f64.powf(k) * ln2 - k * ln2 / 2.0)
}

/// Lower end of the β range, `max(0, k ln 2 − 10 ln k)`.
///
/// The unclamped value is negative for every `k ≤ 58`; the scan domain is
/// `β > 0` so it is clamped at zero. It does not depend on `d`.
pub fn beta_lower(k: usize) -> f64 {
    beta_lower_raw(k).max(0.0)
}

pub fn beta_lower_raw(k: usize) -> f64 {
    let k = k as f64;
    k * std::f64::consts::LN_2 - 10.0 * k.ln()
}

/// Large-k expansion `q ≈ 1/2 + c_β 2^{−1−k}`.
pub fn q_asymptotic(k: usize, beta: f64) -> f64 {
    0.5 + c_beta(beta) * 2f64.powi(-1 - k as i32)
}

/// Even integer closest to `x` (ties go up), at least 2.
pub fn nearest_even(x: f64) -> usize {
    let e = 2.0 * (x / 2.0).round();
    (e.max(2.0)) as usize
}
