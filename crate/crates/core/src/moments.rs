//! First and second moment rate functions.
//!
//! The second moment is parametrized by the overlap `α` of two assignments.
//! Its tilt `(h, ĥ)` solves `g(h, ĥ) = (1/2, (1−α)/2)` with
//!
//! ```text
//! z₂(h, ĥ) = 1 − 2c(1−h)^k + c²(1−2h+ĥ)^k
//! g(h, ĥ)  = ((ĥ + (h−ĥ)(1 − c(1−h)^{k−1})) / z₂,  ĥ / z₂)
//! ```
//!
//! Internally the solver works with `u = h − ĥ` and `v = ĥ` so that small
//! overlaps keep full relative precision in `u`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{precondition, Error, Result};
use crate::model::ModelParams;
use crate::numerics::{entropy2, xlogxy};

const LN2: f64 = std::f64::consts::LN_2;

/// `z₁(β, h) = 1 − c_β (1−h)^k`.
pub fn z1k(params: &ModelParams, h: f64) -> f64 {
    1.0 - params.c_beta * (1.0 - h).powi(params.k as i32)
}

/// Binary relative entropy `D₁(α, h) = α ln(α/h) + (1−α) ln((1−α)/(1−h))`.
pub fn d1(alpha: f64, h: f64) -> f64 {
    xlogxy(alpha, h) + xlogxy(1.0 - alpha, 1.0 - h)
}

/// `ln 2 + (d/k) ln z₁(β, 1−q) + d D₁(1/2, 1−q)`.
pub fn rate_f1(params: &ModelParams) -> f64 {
    let h = 1.0 - params.q;
    let (k, d) = (params.k as f64, params.d as f64);
    LN2 + (d / k) * z1k(params, h).ln() + d * d1(0.5, h)
}

/// Large-k expansion `ln 2 − (d/k)(c_β 2^{−k} + 2^{−1−2k} − k 2^{−1−2k})`.
pub fn rate_f1_asymptotic(params: &ModelParams) -> f64 {
    let (k, d) = (params.k as f64, params.d as f64);
    let a = 2f64.powf(-k);
    let b = 2f64.powf(-1.0 - 2.0 * k);
    LN2 - (d / k) * (params.c_beta * a + b - k * b)
}

/// `z₂` in `(u, v) = (h − ĥ, ĥ)` coordinates.
fn z2_uv(k: usize, c: f64, u: f64, v: f64) -> f64 {
    let h = u + v;
    let w = 1.0 - 2.0 * u - v;
    1.0 - 2.0 * c * (1.0 - h).powi(k as i32) + c * c * w.powi(k as i32)
}

/// `z₂(h, ĥ) = 1 − 2c(1−h)^k + c²(1−2h+ĥ)^k`.
pub fn z2k(params: &ModelParams, h: f64, hhat: f64) -> f64 {
    z2_uv(params.k, params.c_beta, h - hhat, hhat)
}

fn g_uv(k: usize, c: f64, u: f64, v: f64) -> [f64; 2] {
    let h = u + v;
    let a = 1.0 - c * (1.0 - h).powi(k as i32 - 1);
    let z = z2_uv(k, c, u, v);
    [(v + u * a) / z, v / z]
}

fn jacobian_uv(k: usize, c: f64, u: f64, v: f64) -> [[f64; 2]; 2] {
    let kf = k as f64;
    let h = u + v;
    let w = 1.0 - 2.0 * u - v;
    let p1 = (1.0 - h).powi(k as i32 - 1);
    let pw = w.powi(k as i32 - 1);
    let z = z2_uv(k, c, u, v);
    let zu = 2.0 * c * kf * p1 - 2.0 * c * c * kf * pw;
    let zv = 2.0 * c * kf * p1 - c * c * kf * pw;
    let a = 1.0 - c * p1;
    let da = c * (kf - 1.0) * (1.0 - h).powi(k as i32 - 2);
    let n1 = v + u * a;
    let n1u = a + u * da;
    let n1v = 1.0 + u * da;
    let z2 = z * z;
    [
        [(n1u * z - n1 * zu) / z2, (n1v * z - n1 * zv) / z2],
        [-v * zu / z2, (z - v * zv) / z2],
    ]
}

/// `g(h, ĥ)`.
pub fn g_map(params: &ModelParams, h: f64, hhat: f64) -> [f64; 2] {
    g_uv(params.k, params.c_beta, h - hhat, hhat)
}

fn in_domain(u: f64, v: f64) -> bool {
    u > 0.0 && v > 0.0 && 1.0 - 2.0 * u - v > 0.0
}

/// Solution `(u, v) = (h − ĥ, ĥ)` of the tilt equations.
fn solve_uv(params: &ModelParams, alpha: f64, tol: f64) -> Result<(f64, f64, f64)> {
    precondition(alpha > 0.0 && alpha < 1.0, || {
        format!("alpha must lie in (0, 1) (got {alpha})")
    })?;
    precondition(tol > 0.0, || "tolerance must be positive".into())?;
    let (k, c) = (params.k, params.c_beta);
    let target = [0.5, (1.0 - alpha) / 2.0];
    let resid = |u: f64, v: f64| {
        let g = g_uv(k, c, u, v);
        [g[0] - target[0], g[1] - target[1]]
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let (mut u, mut v) = (alpha / 2.0, (1.0 - alpha) / 2.0);
    let mut r = resid(u, v);
    for _ in 0..200 {
        if norm(r) <= tol {
            return Ok((u, v, norm(r)));
        }
        let j = jacobian_uv(k, c, u, v);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let (du, dv) = if det.abs() > 1e-300 {
            (
                -(j[1][1] * r[0] - j[0][1] * r[1]) / det,
                -(-j[1][0] * r[0] + j[0][0] * r[1]) / det,
            )
        } else {
            // Dg is close to the identity; fall back to a plain residual step
            (-r[0], -r[1])
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let (nu, nv) = (u + t * du, v + t * dv);
            if in_domain(nu, nv) {
                let nr = resid(nu, nv);
                if norm(nr) < norm(r) {
                    u = nu;
                    v = nv;
                    r = nr;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if norm(r) <= tol {
        Ok((u, v, norm(r)))
    } else {
        Err(Error::NonConvergence {
            iters: 200,
            residual: norm(r),
        })
    }
}

/// Solves `g(h, ĥ) = (1/2, (1−α)/2)` by Newton's method from
/// `(1/2, (1−α)/2)`, returning `(h, ĥ)`.
pub fn solve_h_pair(params: &ModelParams, alpha: f64, tol: f64) -> Result<(f64, f64)> {
    let (u, v, _) = solve_uv(params, alpha, tol)?;
    Ok((u + v, v))
}

/// Default tolerance of the tilt solver.
pub const H_TOL: f64 = 1e-13;

/// One evaluation of the second-moment rate function.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatePoint {
    pub alpha: f64,
    pub h: f64,
    pub hhat: f64,
    pub f1: f64,
    pub f2: f64,
    pub f2_bar: f64,
    pub z1k: f64,
    pub z2k: f64,
    pub d1: f64,
    pub d2: f64,
    pub h_alpha: f64,
    pub residual: f64,
}

fn d2_uv(alpha: f64, u: f64, v: f64) -> f64 {
    let w = 1.0 - 2.0 * u - v;
    let b = (1.0 - alpha) / 2.0;
    xlogxy(alpha, 2.0 * u) + xlogxy(b, v) + xlogxy(b, w)
}

/// `D₂(α, h, ĥ) = α ln(α/(2(h−ĥ))) + ((1−α)/2) ln((1−α)/(2ĥ)) + ((1−α)/2) ln((1−α)/(2(1−2h+ĥ)))`.
pub fn d2(alpha: f64, h: f64, hhat: f64) -> f64 {
    d2_uv(alpha, h - hhat, hhat)
}

/// `f₂(α) = ln 2 + H(α) + (d/k) ln z₂ + d D₂` at the solved tilt.
pub fn rate_f2(params: &ModelParams, alpha: f64) -> Result<RatePoint> {
    let (u, v, residual) = solve_uv(params, alpha, H_TOL)?;
    let (k, d) = (params.k as f64, params.d as f64);
    let z2 = z2_uv(params.k, params.c_beta, u, v);
    let dd2 = d2_uv(alpha, u, v);
    let h_alpha = entropy2(alpha);
    let h1 = 1.0 - params.q;
    Ok(RatePoint {
        alpha,
        h: u + v,
        hhat: v,
        f1: rate_f1(params),
        f2: LN2 + h_alpha + (d / k) * z2.ln() + d * dd2,
        f2_bar: rate_f2_bar(params, alpha),
        z1k: z1k(params, h1),
        z2k: z2,
        d1: d1(0.5, h1),
        d2: dd2,
        h_alpha,
        residual,
    })
}

/// `ln 2 + H(α) + (d/k) ln(1 − 2c_β 2^{−k} + c_β² ((1−α)/2)^k)`.
pub fn rate_f2_bar(params: &ModelParams, alpha: f64) -> f64 {
    let (k, d, c) = (params.k as f64, params.d as f64, params.c_beta);
    let zbar = 1.0 - 2.0 * c * 2f64.powf(-k) + c * c * ((1.0 - alpha) / 2.0).powf(k);
    LN2 + entropy2(alpha) + (d / k) * zbar.ln()
}

/// `Σ_j r_j ln(p_j / r_j)`, the exponential rate of a multinomial
/// probability with cell probabilities `p` at empirical frequencies `r`.
pub fn multinomial_rate(p: &[f64], r: &[f64]) -> Result<f64> {
    precondition(p.len() == r.len(), || {
        format!("dimension mismatch: {} vs {}", p.len(), r.len())
    })?;
    Ok(-p.iter().zip(r).map(|(&pj, &rj)| xlogxy(rj, pj)).sum::<f64>())
}

/// Default overlap grid: `points` uniform cells plus refinements near 0
/// and near 1/2, sorted, without duplicates, and containing 1/2.
pub fn alpha_grid(points: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..points).map(|i| (i as f64 + 0.5) / points as f64).collect();
    for i in 0..40 {
        g.push(10f64.powf(-7.0 + 5.0 * i as f64 / 40.0));
    }
    for j in 1..=8 {
        let e = 10f64.powi(-j);
        g.push(0.5 - e);
        g.push(0.5 + e);
    }
    g.push(0.5);
    g.retain(|&a| a > 0.0 && a < 1.0);
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Outcome of [`scan_second_moment`].
#[derive(Clone, Debug, Serialize)]
pub struct SecondMomentScan {
    pub params: ModelParams,
    pub points: Vec<RatePoint>,
    pub sup_alpha: f64,
    pub sup_value: f64,
    pub f2_half: f64,
    /// `sup f₂ ≤ f₂(1/2) + slack` over the whole grid.
    pub global_ok: bool,
    /// Same restricted to `α ≥ 2^{−k/10}`.
    pub region_ok: bool,
    pub region_sup_alpha: f64,
    pub region_sup_value: f64,
    /// Smallest `f̄₂ − f₂` on the grid.
    pub min_bar_gap: f64,
    /// `(α, f₂(α) − f₂(1−α))` for `α < 1/2` where the difference is below `−1e−8`.
    pub asymmetry_violations: Vec<(f64, f64)>,
    /// Grid points where the tilt solver failed.
    pub failures: Vec<f64>,
}

pub const SCAN_SLACK: f64 = 1e-9;

/// Evaluates `f₂` and `f̄₂` on `grid` and reports where the supremum sits.
pub fn scan_second_moment(params: &ModelParams, grid: &[f64]) -> Result<SecondMomentScan> {
    precondition(grid.len() >= 1000, || {
        format!("scan grid needs at least 1000 points (got {})", grid.len())
    })?;
    let evals: Vec<(f64, Result<RatePoint>)> =
        grid.par_iter().map(|&a| (a, rate_f2(params, a))).collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (a, r) in evals {
        match r {
            Ok(p) => points.push(p),
            Err(_) => failures.push(a),
        }
    }
    let f2_half = rate_f2(params, 0.5)?.f2;
    let region_lo = 2f64.powf(-(params.k as f64) / 10.0);
    let best = |pred: &dyn Fn(&RatePoint) -> bool| {
        points
            .iter()
            .filter(|p| pred(p))
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, p| {
                if p.f2 > acc.1 {
                    (p.alpha, p.f2)
                } else {
                    acc
                }
            })
    };
    let (sup_alpha, sup_value) = best(&|_| true);
    let (region_sup_alpha, region_sup_value) = best(&|p| p.alpha >= region_lo);
    let min_bar_gap = points
        .iter()
        .map(|p| p.f2_bar - p.f2)
        .fold(f64::INFINITY, f64::min);
    let mut asymmetry_violations = Vec::new();
    for p in points.iter().filter(|p| p.alpha < 0.5) {
        if let Ok(m) = rate_f2(params, 1.0 - p.alpha) {
            let diff = p.f2 - m.f2;
            if diff < -1e-8 {
                asymmetry_violations.push((p.alpha, diff));
            }
        }
    }
    Ok(SecondMomentScan {
        params: *params,
        global_ok: sup_value <= f2_half + SCAN_SLACK,
        region_ok: region_sup_value <= f2_half + SCAN_SLACK,
        points,
        sup_alpha,
        sup_value,
        f2_half,
        region_sup_alpha,
        region_sup_value,
        min_bar_gap,
        asymmetry_violations,
        failures,
    })
}

/// CSV with columns `alpha,h,hhat,f1,f2,f2_bar`.
pub fn write_csv<W: Write>(points: &[RatePoint], mut w: W) -> Result<()> {
    writeln!(w, "alpha,h,hhat,f1,f2,f2_bar")?;
    for p in points {
        writeln!(w, "{},{},{},{},{},{}", p.alpha, p.h, p.hhat, p.f1, p.f2, p.f2_bar)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::closed_form_f;

    fn params(k: usize, d: usize, beta: f64) -> ModelParams {
        ModelParams::new(k, d, beta).unwrap()
    }

    #[test]
    fn f1_equals_closed_form() {
        for &(k, d, beta) in &[(3, 6, 0.5), (4, 20, 1.0), (5, 100, 3.0), (10, 5000, 8.0)] {
            let p = params(k, d, beta);
            assert!((rate_f1(&p) - closed_form_f(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn half_overlap_factorizes() {
        let p = params(5, 80, 2.0);
        let (h, hh) = solve_h_pair(&p, 0.5, 1e-14).unwrap();
        assert!((hh - h * h).abs() < 1e-12);
        assert!((1.0 - p.c_beta * (1.0 - h).powi(5) - 2.0 * h).abs() < 1e-12);
        assert!((h - (1.0 - p.q)).abs() < 1e-12);
    }

    #[test]
    fn f2_half_is_twice_f1() {
        let p = params(6, 200, 4.0);
        let r = rate_f2(&p, 0.5).unwrap();
        assert!((r.f2 - 2.0 * r.f1).abs() < 1e-10);
    }

    #[test]
    fn tiny_beta_returns_start() {
        let p = params(5, 10, 1e-300);
        let (h, hh) = solve_h_pair(&p, 0.3, 1e-14).unwrap();
        assert_eq!((h, hh), (0.5, 0.35));
        let r = rate_f2(&p, 0.3).unwrap();
        assert!((r.f2 - (LN2 + entropy2(0.3))).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (k, c) = (7, 0.8);
        let (u, v) = (0.2, 0.3);
        let j = jacobian_uv(k, c, u, v);
        let e = 1e-6;
        for (col, (du, dv)) in [(e, 0.0), (0.0, e)].into_iter().enumerate() {
            let a = g_uv(k, c, u + du, v + dv);
            let b = g_uv(k, c, u - du, v - dv);
            for row in 0..2 {
                let fd = (a[row] - b[row]) / (2.0 * e);
                assert!((fd - j[row][col]).abs() < 1e-8, "row {row} col {col}");
            }
        }
    }

    #[test]
    fn multinomial_binary_reduction() {
        let (p, r) = (0.3, 0.6);
        let v = multinomial_rate(&[p, 1.0 - p], &[r, 1.0 - r]).unwrap();
        assert!((v + d1(r, p)).abs() < 1e-15);
        assert_eq!(multinomial_rate(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert!(multinomial_rate(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = alpha_grid(1000);
        assert!(g.len() >= 1000);
        assert!(g.contains(&0.5));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g[0] < 1e-6);
    }
}
