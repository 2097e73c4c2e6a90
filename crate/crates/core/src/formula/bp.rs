//! Loopy belief propagation on the factor graph and the Bethe functional.
//!
//! Messages live on slots (one factor-graph edge per slot) as log-odds of
//! `+1` against `−1`. Slot `s` of clause `a` has a violating value `v_s`
//! (`−1` for a positive literal); the clause-to-variable message is
//!
//! ```text
//! ν̂_{a→x}(σ) ∝ 1 − c_β [σ = v_s] ∏_{t ≠ s} μ_{t}(v_t).
//! ```

use serde::Serialize;

use super::Formula;
use crate::error::{precondition, Error, Result};
use crate::model::c_beta;
use crate::numerics::{entropy2, logistic};

#[derive(Clone, Debug, Serialize)]
pub struct BpResult {
    /// `P(σ_x = +1)`.
    pub marginals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest change of a variable-to-clause message in the last sweep.
    pub residual: f64,
}

fn violating(positive: bool) -> f64 {
    if positive {
        -1.0
    } else {
        1.0
    }
}

/// `ln P(σ = s)` from log-odds `λ`, where `s = ±1`.
fn ln_prob(lambda: f64, s: f64) -> f64 {
    let x = s * lambda;
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn clause_messages(f: &Formula, c: f64, var_msg: &[f64], out: &mut [f64]) {
    let k = f.k;
    for a in 0..f.m() {
        let lits = f.clause(a);
        let lp: Vec<f64> = (0..k)
            .map(|j| ln_prob(var_msg[a * k + j], violating(lits[j].positive)))
            .collect();
        let total: f64 = lp.iter().sum();
        for j in 0..k {
            // product over the other slots; recomputed when a factor is -inf
            let others = if lp[j].is_finite() {
                total - lp[j]
            } else {
                lp.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v).sum()
            };
            let lr = (-c * others.exp()).ln_1p();
            out[a * k + j] = violating(lits[j].positive) * lr;
        }
    }
}

/// Synchronous damped BP. `damping` is the weight kept on the old message.
pub fn loopy_bp(f: &Formula, beta: f64, max_iters: usize, damping: f64, tol: f64) -> Result<BpResult> {
    precondition((0.0..1.0).contains(&damping), || "damping must lie in [0, 1)".into())?;
    let c = c_beta(beta);
    let slots = f.slots.len();
    let mut var_msg = vec![0.0; slots];
    let mut clause_msg = vec![0.0; slots];
    let mut totals = vec![0.0; f.n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        clause_messages(f, c, &var_msg, &mut clause_msg);
        for (x, t) in totals.iter_mut().enumerate() {
            *t = f.occurrences(x).iter().map(|&s| clause_msg[s as usize]).sum();
        }
        residual = 0.0;
        for (s, m) in var_msg.iter_mut().enumerate() {
            let x = f.slots[s].var as usize;
            let new = totals[x] - clause_msg[s];
            let mixed = if damping > 0.0 {
                let p = damping * logistic(*m) + (1.0 - damping) * logistic(new);
                (p / (1.0 - p)).ln()
            } else {
                new
            };
            residual = residual.max((logistic(mixed) - logistic(*m)).abs());
            *m = mixed;
        }
        if residual <= tol {
            break;
        }
    }
    clause_messages(f, c, &var_msg, &mut clause_msg);
    let marginals = (0..f.n)
        .map(|x| logistic(f.occurrences(x).iter().map(|&s| clause_msg[s as usize]).sum()))
        .collect();
    Ok(BpResult {
        marginals,
        converged: residual <= tol,
        iterations,
        residual,
    })
}

/// Tolerance and round cap of the clause fitting.
pub const IPF_TOL: f64 = 1e-10;
pub const IPF_ROUNDS: usize = 10_000;

/// Maximum-entropy clause measure `μ_a(σ) ∝ ψ_a(σ) ∏_j α_j(σ_j)` whose
/// slot marginals equal `targets` (probabilities of the violating values).
///
/// Because `ψ_a` differs from `1` only at the violating configuration, the
/// slot marginals have the closed form
/// `P(σ_j = v_j) = (α_j − c_β A)/(1 − c_β A)` with `A = ∏ α_j` (each `α_j`
/// normalized to `α_j(v_j) + α_j(−v_j) = 1`), so each proportional-fitting
/// round costs `O(k)`.
#[derive(Clone, Debug)]
pub struct ClauseFit {
    /// `α_j(v_j)`.
    pub alpha: Vec<f64>,
    pub rounds: usize,
    pub residual: f64,
}

impl ClauseFit {
    pub fn product(&self) -> f64 {
        self.alpha.iter().product()
    }

    /// Slot marginals `P(σ_j = v_j)` under the fitted measure.
    pub fn marginals(&self, c: f64) -> Vec<f64> {
        let a = self.product();
        self.alpha.iter().map(|&x| (x - c * a) / (1.0 - c * a)).collect()
    }
}

pub fn fit_clause(targets: &[f64], c: f64) -> Result<ClauseFit> {
    let mut alpha = targets.to_vec();
    let mut residual = f64::INFINITY;
    for round in 1..=IPF_ROUNDS {
        for j in 0..alpha.len() {
            let a = alpha.iter().product::<f64>();
            let z = 1.0 - c * a;
            let p = (alpha[j] - c * a) / z;
            // rescale α_j(v_j) by t_j/p and α_j(−v_j) by (1−t_j)/(1−p)
            let up = alpha[j] * targets[j] / p;
            let down = (1.0 - alpha[j]) * (1.0 - targets[j]) / (1.0 - p);
            alpha[j] = up / (up + down);
        }
        let a = alpha.iter().product::<f64>();
        residual = alpha
            .iter()
            .zip(targets)
            .map(|(&x, &t)| ((x - c * a) / (1.0 - c * a) - t).abs())
            .fold(0.0, f64::max);
        if residual <= IPF_TOL {
            return Ok(ClauseFit {
                alpha,
                rounds: round,
                residual,
            });
        }
    }
    let _ = residual;
    Err(Error::NonConvergence {
        iters: IPF_ROUNDS,
        residual,
    })
}

/// `B_Φ(μ) = Σ_x (1 − deg x) H(μ_x) + Σ_a [H(μ_a) + ⟨ln ψ_a⟩_{μ_a}]` with
/// `μ_x(+1) = mu[x]` and `μ_a` the fitted clause measure.
pub fn bethe_free_energy(f: &Formula, beta: f64, mu: &[f64]) -> Result<f64> {
    precondition(mu.len() == f.n, || format!("need {} marginals, got {}", f.n, mu.len()))?;
    precondition(mu.iter().all(|&p| p > 0.0 && p < 1.0), || "marginals must lie in (0, 1)".into())?;
    let c = c_beta(beta);
    let mut total = 0.0;
    for (x, &p) in mu.iter().enumerate() {
        total += (1.0 - f.occurrences(x).len() as f64) * entropy2(p);
    }
    let mut targets = Vec::with_capacity(f.k);
    for a in 0..f.m() {
        targets.clear();
        for l in f.clause(a) {
            let p = mu[l.var as usize];
            targets.push(if l.positive { 1.0 - p } else { p });
        }
        let fit = fit_clause(&targets, c)?;
        // H(μ_a) + ⟨ln ψ_a⟩ = ln Z_a − Σ_j Σ_s μ_j(s) ln α_j(s)
        let mut v = (-c * fit.product()).ln_1p();
        for (&al, &t) in fit.alpha.iter().zip(&targets) {
            v -= t * al.ln() + (1.0 - t) * (1.0 - al).ln();
        }
        total += v;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{exact_gibbs, generate, random_acyclic};

    #[test]
    fn beta_zero_is_uniform() {
        let f = generate(9, 3, 6, 1).unwrap();
        let r = loopy_bp(&f, 0.0, 100, 0.0, 1e-12).unwrap();
        assert!(r.marginals.iter().all(|&p| (p - 0.5).abs() < 1e-15));
        let b = bethe_free_energy(&f, 0.0, &r.marginals).unwrap();
        assert!((b - 9.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn exact_on_trees() {
        for seed in 0..5 {
            let f = random_acyclic(5, 3, seed).unwrap();
            let g = exact_gibbs(&f, 1.7).unwrap();
            let r = loopy_bp(&f, 1.7, 100, 0.0, 1e-14).unwrap();
            assert!(r.converged);
            for (a, b) in r.marginals.iter().zip(&g.marginals) {
                assert!((a - b).abs() < 1e-10);
            }
            let bf = bethe_free_energy(&f, 1.7, &g.marginals).unwrap();
            assert!((bf - g.ln_z).abs() < 1e-8, "{bf} vs {}", g.ln_z);
        }
    }

    #[test]
    fn fit_matches_targets() {
        let c = c_beta(2.0);
        let t = [0.3, 0.8, 0.55, 0.6];
        let fit = fit_clause(&t, c).unwrap();
        for (p, q) in fit.marginals(c).iter().zip(&t) {
            assert!((p - q).abs() < 1e-10);
        }
    }
}
