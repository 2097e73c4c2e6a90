//! Exhaustive enumeration, the weighted cluster size, planted sampling and
//! the exact annealed average `ln E[Z]`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::{generate, Formula};
use crate::error::{precondition, Error, Result};
use crate::model::c_beta;
use crate::numerics::{ln_choose, log_sum_exp};
use crate::rng::substream;

/// Largest `n` accepted by the enumerators.
pub const MAX_ENUM_N: usize = 26;

/// Largest number of slots `dn` accepted by [`annealed_ez`].
pub const MAX_ANNEALED_SLOTS: usize = 100_000;

const BLOCK_BITS: usize = 14;

/// Counts of assignments by energy and number of `−1` values, plus
/// per-variable counts of `+1` by energy. Any `β` can be evaluated from it.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySpectrum {
    pub n: usize,
    pub m: usize,
    /// `counts[e·(n+1) + j]`: assignments with energy `e` and `j` minus values.
    pub counts: Vec<u64>,
    /// `plus[x·(m+1) + e]`: assignments with energy `e` and `σ_x = +1`.
    pub plus: Vec<u64>,
}

impl EnergySpectrum {
    fn zero(n: usize, m: usize) -> Self {
        EnergySpectrum {
            n,
            m,
            counts: vec![0; (m + 1) * (n + 1)],
            plus: vec![0; n * (m + 1)],
        }
    }

    fn merge(mut self, o: EnergySpectrum) -> Self {
        for (a, b) in self.counts.iter_mut().zip(o.counts) {
            *a += b;
        }
        for (a, b) in self.plus.iter_mut().zip(o.plus) {
            *a += b;
        }
        self
    }

    /// Assignments per energy level.
    pub fn energy_histogram(&self) -> Vec<u64> {
        (0..=self.m)
            .map(|e| self.counts[e * (self.n + 1)..(e + 1) * (self.n + 1)].iter().sum())
            .collect()
    }

    fn ln_weighted(&self, beta: f64, mut keep: impl FnMut(usize, usize) -> bool) -> f64 {
        let mut terms = Vec::new();
        for e in 0..=self.m {
            for j in 0..=self.n {
                let c = self.counts[e * (self.n + 1) + j];
                if c > 0 && keep(e, j) {
                    terms.push((c as f64).ln() - beta * e as f64);
                }
            }
        }
        log_sum_exp(&terms)
    }

    pub fn ln_z(&self, beta: f64) -> f64 {
        self.ln_weighted(beta, |_, _| true)
    }

    /// `P(σ_x = +1)` for every variable.
    pub fn marginals(&self, beta: f64) -> Vec<f64> {
        let hist = self.energy_histogram();
        let w: Vec<f64> = (0..=self.m).map(|e| (-beta * e as f64).exp()).collect();
        let z: f64 = hist.iter().zip(&w).map(|(&c, &w)| c as f64 * w).sum();
        (0..self.n)
            .map(|x| {
                let row = &self.plus[x * (self.m + 1)..(x + 1) * (self.m + 1)];
                row.iter().zip(&w).map(|(&c, &w)| c as f64 * w).sum::<f64>() / z
            })
            .collect()
    }

    /// `ln` of the Gibbs weight of assignments with fewer than `max_minus`
    /// values equal to `−1`.
    pub fn ln_shell(&self, beta: f64, max_minus: f64) -> f64 {
        self.ln_weighted(beta, |_, j| (j as f64) < max_minus)
    }
}

/// Enumerates all `2ⁿ` assignments in Gray-code order within prefix blocks.
pub fn energy_spectrum(f: &Formula) -> Result<EnergySpectrum> {
    precondition(f.n <= MAX_ENUM_N, || {
        format!("exact enumeration needs n ≤ {MAX_ENUM_N} (got {})", f.n)
    })?;
    let n = f.n;
    let m = f.m();
    let low = n.min(BLOCK_BITS);
    let blocks = 1u64 << (n - low);
    let spec = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut acc = EnergySpectrum::zero(n, m);
            let mut sigma: Vec<bool> = (0..n).map(|x| x >= low && (block >> (x - low)) & 1 == 1).collect();
            let mut sat: Vec<u32> = (0..m)
                .map(|a| f.clause(a).iter().filter(|l| l.satisfied_by(sigma[l.var as usize])).count() as u32)
                .collect();
            let mut energy = sat.iter().filter(|&&s| s == 0).count();
            let mut minus = sigma.iter().filter(|&&s| !s).count();
            let mut block_hist = vec![0u64; m + 1];
            let steps = 1u64 << low;
            for i in 0..steps {
                acc.counts[energy * (n + 1) + minus] += 1;
                block_hist[energy] += 1;
                for x in 0..low {
                    if sigma[x] {
                        acc.plus[x * (m + 1) + energy] += 1;
                    }
                }
                if i + 1 == steps {
                    break;
                }
                let x = (i + 1).trailing_zeros() as usize;
                let was = sigma[x];
                sigma[x] = !was;
                if was {
                    minus += 1;
                } else {
                    minus -= 1;
                }
                for &s in f.occurrences(x) {
                    let a = f.clause_of(s as usize);
                    let lit = f.slots[s as usize];
                    if lit.satisfied_by(was) {
                        sat[a] -= 1;
                        if sat[a] == 0 {
                            energy += 1;
                        }
                    } else {
                        if sat[a] == 0 {
                            energy -= 1;
                        }
                        sat[a] += 1;
                    }
                }
            }
            for x in low..n {
                if sigma[x] {
                    for e in 0..=m {
                        acc.plus[x * (m + 1) + e] += block_hist[e];
                    }
                }
            }
            acc
        })
        .reduce(|| EnergySpectrum::zero(n, m), EnergySpectrum::merge);
    Ok(spec)
}

/// Exact `ln Z`, marginals and energy histogram at one `β`.
#[derive(Clone, Debug, Serialize)]
pub struct GibbsSummary {
    pub beta: f64,
    pub ln_z: f64,
    /// `P(σ_x = +1)`.
    pub marginals: Vec<f64>,
    pub energy_histogram: Vec<u64>,
}

pub fn exact_gibbs(f: &Formula, beta: f64) -> Result<GibbsSummary> {
    let s = energy_spectrum(f)?;
    Ok(GibbsSummary {
        beta,
        ln_z: s.ln_z(beta),
        marginals: s.marginals(beta),
        energy_histogram: s.energy_histogram(),
    })
}

/// Upper bound (exclusive) on the number of `−1` values in the shell
/// `σ·1 > n(1 − 2^{−k/10})`.
pub fn shell_max_minus(n: usize, k: usize) -> f64 {
    n as f64 * 2f64.powf(-(k as f64) / 10.0) / 2.0
}

/// `ln C_{Φ,1}(β)`: the Gibbs weight of the shell around all-ones.
pub fn cluster_size(f: &Formula, beta: f64) -> Result<f64> {
    let s = energy_spectrum(f)?;
    Ok(s.ln_shell(beta, shell_max_minus(f.n, f.k)))
}

/// Outcome of [`planted_sample`].
#[derive(Clone, Debug)]
pub struct PlantedDraw {
    pub formula: Formula,
    /// Uniform formulas drawn, including the accepted one.
    pub trials: u64,
}

/// Draws uniform formulas and accepts each with probability
/// `exp(−β E_Φ(1))`; the accepted formula is planted at all-ones.
pub fn planted_sample(n: usize, k: usize, d: usize, beta: f64, seed: u64, budget: u64) -> Result<PlantedDraw> {
    precondition(beta >= 0.0, || "β must be nonnegative".into())?;
    let mut rng = substream(seed, &[0x706c_616e]);
    for t in 0..budget {
        let f = generate(n, k, d, seed.wrapping_add(t.wrapping_mul(0x9e37_79b9_7f4a_7c15)))?;
        if rng.gen::<f64>() < (-beta * f.energy_all_ones() as f64).exp() {
            return Ok(PlantedDraw { formula: f, trials: t + 1 });
        }
    }
    Err(Error::TrialBudget(budget))
}

/// `ln(Σ_i exp(a_i + b_{t−i}))` for all `t`.
fn log_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; a.len() + b.len() - 1];
    let mut buf = Vec::with_capacity(a.len());
    for (t, o) in out.iter_mut().enumerate() {
        buf.clear();
        let lo = t.saturating_sub(b.len() - 1);
        let hi = t.min(a.len() - 1);
        for i in lo..=hi {
            let v = a[i] + b[t - i];
            if v > f64::NEG_INFINITY {
                buf.push(v);
            }
        }
        *o = log_sum_exp(&buf);
    }
    out
}

fn log_poly_pow(base: &[f64], mut e: usize) -> Vec<f64> {
    let mut result = vec![0.0];
    let mut b = base.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            result = log_convolve(&result, &b);
        }
        e >>= 1;
        if e > 0 {
            b = log_convolve(&b, &b);
        }
    }
    result
}

/// Exact `ln E[Z_Φ(β)]` over the configuration model.
///
/// By symmetry `E[Z] = 2ⁿ E[exp(−β E_Φ(1))]`. The truth values of the `dn`
/// slots under all-ones are a uniform arrangement of `dn/2` trues, which is
/// the law of i.i.d. `Bernoulli(θ)` slots conditioned on `dn/2` trues. With
/// `p(x) = Σ_j C(k,j) θ^j (1−θ)^{k−j} (1 − c_β [j = 0]) x^j`,
///
/// ```text
/// E[exp(−β E_Φ(1))] = [x^{dn/2}] p(x)^m / P(Bin(dn, θ) = dn/2),
/// ```
///
/// for any `θ ∈ (0, 1)`.
pub fn annealed_ez_theta(n: usize, k: usize, d: usize, beta: f64, theta: f64) -> Result<f64> {
    precondition(theta > 0.0 && theta < 1.0, || "θ must lie in (0, 1)".into())?;
    precondition(d % 2 == 0, || format!("d must be even (got {d})"))?;
    let m = crate::model::clause_count(n, k, d)?;
    let slots = d * n;
    precondition(slots <= MAX_ANNEALED_SLOTS, || {
        format!("dn = {slots} exceeds the cap of {MAX_ANNEALED_SLOTS}")
    })?;
    let c = c_beta(beta);
    let (lt, lf) = (theta.ln(), (1.0 - theta).ln());
    let base: Vec<f64> = (0..=k)
        .map(|j| {
            let w = if j == 0 { (-c).ln_1p() } else { 0.0 };
            ln_choose(k as u64, j as u64) + j as f64 * lt + (k - j) as f64 * lf + w
        })
        .collect();
    let poly = log_poly_pow(&base, m);
    let half = slots / 2;
    let ln_pmf = ln_choose(slots as u64, half as u64) + half as f64 * lt + (slots - half) as f64 * lf;
    Ok(n as f64 * std::f64::consts::LN_2 + poly[half] - ln_pmf)
}

/// [`annealed_ez_theta`] at `θ = 1/2`.
pub fn annealed_ez(n: usize, k: usize, d: usize, beta: f64) -> Result<f64> {
    annealed_ez_theta(n, k, d, beta, 0.5)
}

/// `2 f(2n) − f(n)` for `f(n) = ln E[Z]/n`, cancelling the `1/n` correction.
pub fn annealed_richardson(n: usize, k: usize, d: usize, beta: f64) -> Result<f64> {
    let a = annealed_ez(n, k, d, beta)? / n as f64;
    let b = annealed_ez(2 * n, k, d, beta)? / (2 * n) as f64;
    Ok(2.0 * b - a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::generate;

    #[test]
    fn beta_zero() {
        let f = generate(9, 3, 6, 3).unwrap();
        let g = exact_gibbs(&f, 0.0).unwrap();
        assert!((g.ln_z - 9.0 * 2f64.ln()).abs() < 1e-12);
        assert!(g.marginals.iter().all(|&p| (p - 0.5).abs() < 1e-12));
        assert!((annealed_ez(9, 3, 6, 0.0).unwrap() - 9.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn blocks_and_gray_code_agree_with_naive_sum() {
        // n above the block size exercises the prefix blocks
        let f = generate(16, 4, 4, 9).unwrap();
        let s = energy_spectrum(&f).unwrap();
        assert_eq!(s.energy_histogram().iter().sum::<u64>(), 1 << 16);
        let mut naive = vec![0u64; f.m() + 1];
        for mask in 0u32..(1 << 16) {
            let sigma: Vec<bool> = (0..16).map(|x| mask >> x & 1 == 1).collect();
            naive[f.energy(&sigma)] += 1;
        }
        assert_eq!(naive, s.energy_histogram());
    }

    #[test]
    fn empty_shell_is_all_ones() {
        let f = generate(6, 3, 4, 2).unwrap();
        // 6 · 2^{−0.3} / 2 ≈ 2.4 allows up to two minus values; k = 30 gives < 1
        assert!(shell_max_minus(6, 30) <= 1.0);
        let s = energy_spectrum(&f).unwrap();
        let beta = 1.3;
        let ln_c = s.ln_shell(beta, shell_max_minus(6, 30));
        assert!((ln_c + beta * f.energy_all_ones() as f64).abs() < 1e-12);
    }

    #[test]
    fn annealed_theta_independence() {
        let a = annealed_ez_theta(30, 3, 6, 1.2, 0.3).unwrap();
        let b = annealed_ez_theta(30, 3, 6, 1.2, 0.5).unwrap();
        let c = annealed_ez_theta(30, 3, 6, 1.2, 0.7).unwrap();
        assert!((a - b).abs() < 1e-9 && (b - c).abs() < 1e-9, "{a} {b} {c}");
    }
}
