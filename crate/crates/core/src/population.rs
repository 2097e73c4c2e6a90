//! Population dynamics for the label-conditioned message laws.
//!
//! A sample `η` of a variable population is the probability that the
//! variable takes the value of its own label `b` (the value that makes its
//! parent-clause literal false). `π₋` collects variables with `b = +1`,
//! `π₊` those with `b = −1`. A clause sample `η̂` is the probability the
//! clause message puts on the violating value of its parent edge; `π̂₋`
//! holds clauses whose parent edge has `b = +1`, `π̂₊` those with `b = −1`.
//!
//! The mixtures are `π = q π₋ + (1−q) π₊` and `π̂ = (1−q) π̂₋ + q π̂₊`.

use std::io::{BufRead, Read, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{precondition, Error, Result};
use crate::model::ModelParams;
use crate::numerics::{choose, logistic, logit, Categorical};
use crate::rng::{substream, Rng, CHUNK};

/// Floor applied to `ln η` before summing.
pub const LN_FLOOR: f64 = -700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PopKind {
    PiMinus,
    PiPlus,
    PihatMinus,
    PihatPlus,
    PiMixed,
    PihatMixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub samples: Vec<f64>,
    pub kind: PopKind,
}

impl Population {
    pub fn constant(kind: PopKind, value: f64, n: usize) -> Self {
        Population {
            samples: vec![value; n],
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Standard error of the sample mean.
    pub fn mean_stderr(&self) -> f64 {
        let n = self.samples.len() as f64;
        let m = self.mean();
        let v = self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (v / n).sqrt()
    }

    /// Histogram with `bins` equal cells on `[0, 1]`.
    pub fn histogram(&self, bins: usize) -> Vec<usize> {
        let mut h = vec![0; bins];
        for &x in &self.samples {
            let i = ((x * bins as f64) as usize).min(bins - 1);
            h[i] += 1;
        }
        h
    }

    /// One value per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for x in &self.samples {
            writeln!(w, "{x}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, kind: PopKind) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let x: f64 = t.parse().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("{e}"),
            })?;
            samples.push(x);
        }
        Ok(Population { samples, kind })
    }

    /// Raw little-endian `f64` values.
    pub fn write_bin<W: Write>(&self, mut w: W) -> Result<()> {
        for x in &self.samples {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_bin<R: Read>(mut r: R, kind: PopKind) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() % 8 != 0 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("binary snapshot length {} is not a multiple of 8", buf.len()),
            });
        }
        let samples = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Population { samples, kind })
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StepDiagnostics {
    /// Number of `ln η` values clamped at [`LN_FLOOR`] in the last sweep.
    pub clamped: u64,
}

/// The four label-conditioned populations `(π₋, π₊, π̂₋, π̂₊)`.
#[derive(Clone, Debug)]
pub struct PopulationQuad {
    pub p_minus: Population,
    pub p_plus: Population,
    pub phat_minus: Population,
    pub phat_plus: Population,
    pub params: ModelParams,
    pub iteration: usize,
    pub diagnostics: StepDiagnostics,
}

impl PopulationQuad {
    /// `π₋ = δ₁`, `π₊ = δ₀`; clause populations start uninformative at 1/2.
    pub fn polarized(params: ModelParams, n: usize) -> Self {
        PopulationQuad {
            p_minus: Population::constant(PopKind::PiMinus, 1.0, n),
            p_plus: Population::constant(PopKind::PiPlus, 0.0, n),
            phat_minus: Population::constant(PopKind::PihatMinus, 0.5, n),
            phat_plus: Population::constant(PopKind::PihatPlus, 0.5, n),
            params,
            iteration: 0,
            diagnostics: StepDiagnostics::default(),
        }
    }

    /// Point masses at the liquid values `q` and `1 − q`.
    pub fn liquid(params: ModelParams, n: usize) -> Self {
        let q = params.q;
        PopulationQuad {
            p_minus: Population::constant(PopKind::PiMinus, q, n),
            p_plus: Population::constant(PopKind::PiPlus, q, n),
            phat_minus: Population::constant(PopKind::PihatMinus, 1.0 - q, n),
            phat_plus: Population::constant(PopKind::PihatPlus, 1.0 - q, n),
            params,
            iteration: 0,
            diagnostics: StepDiagnostics::default(),
        }
    }

    pub fn size(&self) -> usize {
        self.p_minus.len()
    }

    /// True when every sample of every population is equal to the first
    /// sample of its population.
    pub fn is_point_mass(&self) -> bool {
        [&self.p_minus, &self.p_plus, &self.phat_minus, &self.phat_plus]
            .iter()
            .all(|p| p.samples.iter().all(|&x| x == p.samples[0]))
    }
}

/// Branch weights over the number `r` of `+1` children of a clause whose
/// parent edge is `+1`, for `r = 0..=k−1`.
///
/// `r ≤ k−2` carries `C(k−1,r) q^r (1−q)^{k−1−r} / (1 − c_β q^{k−1})`; the
/// all-plus branch `r = k−1` carries `e^{−β} q^{k−1} / (1 − c_β q^{k−1})`.
pub fn minus_clause_weights(params: &ModelParams) -> Vec<f64> {
    let ModelParams { k, q, c_beta, .. } = *params;
    let km1 = k - 1;
    let qk1 = q.powi(km1 as i32);
    let z = 1.0 - c_beta * qk1;
    let mut w: Vec<f64> = (0..km1)
        .map(|r| choose(km1, r) * q.powi(r as i32) * (1.0 - q).powi((km1 - r) as i32) / z)
        .collect();
    w.push(params.all_plus_prob());
    w
}

/// `Binomial(k−1, q)` weights for the number of `+1` children of a clause
/// whose parent edge is `−1`.
pub fn plus_clause_weights(params: &ModelParams) -> Vec<f64> {
    crate::numerics::binomial_pmf(params.k - 1, params.q)
}

struct Kernels {
    minus_branch: Categorical,
    plus_branch: Categorical,
}

fn kernels(params: &ModelParams) -> Result<Kernels> {
    let wm = minus_clause_weights(params);
    let wp = plus_clause_weights(params);
    for w in [&wm, &wp] {
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Normalization { sum: s });
        }
    }
    Ok(Kernels {
        minus_branch: Categorical::new(&wm),
        plus_branch: Categorical::new(&wp),
    })
}

fn pick<'a>(rng: &mut Rng, xs: &'a [f64]) -> &'a f64 {
    &xs[rng.gen_range(0..xs.len())]
}

fn clamped_ln(xs: &[f64]) -> (Vec<f64>, u64) {
    let mut clamped = 0;
    let v = xs
        .iter()
        .map(|&x| {
            let l = x.ln();
            if l < LN_FLOOR {
                clamped += 1;
                LN_FLOOR
            } else {
                l
            }
        })
        .collect();
    (v, clamped)
}

/// Fills `out` in parallel with `f(rng)`, one substream per chunk.
fn par_fill<F>(out: &mut [f64], seed: u64, tags: [u64; 2], f: F)
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut rng = substream(seed, &[tags[0], tags[1], c as u64]);
        for x in chunk.iter_mut() {
            *x = f(&mut rng);
        }
    });
}

/// One sweep of the pair recursions.
///
/// The clause populations are recomputed from the variable populations, then
/// the variable populations from the new clause populations. (Updating all
/// four from the old quad at once would split the dynamics into two
/// decoupled chains that alternate between sweeps.) Each
/// output index range of [`CHUNK`] samples owns a substream keyed by
/// `(seed, iteration, population, chunk)`.
pub fn step_pair(quad: &PopulationQuad, seed: u64) -> Result<PopulationQuad> {
    let params = quad.params;
    precondition(
        !quad.p_minus.is_empty()
            && !quad.p_plus.is_empty()
            && !quad.phat_minus.is_empty()
            && !quad.phat_plus.is_empty(),
        || "populations must be non-empty".into(),
    )?;
    let ker = kernels(&params)?;
    let n = quad.size();
    let it = quad.iteration as u64;
    let half = params.half_d();
    let km1 = params.k - 1;

    // clause outputs from variable logs
    let (ln_minus, c1) = clamped_ln(&quad.p_minus.samples);
    let (ln_plus, c2) = clamped_ln(&quad.p_plus.samples);
    let clause_out = |r: usize, rng: &mut Rng| {
        let mut s = 0.0;
        for _ in 0..r {
            s += pick(rng, &ln_minus);
        }
        for _ in r..km1 {
            s += pick(rng, &ln_plus);
        }
        params.clause_kernel(s.exp())
    };
    let mut phat_minus = vec![0.0; n];
    let mut phat_plus = vec![0.0; n];
    par_fill(&mut phat_minus, seed, [it, 2], |rng| {
        let r = ker.minus_branch.sample(rng);
        clause_out(r, rng)
    });
    par_fill(&mut phat_plus, seed, [it, 3], |rng| {
        let r = ker.plus_branch.sample(rng);
        clause_out(r, rng)
    });

    // variable outputs from the fresh clause populations
    let lg_minus: Vec<f64> = phat_minus.iter().map(|&x| logit(x)).collect();
    let lg_plus: Vec<f64> = phat_plus.iter().map(|&x| logit(x)).collect();
    let var_out = |same: &[f64], opp: &[f64], rng: &mut Rng| {
        let mut l = 0.0;
        for _ in 0..half - 1 {
            l += pick(rng, same);
        }
        for _ in 0..half {
            l -= pick(rng, opp);
        }
        logistic(l)
    };
    let mut p_minus = vec![0.0; n];
    let mut p_plus = vec![0.0; n];
    par_fill(&mut p_minus, seed, [it, 0], |rng| var_out(&lg_minus, &lg_plus, rng));
    par_fill(&mut p_plus, seed, [it, 1], |rng| var_out(&lg_plus, &lg_minus, rng));

    let (lo, hi) = params.clause_range();
    let slack = 1e-12;
    for &x in phat_minus.iter().chain(phat_plus.iter()) {
        precondition(x >= lo - slack && x <= hi + slack, || {
            format!("clause message {x} outside [{lo}, {hi}]")
        })?;
    }

    Ok(PopulationQuad {
        p_minus: Population {
            samples: p_minus,
            kind: PopKind::PiMinus,
        },
        p_plus: Population {
            samples: p_plus,
            kind: PopKind::PiPlus,
        },
        phat_minus: Population {
            samples: phat_minus,
            kind: PopKind::PihatMinus,
        },
        phat_plus: Population {
            samples: phat_plus,
            kind: PopKind::PihatPlus,
        },
        params,
        iteration: quad.iteration + 1,
        diagnostics: StepDiagnostics { clamped: c1 + c2 },
    })
}

/// Result of [`run_popdyn`].
#[derive(Clone, Debug)]
pub struct PopdynRun {
    pub quad: PopulationQuad,
    pub converged: bool,
    pub iterations: usize,
    pub final_w1: f64,
    pub w1_trace: Vec<f64>,
}

/// Consecutive sweeps under the W1 threshold required to stop.
pub const STABLE_SWEEPS: usize = 10;

/// Iterates [`step_pair`] from the polarized start until the mixed
/// population moves by less than `3/√N` in W1 for [`STABLE_SWEEPS`]
/// consecutive sweeps, or `max_iters` sweeps have run.
pub fn run_popdyn(params: ModelParams, n: usize, max_iters: usize, seed: u64) -> Result<PopdynRun> {
    precondition(n >= 1000, || format!("population size must be at least 1000 (got {n})"))?;
    run_from(PopulationQuad::polarized(params, n), max_iters, seed)
}

/// Same as [`run_popdyn`] from an arbitrary starting quad.
pub fn run_from(mut quad: PopulationQuad, max_iters: usize, seed: u64) -> Result<PopdynRun> {
    let n = quad.size();
    let threshold = 3.0 / (n as f64).sqrt();
    let mut prev = mix(&quad);
    let mut streak = 0;
    let mut trace = Vec::new();
    let mut clamped = 0;
    while quad.iteration < max_iters {
        quad = step_pair(&quad, seed)?;
        clamped += quad.diagnostics.clamped;
        let cur = mix(&quad);
        let w = w1_distance(&prev, &cur)?;
        trace.push(w);
        prev = cur;
        streak = if w < threshold { streak + 1 } else { 0 };
        if streak >= STABLE_SWEEPS {
            break;
        }
    }
    quad.diagnostics.clamped = clamped;
    Ok(PopdynRun {
        iterations: quad.iteration,
        converged: streak >= STABLE_SWEEPS,
        final_w1: trace.last().copied().unwrap_or(0.0),
        w1_trace: trace,
        quad,
    })
}

fn proportional_mix(a: &Population, b: &Population, wa: f64, kind: PopKind) -> Population {
    let n = a.len().min(b.len());
    let na = ((wa * n as f64).round() as usize).min(n);
    let mut samples = Vec::with_capacity(n);
    samples.extend_from_slice(&a.samples[..na]);
    samples.extend_from_slice(&b.samples[..n - na]);
    Population { samples, kind }
}

/// `π = q π₋ + (1−q) π₊`, formed by taking `round(qN)` samples of `π₋` and
/// the rest from `π₊`. Samples inside each population are exchangeable, so a
/// prefix is a uniform subsample.
pub fn mix(quad: &PopulationQuad) -> Population {
    proportional_mix(&quad.p_minus, &quad.p_plus, quad.params.q, PopKind::PiMixed)
}

/// `π̂ = (1−q) π̂₋ + q π̂₊`.
pub fn mix_hat(quad: &PopulationQuad) -> Population {
    proportional_mix(
        &quad.phat_minus,
        &quad.phat_plus,
        1.0 - quad.params.q,
        PopKind::PihatMixed,
    )
}

/// Mass of the middle interval and of the one-sided interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SkewReport {
    pub skewed: bool,
    /// Empirical mass of `(e^{−kβ/2}, 1 − e^{−kβ/2})`.
    pub middle_mass: f64,
    /// Empirical mass of `(0, 1 − e^{−kβ/2})`.
    pub one_sided_mass: f64,
    /// `2^{−0.9k}`.
    pub threshold: f64,
}

/// A population is skewed when its middle-interval mass is below `2^{−0.9k}`.
pub fn is_skewed(pop: &Population, params: &ModelParams) -> SkewReport {
    let hi = params.strong_threshold();
    let lo = 1.0 - hi;
    let n = pop.len() as f64;
    let middle = pop.samples.iter().filter(|&&x| x > lo && x < hi).count() as f64 / n;
    let one_sided = pop.samples.iter().filter(|&&x| x > 0.0 && x < hi).count() as f64 / n;
    let threshold = 2f64.powf(-0.9 * params.k as f64);
    SkewReport {
        skewed: middle < threshold,
        middle_mass: middle,
        one_sided_mass: one_sided,
        threshold,
    }
}

/// Wasserstein-1 distance between two empirical measures on the line.
///
/// Computed as `∫|F_a − F_b|` by merging the sorted samples, which equals
/// the mean absolute difference of sorted samples when sizes agree and stays
/// exact when they do not.
pub fn w1_distance(a: &Population, b: &Population) -> Result<f64> {
    precondition(!a.is_empty() && !b.is_empty(), || "empty population".into())?;
    let mut xa = a.samples.clone();
    let mut xb = b.samples.clone();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    if xa.len() == xb.len() {
        let s: f64 = xa.iter().zip(&xb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / xa.len() as f64);
    }
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut last = xa[0].min(xb[0]);
    let mut total = 0.0;
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - last);
        last = next;
        while i < xa.len() && xa[i] == next {
            i += 1;
        }
        while j < xb.len() && xb[j] == next {
            j += 1;
        }
    }
    Ok(total)
}

/// Unconditioned clause operator: each output is `f̂` of `k − 1` i.i.d.
/// draws from `pi`.
pub fn apply_clause_operator(pi: &Population, params: &ModelParams, seed: u64) -> Population {
    let (ln, _) = clamped_ln(&pi.samples);
    let mut out = vec![0.0; pi.len()];
    par_fill(&mut out, seed, [u64::MAX, 0], |rng| {
        let s: f64 = (0..params.k - 1).map(|_| pick(rng, &ln)).sum();
        params.clause_kernel(s.exp())
    });
    Population {
        samples: out,
        kind: PopKind::PihatMixed,
    }
}

/// Unconditioned variable operator: `f` of `d − 1` i.i.d. draws from `pihat`,
/// the first `d/2 − 1` entering as same-label and the rest as opposite-label.
pub fn apply_variable_operator(pihat: &Population, params: &ModelParams, seed: u64) -> Population {
    let lg: Vec<f64> = pihat.samples.iter().map(|&x| logit(x)).collect();
    let half = params.half_d();
    let mut out = vec![0.0; pihat.len()];
    par_fill(&mut out, seed, [u64::MAX, 1], |rng| {
        let mut l = 0.0;
        for _ in 0..half - 1 {
            l += pick(rng, &lg);
        }
        for _ in 0..half {
            l -= pick(rng, &lg);
        }
        logistic(l)
    });
    Population {
        samples: out,
        kind: PopKind::PiMixed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize, d: usize, beta: f64) -> ModelParams {
        ModelParams::new(k, d, beta).unwrap()
    }

    #[test]
    fn branch_weights_normalized() {
        for &(k, beta) in &[(4, 2.0), (3, 0.1), (8, 6.0), (12, 30.0)] {
            let p = params(k, 10, beta);
            let s: f64 = minus_clause_weights(&p).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "k={k} beta={beta} sum={s}");
        }
    }

    #[test]
    fn liquid_quad_is_invariant() {
        let p = params(4, 30, 2.0);
        let quad = PopulationQuad::liquid(p, 1000);
        let next = step_pair(&quad, 1).unwrap();
        let fhat = p.clause_kernel(p.q.powi(3));
        for &x in next.phat_minus.samples.iter().chain(&next.phat_plus.samples) {
            assert!((x - fhat).abs() < 1e-14);
            assert!((x - (1.0 - p.q)).abs() < 1e-12);
        }
        for &x in next.p_minus.samples.iter().chain(&next.p_plus.samples) {
            assert!((x - p.q).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_beta_gives_half() {
        let p = params(4, 10, 1e-300);
        let quad = PopulationQuad::polarized(p, 1000);
        let next = step_pair(&quad, 3).unwrap();
        assert!(next.phat_minus.samples.iter().all(|&x| x == 0.5));
        assert!(next.phat_plus.samples.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn polarized_mix_mean() {
        let p = params(4, 30, 3.0);
        let n = 10_000;
        let m = mix(&PopulationQuad::polarized(p, n)).mean();
        assert!((m - p.q).abs() <= 1.0 / n as f64);
    }

    #[test]
    fn w1_examples() {
        let n = 1000;
        let z = Population::constant(PopKind::PiMixed, 0.0, n);
        let o = Population::constant(PopKind::PiMixed, 1.0, n);
        assert_eq!(w1_distance(&z, &z).unwrap(), 0.0);
        assert_eq!(w1_distance(&z, &o).unwrap(), 1.0);
        let grid = Population {
            samples: (0..n).map(|i| i as f64 / n as f64).collect(),
            kind: PopKind::PiMixed,
        };
        let w = w1_distance(&z, &grid).unwrap();
        assert!((w - 0.5).abs() < 1.0 / n as f64);
        let short = Population::constant(PopKind::PiMixed, 1.0, 10);
        assert!((w1_distance(&z, &short).unwrap() - 1.0).abs() < 1e-15);
        assert!((w1_distance(&grid, &short).unwrap() - w1_distance(&grid, &o).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn skew_examples() {
        let p = params(6, 100, 4.0);
        let half = Population::constant(PopKind::PiMixed, 0.5, 100);
        assert!(!is_skewed(&half, &p).skewed);
        let mut s = vec![0.0; 50];
        s.extend(vec![1.0; 50]);
        let ends = Population {
            samples: s,
            kind: PopKind::PiMixed,
        };
        let r = is_skewed(&ends, &p);
        assert!(r.skewed);
        assert_eq!(r.middle_mass, 0.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let pop = Population {
            samples: vec![0.1, 1.0 / 3.0, 0.0, 1.0, 0.123_456_789_012_345_67],
            kind: PopKind::PiMinus,
        };
        let mut csv = Vec::new();
        pop.write_csv(&mut csv).unwrap();
        assert_eq!(Population::read_csv(&csv[..], PopKind::PiMinus).unwrap(), pop);
        let mut bin = Vec::new();
        pop.write_bin(&mut bin).unwrap();
        assert_eq!(Population::read_bin(&bin[..], PopKind::PiMinus).unwrap(), pop);
    }
}
