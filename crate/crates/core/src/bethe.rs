//! Monte-Carlo estimates of the free entropy `F` and the cluster free
//! entropy `B` from a population quad, and the threshold locators.
//!
//! With `z₁` (variable), `z₂` (clause) and `z₃` (edge) the local partition
//! functions,
//!
//! ```text
//! F = ln E[z₁] + (d/k) ln E[z₂] − d ln E[z₃]
//! B = E[z₁ ln z₁]/E[z₁] + (d/k) E[z₂ ln z₂]/E[z₂] − d E[z₃ ln z₃]/E[z₃]
//! ```
//!
//! The tilted expectations are computed by size-biasing the product
//! coordinates: a factor `η/q` turns a `π` draw into a `π₋` draw, a factor
//! `(1−η)/(1−q)` into a `π₊` draw, and likewise `η̂/(1−q)` and `(1−η̂)/q`
//! for `π̂₋` and `π̂₊`. Each tilted term then becomes a plain average.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{precondition, Error, Result};
use crate::model::{beta_lower, closed_form_f, ModelParams};
use crate::numerics::{log_add_exp, LogMean, Moments};
use crate::population::{run_popdyn, PopulationQuad};
use crate::rng::{substream, Rng, CHUNK};

/// Estimate with a standard error.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Estimate { value, stderr }
    }

    /// `|self − other| ≤ z · sqrt(se₁² + se₂²)`.
    pub fn agrees(&self, other: &Estimate, z: f64) -> bool {
        (self.value - other.value).abs() <= z * self.stderr.hypot(other.stderr)
    }

    /// `|self − x| ≤ z · se` for an exact reference value `x`.
    pub fn covers(&self, x: f64, z: f64) -> bool {
        (self.value - x).abs() <= z * self.stderr
    }
}

/// One of the three local terms.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TermEstimate {
    pub estimate: Estimate,
    /// Closed-form value when one exists (`ln E[z]` at the fixed point).
    pub closed: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FEstimate {
    pub f_mc: Estimate,
    pub f_closed: f64,
    /// `ln E[z₁]`, `ln E[z₂]`, `ln E[z₃]`.
    pub terms: [TermEstimate; 3],
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BEstimate {
    pub b: Estimate,
    /// The tilted averages of `ln z₁`, `ln z₂`, `ln z₃`.
    pub terms: [Estimate; 3],
    /// Effective sample sizes (naive estimator only).
    pub ess: Option<[f64; 3]>,
}

/// Everything known about `(F, B)` at one parameter point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BetheEstimate {
    pub params: ModelParams,
    pub f_closed: f64,
    pub f_mc: FEstimate,
    pub b_mc: BEstimate,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Draws from the four populations and their mixtures.
struct Sampler<'a> {
    quad: &'a PopulationQuad,
    q: f64,
}

impl<'a> Sampler<'a> {
    fn new(quad: &'a PopulationQuad) -> Self {
        Sampler {
            quad,
            q: quad.params.q,
        }
    }

    fn pick(rng: &mut Rng, xs: &[f64]) -> f64 {
        xs[rng.gen_range(0..xs.len())]
    }

    fn pi_minus(&self, rng: &mut Rng) -> f64 {
        Self::pick(rng, &self.quad.p_minus.samples)
    }

    fn pi_plus(&self, rng: &mut Rng) -> f64 {
        Self::pick(rng, &self.quad.p_plus.samples)
    }

    fn pihat_minus(&self, rng: &mut Rng) -> f64 {
        Self::pick(rng, &self.quad.phat_minus.samples)
    }

    fn pihat_plus(&self, rng: &mut Rng) -> f64 {
        Self::pick(rng, &self.quad.phat_plus.samples)
    }

    /// `π = q π₋ + (1−q) π₊`.
    fn pi(&self, rng: &mut Rng) -> f64 {
        if rng.gen::<f64>() < self.q {
            self.pi_minus(rng)
        } else {
            self.pi_plus(rng)
        }
    }

    /// `π̂ = (1−q) π̂₋ + q π̂₊`.
    fn pihat(&self, rng: &mut Rng) -> f64 {
        if rng.gen::<f64>() < 1.0 - self.q {
            self.pihat_minus(rng)
        } else {
            self.pihat_plus(rng)
        }
    }
}

/// `ln z₁` for clause messages `a` (edges with `b = +1`) and `b` (edges
/// with `b = −1`), given as probabilities of the violating value.
fn ln_z1(plus_edges: &[f64], minus_edges: &[f64]) -> f64 {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &x in plus_edges {
        s1 += x.ln();
        s2 += (-x).ln_1p();
    }
    for &x in minus_edges {
        s1 += (-x).ln_1p();
        s2 += x.ln();
    }
    log_add_exp(s1, s2)
}

fn ln_z2(c: f64, etas: &[f64]) -> f64 {
    let p: f64 = etas.iter().product();
    (-c * p).ln_1p()
}

fn ln_z3(eta: f64, etahat: f64) -> f64 {
    (eta * etahat + (1.0 - eta) * (1.0 - etahat)).ln()
}

/// Parallel reduction of `f(rng)` over `samples` draws.
fn reduce<A, F>(samples: usize, seed: u64, tag: u64, f: F) -> A
where
    A: Default + Send + Copy + Merge,
    F: Fn(&mut Rng, &mut A) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, &[tag, c as u64]);
            let mut acc = A::default();
            let len = CHUNK.min(samples - c * CHUNK);
            for _ in 0..len {
                f(&mut rng, &mut acc);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(A::default(), |a, b| a.merge_with(b))
}

trait Merge {
    fn merge_with(self, other: Self) -> Self;
}

impl Merge for Moments {
    fn merge_with(self, other: Self) -> Self {
        self.merge(other)
    }
}

impl Merge for LogMean {
    fn merge_with(self, other: Self) -> Self {
        self.merge(other)
    }
}

/// Self-normalized accumulator for `Σ z ln z / Σ z` from `ln z` values.
#[derive(Clone, Copy, Debug)]
struct Tilted {
    shift: f64,
    sw: f64,
    swx: f64,
    swx2: f64,
    sw2: f64,
    sw2x: f64,
    sw2x2: f64,
}

impl Default for Tilted {
    fn default() -> Self {
        Tilted {
            shift: f64::NEG_INFINITY,
            sw: 0.0,
            swx: 0.0,
            swx2: 0.0,
            sw2: 0.0,
            sw2x: 0.0,
            sw2x2: 0.0,
        }
    }
}

impl Tilted {
    fn rescale(&mut self, shift: f64) {
        if shift > self.shift {
            let f = if self.shift == f64::NEG_INFINITY {
                0.0
            } else {
                (self.shift - shift).exp()
            };
            self.sw *= f;
            self.swx *= f;
            self.swx2 *= f;
            self.sw2 *= f * f;
            self.sw2x *= f * f;
            self.sw2x2 *= f * f;
            self.shift = shift;
        }
    }

    fn push(&mut self, ln_z: f64) {
        self.rescale(ln_z);
        let w = (ln_z - self.shift).exp();
        self.sw += w;
        self.swx += w * ln_z;
        self.swx2 += w * ln_z * ln_z;
        self.sw2 += w * w;
        self.sw2x += w * w * ln_z;
        self.sw2x2 += w * w * ln_z * ln_z;
    }

    fn ratio(&self) -> f64 {
        self.swx / self.sw
    }

    /// Delta-method error of the ratio: `sqrt(Σ w²(x − R)²) / Σ w`.
    fn stderr(&self) -> f64 {
        let r = self.ratio();
        let num = self.sw2x2 - 2.0 * r * self.sw2x + r * r * self.sw2;
        num.max(0.0).sqrt() / self.sw
    }

    fn ess(&self) -> f64 {
        self.sw * self.sw / self.sw2
    }
}

impl Merge for Tilted {
    fn merge_with(mut self, mut other: Self) -> Self {
        let s = self.shift.max(other.shift);
        self.rescale(s);
        other.rescale(s);
        self.sw += other.sw;
        self.swx += other.swx;
        self.swx2 += other.swx2;
        self.sw2 += other.sw2;
        self.sw2x += other.sw2x;
        self.sw2x2 += other.sw2x2;
        self
    }
}

fn check_quad(quad: &PopulationQuad, samples: usize) -> Result<()> {
    precondition(samples >= 2, || format!("need at least 2 samples (got {samples})"))?;
    precondition(quad.size() > 0, || "empty populations".into())
}

/// `ln E[z₁] + (d/k) ln E[z₂] − d ln E[z₃]` from independent draws.
pub fn estimate_f_mc(quad: &PopulationQuad, samples: usize, seed: u64) -> Result<FEstimate> {
    check_quad(quad, samples)?;
    let p = quad.params;
    let s = Sampler::new(quad);
    let half = p.half_d();
    let (k, d) = (p.k as f64, p.d as f64);

    let z1: LogMean = reduce(samples, seed, 0, |rng, acc: &mut LogMean| {
        let a: Vec<f64> = (0..half).map(|_| s.pihat(rng)).collect();
        let b: Vec<f64> = (0..half).map(|_| s.pihat(rng)).collect();
        acc.push_ln(ln_z1(&a, &b));
    });
    let z2: LogMean = reduce(samples, seed, 1, |rng, acc: &mut LogMean| {
        let e: Vec<f64> = (0..p.k).map(|_| s.pi(rng)).collect();
        acc.push_ln(ln_z2(p.c_beta, &e));
    });
    let z3: LogMean = reduce(samples, seed, 2, |rng, acc: &mut LogMean| {
        acc.push_ln(ln_z3(s.pi(rng), s.pihat(rng)));
    });
    for (name, a) in [("z1", &z1), ("z2", &z2), ("z3", &z3)] {
        if a.is_zero() {
            return Err(Error::Underflow(name));
        }
    }
    let q = p.q;
    let closed = [
        std::f64::consts::LN_2 + (d / 2.0) * (q.ln() + (1.0 - q).ln()),
        (-p.c_beta * q.powi(p.k as i32)).ln_1p(),
        (2.0 * q * (1.0 - q)).ln(),
    ];
    let terms = [z1, z2, z3].map(|a| Estimate::new(a.ln_mean(), a.ln_mean_stderr()));
    let value = terms[0].value + (d / k) * terms[1].value - d * terms[2].value;
    let stderr = (terms[0].stderr.powi(2)
        + (d / k * terms[1].stderr).powi(2)
        + (d * terms[2].stderr).powi(2))
    .sqrt();
    Ok(FEstimate {
        f_mc: Estimate::new(value, stderr),
        f_closed: closed_form_f(&p),
        terms: [0, 1, 2].map(|i| TermEstimate {
            estimate: terms[i],
            closed: Some(closed[i]),
        }),
    })
}

/// Tilted (size-biased) estimator of `B`.
pub fn estimate_b(quad: &PopulationQuad, samples: usize, seed: u64) -> Result<BEstimate> {
    check_quad(quad, samples)?;
    let p = quad.params;
    let s = Sampler::new(quad);
    let half = p.half_d();
    let (k, d, c, q) = (p.k as f64, p.d as f64, p.c_beta, p.q);

    let t1: Moments = reduce(samples, seed, 10, |rng, acc: &mut Moments| {
        let a: Vec<f64> = (0..half).map(|_| s.pihat_minus(rng)).collect();
        let b: Vec<f64> = (0..half).map(|_| s.pihat_plus(rng)).collect();
        acc.push(ln_z1(&a, &b));
    });
    let t2_plain: Moments = reduce(samples, seed, 11, |rng, acc: &mut Moments| {
        let e: Vec<f64> = (0..p.k).map(|_| s.pi(rng)).collect();
        acc.push(ln_z2(c, &e));
    });
    let t2_biased: Moments = reduce(samples, seed, 12, |rng, acc: &mut Moments| {
        let e: Vec<f64> = (0..p.k).map(|_| s.pi_minus(rng)).collect();
        acc.push(ln_z2(c, &e));
    });
    let t3_minus: Moments = reduce(samples, seed, 13, |rng, acc: &mut Moments| {
        acc.push(ln_z3(s.pi_minus(rng), s.pihat_minus(rng)));
    });
    let t3_plus: Moments = reduce(samples, seed, 14, |rng, acc: &mut Moments| {
        acc.push(ln_z3(s.pi_plus(rng), s.pihat_plus(rng)));
    });

    let cqk = c * q.powi(p.k as i32);
    let z2 = 1.0 - cqk;
    let terms = [
        Estimate::new(t1.mean(), t1.stderr()),
        Estimate::new(
            (t2_plain.mean() - cqk * t2_biased.mean()) / z2,
            (t2_plain.stderr().powi(2) + (cqk * t2_biased.stderr()).powi(2)).sqrt() / z2,
        ),
        Estimate::new(
            0.5 * (t3_minus.mean() + t3_plus.mean()),
            0.5 * t3_minus.stderr().hypot(t3_plus.stderr()),
        ),
    ];
    Ok(combine(terms, k, d, None))
}

fn combine(terms: [Estimate; 3], k: f64, d: f64, ess: Option<[f64; 3]>) -> BEstimate {
    let value = terms[0].value + (d / k) * terms[1].value - d * terms[2].value;
    let stderr = (terms[0].stderr.powi(2)
        + (d / k * terms[1].stderr).powi(2)
        + (d * terms[2].stderr).powi(2))
    .sqrt();
    BEstimate {
        b: Estimate::new(value, stderr),
        terms,
        ess,
    }
}

/// Self-normalized estimator `Σ z ln z / Σ z` on unconditioned draws.
///
/// Its importance ratio has variance growing exponentially in `d`; use it
/// only to cross-check [`estimate_b`] at small degree. The effective sample
/// sizes are reported.
pub fn estimate_b_naive(quad: &PopulationQuad, samples: usize, seed: u64) -> Result<BEstimate> {
    check_quad(quad, samples)?;
    let p = quad.params;
    let s = Sampler::new(quad);
    let half = p.half_d();
    let (k, d) = (p.k as f64, p.d as f64);
    let t1: Tilted = reduce(samples, seed, 20, |rng, acc: &mut Tilted| {
        let a: Vec<f64> = (0..half).map(|_| s.pihat(rng)).collect();
        let b: Vec<f64> = (0..half).map(|_| s.pihat(rng)).collect();
        acc.push(ln_z1(&a, &b));
    });
    let t2: Tilted = reduce(samples, seed, 21, |rng, acc: &mut Tilted| {
        let e: Vec<f64> = (0..p.k).map(|_| s.pi(rng)).collect();
        acc.push(ln_z2(p.c_beta, &e));
    });
    let t3: Tilted = reduce(samples, seed, 22, |rng, acc: &mut Tilted| {
        acc.push(ln_z3(s.pi(rng), s.pihat(rng)));
    });
    let terms = [t1, t2, t3].map(|t| Estimate::new(t.ratio(), t.stderr()));
    Ok(combine(terms, k, d, Some([t1.ess(), t2.ess(), t3.ess()])))
}

/// Population dynamics followed by both estimators.
pub fn bethe_estimate(
    params: ModelParams,
    n: usize,
    max_iters: usize,
    samples: usize,
    seed: u64,
) -> Result<BetheEstimate> {
    let run = run_popdyn(params, n, max_iters, seed)?;
    let f = estimate_f_mc(&run.quad, samples, seed)?;
    let b = estimate_b(&run.quad, samples, seed)?;
    Ok(BetheEstimate {
        params,
        f_closed: f.f_closed,
        f_mc: f,
        b_mc: b,
        n,
        iterations: run.iterations,
        converged: run.converged,
        seed,
    })
}

/// β grid for [`find_beta_c`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BetaScan {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl BetaScan {
    /// 64 log-spaced points from `max(0.05, β₋)` to `2k ln 2`.
    pub fn default_for(k: usize) -> Self {
        BetaScan {
            lo: beta_lower(k).max(0.05),
            hi: 2.0 * k as f64 * std::f64::consts::LN_2,
            points: 64,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

/// Controls of the threshold search.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThresholdConfig {
    pub n: usize,
    pub max_iters: usize,
    /// Draws per estimator term, as a multiple of the population size.
    pub samples_per_n: usize,
    pub tol: f64,
    pub seed: u64,
    /// Number of standard errors in the sign decision.
    pub z: f64,
}

impl ThresholdConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        ThresholdConfig {
            n,
            max_iters: 1000,
            samples_per_n: 50,
            tol: 0.1,
            seed,
            z: 3.0,
        }
    }
}

/// One evaluation of `Δ(β) = F − B`.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct DeltaPoint {
    pub beta: f64,
    pub f_closed: f64,
    pub b_mc: f64,
    pub stderr: f64,
    pub delta: f64,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Zero,
    Negative,
}

impl DeltaPoint {
    /// Sign of `Δ` at `z` standard errors. A point whose error bar is
    /// numerically zero (liquid populations) only counts as negative when
    /// `Δ < −1e−9`.
    pub fn sign(&self, z: f64) -> Sign {
        let band = z * self.stderr + 1e-9;
        if self.delta < -band {
            Sign::Negative
        } else if self.delta > band {
            Sign::Positive
        } else {
            Sign::Zero
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdResult {
    pub k: usize,
    pub d: usize,
    /// `None` means no crossing (β_c = ∞).
    pub beta_c: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    /// Grid trace followed by the refinement evaluations.
    pub trace: Vec<DeltaPoint>,
    pub refinements: Vec<DeltaPoint>,
    /// Grid indices `i` where `Δ` turns negative between `i−1` and `i`.
    pub sign_changes: Vec<usize>,
    /// Set when a refinement point could not be classified.
    pub ambiguous: bool,
    pub note: String,
    pub config: ThresholdConfig,
    pub scan: BetaScan,
}

impl ThresholdResult {
    pub fn beta_c_or_inf(&self) -> f64 {
        self.beta_c.unwrap_or(f64::INFINITY)
    }
}

/// `Δ(β)` from one population-dynamics run at size `n`.
pub fn delta_at(k: usize, d: usize, beta: f64, n: usize, cfg: &ThresholdConfig) -> Result<DeltaPoint> {
    let params = ModelParams::new(k, d, beta)?;
    let run = run_popdyn(params, n, cfg.max_iters, cfg.seed)?;
    let b = estimate_b(&run.quad, cfg.samples_per_n * n, cfg.seed)?;
    let f = closed_form_f(&params);
    Ok(DeltaPoint {
        beta,
        f_closed: f,
        b_mc: b.b.value,
        stderr: b.b.stderr,
        delta: f - b.b.value,
        n,
        iterations: run.iterations,
        converged: run.converged,
    })
}

/// First `β` on the scan where `F < B` at `z` standard errors, refined by
/// bisection with the population doubled at each step.
pub fn find_beta_c(
    k: usize,
    d: usize,
    scan: BetaScan,
    cfg: ThresholdConfig,
) -> Result<ThresholdResult> {
    ModelParams::new(k, d, 1.0)?;
    precondition(scan.lo >= beta_lower(k) && scan.lo > 0.0, || {
        format!("scan must start at or above beta_lower(k) = {}", beta_lower(k))
    })?;
    precondition(scan.hi > scan.lo && scan.points >= 2, || {
        "scan grid must be increasing with at least two points".into()
    })?;
    let grid = scan.grid();
    let trace: Vec<DeltaPoint> = grid
        .iter()
        .map(|&b| delta_at(k, d, b, cfg.n, &cfg))
        .collect::<Result<_>>()?;
    let signs: Vec<Sign> = trace.iter().map(|p| p.sign(cfg.z)).collect();
    let sign_changes: Vec<usize> = (1..signs.len())
        .filter(|&i| signs[i] == Sign::Negative && signs[i - 1] != Sign::Negative)
        .collect();
    let mut result = ThresholdResult {
        k,
        d,
        beta_c: None,
        bracket: None,
        trace,
        refinements: Vec::new(),
        sign_changes: sign_changes.clone(),
        ambiguous: false,
        note: String::new(),
        config: cfg,
        scan,
    };
    let first = if signs[0] == Sign::Negative {
        result.note = "Δ already negative at the scan start".into();
        result.beta_c = Some(grid[0]);
        result.bracket = Some((grid[0], grid[0]));
        return Ok(result);
    } else {
        match sign_changes.first() {
            Some(&i) => i,
            None => {
                result.note = format!("no sign change at {} standard errors", cfg.z);
                return Ok(result);
            }
        }
    };
    let (mut lo, mut hi) = (grid[first - 1], grid[first]);
    let mut n = cfg.n;
    while hi - lo > cfg.tol {
        n *= 2;
        let mid = 0.5 * (lo + hi);
        let p = delta_at(k, d, mid, n, &cfg)?;
        result.refinements.push(p);
        match p.sign(cfg.z) {
            Sign::Negative => hi = mid,
            Sign::Positive => lo = mid,
            Sign::Zero => {
                if p.stderr > 1e-12 {
                    result.ambiguous = true;
                    result.note = format!("|Δ({mid})| below {} standard errors at N = {n}", cfg.z);
                    break;
                }
                lo = mid;
            }
        }
    }
    result.bracket = Some((lo, hi));
    result.beta_c = Some(0.5 * (lo + hi));
    if result.note.is_empty() {
        result.note = format!("{} sign change(s) on the grid; first one refined", sign_changes.len());
    }
    Ok(result)
}

#[derive(Clone, Debug, Serialize)]
pub struct DcResult {
    pub k: usize,
    pub d_c: Option<usize>,
    pub table: Vec<(usize, Option<f64>)>,
    /// Whether `β_c(d)` is nonincreasing along the table's finite entries.
    pub monotone: bool,
}

/// Smallest grid degree with a finite `β_c`.
pub fn find_d_c(k: usize, d_grid: &[usize], cfg: ThresholdConfig) -> Result<DcResult> {
    precondition(d_grid.windows(2).all(|w| w[0] < w[1]), || {
        "d grid must be ascending".into()
    })?;
    let mut table = Vec::new();
    for &d in d_grid {
        let r = find_beta_c(k, d, BetaScan::default_for(k), cfg)?;
        table.push((d, r.beta_c));
    }
    let finite: Vec<f64> = table.iter().filter_map(|t| t.1).collect();
    Ok(DcResult {
        k,
        d_c: table.iter().find(|t| t.1.is_some()).map(|t| t.0),
        monotone: finite.windows(2).all(|w| w[1] <= w[0]),
        table,
    })
}

/// CSV Δ-trace: `beta,F_closed,B_mc,B_stderr,delta,N`.
pub fn write_delta_csv<W: Write>(points: &[DeltaPoint], mut w: W) -> Result<()> {
    writeln!(w, "beta,F_closed,B_mc,B_stderr,delta,N")?;
    for p in points {
        writeln!(w, "{},{},{},{},{},{}", p.beta, p.f_closed, p.b_mc, p.stderr, p.delta, p.n)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn liquid_quad_gives_f_closed() {
        for &(k, d, beta) in &[(4, 30, 2.0), (3, 6, 1.0), (5, 40, 4.0)] {
            let p = ModelParams::new(k, d, beta).unwrap();
            let quad = PopulationQuad::liquid(p, 100);
            let b = estimate_b(&quad, 64, 1).unwrap();
            assert!((b.b.value - closed_form_f(&p)).abs() < 1e-9);
            let f = estimate_f_mc(&quad, 64, 1).unwrap();
            assert!((f.f_mc.value - closed_form_f(&p)).abs() < 1e-9);
        }
    }

    #[test]
    fn z1_is_symmetric() {
        let a = [0.3, 0.4];
        let b = [0.45, 0.2];
        let direct = 0.3 * 0.4 * 0.55 * 0.8 + 0.7 * 0.6 * 0.45 * 0.2;
        assert!((ln_z1(&a, &b) - f64::ln(direct)).abs() < 1e-14);
    }

    #[test]
    fn tilted_accumulator_matches_direct() {
        let xs: [f64; 4] = [-1.0, -3.0, -0.5, -2.0];
        let mut t = Tilted::default();
        for &x in &xs {
            t.push(x);
        }
        let sw: f64 = xs.iter().map(|x| x.exp()).sum();
        let r: f64 = xs.iter().map(|x| x.exp() * x).sum::<f64>() / sw;
        assert!((t.ratio() - r).abs() < 1e-14);
        let mut a = Tilted::default();
        let mut b = Tilted::default();
        a.push(xs[0]);
        a.push(xs[1]);
        b.push(xs[2]);
        b.push(xs[3]);
        let m = a.merge_with(b);
        assert!((m.ratio() - r).abs() < 1e-14);
        assert!((m.ess() - t.ess()).abs() < 1e-12);
    }

    #[test]
    fn sign_rule() {
        let mut p = DeltaPoint {
            beta: 1.0,
            f_closed: 0.0,
            b_mc: 0.0,
            stderr: 0.1,
            delta: -0.2,
            n: 1,
            iterations: 1,
            converged: true,
        };
        assert_eq!(p.sign(3.0), Sign::Zero);
        p.delta = -0.31;
        assert_eq!(p.sign(3.0), Sign::Negative);
        p.stderr = 0.0;
        p.delta = 1e-12;
        assert_eq!(p.sign(3.0), Sign::Zero);
    }

    #[test]
    fn default_scan() {
        let s = BetaScan::default_for(4);
        let g = s.grid();
        assert_eq!(g.len(), 64);
        assert!((g[0] - 0.05).abs() < 1e-15);
        assert!((g[63] - 8.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }
}
