//! Message laws on random trees: exact per-trial recursion and a pooled
//! engine, the contraction experiment, and the finite-depth estimator
//! `B^{(ℓ)}`.
//!
//! Both engines work in label coordinates `η = ν(b)`, the same coordinates
//! as the population module, and carry `C` channels per message so that a
//! tree can be swept under several boundaries at once.
//!
//! The pooled engine keeps, for each depth and label, a pool of messages.
//! Since the subtrees hanging below distinct nodes of a tree are
//! independent given their labels, the message law at depth `t` is obtained
//! by drawing the children of a fresh node from the depth `t − 1` pools. This
//! is exact in the limit of infinite pools and costs
//! `O(pool · ℓ · (d + k))` instead of `O(((d−1)(k−1))^ℓ)` per trial.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    cold_report, node_count, sample_clause_children, sample_tree_with, variable_children, BoundaryCondition,
    BoundaryKind, BoundarySpec, ColdReport, HConvention, RootKind,
};
use crate::bethe::Estimate;
use crate::error::{precondition, Result};
use crate::model::ModelParams;
use crate::numerics::{logistic, logit, Categorical, Moments};
use crate::population::{minus_clause_weights, plus_clause_weights};
use crate::rng::{substream, Rng, CHUNK};

/// Total node budget per call below which the exact engine is used.
pub const EXACT_BUDGET: f64 = 2e7;

/// Default pool size of the pooled engine.
pub const DEFAULT_POOL: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Exact when the trees fit in [`EXACT_BUDGET`], pooled otherwise.
    Auto,
    Exact,
    Pooled,
}

fn label_index(b: i8) -> usize {
    usize::from(b != 1)
}

fn to_eta(nu_plus: f64, b: i8) -> f64 {
    if b == 1 {
        nu_plus
    } else {
        1.0 - nu_plus
    }
}

/// Branch samplers for the number of `+1` children of a clause.
struct Branches {
    by_label: [Categorical; 2],
}

impl Branches {
    fn new(params: &ModelParams) -> Self {
        Branches {
            by_label: [
                Categorical::new(&minus_clause_weights(params)),
                Categorical::new(&plus_clause_weights(params)),
            ],
        }
    }

    /// Number of `+1` children of a clause whose parent edge is `b`.
    fn plus_children(&self, b: i8, rng: &mut Rng) -> usize {
        self.by_label[label_index(b)].sample(rng)
    }
}

fn clause_eta<const C: usize>(params: &ModelParams, ln_prod: [f64; C]) -> [f64; C] {
    ln_prod.map(|l| params.clause_kernel(l.exp()))
}

fn ln_or_floor(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Message pools for one depth, indexed by label (`0` for `+1`, `1` for `−1`).
#[derive(Clone, Debug)]
pub struct LevelPools<const C: usize> {
    pub var: [Vec<[f64; C]>; 2],
    /// Clauses whose children are the variables of the previous depth.
    pub clause: [Vec<[f64; C]>; 2],
    /// `logit` of `clause`, the form consumed by variable updates.
    pub clause_logit: [Vec<[f64; C]>; 2],
}

fn logits<const C: usize>(pool: &[[f64; C]]) -> Vec<[f64; C]> {
    pool.par_iter().map(|m| m.map(logit)).collect()
}

fn par_fill<const C: usize, F>(n: usize, seed: u64, tags: [u64; 3], f: F) -> Vec<[f64; C]>
where
    F: Fn(&mut Rng) -> [f64; C] + Sync,
{
    let mut out = vec![[0.0; C]; n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut rng = substream(seed, &[tags[0], tags[1], tags[2], c as u64]);
        for x in chunk.iter_mut() {
            *x = f(&mut rng);
        }
    });
    out
}

/// Pooled message laws at depths `0..=ℓ` from the leaves up.
pub struct PooledEngine<'a, const C: usize> {
    pub params: ModelParams,
    pub pool: usize,
    pub boundaries: [BoundarySpec<'a>; C],
    branches: Branches,
}

impl<'a, const C: usize> PooledEngine<'a, C> {
    pub fn new(params: ModelParams, pool: usize, boundaries: [BoundarySpec<'a>; C]) -> Result<Self> {
        precondition(pool >= 1, || "pool size must be positive".into())?;
        Ok(PooledEngine {
            params,
            pool,
            boundaries,
            branches: Branches::new(&params),
        })
    }

    fn leaves(&self, seed: u64) -> [Vec<[f64; C]>; 2] {
        [1i8, -1].map(|b| {
            par_fill(self.pool, seed, [0, 0, label_index(b) as u64], |rng| {
                let mut m = [0.0; C];
                for (c, spec) in self.boundaries.iter().enumerate() {
                    m[c] = to_eta(spec.draw(&self.params, b, rng), b);
                }
                m
            })
        })
    }

    /// One clause message with parent edge `b` from the variable pools.
    pub fn clause_from(&self, var: &[Vec<[f64; C]>; 2], b: i8, rng: &mut Rng) -> [f64; C] {
        let r = self.branches.plus_children(b, rng);
        let mut lp = [0.0; C];
        for j in 0..self.params.k - 1 {
            let pool = &var[usize::from(j >= r)];
            let m = pool[rng.gen_range(0..pool.len())];
            for c in 0..C {
                lp[c] += ln_or_floor(m[c]);
            }
        }
        clause_eta(&self.params, lp)
    }

    /// One variable message with label `b` and `d − 1` children, given the
    /// clause pools in `logit` form.
    pub fn variable_from(&self, clause_logit: &[Vec<[f64; C]>; 2], b: i8, rng: &mut Rng) -> [f64; C] {
        let half = self.params.half_d();
        let mut l = [0.0; C];
        let same = &clause_logit[label_index(b)];
        let opp = &clause_logit[label_index(-b)];
        for j in 0..self.params.d - 1 {
            let (pool, sign) = if j < half - 1 { (same, 1.0) } else { (opp, -1.0) };
            let m = pool[rng.gen_range(0..pool.len())];
            for c in 0..C {
                l[c] += sign * m[c];
            }
        }
        l.map(logistic)
    }

    /// Pools for every depth `0..=ell`; depth 0 holds the boundary.
    pub fn run(&self, ell: usize, seed: u64) -> Vec<LevelPools<C>> {
        let mut out = Vec::with_capacity(ell + 1);
        out.push(LevelPools {
            var: self.leaves(seed),
            clause: [Vec::new(), Vec::new()],
            clause_logit: [Vec::new(), Vec::new()],
        });
        for t in 1..=ell {
            let prev = &out[t - 1].var;
            let clause = [1i8, -1].map(|b| {
                par_fill(self.pool, seed, [t as u64, 1, label_index(b) as u64], |rng| {
                    self.clause_from(prev, b, rng)
                })
            });
            let clause_logit = [logits(&clause[0]), logits(&clause[1])];
            let var = [1i8, -1].map(|b| {
                par_fill(self.pool, seed, [t as u64, 2, label_index(b) as u64], |rng| {
                    self.variable_from(&clause_logit, b, rng)
                })
            });
            out.push(LevelPools {
                var,
                clause,
                clause_logit,
            });
        }
        out
    }
}

/// Exact message laws: each call samples a fresh subtree.
pub struct ExactEngine<'a, const C: usize> {
    pub params: ModelParams,
    pub boundaries: [BoundarySpec<'a>; C],
    labels: Vec<i8>,
}

impl<'a, const C: usize> ExactEngine<'a, C> {
    pub fn new(params: ModelParams, boundaries: [BoundarySpec<'a>; C]) -> Self {
        ExactEngine {
            params,
            boundaries,
            labels: Vec::new(),
        }
    }

    /// Message of a variable labelled `b` with a subtree of depth `2·levels`.
    pub fn variable(&mut self, b: i8, levels: usize, rng: &mut Rng) -> [f64; C] {
        if levels == 0 {
            let mut m = [0.0; C];
            for (c, spec) in self.boundaries.iter().enumerate() {
                m[c] = to_eta(spec.draw(&self.params, b, rng), b);
            }
            return m;
        }
        variable_children(self.params.d, b, &mut self.labels);
        let labels = std::mem::take(&mut self.labels);
        let mut l = [0.0; C];
        for &ba in &labels {
            let m = self.clause(ba, levels, rng);
            let sign = if ba == b { 1.0 } else { -1.0 };
            for c in 0..C {
                l[c] += sign * logit(m[c]);
            }
        }
        self.labels = labels;
        l.map(logistic)
    }

    /// Message of a clause with parent edge `b` whose children carry
    /// subtrees of depth `2·(levels − 1)`.
    pub fn clause(&mut self, b: i8, levels: usize, rng: &mut Rng) -> [f64; C] {
        let mut children = vec![0i8; self.params.k - 1];
        sample_clause_children(&self.params, b, rng, &mut children);
        let mut lp = [0.0; C];
        for &y in &children {
            let m = self.variable(y, levels - 1, rng);
            for c in 0..C {
                lp[c] += ln_or_floor(m[c]);
            }
        }
        clause_eta(&self.params, lp)
    }
}

/// Source of root-neighbourhood messages for the estimators below.
trait Source<const C: usize> {
    /// Variable labelled `b` with a depth-`2ℓ` subtree.
    fn variable(&mut self, b: i8, rng: &mut Rng) -> [f64; C];
    /// Clause with parent edge `b` and `k − 1` depth-`2ℓ` children.
    fn clause(&mut self, b: i8, rng: &mut Rng) -> [f64; C];
}

struct ExactSource<'a, const C: usize> {
    engine: ExactEngine<'a, C>,
    ell: usize,
}

impl<const C: usize> Source<C> for ExactSource<'_, C> {
    fn variable(&mut self, b: i8, rng: &mut Rng) -> [f64; C] {
        self.engine.variable(b, self.ell, rng)
    }
    fn clause(&mut self, b: i8, rng: &mut Rng) -> [f64; C] {
        self.engine.clause(b, self.ell + 1, rng)
    }
}

struct PooledSource<'e, 'a, const C: usize> {
    engine: &'e PooledEngine<'a, C>,
    top: &'e LevelPools<C>,
}

impl<const C: usize> Source<C> for PooledSource<'_, '_, C> {
    fn variable(&mut self, b: i8, rng: &mut Rng) -> [f64; C] {
        let p = &self.top.var[label_index(b)];
        p[rng.gen_range(0..p.len())]
    }
    fn clause(&mut self, b: i8, rng: &mut Rng) -> [f64; C] {
        self.engine.clause_from(&self.top.var, b, rng)
    }
}

fn use_exact(params: &ModelParams, ell: usize, trials: usize, engine: Engine, root: RootKind) -> bool {
    match engine {
        Engine::Exact => true,
        Engine::Pooled => false,
        Engine::Auto => node_count(params, ell, root) * trials as f64 <= EXACT_BUDGET,
    }
}

/// `B^{(ℓ)}` with its three terms.
#[derive(Clone, Debug, Serialize)]
pub struct LevelEstimate {
    pub params: ModelParams,
    pub ell: usize,
    pub trials: usize,
    pub engine: Engine,
    pub boundary: BoundaryKind,
    pub b: Estimate,
    /// Means of `ln z₁`, `ln z₂`, `ln z₃`.
    pub terms: [Estimate; 3],
    pub seed: u64,
}

/// Per-trial samples of `ln z₁`, `ln z₂`, `ln z₃`.
fn sample_terms<S: Source<1>>(src: &mut S, params: &ModelParams, rng: &mut Rng) -> [f64; 3] {
    let half = params.half_d();
    // z₁ on the GW′ root: d/2 clauses labelled +1 and d/2 labelled −1
    let (mut up, mut down) = (0.0, 0.0);
    for j in 0..params.d {
        let b = if j < half { 1 } else { -1 };
        let e = src.clause(b, rng)[0];
        let (same, other) = (e.ln(), (1.0 - e).ln());
        if b == 1 {
            up += same;
            down += other;
        } else {
            up += other;
            down += same;
        }
    }
    let ln_z1 = crate::numerics::log_add_exp(up, down);
    // z₂: labels i.i.d. with P(+1) = q, the all-plus draw kept with probability e^{−β}
    let ln_z2 = loop {
        let labels: Vec<i8> = (0..params.k)
            .map(|_| if rng.gen::<f64>() < params.q { 1 } else { -1 })
            .collect();
        if labels.iter().all(|&b| b == 1) && rng.gen::<f64>() >= (-params.beta).exp() {
            continue;
        }
        let ln_p: f64 = labels.iter().map(|&b| ln_or_floor(src.variable(b, rng)[0])).sum();
        break (-params.c_beta * ln_p.exp()).ln_1p();
    };
    // z₃ on an edge with a uniform label
    let b = if rng.gen::<bool>() { 1 } else { -1 };
    let eta = src.variable(b, rng)[0];
    let eta_hat = src.clause(b, rng)[0];
    let ln_z3 = (eta * eta_hat + (1.0 - eta) * (1.0 - eta_hat)).ln();
    [ln_z1, ln_z2, ln_z3]
}

/// `B^{(ℓ)} = E ln z₁ + (d/k) E ln z₂ − d E ln z₃` over the root
/// neighbourhood ensembles, each tree swept under `boundary`.
pub fn estimate_b_level(
    params: &ModelParams,
    ell: usize,
    trials: usize,
    boundary: BoundarySpec,
    engine: Engine,
    seed: u64,
) -> Result<LevelEstimate> {
    precondition(ell >= 1, || "ℓ must be at least 1".into())?;
    precondition(trials >= 2, || "need at least two trials".into())?;
    let per_trial = params.d as f64 * node_count(params, ell, RootKind::Clause(1)) + 2.0 * node_count(params, ell, RootKind::Gw);
    let exact = match engine {
        Engine::Exact => true,
        Engine::Pooled => false,
        Engine::Auto => per_trial * trials as f64 <= EXACT_BUDGET,
    };
    let chunks = trials.div_ceil(CHUNK);
    let reduce = |src_for: &(dyn Fn(usize) -> [Moments; 3] + Sync)| {
        (0..chunks)
            .into_par_iter()
            .map(src_for)
            .reduce(
                || [Moments::default(), Moments::default(), Moments::default()],
                |a, b| {
                    let [a0, a1, a2] = a;
                    let [b0, b1, b2] = b;
                    [a0.merge(b0), a1.merge(b1), a2.merge(b2)]
                },
            )
    };
    let chunk_len = |c: usize| CHUNK.min(trials - c * CHUNK);
    let acc = if exact {
        reduce(&|c| {
            let mut rng = substream(seed, &[0x6c76_6c, 1, c as u64]);
            let mut src = ExactSource {
                engine: ExactEngine::new(*params, [boundary]),
                ell,
            };
            let mut m = [Moments::default(), Moments::default(), Moments::default()];
            for _ in 0..chunk_len(c) {
                let t = sample_terms(&mut src, params, &mut rng);
                for i in 0..3 {
                    m[i].push(t[i]);
                }
            }
            m
        })
    } else {
        let eng = PooledEngine::new(*params, DEFAULT_POOL.max(trials), [boundary])?;
        let levels = eng.run(ell, seed);
        let top = &levels[ell];
        reduce(&|c| {
            let mut rng = substream(seed, &[0x6c76_6c, 2, c as u64]);
            let mut src = PooledSource { engine: &eng, top };
            let mut m = [Moments::default(), Moments::default(), Moments::default()];
            for _ in 0..chunk_len(c) {
                let t = sample_terms(&mut src, params, &mut rng);
                for i in 0..3 {
                    m[i].push(t[i]);
                }
            }
            m
        })
    };
    let (d, k) = (params.d as f64, params.k as f64);
    let terms = acc.each_ref().map(|m| Estimate::new(m.mean(), m.stderr()));
    let value = terms[0].value + d / k * terms[1].value - d * terms[2].value;
    let se = (terms[0].stderr.powi(2) + (d / k * terms[1].stderr).powi(2) + (d * terms[2].stderr).powi(2)).sqrt();
    Ok(LevelEstimate {
        params: *params,
        ell,
        trials,
        engine: if exact { Engine::Exact } else { Engine::Pooled },
        boundary: boundary.kind(),
        b: Estimate::new(value, se),
        terms,
        seed,
    })
}

/// Settings of [`contraction_experiment`].
#[derive(Clone, Copy, Debug)]
pub struct ContractionConfig<'a> {
    pub ell: usize,
    pub trials: usize,
    pub seed: u64,
    /// Boundary compared against `∂ν^{(0)}`.
    pub boundary: BoundarySpec<'a>,
    pub engine: Engine,
    pub pool: usize,
    pub convention: HConvention,
}

impl<'a> ContractionConfig<'a> {
    pub fn new(params: &ModelParams, ell: usize, trials: usize, seed: u64) -> Self {
        ContractionConfig {
            ell,
            trials,
            seed,
            boundary: BoundarySpec::synthetic(params.k),
            engine: Engine::Auto,
            pool: DEFAULT_POOL,
            convention: HConvention::NuPlus,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub params: ModelParams,
    pub ell: usize,
    pub trials: usize,
    pub engine: Engine,
    pub boundary: BoundaryKind,
    /// `|ν_T^{∂ν}(1) − ν_T^{(2ℓ)}(1)|` per trial.
    pub diffs: Vec<f64>,
    /// `2/ℓ`.
    pub threshold: f64,
    pub exceed_fraction: f64,
    pub mean_diff: f64,
    pub max_diff: f64,
    /// Per-trial trunk and cold data (explicit trees only).
    pub cold: Option<Vec<ColdReport>>,
    pub cold_fraction: Option<f64>,
    pub root_trunk_fraction: Option<f64>,
    pub median_diff_cold: Option<f64>,
    pub median_diff_not_cold: Option<f64>,
    pub seed: u64,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Sweeps `trials` random trees under `cfg.boundary` and under `∂ν^{(0)}` and
/// records how far apart the root messages end up.
pub fn contraction_experiment(params: &ModelParams, cfg: &ContractionConfig) -> Result<ContractionReport> {
    precondition(cfg.trials >= 1, || "need at least one trial".into())?;
    precondition(cfg.ell >= 1, || "ℓ must be at least 1".into())?;
    let exact = use_exact(params, cfg.ell, cfg.trials, cfg.engine, RootKind::Gw);
    let (diffs, cold) = if exact {
        let per: Vec<Result<(f64, ColdReport)>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(cfg.seed, &[0x636f_6e74, t as u64]);
                let tree = sample_tree_with(params, cfg.ell, RootKind::Gw, &mut rng, super::NODE_CAP)?;
                let bc = BoundaryCondition::from_spec(&tree, &cfg.boundary, &mut rng);
                let a = super::bp_sweep(&tree, &bc)?.root();
                let b = super::bp_sweep(&tree, &BoundaryCondition::all_plus(&tree))?.root();
                Ok(((a - b).abs(), cold_report(&tree, &bc, cfg.convention)))
            })
            .collect();
        let per = per.into_iter().collect::<Result<Vec<_>>>()?;
        let (d, c): (Vec<f64>, Vec<ColdReport>) = per.into_iter().unzip();
        (d, Some(c))
    } else {
        let eng = PooledEngine::new(*params, cfg.pool.max(cfg.trials), [cfg.boundary, BoundarySpec::AllPlus])?;
        let levels = eng.run(cfg.ell, cfg.seed);
        let top = &levels[cfg.ell].clause_logit;
        let diffs = par_fill::<1, _>(cfg.trials, cfg.seed, [0x636f_6e74, 1, 0], |rng| {
            let b = if rng.gen::<f64>() < params.q { 1 } else { -1 };
            let m = eng.variable_from(top, b, rng);
            [(m[0] - m[1]).abs()]
        });
        (diffs.into_iter().map(|x| x[0]).collect(), None)
    };
    let threshold = 2.0 / cfg.ell as f64;
    let n = diffs.len() as f64;
    let exceed_fraction = diffs.iter().filter(|&&x| x >= threshold).count() as f64 / n;
    let mean_diff = diffs.iter().sum::<f64>() / n;
    let max_diff = diffs.iter().cloned().fold(0.0, f64::max);
    let (cold_fraction, root_trunk_fraction, mdc, mdn) = match &cold {
        Some(c) => {
            let cf = c.iter().filter(|r| r.cold).count() as f64 / n;
            let rf = c.iter().filter(|r| r.root_in_trunk).count() as f64 / n;
            let split = |want: bool| {
                median(
                    diffs
                        .iter()
                        .zip(c)
                        .filter(|(_, r)| r.cold == want)
                        .map(|(&x, _)| x)
                        .collect(),
                )
            };
            (Some(cf), Some(rf), split(true), split(false))
        }
        None => (None, None, None, None),
    };
    Ok(ContractionReport {
        params: *params,
        ell: cfg.ell,
        trials: cfg.trials,
        engine: if exact { Engine::Exact } else { Engine::Pooled },
        boundary: cfg.boundary.kind(),
        diffs,
        threshold,
        exceed_fraction,
        mean_diff,
        max_diff,
        cold,
        cold_fraction,
        root_trunk_fraction,
        median_diff_cold: mdc,
        median_diff_not_cold: mdn,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::closed_form_f;

    #[test]
    fn identical_boundaries_give_zero_difference() {
        let p = ModelParams::new(4, 6, 2.0).unwrap();
        for engine in [Engine::Exact, Engine::Pooled] {
            let mut cfg = ContractionConfig::new(&p, 2, 50, 1);
            cfg.boundary = BoundarySpec::AllPlus;
            cfg.engine = engine;
            cfg.pool = 2000;
            let r = contraction_experiment(&p, &cfg).unwrap();
            assert!(r.diffs.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn level_estimate_is_ln2_at_tiny_beta() {
        let p = ModelParams::new(3, 4, 1e-9).unwrap();
        let e = estimate_b_level(&p, 2, 200, BoundarySpec::AllPlus, Engine::Auto, 3).unwrap();
        assert_eq!(e.engine, Engine::Exact);
        assert!((e.b.value - std::f64::consts::LN_2).abs() < 1e-6, "{:?}", e.b);
    }

    #[test]
    fn level_estimate_matches_closed_form_in_liquid_regime() {
        let p = ModelParams::new(4, 6, 0.5).unwrap();
        let f = closed_form_f(&p);
        for engine in [Engine::Exact, Engine::Pooled] {
            let e = estimate_b_level(&p, 2, 20_000, BoundarySpec::AllPlus, engine, 5).unwrap();
            assert!(e.b.covers(f, 3.0), "{engine:?} {:?} vs {f}", e.b);
        }
    }
}
