//! Leaves-to-root belief propagation on a decorated tree.
//!
//! Variable messages are stored as log-odds `λ = ln ν(+1)/ν(−1)`, clause
//! messages as `λ̂ = ln ν̂(+1)/ν̂(−1)`. A clause `a` with parent-edge label
//! `b_a` and children `y` (edge labels `b_y`) is violated exactly when every
//! neighbour takes the value of its edge label, so
//!
//! ```text
//! λ̂_a = b_a · ln(1 − c_β ∏_y ν_y(b_y)),    λ_x = Σ_{a child of x} λ̂_a.
//! ```
//!
//! Boundary leaves may carry `ν(1) ∈ {0, 1}`, i.e. `λ = ±∞`.

use rand::Rng as _;
use serde::Serialize;

use super::{DecoratedTree, NodeKind};
use crate::error::{precondition, Result};
use crate::model::ModelParams;
use crate::numerics::logistic;
use crate::population::PopulationQuad;
use crate::rng::{substream, Rng};

/// How condition H and TR0 read a boundary message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HConvention {
    /// Strong means `ν(1) ≥ 1 − e^{−kβ/2}`.
    #[default]
    NuPlus,
    /// Strong means `ν(b) ≥ 1 − e^{−kβ/2}` for the leaf's own label `b`.
    OwnLabel,
}

impl HConvention {
    /// The value compared against the strong threshold.
    pub fn strength(self, nu_plus: f64, label: i8) -> f64 {
        match self {
            HConvention::NuPlus => nu_plus,
            HConvention::OwnLabel => {
                if label == 1 {
                    nu_plus
                } else {
                    1.0 - nu_plus
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// `∂ν^{(0)}`: every leaf has `ν(1) = 1`.
    AllPlus,
    /// Leaves drawn from a population quad.
    Population,
    /// Leaves that satisfy H by construction.
    Synthetic,
    Custom,
}

/// A law for boundary messages, sampled leaf by leaf given the leaf label.
#[derive(Clone, Copy, Debug)]
pub enum BoundarySpec<'a> {
    AllPlus,
    /// A leaf labelled `+1` draws `η` from `π₋`, one labelled `−1` from
    /// `π₊`; the message is `ν(b) = η`.
    Population(&'a PopulationQuad),
    /// With probability `bad_prob` the leaf is uninformative (`ν(1) = 1/2`),
    /// otherwise `ν(1)` is uniform on `[1 − e^{−kβ/2}, 1]`.
    Synthetic { bad_prob: f64 },
}

impl BoundarySpec<'_> {
    /// H-compliant synthetic boundary whose bad-leaf rate is half of `2^{−0.9k}`.
    pub fn synthetic(k: usize) -> Self {
        BoundarySpec::Synthetic {
            bad_prob: 0.5 * 2f64.powf(-0.9 * k as f64),
        }
    }

    pub fn kind(&self) -> BoundaryKind {
        match self {
            BoundarySpec::AllPlus => BoundaryKind::AllPlus,
            BoundarySpec::Population(_) => BoundaryKind::Population,
            BoundarySpec::Synthetic { .. } => BoundaryKind::Synthetic,
        }
    }

    /// `ν(1)` for a leaf with the given label.
    pub fn draw(&self, params: &ModelParams, label: i8, rng: &mut Rng) -> f64 {
        match *self {
            BoundarySpec::AllPlus => 1.0,
            BoundarySpec::Population(quad) => {
                let pop = if label == 1 { &quad.p_minus } else { &quad.p_plus };
                let eta = pop.samples[rng.gen_range(0..pop.len())];
                if label == 1 {
                    eta
                } else {
                    1.0 - eta
                }
            }
            BoundarySpec::Synthetic { bad_prob } => {
                if rng.gen::<f64>() < bad_prob {
                    0.5
                } else {
                    let w = (-(params.k as f64) * params.beta / 2.0).exp();
                    1.0 - w * rng.gen::<f64>()
                }
            }
        }
    }
}

/// Boundary messages `ν_x(1)` for the leaves of a tree, in leaf order.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCondition {
    pub nu_plus: Vec<f64>,
    pub kind: BoundaryKind,
}

impl BoundaryCondition {
    pub fn all_plus(tree: &DecoratedTree) -> Self {
        BoundaryCondition {
            nu_plus: vec![1.0; tree.leaves().count()],
            kind: BoundaryKind::AllPlus,
        }
    }

    pub fn custom(nu_plus: Vec<f64>) -> Result<Self> {
        for &v in &nu_plus {
            precondition((0.0..=1.0).contains(&v), || format!("boundary value {v} outside [0, 1]"))?;
        }
        Ok(BoundaryCondition {
            nu_plus,
            kind: BoundaryKind::Custom,
        })
    }

    pub fn from_spec(tree: &DecoratedTree, spec: &BoundarySpec, rng: &mut Rng) -> Self {
        let nu_plus = tree
            .leaves()
            .map(|i| spec.draw(&tree.params, tree.nodes[i].label, rng))
            .collect();
        BoundaryCondition {
            nu_plus,
            kind: spec.kind(),
        }
    }

    /// Fraction of leaves whose strength is at most `1 − e^{−kβ/2}`.
    pub fn weak_fraction(&self, tree: &DecoratedTree, conv: HConvention) -> f64 {
        let thr = tree.params.strong_threshold();
        let weak = tree
            .leaves()
            .zip(&self.nu_plus)
            .filter(|(i, &v)| conv.strength(v, tree.nodes[*i].label) <= thr)
            .count();
        weak as f64 / self.nu_plus.len().max(1) as f64
    }
}

/// Draws a boundary for `tree` from the leaf laws of a converged quad.
pub fn sample_boundary(tree: &DecoratedTree, quad: &PopulationQuad, seed: u64) -> BoundaryCondition {
    let mut rng = substream(seed, &[0x626e_6479]);
    BoundaryCondition::from_spec(tree, &BoundarySpec::Population(quad), &mut rng)
}

/// Empirical check of condition H on a set of boundary strengths.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HCheck {
    pub leaves: usize,
    pub weak: usize,
    pub weak_fraction: f64,
    pub bound: f64,
    pub slack: f64,
    pub compliant: bool,
}

/// Compares the weak-leaf fraction with `2^{−0.9k}` plus three binomial
/// standard errors at the bound.
pub fn h_check(params: &ModelParams, strengths: impl IntoIterator<Item = f64>) -> HCheck {
    let thr = params.strong_threshold();
    let (mut n, mut weak) = (0usize, 0usize);
    for s in strengths {
        n += 1;
        if s <= thr {
            weak += 1;
        }
    }
    let bound = 2f64.powf(-0.9 * params.k as f64);
    let slack = 3.0 * (bound * (1.0 - bound) / n.max(1) as f64).sqrt();
    let weak_fraction = weak as f64 / n.max(1) as f64;
    HCheck {
        leaves: n,
        weak,
        weak_fraction,
        bound,
        slack,
        compliant: weak_fraction <= bound + slack,
    }
}

/// Upward messages of every node, as log-odds of `+1` against `−1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageSet {
    pub log_odds: Vec<f64>,
}

impl MessageSet {
    /// `ν(+1)` (or `ν̂(+1)`) of node `i`.
    pub fn nu_plus(&self, i: usize) -> f64 {
        logistic(self.log_odds[i])
    }

    pub fn root(&self) -> f64 {
        self.nu_plus(0)
    }
}

/// `ln ν(s)` from the log-odds `λ`, finite-safe at `λ = ±∞`.
fn ln_nu(lambda: f64, s: i8) -> f64 {
    let x = s as f64 * lambda;
    // ln logistic(x) = −softplus(−x)
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `b · ln(1 − c_β e^{ln P})`.
pub fn clause_log_odds(params: &ModelParams, label: i8, ln_prod: f64) -> f64 {
    label as f64 * (-params.c_beta * ln_prod.exp()).ln_1p()
}

/// Single leaves-to-root pass.
pub fn bp_sweep(tree: &DecoratedTree, boundary: &BoundaryCondition) -> Result<MessageSet> {
    let leaves: Vec<usize> = tree.leaves().collect();
    precondition(leaves.len() == boundary.nu_plus.len(), || {
        format!(
            "boundary has {} values for {} leaves",
            boundary.nu_plus.len(),
            leaves.len()
        )
    })?;
    let mut lo = vec![0.0; tree.nodes.len()];
    for (&i, &v) in leaves.iter().zip(&boundary.nu_plus) {
        lo[i] = (v / (1.0 - v)).ln();
    }
    for i in (0..tree.nodes.len()).rev() {
        let node = &tree.nodes[i];
        if node.is_leaf() {
            if node.kind == NodeKind::Clause {
                // a childless clause sends the message of an empty product
                lo[i] = clause_log_odds(&tree.params, node.label, 0.0);
            }
            continue;
        }
        match node.kind {
            NodeKind::Variable => {
                lo[i] = node.children().map(|c| lo[c]).sum();
            }
            NodeKind::Clause => {
                let ln_p: f64 = node
                    .children()
                    .map(|c| ln_nu(lo[c], tree.nodes[c].label))
                    .sum();
                lo[i] = clause_log_odds(&tree.params, node.label, ln_p);
            }
        }
    }
    Ok(MessageSet { log_odds: lo })
}

#[cfg(test)]
mod tests {
    use super::super::{sample_tree, RootKind};
    use super::*;

    #[test]
    fn tiny_beta_gives_half() {
        let p = ModelParams::new(3, 4, 1e-12).unwrap();
        let t = sample_tree(&p, 2, RootKind::Gw, 3).unwrap();
        let m = bp_sweep(&t, &BoundaryCondition::all_plus(&t)).unwrap();
        assert!((m.root() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn clause_ratio_bounds() {
        let p = ModelParams::new(4, 6, 1.5).unwrap();
        for seed in 0..20 {
            let t = sample_tree(&p, 2, RootKind::Gw, seed).unwrap();
            let mut rng = substream(seed, &[1]);
            let nu = (0..t.leaves().count()).map(|_| rng.gen::<f64>()).collect();
            let m = bp_sweep(&t, &BoundaryCondition::custom(nu).unwrap()).unwrap();
            for (i, n) in t.nodes.iter().enumerate() {
                if n.kind == NodeKind::Clause {
                    assert!(m.log_odds[i].abs() <= p.beta + 1e-12);
                }
            }
        }
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let p = ModelParams::new(3, 4, 1.0).unwrap();
        let t = sample_tree(&p, 1, RootKind::Gw, 3).unwrap();
        assert!(bp_sweep(&t, &BoundaryCondition::custom(vec![0.5]).unwrap()).is_err());
    }

    #[test]
    fn synthetic_boundary_is_h_compliant() {
        let p = ModelParams::new(8, 24, 6.0).unwrap();
        let spec = BoundarySpec::synthetic(8);
        let mut rng = substream(4, &[]);
        let check = h_check(&p, (0..100_000).map(|_| spec.draw(&p, 1, &mut rng)));
        assert!(check.compliant, "{check:?}");
    }
}
