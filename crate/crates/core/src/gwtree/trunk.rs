//! The trunk of a tree under a boundary, and cold pairs and paths.
//!
//! For a clause `a`, `∂₁a` is the set of neighbours whose edge label is `−1`
//! (literals true under the all-ones assignment) and `∂₋₁a` those with label
//! `+1`. For a variable `x`, `∂₁x` and `∂₋₁x` split its clauses by the same
//! edge label. Neighbourhoods include the parent.
//!
//! The trunk is the largest set `W` of variables such that every member is
//! either a boundary leaf with a strong message (TR0) or satisfies
//!
//! * TR1: at least `⌊0.9k⌋` child clauses `a` with `∂₁a = {x}`;
//! * TR2: at most `⌈0.1k⌉` clauses `a ∋ x` with `|∂₋₁a| = k`;
//! * TR3: for `1 ≤ l ≤ k`, at most `k^{l+3}/l!` clauses in `∂₋₁x` with `|∂₁a| = l`;
//! * TR4: at most `k^{3/4}` clauses in `∂₁x` with `∂₁a = {x}` and `∂a ⊄ W`;
//! * TR5: at most `k^{3/4}` clauses in `∂₋₁x` with `|∂₋₁a| < k` and
//!   `|∂₁a \ W| ≥ |∂₁a|/4`.
//!
//! TR0–TR3 do not depend on `W`, so the trunk is obtained by peeling TR4/TR5
//! violators from the set passing TR0 or TR1–TR3.

use serde::Serialize;

use super::{BoundaryCondition, DecoratedTree, HConvention, NodeKind, NO_PARENT};
use crate::numerics::ln_factorial;
use crate::peel::{peel, PeelOrder};

struct Nbhd<'a> {
    tree: &'a DecoratedTree,
}

impl Nbhd<'_> {
    /// Neighbours of clause `a` with their edge labels.
    fn clause(&self, a: usize, f: &mut dyn FnMut(usize, i8)) {
        let n = &self.tree.nodes[a];
        if n.parent != NO_PARENT {
            f(n.parent as usize, n.label);
        }
        for c in n.children() {
            f(c, self.tree.nodes[c].label);
        }
    }

    /// Clauses of variable `x` with their edge labels.
    fn variable(&self, x: usize, f: &mut dyn FnMut(usize, i8)) {
        let n = &self.tree.nodes[x];
        if n.parent != NO_PARENT {
            f(n.parent as usize, n.label);
        }
        for c in n.children() {
            f(c, self.tree.nodes[c].label);
        }
    }

    /// `(|∂₁a|, |∂₋₁a|)`.
    fn counts(&self, a: usize) -> (usize, usize) {
        let (mut t, mut f) = (0, 0);
        self.clause(a, &mut |_, b| if b == -1 { t += 1 } else { f += 1 });
        (t, f)
    }
}

/// Variables passing TR0, or TR1–TR3 for interior nodes.
fn static_conditions(
    tree: &DecoratedTree,
    boundary: &BoundaryCondition,
    conv: HConvention,
) -> Vec<bool> {
    let nb = Nbhd { tree };
    let k = tree.params.k;
    let kf = k as f64;
    let thr = tree.params.strong_threshold();
    let tr1 = (0.9 * kf).floor() as usize;
    let tr2 = (0.1 * kf).ceil() as usize;
    let first_leaf = tree.leaves().next().unwrap_or(tree.nodes.len());
    let mut ok = vec![false; tree.nodes.len()];
    for x in tree.variables() {
        let node = &tree.nodes[x];
        if node.depth as usize == tree.depth {
            let v = boundary.nu_plus[x - first_leaf];
            ok[x] = conv.strength(v, node.label) >= thr;
            continue;
        }
        let unique_true = node
            .children()
            .filter(|&a| {
                let (t, _) = nb.counts(a);
                tree.nodes[a].label == -1 && t == 1
            })
            .count();
        if unique_true < tr1 {
            continue;
        }
        let mut all_false = 0;
        let mut by_l = vec![0usize; k + 1];
        nb.variable(x, &mut |a, b| {
            let (t, f) = nb.counts(a);
            if f == k {
                all_false += 1;
            }
            if b == 1 && (1..=k).contains(&t) {
                by_l[t] += 1;
            }
        });
        if all_false > tr2 {
            continue;
        }
        let tr3 = (1..=k).all(|l| {
            let bound = ((l as f64 + 3.0) * kf.ln() - ln_factorial(l as u64)).exp();
            by_l[l] as f64 <= bound
        });
        ok[x] = tr3;
    }
    ok
}

fn violates_dynamic(tree: &DecoratedTree, x: usize, w: &[bool]) -> bool {
    let node = &tree.nodes[x];
    if node.depth as usize == tree.depth {
        return false;
    }
    let nb = Nbhd { tree };
    let k = tree.params.k;
    let limit = (k as f64).powf(0.75);
    let (mut tr4, mut tr5) = (0usize, 0usize);
    nb.variable(x, &mut |a, b| {
        let (t, f) = nb.counts(a);
        if b == -1 && t == 1 {
            let mut inside = true;
            nb.clause(a, &mut |y, _| inside &= w[y]);
            if !inside {
                tr4 += 1;
            }
        }
        if b == 1 && f < k && t > 0 {
            let mut outside = 0;
            nb.clause(a, &mut |y, by| {
                if by == -1 && !w[y] {
                    outside += 1
                }
            });
            if outside as f64 >= t as f64 / 4.0 {
                tr5 += 1;
            }
        }
    });
    tr4 as f64 > limit || tr5 as f64 > limit
}

/// Membership of every node in the trunk (clauses are never members).
pub fn trunk(tree: &DecoratedTree, boundary: &BoundaryCondition, conv: HConvention) -> Vec<bool> {
    trunk_with_order(tree, boundary, conv, PeelOrder::Natural)
}

pub fn trunk_with_order(
    tree: &DecoratedTree,
    boundary: &BoundaryCondition,
    conv: HConvention,
    order: PeelOrder,
) -> Vec<bool> {
    let start = static_conditions(tree, boundary, conv);
    let nb = Nbhd { tree };
    peel(
        start,
        |x, w| violates_dynamic(tree, x, w),
        |x, push| {
            nb.variable(x, &mut |a, _| nb.clause(a, &mut |y, _| push(y)));
        },
        order,
    )
}

/// Cold bookkeeping for one tree and boundary.
#[derive(Clone, Debug, Serialize)]
pub struct ColdReport {
    pub root_in_trunk: bool,
    /// Trunk members over all variables.
    pub trunk_fraction: f64,
    /// Fewest cold pairs on any leaf-to-root path.
    pub min_cold_pairs: usize,
    /// `⌊0.4ℓ⌋`.
    pub required: usize,
    pub cold_path_fraction: f64,
    pub cold: bool,
}

/// Cold clauses: those with a member of `∂₁a` in the trunk.
pub fn cold_clauses(tree: &DecoratedTree, w: &[bool]) -> Vec<bool> {
    let nb = Nbhd { tree };
    let mut out = vec![false; tree.nodes.len()];
    for (a, n) in tree.nodes.iter().enumerate() {
        if n.kind == NodeKind::Clause {
            let mut hit = false;
            nb.clause(a, &mut |y, b| hit |= b == -1 && w[y]);
            out[a] = hit;
        }
    }
    out
}

/// Trunk, cold pairs and cold paths for a variable-rooted tree.
pub fn cold_report(tree: &DecoratedTree, boundary: &BoundaryCondition, conv: HConvention) -> ColdReport {
    let w = trunk(tree, boundary, conv);
    let cc = cold_clauses(tree, &w);
    let ell = tree.depth / 2;
    let required = (0.4 * ell as f64).floor() as usize;
    // cold pairs (x, parent(x)) counted from the root downwards
    let mut pairs = vec![0usize; tree.nodes.len()];
    for (i, n) in tree.nodes.iter().enumerate() {
        if n.kind != NodeKind::Variable || n.parent == NO_PARENT {
            continue;
        }
        let a = n.parent as usize;
        let above = tree.nodes[a].parent;
        let base = if above == NO_PARENT { 0 } else { pairs[above as usize] };
        pairs[i] = base + usize::from(w[i] || cc[a]);
    }
    let leaves: Vec<usize> = tree.leaves().collect();
    let min_cold_pairs = leaves.iter().map(|&x| pairs[x]).min().unwrap_or(0);
    let cold_paths = leaves.iter().filter(|&&x| pairs[x] >= required).count();
    let vars = tree.variables().count();
    ColdReport {
        root_in_trunk: w[0],
        trunk_fraction: w.iter().filter(|&&b| b).count() as f64 / vars as f64,
        min_cold_pairs,
        required,
        cold_path_fraction: cold_paths as f64 / leaves.len().max(1) as f64,
        cold: min_cold_pairs >= required,
    }
}
