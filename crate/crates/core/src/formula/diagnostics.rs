//! The λ-core and maximal λ-sticky subsets.
//!
//! For a clause `a`, `∂₁a` holds its positive slots and `∂₋₁a` its negative
//! ones; for a variable `x`, `∂₁x` and `∂₋₁x` split its occurrences the same
//! way. Counts are taken over slots.
//!
//! The λ-core is the largest `W` whose members all satisfy
//!
//! * CR1: at least `k(1 − 1/(100λ))` clauses in `∂₁x` with `∂₁a = {x}`;
//! * CR2: at most `k e^{−β}(1 + λ/100)` clauses `a ∋ x` with `|∂₋₁a| = k`;
//! * CR3: for `1 ≤ l ≤ k`, at most `λ k^{l+3}/l!` clauses in `∂₋₁x` with `|∂₁a| = l`;
//! * CR4: at most `λ k^{3/4}` clauses in `∂₁x` with `∂₁a = {x}` and `∂a ⊄ W`;
//! * CR5: at most `λ k^{3/4}` clauses in `∂₋₁x` with `|∂₋₁a| < k` and
//!   `|∂₁a \ W| ≥ |∂₁a|/4`.
//!
//! It is computed by whitening: `U₀` holds the variables failing CR1–CR3 and
//! variables violating CR4 or CR5 relative to `W = V \ U` are added to `U`
//! until none is left. The core is `V \ U_∞`.

use serde::Serialize;

use super::Formula;
use crate::numerics::ln_factorial;
use crate::peel::{peel, PeelOrder};

struct ClauseStats {
    /// `|∂₁a|`
    pos: usize,
    /// `|∂₋₁a|`
    neg: usize,
    /// The variable of every positive slot when they all agree.
    sole_pos: Option<u32>,
}

fn clause_stats(f: &Formula) -> Vec<ClauseStats> {
    (0..f.m())
        .map(|a| {
            let c = f.clause(a);
            let pos = c.iter().filter(|l| l.positive).count();
            let mut vars = c.iter().filter(|l| l.positive).map(|l| l.var);
            let first = vars.next();
            let sole_pos = first.filter(|&v| vars.all(|w| w == v));
            ClauseStats {
                pos,
                neg: c.len() - pos,
                sole_pos,
            }
        })
        .collect()
}

fn neighbours(f: &Formula, x: usize, push: &mut dyn FnMut(usize)) {
    for &s in f.occurrences(x) {
        for l in f.clause(f.clause_of(s as usize)) {
            push(l.var as usize);
        }
    }
}

/// Result of [`core`].
#[derive(Clone, Debug, Serialize)]
pub struct CoreResult {
    pub lambda: f64,
    pub beta: f64,
    pub members: Vec<bool>,
    pub size: usize,
    /// `|U₀|`: variables failing CR1–CR3.
    pub initial_white: usize,
    /// Variables added by the whitening rules.
    pub whitened: usize,
}

/// Variables satisfying CR1–CR3.
fn static_core(f: &Formula, st: &[ClauseStats], lambda: f64, beta: f64) -> Vec<bool> {
    let k = f.k;
    let kf = k as f64;
    let cr1 = kf * (1.0 - 1.0 / (100.0 * lambda));
    let cr2 = kf * (-beta).exp() * (1.0 + lambda / 100.0);
    (0..f.n)
        .map(|x| {
            let mut unique = 0usize;
            let mut all_neg = 0usize;
            let mut by_l = vec![0usize; k + 1];
            for &s in f.occurrences(x) {
                let a = f.clause_of(s as usize);
                let lit = f.slots[s as usize];
                let c = &st[a];
                if lit.positive && c.sole_pos == Some(x as u32) {
                    unique += 1;
                }
                if c.neg == k {
                    all_neg += 1;
                }
                if !lit.positive && (1..=k).contains(&c.pos) {
                    by_l[c.pos] += 1;
                }
            }
            unique as f64 >= cr1
                && all_neg as f64 <= cr2
                && (1..=k).all(|l| {
                    let bound = lambda * ((l as f64 + 3.0) * kf.ln() - ln_factorial(l as u64)).exp();
                    by_l[l] as f64 <= bound
                })
        })
        .collect()
}

/// The λ-core at inverse temperature `β` (which enters CR2).
pub fn core(f: &Formula, lambda: f64, beta: f64) -> CoreResult {
    core_with_order(f, lambda, beta, PeelOrder::Natural)
}

pub fn core_with_order(f: &Formula, lambda: f64, beta: f64, order: PeelOrder) -> CoreResult {
    let st = clause_stats(f);
    let start = static_core(f, &st, lambda, beta);
    let initial = start.iter().filter(|&&b| b).count();
    let limit = lambda * (f.k as f64).powf(0.75);
    let violates = |x: usize, w: &[bool]| {
        let (mut cr4, mut cr5) = (0usize, 0usize);
        for &s in f.occurrences(x) {
            let a = f.clause_of(s as usize);
            let lit = f.slots[s as usize];
            let c = &st[a];
            let clause = f.clause(a);
            if lit.positive && c.sole_pos == Some(x as u32) && clause.iter().any(|l| !w[l.var as usize]) {
                cr4 += 1;
            }
            if !lit.positive && c.neg < f.k {
                let outside = clause.iter().filter(|l| l.positive && !w[l.var as usize]).count();
                if outside as f64 >= c.pos as f64 / 4.0 {
                    cr5 += 1;
                }
            }
        }
        cr4 as f64 > limit || cr5 as f64 > limit
    };
    let members = peel(start, violates, |x, push| neighbours(f, x, push), order);
    let size = members.iter().filter(|&&b| b).count();
    CoreResult {
        lambda,
        beta,
        members,
        size,
        initial_white: f.n - initial,
        whitened: initial - size,
    }
}

/// Largest λ-sticky subset of `candidates`: every member has at least
/// `λ k^{3/4}` clauses of one of the kinds
///
/// * ST1: `a ∈ ∂₁x` with `∂₁a = {x}` and `∂₋₁a ∩ S ≠ ∅`;
/// * ST2: `a ∈ ∂₋₁x` with `|∂₋₁a| < k` and `|∂₁a ∩ S| ≥ |∂₁a|/4`.
pub fn max_sticky(f: &Formula, lambda: f64, candidates: &[bool]) -> Vec<bool> {
    max_sticky_with_order(f, lambda, candidates, PeelOrder::Natural)
}

pub fn max_sticky_with_order(f: &Formula, lambda: f64, candidates: &[bool], order: PeelOrder) -> Vec<bool> {
    assert_eq!(candidates.len(), f.n, "candidate mask length must equal n");
    let st = clause_stats(f);
    let need = lambda * (f.k as f64).powf(0.75);
    let violates = |x: usize, s_set: &[bool]| {
        let (mut st1, mut st2) = (0usize, 0usize);
        for &s in f.occurrences(x) {
            let a = f.clause_of(s as usize);
            let lit = f.slots[s as usize];
            let c = &st[a];
            let clause = f.clause(a);
            if lit.positive && c.sole_pos == Some(x as u32) && clause.iter().any(|l| !l.positive && s_set[l.var as usize]) {
                st1 += 1;
            }
            if !lit.positive && c.neg < f.k {
                let inside = clause.iter().filter(|l| l.positive && s_set[l.var as usize]).count();
                if inside as f64 >= c.pos as f64 / 4.0 {
                    st2 += 1;
                }
            }
        }
        (st1 as f64) < need && (st2 as f64) < need
    };
    peel(candidates.to_vec(), violates, |x, push| neighbours(f, x, push), order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::generate;

    #[test]
    fn all_positive_formula_is_core() {
        // every clause has one positive literal and every variable is the
        // sole positive literal of three clauses
        let mut clauses = Vec::new();
        for x in 1..=4i64 {
            let others: Vec<i64> = (1..=4).filter(|&y| y != x).collect();
            for skip in 0..3 {
                let neg: Vec<i64> = others.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &y)| -y).collect();
                clauses.push(vec![x, neg[0], neg[1]]);
            }
        }
        let f = Formula::from_clauses(4, 3, &clauses).unwrap();
        let r = core(&f, 0.5, 5.0);
        assert_eq!(r.size, 4);
    }

    #[test]
    fn empty_candidates() {
        let f = generate(12, 3, 6, 1).unwrap();
        assert!(max_sticky(&f, 0.5, &[false; 12]).iter().all(|&b| !b));
    }

    #[test]
    fn sticky_is_idempotent() {
        let f = generate(30, 3, 12, 4).unwrap();
        let s = max_sticky(&f, 0.5, &vec![true; 30]);
        assert_eq!(max_sticky(&f, 0.5, &s), s);
    }
}
