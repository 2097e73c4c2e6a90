//! Finite k-SAT formulas: the regular configuration model, exact
//! enumeration, the annealed average, loopy BP with the Bethe functional,
//! and the core and sticky-set diagnostics.
//!
//! A literal is positive when its clone index is below `d/2`. Clone indices
//! are canonical: the positive occurrences of a variable are numbered
//! `0..d/2` and the negative ones `d/2..d` in order of appearance, so they
//! are implied by the clause table and never stored.
//!
//! Edge labels follow the tree module: a slot has `b = +1` when its literal
//! is false under the all-ones assignment (a negative literal) and `b = −1`
//! otherwise.

mod bp;
mod diagnostics;
mod exact;

pub use bp::*;
pub use diagnostics::*;
pub use exact::*;

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::error::{precondition, Error, Result};
use crate::model::clause_count;
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Literal {
    pub var: u32,
    pub positive: bool,
}

impl Literal {
    /// `b` of the slot: `+1` for a negative literal.
    pub fn label(&self) -> i8 {
        if self.positive {
            -1
        } else {
            1
        }
    }

    /// Whether the literal is true when its variable takes `value`.
    pub fn satisfied_by(&self, value: bool) -> bool {
        value == self.positive
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Formula {
    pub n: usize,
    pub k: usize,
    /// Regular degree, or `0` for formulas built from explicit clauses.
    pub d: usize,
    pub seed: u64,
    /// `m · k` slots, clause `a` occupying `a·k .. (a+1)·k`.
    pub slots: Vec<Literal>,
    occurrences: Vec<Vec<u32>>,
}

impl Formula {
    fn build(n: usize, k: usize, d: usize, seed: u64, slots: Vec<Literal>) -> Self {
        let mut occurrences = vec![Vec::new(); n];
        for (s, lit) in slots.iter().enumerate() {
            occurrences[lit.var as usize].push(s as u32);
        }
        Formula {
            n,
            k,
            d,
            seed,
            slots,
            occurrences,
        }
    }

    /// Formula from explicit clauses of signed 1-based variable indices.
    pub fn from_clauses(n: usize, k: usize, clauses: &[Vec<i64>]) -> Result<Self> {
        precondition(k >= 1, || "k must be positive".into())?;
        let mut slots = Vec::with_capacity(clauses.len() * k);
        for (a, c) in clauses.iter().enumerate() {
            precondition(c.len() == k, || format!("clause {a} has {} literals, expected {k}", c.len()))?;
            for &l in c {
                let v = l.unsigned_abs() as usize;
                precondition(l != 0 && v <= n, || format!("literal {l} out of range for n = {n}"))?;
                slots.push(Literal {
                    var: (v - 1) as u32,
                    positive: l > 0,
                });
            }
        }
        Ok(Formula::build(n, k, 0, 0, slots))
    }

    pub fn m(&self) -> usize {
        self.slots.len() / self.k
    }

    pub fn clause(&self, a: usize) -> &[Literal] {
        &self.slots[a * self.k..(a + 1) * self.k]
    }

    /// Slot indices in which variable `x` occurs.
    pub fn occurrences(&self, x: usize) -> &[u32] {
        &self.occurrences[x]
    }

    pub fn clause_of(&self, slot: usize) -> usize {
        slot / self.k
    }

    /// Canonical clone index of a slot.
    pub fn clone_index(&self, slot: usize) -> usize {
        let lit = self.slots[slot];
        let occ = &self.occurrences[lit.var as usize];
        let rank = occ
            .iter()
            .take_while(|&&s| s as usize != slot)
            .filter(|&&s| self.slots[s as usize].positive == lit.positive)
            .count();
        if lit.positive {
            rank
        } else {
            self.d / 2 + rank
        }
    }

    /// `(positive, negative)` occurrence counts of every variable.
    pub fn degree_audit(&self) -> Vec<(usize, usize)> {
        self.occurrences
            .iter()
            .map(|occ| {
                let p = occ.iter().filter(|&&s| self.slots[s as usize].positive).count();
                (p, occ.len() - p)
            })
            .collect()
    }

    /// Number of clauses in which some variable occurs more than once.
    pub fn repeated_variable_clauses(&self) -> usize {
        (0..self.m())
            .filter(|&a| {
                let c = self.clause(a);
                (0..c.len()).any(|i| (i + 1..c.len()).any(|j| c[i].var == c[j].var))
            })
            .count()
    }

    /// Whether the factor graph (with one edge per slot) is a forest.
    pub fn is_acyclic(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n + self.m()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (s, lit) in self.slots.iter().enumerate() {
            let a = find(&mut parent, self.n + self.clause_of(s));
            let x = find(&mut parent, lit.var as usize);
            if a == x {
                return false;
            }
            parent[a] = x;
        }
        true
    }

    /// Number of violated clauses under `sigma` (`true` is `+1`).
    pub fn energy(&self, sigma: &[bool]) -> usize {
        assert_eq!(sigma.len(), self.n, "assignment length must equal n");
        (0..self.m())
            .filter(|&a| self.clause(a).iter().all(|l| !l.satisfied_by(sigma[l.var as usize])))
            .count()
    }

    /// Clauses consisting of negative literals only.
    pub fn energy_all_ones(&self) -> usize {
        (0..self.m())
            .filter(|&a| self.clause(a).iter().all(|l| !l.positive))
            .count()
    }

    /// Text form: a `p rksat n m k d seed` header and one clause per line of
    /// signed 1-based indices terminated by `0`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "p rksat {} {} {} {} {}", self.n, self.m(), self.k, self.d, self.seed);
        for a in 0..self.m() {
            for l in self.clause(a) {
                let v = l.var as i64 + 1;
                let _ = write!(s, "{} ", if l.positive { v } else { -v });
            }
            s.push_str("0\n");
        }
        s
    }

    /// Parses [`Formula::to_text`] output. Lines starting with `c` are comments.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut header: Option<(usize, usize, usize, usize, u64)> = None;
        let mut clauses: Vec<Vec<i64>> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            if t.is_empty() || t.starts_with('c') {
                continue;
            }
            if let Some(rest) = t.strip_prefix("p ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 6 || f[0] != "rksat" {
                    return Err(err("expected `p rksat n m k d seed`".into()));
                }
                let num = |j: usize| f[j].parse::<u64>().map_err(|e| err(format!("{}: {e}", f[j])));
                header = Some((
                    num(1)? as usize,
                    num(2)? as usize,
                    num(3)? as usize,
                    num(4)? as usize,
                    num(5)?,
                ));
                continue;
            }
            if header.is_none() {
                return Err(err("clause before header".into()));
            }
            let mut lits = Vec::new();
            for tok in t.split_whitespace() {
                let v: i64 = tok.parse().map_err(|e| err(format!("{tok}: {e}")))?;
                if v == 0 {
                    break;
                }
                lits.push(v);
            }
            clauses.push(lits);
        }
        let (n, m, k, d, seed) = header.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        if clauses.len() != m {
            return Err(Error::Parse {
                line: 0,
                msg: format!("header declares {m} clauses, found {}", clauses.len()),
            });
        }
        let mut f = Formula::from_clauses(n, k, &clauses)?;
        f.d = d;
        f.seed = seed;
        Ok(f)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Formula::read(s.as_bytes())
    }
}

/// Uniform configuration-model formula with `m = dn/k` clauses; repeated
/// variables inside a clause are kept.
pub fn generate(n: usize, k: usize, d: usize, seed: u64) -> Result<Formula> {
    precondition(k >= 2, || "k must be at least 2".into())?;
    precondition(n >= 1, || "n must be positive".into())?;
    precondition(d >= 2 && d % 2 == 0, || format!("d must be even and positive (got {d})"))?;
    clause_count(n, k, d)?;
    let mut clones: Vec<Literal> = (0..n as u32)
        .flat_map(|v| {
            (0..d).map(move |c| Literal {
                var: v,
                positive: c < d / 2,
            })
        })
        .collect();
    let mut rng = substream(seed, &[0x666f_726d]);
    clones.shuffle(&mut rng);
    Ok(Formula::build(n, k, d, seed, clones))
}

/// Random tree-shaped formula: every new clause shares exactly one variable
/// with the previous ones. Has `1 + m(k−1)` variables.
pub fn random_acyclic(m: usize, k: usize, seed: u64) -> Result<Formula> {
    precondition(k >= 2, || "k must be at least 2".into())?;
    let mut rng = substream(seed, &[0x6163_7963]);
    let mut n = 1usize;
    let mut clauses = Vec::with_capacity(m);
    for _ in 0..m {
        let anchor = rng.gen_range(0..n);
        let mut vars = vec![anchor];
        for _ in 1..k {
            vars.push(n);
            n += 1;
        }
        vars.shuffle(&mut rng);
        clauses.push(
            vars.into_iter()
                .map(|v| {
                    let l = v as i64 + 1;
                    if rng.gen::<bool>() {
                        l
                    } else {
                        -l
                    }
                })
                .collect::<Vec<_>>(),
        );
    }
    let mut f = Formula::from_clauses(n, k, &clauses)?;
    f.seed = seed;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_regular_instance() {
        let f = generate(3, 3, 4, 1).unwrap();
        assert_eq!((f.m(), f.slots.len()), (4, 12));
        assert!(f.degree_audit().iter().all(|&pn| pn == (2, 2)));
        // clone table is a bijection onto the 12 clones
        let mut seen = std::collections::HashSet::new();
        for s in 0..12 {
            assert!(seen.insert((f.slots[s].var, f.clone_index(s))));
            assert_eq!(f.clone_index(s) < 2, f.slots[s].positive);
        }
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(generate(4, 3, 4, 1).is_err());
        assert!(generate(3, 3, 3, 1).is_err());
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(generate(6, 3, 4, 1).unwrap().slots, generate(6, 3, 4, 2).unwrap().slots);
    }

    #[test]
    fn text_round_trip() {
        let f = generate(9, 3, 6, 77).unwrap();
        let t = f.to_text();
        let g = Formula::from_text(&t).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.to_text(), t);
    }

    #[test]
    fn all_ones_energy() {
        let f = generate(12, 3, 6, 5).unwrap();
        let by_clone = (0..f.m())
            .filter(|&a| (0..3).all(|j| f.clone_index(a * 3 + j) >= 3))
            .count();
        assert_eq!(f.energy(&vec![true; 12]), by_clone);
        assert_eq!(f.energy_all_ones(), by_clone);
    }

    #[test]
    fn acyclic_generator() {
        let f = random_acyclic(5, 3, 2).unwrap();
        assert_eq!(f.n, 11);
        assert!(f.is_acyclic());
        assert!(!generate(6, 3, 4, 1).unwrap().is_acyclic());
    }
}
