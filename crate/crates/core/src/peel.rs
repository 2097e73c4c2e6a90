//! Monotone peeling to the largest self-consistent subset.
//!
//! Given a starting set and a membership test that only gets harder as the
//! set shrinks, repeatedly removing violators converges to the unique
//! largest subset in which every member passes. The result does not depend
//! on the order of removals.

use std::collections::VecDeque;

/// Order in which candidates are examined.
#[derive(Clone, Debug)]
pub enum PeelOrder<'a> {
    /// FIFO worklist seeded in index order.
    Natural,
    /// FIFO worklist seeded in the given order.
    Seeded(&'a [usize]),
    /// LIFO worklist seeded in the given order.
    Stack(&'a [usize]),
}

/// Removes members of `set` for which `violates(x, set)` holds until no
/// member violates. `dependents(x, push)` must report every element whose
/// test may change when `x` leaves the set.
pub fn peel<V, D>(mut set: Vec<bool>, violates: V, dependents: D, order: PeelOrder) -> Vec<bool>
where
    V: Fn(usize, &[bool]) -> bool,
    D: Fn(usize, &mut dyn FnMut(usize)),
{
    let n = set.len();
    let seed: Vec<usize> = match order {
        PeelOrder::Natural => (0..n).collect(),
        PeelOrder::Seeded(o) | PeelOrder::Stack(o) => o.to_vec(),
    };
    let lifo = matches!(order, PeelOrder::Stack(_));
    let mut queued = vec![false; n];
    let mut work: VecDeque<usize> = VecDeque::with_capacity(n);
    for x in seed {
        if set[x] && !queued[x] {
            queued[x] = true;
            work.push_back(x);
        }
    }
    while let Some(x) = if lifo { work.pop_back() } else { work.pop_front() } {
        queued[x] = false;
        if !set[x] || !violates(x, &set) {
            continue;
        }
        set[x] = false;
        dependents(x, &mut |y| {
            if set[y] && !queued[y] {
                queued[y] = true;
                work.push_back(y);
            }
        });
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_peels_from_both_ends() {
        // members need both neighbours present; endpoints fail and the
        // failure propagates through the whole path
        let n = 6;
        let viol = |x: usize, s: &[bool]| x == 0 || x == n - 1 || !s[x - 1] || !s[x + 1];
        let deps = |x: usize, push: &mut dyn FnMut(usize)| {
            if x > 0 {
                push(x - 1)
            }
            if x + 1 < n {
                push(x + 1)
            }
        };
        let out = peel(vec![true; n], viol, deps, PeelOrder::Natural);
        assert!(out.iter().all(|&b| !b));
    }

    #[test]
    fn degree_core_is_order_independent() {
        // 2-core of a small graph: triangle 0-1-2 plus pendant chain 2-3-4
        let adj: Vec<Vec<usize>> = vec![vec![1, 2], vec![0, 2], vec![0, 1, 3], vec![2, 4], vec![3]];
        let viol = |x: usize, s: &[bool]| adj[x].iter().filter(|&&y| s[y]).count() < 2;
        let deps = |x: usize, push: &mut dyn FnMut(usize)| adj[x].iter().for_each(|&y| push(y));
        let a = peel(vec![true; 5], viol, deps, PeelOrder::Natural);
        let rev: Vec<usize> = (0..5).rev().collect();
        let b = peel(vec![true; 5], viol, deps, PeelOrder::Stack(&rev));
        assert_eq!(a, vec![true, true, true, false, false]);
        assert_eq!(a, b);
    }
}
