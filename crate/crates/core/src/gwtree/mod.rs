//! Decorated Galton–Watson trees, tree BP, trunk/cold diagnostics and the
//! finite-depth Bethe estimator.
//!
//! Every node carries the label `b = b_{v,↑}` of the edge to its parent
//! clause (for a variable) or parent variable (for a clause). The label of
//! the edge between a clause `a` and a child variable `x` is the label of
//! `x`; the label of the edge between `a` and its parent is the label of `a`.
//!
//! Offspring rules:
//!
//! * the root variable of `GW` has label `+1` with probability `q` and
//!   `d − 1` clause children; every other variable with label `b` has
//!   `d/2 − 1` children labelled `b` and `d/2` labelled `−b`;
//! * the root of `GW′` has `d/2` children labelled `+1` and `d/2` labelled `−1`;
//! * a clause labelled `−1` has `k − 1` children, each independently `−1`
//!   with probability `1 − q`;
//! * a clause labelled `+1` has all children `+1` with probability
//!   `e^{−β} q^{k−1} / (1 − c_β q^{k−1})`, and otherwise i.i.d. children
//!   conditioned on at least one `−1` (sampled by rejection).

mod bp;
mod engine;
mod trunk;

pub use bp::*;
pub use engine::*;
pub use trunk::*;

use std::fmt::Write as _;

use rand::Rng as _;
use serde::Serialize;

use crate::error::{precondition, Error, Result};
use crate::model::ModelParams;
use crate::rng::{substream, Rng};

/// Default cap on the number of nodes of an explicit tree.
pub const NODE_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Variable,
    Clause,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    /// Variable root with a random label and `d − 1` children.
    Gw,
    /// Unlabelled variable root with `d` children, half of each label.
    GwPrime,
    /// Clause root with the given label and `k − 1` children.
    Clause(i8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    /// `b_{v,↑}`; zero for the root of `GW′`.
    pub label: i8,
    pub parent: u32,
    pub first_child: u32,
    pub n_children: u32,
    pub depth: u32,
}

pub const NO_PARENT: u32 = u32::MAX;

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.n_children == 0
    }

    pub fn children(&self) -> std::ops::Range<usize> {
        self.first_child as usize..(self.first_child + self.n_children) as usize
    }
}

/// A sampled tree in breadth-first order: children of a node are contiguous
/// and always have larger indices than their parent.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoratedTree {
    pub nodes: Vec<Node>,
    pub root: RootKind,
    /// Depth of the leaves (`2ℓ` for variable roots, `2ℓ + 1` for clause roots).
    pub depth: usize,
    pub params: ModelParams,
}

impl DecoratedTree {
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Variable && n.depth as usize == self.depth)
            .map(|(i, _)| i)
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Variable)
            .map(|(i, _)| i)
    }

    pub fn count_at_depth(&self, depth: usize) -> usize {
        self.nodes.iter().filter(|n| n.depth as usize == depth).count()
    }

    /// Label of the edge between clause `a` and its neighbour `x`.
    pub fn edge_label(&self, a: usize, x: usize) -> i8 {
        if self.nodes[x].parent as usize == a {
            self.nodes[x].label
        } else {
            debug_assert_eq!(self.nodes[a].parent as usize, x);
            self.nodes[a].label
        }
    }

    /// Nested text form, e.g. `(v + (c - (v +) (v -)) ...)`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_node(0, &mut s);
        s
    }

    fn write_node(&self, i: usize, s: &mut String) {
        let n = &self.nodes[i];
        let kind = match n.kind {
            NodeKind::Variable => 'v',
            NodeKind::Clause => 'c',
        };
        let label = match n.label {
            1 => "+",
            -1 => "-",
            _ => "0",
        };
        let _ = write!(s, "({kind} {label}");
        for c in n.children() {
            s.push(' ');
            self.write_node(c, s);
        }
        s.push(')');
    }

    /// Parses the output of [`DecoratedTree::to_text`].
    pub fn from_text(text: &str, root: RootKind, params: ModelParams) -> Result<Self> {
        #[derive(Debug)]
        struct Raw {
            kind: NodeKind,
            label: i8,
            children: Vec<Raw>,
        }
        fn parse(chars: &[u8], pos: &mut usize) -> Result<Raw> {
            let err = |m: &str, at: usize| Error::Parse {
                line: 1,
                msg: format!("{m} at byte {at}"),
            };
            let skip = |pos: &mut usize| {
                while *pos < chars.len() && chars[*pos] == b' ' {
                    *pos += 1;
                }
            };
            skip(pos);
            if chars.get(*pos) != Some(&b'(') {
                return Err(err("expected '('", *pos));
            }
            *pos += 1;
            let kind = match chars.get(*pos) {
                Some(b'v') => NodeKind::Variable,
                Some(b'c') => NodeKind::Clause,
                _ => return Err(err("expected node kind", *pos)),
            };
            *pos += 1;
            skip(pos);
            let label = match chars.get(*pos) {
                Some(b'+') => 1,
                Some(b'-') => -1,
                Some(b'0') => 0,
                _ => return Err(err("expected label", *pos)),
            };
            *pos += 1;
            let mut children = Vec::new();
            loop {
                skip(pos);
                match chars.get(*pos) {
                    Some(b')') => {
                        *pos += 1;
                        break;
                    }
                    Some(b'(') => children.push(parse(chars, pos)?),
                    _ => return Err(err("unexpected character", *pos)),
                }
            }
            Ok(Raw {
                kind,
                label,
                children,
            })
        }
        let bytes = text.trim().as_bytes();
        let mut pos = 0;
        let raw = parse(bytes, &mut pos)?;
        // breadth-first flattening
        let mut nodes = vec![Node {
            kind: raw.kind,
            label: raw.label,
            parent: NO_PARENT,
            first_child: 0,
            n_children: 0,
            depth: 0,
        }];
        let mut queue = std::collections::VecDeque::from([(0usize, &raw)]);
        let mut depth = 0;
        while let Some((i, r)) = queue.pop_front() {
            if !r.children.is_empty() {
                nodes[i].first_child = nodes.len() as u32;
                nodes[i].n_children = r.children.len() as u32;
            }
            for c in &r.children {
                let d = nodes[i].depth + 1;
                depth = depth.max(d as usize);
                nodes.push(Node {
                    kind: c.kind,
                    label: c.label,
                    parent: i as u32,
                    first_child: 0,
                    n_children: 0,
                    depth: d,
                });
                queue.push_back((nodes.len() - 1, c));
            }
        }
        Ok(DecoratedTree {
            nodes,
            root,
            depth,
            params,
        })
    }
}

/// Labels of the `k − 1` children of a clause labelled `b`.
pub fn sample_clause_children(params: &ModelParams, b: i8, rng: &mut Rng, out: &mut [i8]) {
    let p_minus = 1.0 - params.q;
    if b == -1 {
        for x in out.iter_mut() {
            *x = if rng.gen::<f64>() < p_minus { -1 } else { 1 };
        }
        return;
    }
    if rng.gen::<f64>() < params.all_plus_prob() {
        out.fill(1);
        return;
    }
    loop {
        let mut any = false;
        for x in out.iter_mut() {
            *x = if rng.gen::<f64>() < p_minus {
                any = true;
                -1
            } else {
                1
            };
        }
        if any {
            return;
        }
    }
}

/// Labels of the clause children of a non-root variable labelled `b`:
/// `d/2 − 1` copies of `b` followed by `d/2` copies of `−b`.
pub fn variable_children(d: usize, b: i8, out: &mut Vec<i8>) {
    out.clear();
    out.extend(std::iter::repeat(b).take(d / 2 - 1));
    out.extend(std::iter::repeat(-b).take(d / 2));
}

/// Exact node count of a tree with leaves at `depth`.
pub fn node_count(params: &ModelParams, ell: usize, root: RootKind) -> f64 {
    let (d, k) = (params.d as f64, params.k as f64);
    let branch = (d - 1.0) * (k - 1.0);
    let mut total = 0.0;
    match root {
        RootKind::Gw | RootKind::GwPrime => {
            let first = if root == RootKind::Gw { d - 1.0 } else { d };
            // root, then per generation t ≥ 1: clauses first·branch^{t−1}, variables ×(k−1)
            total += 1.0;
            for t in 1..=ell {
                let clauses = first * branch.powi(t as i32 - 1);
                total += clauses + clauses * (k - 1.0);
            }
        }
        RootKind::Clause(_) => {
            total += 1.0 + (k - 1.0);
            for t in 1..=ell {
                let vars = (k - 1.0) * branch.powi(t as i32 - 1);
                let clauses = vars * (d - 1.0);
                total += clauses + clauses * (k - 1.0);
            }
        }
    }
    total
}

/// Samples a tree with leaves at depth `2ℓ` (`2ℓ + 1` for clause roots).
pub fn sample_tree(params: &ModelParams, ell: usize, root: RootKind, seed: u64) -> Result<DecoratedTree> {
    let mut rng = substream(seed, &[0x7472_6565]);
    sample_tree_with(params, ell, root, &mut rng, NODE_CAP)
}

pub fn sample_tree_with(
    params: &ModelParams,
    ell: usize,
    root: RootKind,
    rng: &mut Rng,
    cap: usize,
) -> Result<DecoratedTree> {
    precondition(ell >= 1, || "tree depth parameter must be at least 1".into())?;
    let count = node_count(params, ell, root);
    precondition(count <= cap as f64, || {
        format!("tree would have {count:.3e} nodes, above the cap of {cap}")
    })?;
    let depth = match root {
        RootKind::Clause(_) => 2 * ell + 1,
        _ => 2 * ell,
    };
    let (root_kind, root_label) = match root {
        RootKind::Gw => (
            NodeKind::Variable,
            if rng.gen::<f64>() < params.q { 1 } else { -1 },
        ),
        RootKind::GwPrime => (NodeKind::Variable, 0),
        RootKind::Clause(b) => {
            precondition(b == 1 || b == -1, || "clause root label must be ±1".into())?;
            (NodeKind::Clause, b)
        }
    };
    let mut nodes = Vec::with_capacity(count as usize);
    nodes.push(Node {
        kind: root_kind,
        label: root_label,
        parent: NO_PARENT,
        first_child: 0,
        n_children: 0,
        depth: 0,
    });
    let (d, k) = (params.d, params.k);
    let mut labels = Vec::with_capacity(d.max(k));
    let mut i = 0;
    while i < nodes.len() {
        let node = nodes[i];
        if node.depth as usize == depth {
            i += 1;
            continue;
        }
        match node.kind {
            NodeKind::Variable => {
                if i == 0 && root == RootKind::GwPrime {
                    labels.clear();
                    labels.extend(std::iter::repeat(1).take(d / 2));
                    labels.extend(std::iter::repeat(-1).take(d / 2));
                } else {
                    variable_children(d, node.label, &mut labels);
                }
            }
            NodeKind::Clause => {
                labels.clear();
                labels.resize(k - 1, 0);
                sample_clause_children(params, node.label, rng, &mut labels);
            }
        }
        let kind = match node.kind {
            NodeKind::Variable => NodeKind::Clause,
            NodeKind::Clause => NodeKind::Variable,
        };
        nodes[i].first_child = nodes.len() as u32;
        nodes[i].n_children = labels.len() as u32;
        for &b in &labels {
            nodes.push(Node {
                kind,
                label: b,
                parent: i as u32,
                first_child: 0,
                n_children: 0,
                depth: node.depth + 1,
            });
        }
        i += 1;
    }
    Ok(DecoratedTree {
        nodes,
        root,
        depth,
        params: *params,
    })
}
