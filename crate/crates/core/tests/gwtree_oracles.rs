//! Tree sampling and tree BP against brute force and against population
//! dynamics.

use proptest::prelude::*;
use rand::Rng as _;
use rksat::gwtree::{
    bp_sweep, estimate_b_level, sample_boundary, sample_clause_children, sample_tree, trunk_with_order,
    BoundaryCondition, BoundarySpec, DecoratedTree, Engine, HConvention, NodeKind, PooledEngine, RootKind,
    NO_PARENT,
};
use rksat::peel::PeelOrder;
use rksat::population::{mix, run_popdyn, step_pair, w1_distance, PopKind, Population, PopulationQuad};
use rksat::rng::substream;
use rksat::ModelParams;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `P(σ_root = +1)` by summing over every assignment of the tree variables.
fn brute_root(tree: &DecoratedTree, bc: &BoundaryCondition) -> f64 {
    let vars: Vec<usize> = tree.variables().collect();
    let mut pos = vec![usize::MAX; tree.nodes.len()];
    for (i, &v) in vars.iter().enumerate() {
        pos[v] = i;
    }
    let leaves: Vec<usize> = tree.leaves().collect();
    // clause scopes as (variable, label of the edge)
    let mut scopes: Vec<Vec<(usize, i8)>> = Vec::new();
    for n in &tree.nodes {
        if n.kind != NodeKind::Clause {
            continue;
        }
        let mut s = Vec::new();
        if n.parent != NO_PARENT {
            s.push((pos[n.parent as usize], n.label));
        }
        for c in n.children() {
            s.push((pos[c], tree.nodes[c].label));
        }
        scopes.push(s);
    }
    let c = tree.params.c_beta;
    let (mut z, mut z_plus) = (0.0, 0.0);
    for mask in 0u64..(1 << vars.len()) {
        let sigma = |i: usize| if mask >> i & 1 == 1 { 1i8 } else { -1 };
        let mut w = 1.0;
        for s in &scopes {
            if s.iter().all(|&(x, b)| sigma(x) == b) {
                w *= 1.0 - c;
            }
        }
        for (&leaf, &nu) in leaves.iter().zip(&bc.nu_plus) {
            w *= if sigma(pos[leaf]) == 1 { nu } else { 1.0 - nu };
        }
        z += w;
        if sigma(0) == 1 {
            z_plus += w;
        }
    }
    z_plus / z
}

#[test]
fn tree_bp_equals_brute_force_gibbs() {
    let cases = [
        (3, 4, 1, RootKind::Gw),
        (3, 4, 1, RootKind::GwPrime),
        (3, 2, 2, RootKind::Gw),
        (3, 2, 2, RootKind::GwPrime),
        (5, 2, 1, RootKind::GwPrime),
    ];
    for (i, &(k, d, ell, root)) in cases.iter().enumerate() {
        for seed in 0..10u64 {
            let p = ModelParams::new(k, d, 0.7 + seed as f64 * 0.4).unwrap();
            let tree = sample_tree(&p, ell, root, 100 * i as u64 + seed).unwrap();
            assert!(tree.variables().count() <= 20);
            let mut rng = substream(seed, &[9]);
            let n = tree.leaves().count();
            let mut nu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
            if seed % 3 == 0 {
                nu[0] = 1.0;
            }
            let bc = BoundaryCondition::custom(nu).unwrap();
            let bp = bp_sweep(&tree, &bc).unwrap().root();
            let bf = brute_root(&tree, &bc);
            assert!((bp - bf).abs() < 1e-12, "case {i} seed {seed}: {bp} vs {bf}");
            let plus = BoundaryCondition::all_plus(&tree);
            let bp = bp_sweep(&tree, &plus).unwrap().root();
            assert!((bp - brute_root(&tree, &plus)).abs() < 1e-12);
        }
    }
}

#[test]
fn root_label_is_plus_with_probability_q() {
    let p = ModelParams::new(4, 6, 2.0).unwrap();
    let n = 20_000;
    let plus = (0..n)
        .filter(|&s| sample_tree(&p, 1, RootKind::Gw, s).unwrap().nodes[0].label == 1)
        .count() as f64;
    let se = (p.q * (1.0 - p.q) / n as f64).sqrt();
    assert!((plus / n as f64 - p.q).abs() < 4.0 * se);
}

fn binom(n: usize, j: usize) -> f64 {
    (0..j).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

/// Offspring law of a clause: number of `−1` children given the parent
/// edge. A `+1` edge reweights the all-`+1` configuration, which violates
/// the clause, by `e^{−β}`.
fn offspring_law(p: &ModelParams, b: i8) -> Vec<f64> {
    let m = p.k - 1;
    let q = p.q;
    let bin: Vec<f64> = (0..=m)
        .map(|j| binom(m, j) * (1.0 - q).powi(j as i32) * q.powi((m - j) as i32))
        .collect();
    if b == -1 {
        return bin;
    }
    let w: Vec<f64> = bin
        .iter()
        .enumerate()
        .map(|(j, &x)| if j == 0 { x * (-p.beta).exp() } else { x })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

#[test]
fn clause_offspring_pass_chi_square() {
    for &(k, beta) in &[(3, 1.0), (4, 3.0), (6, 0.5)] {
        let p = ModelParams::new(k, 10, beta).unwrap();
        for b in [1i8, -1] {
            let law = offspring_law(&p, b);
            let mut counts = vec![0usize; k];
            let mut rng = substream(k as u64, &[b as u64]);
            let mut out = vec![0i8; k - 1];
            let draws = 200_000;
            for _ in 0..draws {
                sample_clause_children(&p, b, &mut rng, &mut out);
                counts[out.iter().filter(|&&x| x == -1).count()] += 1;
            }
            let stat: f64 = counts
                .iter()
                .zip(&law)
                .map(|(&o, &e)| (o as f64 - e * draws as f64).powi(2) / (e * draws as f64))
                .sum();
            let pval = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(stat);
            assert!(pval > 1e-4, "k={k} b={b}: χ² = {stat}, p = {pval}");
        }
    }
}

#[test]
fn root_message_from_population_boundary_follows_the_mixture() {
    // at a fixed point, one level of tree BP maps the boundary law to itself
    let p = ModelParams::new(4, 10, 2.0).unwrap();
    let run = run_popdyn(p, 20_000, 1000, 3).unwrap();
    let trees = 4000;
    let samples: Vec<f64> = (0..trees)
        .map(|s| {
            let tree = sample_tree(&p, 1, RootKind::Gw, 1000 + s).unwrap();
            let bc = sample_boundary(&tree, &run.quad, s);
            let nu = bp_sweep(&tree, &bc).unwrap().root();
            if tree.nodes[0].label == 1 {
                nu
            } else {
                1.0 - nu
            }
        })
        .collect();
    let roots = Population {
        samples,
        kind: PopKind::PiMixed,
    };
    let pi = mix(&run.quad);
    let se = roots.mean_stderr().hypot(pi.mean_stderr());
    assert!((roots.mean() - pi.mean()).abs() < 4.0 * se, "{} vs {}", roots.mean(), pi.mean());
    let w = w1_distance(&roots, &pi).unwrap();
    assert!(w < 3.0 / (trees as f64).sqrt(), "W1 = {w}");
}

#[test]
fn pooled_levels_reproduce_population_sweeps() {
    // pooled levels from the all-plus boundary are population dynamics from
    // the polarized start
    let p = ModelParams::new(4, 10, 2.0).unwrap();
    let n = 20_000;
    let eng = PooledEngine::new(p, n, [BoundarySpec::AllPlus]).unwrap();
    let levels = eng.run(3, 5);
    let mut quad = PopulationQuad::polarized(p, n);
    let pop = |v: &[[f64; 1]]| Population {
        samples: v.iter().map(|m| m[0]).collect(),
        kind: PopKind::PiMixed,
    };
    for lvl in levels.iter().skip(1) {
        quad = step_pair(&quad, 11).unwrap();
        let tol = 6.0 / (n as f64).sqrt();
        for (pool, popn) in [
            (&lvl.var[0], &quad.p_minus),
            (&lvl.var[1], &quad.p_plus),
            (&lvl.clause[0], &quad.phat_minus),
            (&lvl.clause[1], &quad.phat_plus),
        ] {
            let w = w1_distance(&pop(pool), popn).unwrap();
            assert!(w < tol, "level {}: W1 {w}", quad.iteration);
        }
    }
}

#[test]
fn exact_and_pooled_level_estimates_agree() {
    let p = ModelParams::new(3, 4, 1.5).unwrap();
    let a = estimate_b_level(&p, 2, 20_000, BoundarySpec::AllPlus, Engine::Exact, 1).unwrap();
    let b = estimate_b_level(&p, 2, 20_000, BoundarySpec::AllPlus, Engine::Pooled, 2).unwrap();
    assert_eq!((a.engine, b.engine), (Engine::Exact, Engine::Pooled));
    assert!(a.b.agrees(&b.b, 4.0), "{:?} vs {:?}", a.b, b.b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trunk_does_not_depend_on_peeling_order(seed in any::<u64>(), beta in 0.5f64..6.0) {
        let p = ModelParams::new(4, 6, beta).unwrap();
        let tree = sample_tree(&p, 2, RootKind::Gw, seed).unwrap();
        let mut rng = substream(seed, &[1]);
        let bc = BoundaryCondition::from_spec(&tree, &BoundarySpec::synthetic(p.k), &mut rng);
        let n = tree.nodes.len();
        let rev: Vec<usize> = (0..n).rev().collect();
        let odd_first: Vec<usize> = (0..n).filter(|i| i % 2 == 1).chain((0..n).filter(|i| i % 2 == 0)).collect();
        for conv in [HConvention::NuPlus, HConvention::OwnLabel] {
            let a = trunk_with_order(&tree, &bc, conv, PeelOrder::Natural);
            prop_assert_eq!(&a, &trunk_with_order(&tree, &bc, conv, PeelOrder::Stack(&rev)));
            prop_assert_eq!(&a, &trunk_with_order(&tree, &bc, conv, PeelOrder::Seeded(&odd_first)));
        }
    }

    #[test]
    fn root_message_is_a_probability(seed in any::<u64>(), beta in 0.01f64..12.0) {
        let p = ModelParams::new(3, 4, beta).unwrap();
        let tree = sample_tree(&p, 2, RootKind::Gw, seed).unwrap();
        let mut rng = substream(seed, &[2]);
        let bc = BoundaryCondition::from_spec(&tree, &BoundarySpec::synthetic(p.k), &mut rng);
        let r = bp_sweep(&tree, &bc).unwrap().root();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn text_form_round_trips(seed in any::<u64>()) {
        let p = ModelParams::new(3, 4, 1.0).unwrap();
        let tree = sample_tree(&p, 2, RootKind::Gw, seed).unwrap();
        let back = DecoratedTree::from_text(&tree.to_text(), RootKind::Gw, p).unwrap();
        prop_assert_eq!(tree, back);
    }
}
