//! Finite formulas against independent brute-force computations.

use proptest::prelude::*;
use rksat::formula::{
    annealed_ez, annealed_ez_theta, bethe_free_energy, core, core_with_order, energy_spectrum, exact_gibbs,
    generate, loopy_bp, max_sticky, max_sticky_with_order, random_acyclic, Formula,
};
use rksat::model::c_beta;
use rksat::peel::PeelOrder;

/// Plain loop over all assignments with its own clause evaluation.
fn brute_ln_z(f: &Formula, beta: f64) -> (f64, Vec<f64>) {
    let mut logs = Vec::with_capacity(1 << f.n);
    let mut masks = Vec::with_capacity(1 << f.n);
    for mask in 0u64..(1 << f.n) {
        let value = |v: u32| mask >> v & 1 == 1;
        let mut e = 0;
        for a in 0..f.m() {
            let violated = f.clause(a).iter().all(|l| value(l.var) != l.positive);
            e += usize::from(violated);
        }
        logs.push(-beta * e as f64);
        masks.push(mask);
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let marg = (0..f.n)
        .map(|x| {
            masks
                .iter()
                .zip(&w)
                .filter(|(m, _)| *m >> x & 1 == 1)
                .map(|(_, w)| w)
                .sum::<f64>()
                / z
        })
        .collect();
    (top + z.ln(), marg)
}

fn instances() -> Vec<Formula> {
    let shapes = [(3, 3, 2), (6, 3, 4), (9, 3, 6), (12, 3, 6), (12, 3, 4), (4, 4, 4), (8, 4, 6), (12, 4, 2)];
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < 50 {
        let (n, k, d) = shapes[out.len() % shapes.len()];
        out.push(generate(n, k, d, seed).unwrap());
        seed += 1;
    }
    out
}

#[test]
fn exact_gibbs_matches_brute_force_on_fifty_instances() {
    for (i, f) in instances().iter().enumerate() {
        let beta = 0.3 + 0.4 * (i % 6) as f64;
        let g = exact_gibbs(f, beta).unwrap();
        let (ln_z, marg) = brute_ln_z(f, beta);
        assert!((g.ln_z - ln_z).abs() <= 1e-10, "instance {i}: {} vs {ln_z}", g.ln_z);
        for (a, b) in g.marginals.iter().zip(&marg) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn bp_and_bethe_exact_on_acyclic_formulas() {
    for seed in 0..20 {
        for &(m, k) in &[(3, 3), (5, 3), (3, 4), (4, 5)] {
            let f = random_acyclic(m, k, seed).unwrap();
            assert!(f.is_acyclic());
            let beta = 0.5 + seed as f64 / 5.0;
            let g = exact_gibbs(&f, beta).unwrap();
            let bp = loopy_bp(&f, beta, 200, 0.0, 1e-15).unwrap();
            // messages settle after the diameter, which is at most 2m sweeps
            assert!(bp.converged && bp.iterations <= 2 * m + 2, "{} sweeps", bp.iterations);
            for (a, b) in bp.marginals.iter().zip(&g.marginals) {
                assert!((a - b).abs() < 1e-10);
            }
            let bethe = bethe_free_energy(&f, beta, &bp.marginals).unwrap();
            assert!((bethe - g.ln_z).abs() < 1e-8, "{bethe} vs {}", g.ln_z);
        }
    }
}

/// Every ordering of the `dn` clones, as a formula.
fn all_matchings(n: usize, k: usize, d: usize) -> Vec<Formula> {
    let clones: Vec<i64> = (1..=n as i64)
        .flat_map(|v| (0..d).map(move |c| if c < d / 2 { v } else { -v }))
        .collect();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..clones.len()).collect();
    permute(&mut idx, 0, &mut |p| {
        let clauses: Vec<Vec<i64>> = p.chunks(k).map(|c| c.iter().map(|&i| clones[i]).collect()).collect();
        out.push(Formula::from_clauses(n, k, &clauses).unwrap());
    });
    out
}

fn permute(v: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, f);
        v.swap(i, j);
    }
}

#[test]
fn annealed_first_moment_equals_average_over_all_matchings() {
    for &(n, k, d) in &[(3, 3, 2), (2, 4, 2), (4, 4, 2)] {
        let formulas = all_matchings(n, k, d);
        let spectra: Vec<_> = formulas.iter().map(|f| energy_spectrum(f).unwrap()).collect();
        for beta in [0.5, 1.0, 3.0] {
            let mean = spectra.iter().map(|s| s.ln_z(beta).exp()).sum::<f64>() / formulas.len() as f64;
            let ann = annealed_ez(n, k, d, beta).unwrap();
            assert!((ann - mean.ln()).abs() < 1e-10, "n={n} k={k} β={beta}: {ann} vs {}", mean.ln());
        }
    }
}

#[test]
fn annealed_first_moment_matches_sampled_average() {
    // n = 6, k = 3, d = 4 has 24! matchings; sample them instead
    let (n, k, d, beta) = (6, 3, 4, 1.5);
    let draws = 20_000;
    let vals: Vec<f64> = (0..draws)
        .map(|s| energy_spectrum(&generate(n, k, d, s).unwrap()).unwrap().ln_z(beta).exp())
        .collect();
    let mean = vals.iter().sum::<f64>() / draws as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    let ann = annealed_ez(n, k, d, beta).unwrap().exp();
    assert!((mean - ann).abs() < 4.0 * se, "{mean} ± {se} vs {ann}");
}

#[test]
fn annealed_first_moment_theta_independent() {
    for &(n, beta) in &[(30, 0.7), (99, 2.0), (201, 1.0)] {
        let base = annealed_ez(n, 3, 6, beta).unwrap();
        for theta in [0.2, 0.35, 0.65, 0.8] {
            let v = annealed_ez_theta(n, 3, 6, beta, theta).unwrap();
            assert!((v - base).abs() <= 1e-9, "θ={theta}: {v} vs {base}");
        }
    }
}

#[test]
fn acyclic_bethe_at_wrong_marginals_is_below_ln_z() {
    // the Bethe functional on a tree is maximized at the true marginals
    let f = random_acyclic(4, 3, 8).unwrap();
    let g = exact_gibbs(&f, 2.0).unwrap();
    let shifted: Vec<f64> = g.marginals.iter().map(|p| (p * 0.8 + 0.1).clamp(0.01, 0.99)).collect();
    assert!(bethe_free_energy(&f, 2.0, &shifted).unwrap() < g.ln_z);
}

#[test]
fn core_is_monotone_in_lambda_above_one_over_hundred_k() {
    // for λ > k/100 the CR1 threshold sits in (k−1, k) and only the
    // relaxing conditions change with λ
    let mut nonempty = 0;
    for seed in 0..20 {
        let (k, d) = if seed % 2 == 0 { (3, 24) } else { (4, 60) };
        let f = generate(600, k, d, seed).unwrap();
        let mut prev: Option<Vec<bool>> = None;
        for lambda in [0.05, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0] {
            let c = core(&f, lambda, 0.01);
            nonempty += usize::from(c.size > 0);
            if let Some(p) = &prev {
                assert!(p.iter().zip(&c.members).all(|(&a, &b)| !a || b), "seed {seed} λ={lambda}");
            }
            prev = Some(c.members);
        }
    }
    assert!(nonempty >= 20, "only {nonempty} non-empty cores");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn text_round_trip(n3 in 1usize..20, d2 in 1usize..5, seed in any::<u64>()) {
        let f = generate(3 * n3, 3, 2 * d2, seed).unwrap();
        let g = Formula::from_text(&f.to_text()).unwrap();
        prop_assert_eq!(&f, &g);
        prop_assert!(g.degree_audit().iter().all(|&(p, q)| p == d2 && q == d2));
    }

    #[test]
    fn ln_z_decreasing_and_convex(seed in any::<u64>(), beta in 0.05f64..6.0) {
        let s = energy_spectrum(&generate(9, 3, 6, seed).unwrap()).unwrap();
        let h = 1e-3;
        let (a, b, c) = (s.ln_z(beta - h), s.ln_z(beta), s.ln_z(beta + h));
        prop_assert!(a >= b && b >= c);
        prop_assert!(a + c - 2.0 * b >= -1e-12);
    }

    #[test]
    fn bp_marginals_stay_in_unit_interval(seed in any::<u64>(), beta in 0.0f64..8.0) {
        let f = generate(30, 3, 6, seed).unwrap();
        let r = loopy_bp(&f, beta, 50, 0.3, 1e-10).unwrap();
        prop_assert!(r.marginals.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn clause_fit_reproduces_its_targets(t in proptest::collection::vec(0.05f64..0.95, 3..6), beta in 0.1f64..5.0) {
        let c = c_beta(beta);
        let fit = rksat::formula::fit_clause(&t, c).unwrap();
        for (p, q) in fit.marginals(c).iter().zip(&t) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn peeling_order_does_not_matter(seed in any::<u64>(), lambda in 0.05f64..30.0) {
        let f = generate(300, 3, 24, seed).unwrap();
        let rev: Vec<usize> = (0..f.n).rev().collect();
        let shuffled: Vec<usize> = (0..f.n).map(|i| (i * 7919 + seed as usize % 300) % f.n).collect();
        let a = core_with_order(&f, lambda, 0.01, PeelOrder::Natural);
        let b = core_with_order(&f, lambda, 0.01, PeelOrder::Stack(&rev));
        let c = core_with_order(&f, lambda, 0.01, PeelOrder::Seeded(&shuffled));
        prop_assert_eq!(&a.members, &b.members);
        prop_assert_eq!(&a.members, &c.members);
        let all = vec![true; f.n];
        let s1 = max_sticky(&f, lambda, &all);
        let s2 = max_sticky_with_order(&f, lambda, &all, PeelOrder::Stack(&rev));
        prop_assert_eq!(&s1, &s2);
    }
}
