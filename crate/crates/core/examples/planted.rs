//! Rejection sampling of planted formulas and the acceptance rate against
//! the annealed first moment.

use rksat::formula::{annealed_ez, planted_sample};

fn main() -> rksat::Result<()> {
    let (n, k, d, beta) = (9, 3, 6, 1.0);
    let draws = 2000;
    let mut trials = 0u64;
    for s in 0..draws {
        trials += planted_sample(n, k, d, beta, s, 1_000_000)?.trials;
    }
    let expected = (annealed_ez(n, k, d, beta)? - n as f64 * 2f64.ln()).exp();
    println!("acceptance {:.5}, E[Z]/2^n {:.5}", draws as f64 / trials as f64, expected);
    let f = planted_sample(n, k, d, beta, 99, 1_000_000)?.formula;
    print!("{}", f.to_text());
    Ok(())
}
