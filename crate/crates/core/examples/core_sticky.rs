//! λ-core and maximal sticky set of a random formula for a few λ.

use rksat::formula::{core, generate, max_sticky};

fn main() -> rksat::Result<()> {
    // at this scale cores are only non-empty for small β and large λ
    let f = generate(3000, 3, 24, 2)?;
    for lambda in [0.3, 1.0, 3.0, 10.0, 30.0] {
        let c = core(&f, lambda, 0.01);
        let outside: Vec<bool> = c.members.iter().map(|&m| !m).collect();
        let s = max_sticky(&f, lambda, &outside);
        println!(
            "lambda {lambda}: core {} (initially white {}, whitened {}), sticky {}",
            c.size,
            c.initial_white,
            c.whitened,
            s.iter().filter(|&&b| b).count()
        );
    }
    Ok(())
}
