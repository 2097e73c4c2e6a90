//! A small regular formula: exact enumeration, loopy BP and the Bethe
//! functional at the BP marginals.

use rksat::formula::{bethe_free_energy, exact_gibbs, generate, loopy_bp, random_acyclic};

fn main() -> rksat::Result<()> {
    let beta = 1.0;
    let f = generate(12, 3, 6, 4)?;
    print!("{}", f.to_text());
    let g = exact_gibbs(&f, beta)?;
    let bp = loopy_bp(&f, beta, 1000, 0.0, 1e-12)?;
    let bethe = bethe_free_energy(&f, beta, &bp.marginals)?;
    println!("ln Z = {:.8}, Bethe at BP = {:.8}", g.ln_z, bethe);
    println!("BP converged = {} in {} sweeps", bp.converged, bp.iterations);
    println!("energy histogram = {:?}", &g.energy_histogram[..8]);
    for (x, (e, b)) in g.marginals.iter().zip(&bp.marginals).enumerate() {
        println!("x{:<2} exact {e:.5}  bp {b:.5}", x + 1);
    }

    // on a tree-shaped formula BP is exact and Bethe equals ln Z
    let t = random_acyclic(6, 3, 1)?;
    let g = exact_gibbs(&t, beta)?;
    let bp = loopy_bp(&t, beta, 100, 0.0, 1e-14)?;
    println!("tree: ln Z = {:.10}, Bethe = {:.10}", g.ln_z, bethe_free_energy(&t, beta, &bp.marginals)?);
    Ok(())
}
