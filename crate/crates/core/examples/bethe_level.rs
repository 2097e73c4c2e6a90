//! Finite-depth tree estimates of B from the all-plus boundary next to the
//! population estimate.

use rksat::bethe::estimate_b;
use rksat::gwtree::{estimate_b_level, BoundarySpec, Engine};
use rksat::model::closed_form_f;
use rksat::population::run_popdyn;
use rksat::ModelParams;

fn main() -> rksat::Result<()> {
    let p = ModelParams::new(4, 30, 3.0)?;
    let run = run_popdyn(p, 10_000, 1000, 1)?;
    let b = estimate_b(&run.quad, 500_000, 2)?;
    println!("population B = {:.6} +- {:.1e}, F_closed = {:.6}", b.b.value, b.b.stderr, closed_form_f(&p));
    for ell in 1..=4 {
        let e = estimate_b_level(&p, ell, 20_000, BoundarySpec::AllPlus, Engine::Pooled, 3)?;
        println!("ell {ell}: B_level = {:.6} +- {:.1e}", e.b.value, e.b.stderr);
    }
    Ok(())
}
