//! Population dynamics from the polarized start at (k, d, β) = (4, 30, 3).

use rksat::population::{is_skewed, mix, run_popdyn};
use rksat::ModelParams;

fn main() -> rksat::Result<()> {
    let p = ModelParams::new(4, 30, 3.0)?;
    let run = run_popdyn(p, 20_000, 1000, 1)?;
    let q = &run.quad;
    let pi = mix(q);
    println!("q = {:.6}", p.q);
    println!("converged = {} after {} sweeps, last W1 move {:.2e}", run.converged, run.iterations, run.final_w1);
    println!("mean pi_minus = {:.6}, pi_plus = {:.6}", q.p_minus.mean(), q.p_plus.mean());
    println!("mean pihat_minus = {:.6}, pihat_plus = {:.6}", q.phat_minus.mean(), q.phat_plus.mean());
    println!("mixed mean = {:.6} +- {:.1e}", pi.mean(), pi.mean_stderr());
    println!("{:?}", is_skewed(&pi, &p));
    Ok(())
}
