//! Closed-form free energy against the Monte Carlo F and B estimators.

use rksat::bethe::bethe_estimate;
use rksat::ModelParams;

fn main() -> rksat::Result<()> {
    for beta in [1.0, 2.0, 3.0] {
        let p = ModelParams::new(4, 30, beta)?;
        let e = bethe_estimate(p, 10_000, 1000, 200_000, 3)?;
        println!(
            "beta {beta}: F_closed {:.6}  F_mc {:.6} +- {:.1e}  B {:.6} +- {:.1e}  ({} sweeps)",
            e.f_closed, e.f_mc.f_mc.value, e.f_mc.f_mc.stderr, e.b_mc.b.value, e.b_mc.b.stderr, e.iterations
        );
    }
    Ok(())
}
