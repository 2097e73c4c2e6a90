//! Root disagreement between a synthetic boundary and the all-plus boundary
//! as the depth grows.

use rksat::gwtree::{contraction_experiment, ContractionConfig};
use rksat::model::{d_sat_approx, nearest_even};
use rksat::ModelParams;

fn main() -> rksat::Result<()> {
    let d = nearest_even(0.9 * d_sat_approx(8));
    let p = ModelParams::new(8, d, 6.0)?;
    println!("k = 8, d = {d}, beta = 6");
    for ell in 2..=4 {
        let cfg = ContractionConfig::new(&p, ell, 200, 5);
        let r = contraction_experiment(&p, &cfg)?;
        println!(
            "ell {ell}: exceed(2/ell) {:.3}  mean {:.2e}  max {:.2e}  engine {:?}",
            r.exceed_fraction, r.mean_diff, r.max_diff, r.engine
        );
    }
    Ok(())
}
