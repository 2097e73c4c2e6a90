//! Exact annealed first moment per variable against the closed form.

use rksat::formula::{annealed_ez, annealed_richardson};
use rksat::model::closed_form_f;
use rksat::ModelParams;

fn main() -> rksat::Result<()> {
    for beta in [0.5, 1.0, 2.0] {
        let p = ModelParams::new(3, 6, beta)?;
        print!("beta {beta}: F_closed {:.8} |", closed_form_f(&p));
        for n in [24, 51, 102, 201] {
            print!(" n={n} {:.6}", annealed_ez(n, 3, 6, beta)? / n as f64);
        }
        println!(" | extrapolated {:.8}", annealed_richardson(102, 3, 6, beta)?);
    }
    Ok(())
}
