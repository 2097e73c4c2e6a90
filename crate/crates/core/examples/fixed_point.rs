//! Solves 2q − 1 = c_β q^k across k and β and compares with the large-k
//! expansion.

use rksat::model::{c_beta, q_asymptotic, q_residual, solve_q_c, TOL};

fn main() -> rksat::Result<()> {
    println!("{:>3} {:>6} {:>14} {:>14} {:>10}", "k", "beta", "q", "q_asym", "residual");
    for k in [3, 4, 6, 10, 16] {
        for beta in [0.5, 2.0, 10.0] {
            let c = c_beta(beta);
            let q = solve_q_c(k, c, TOL)?;
            println!(
                "{k:>3} {beta:>6} {q:>14.10} {:>14.10} {:>10.1e}",
                q_asymptotic(k, beta),
                q_residual(k, c, q)
            );
        }
    }
    Ok(())
}
