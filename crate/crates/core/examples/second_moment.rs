//! Second-moment rate function f₂(α) on a 1001-point grid.

use rksat::moments::{alpha_grid, rate_f1, rate_f2, scan_second_moment};
use rksat::ModelParams;

fn main() -> rksat::Result<()> {
    let p = ModelParams::new(10, 500, 3.0)?;
    let s = scan_second_moment(&p, &alpha_grid(1001))?;
    println!("2 f1 = {:.10}, f2(1/2) = {:.10}", 2.0 * rate_f1(&p), s.f2_half);
    println!("sup f2 at alpha = {:.4} ({:.10})", s.sup_alpha, s.sup_value);
    println!("global ok = {}, region ok = {}, min f2_bar - f2 = {:.2e}", s.global_ok, s.region_ok, s.min_bar_gap);
    for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let r = rate_f2(&p, alpha)?;
        println!("alpha {alpha}: f2 {:.8}  f2_bar {:.8}  h {:.6}  hhat {:.6}", r.f2, r.f2_bar, r.h, r.hhat);
    }
    Ok(())
}
