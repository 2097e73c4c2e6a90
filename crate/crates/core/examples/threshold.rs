//! Threshold search on a coarse grid with a small population. Writes the
//! Δ(β) trace as CSV to stdout after the summary.

use rksat::bethe::{find_beta_c, write_delta_csv, BetaScan, ThresholdConfig};

fn main() -> rksat::Result<()> {
    let mut scan = BetaScan::default_for(4);
    scan.points = 12;
    let mut cfg = ThresholdConfig::new(4000, 7);
    cfg.samples_per_n = 20;
    let r = find_beta_c(4, 60, scan, cfg)?;
    println!("beta_c = {:?}, bracket = {:?}", r.beta_c, r.bracket);
    println!("{}", r.note);
    write_delta_csv(&r.trace, std::io::stdout().lock())
}
