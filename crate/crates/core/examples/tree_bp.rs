//! One decorated tree: BP under two boundaries, trunk and cold paths.

use rksat::gwtree::{bp_sweep, cold_report, sample_tree, trunk, BoundaryCondition, BoundarySpec, HConvention, RootKind};
use rksat::rng::substream;
use rksat::ModelParams;

fn main() -> rksat::Result<()> {
    let p = ModelParams::new(3, 4, 2.0)?;
    let tree = sample_tree(&p, 2, RootKind::Gw, 11)?;
    println!("{} nodes, {} leaves", tree.nodes.len(), tree.leaves().count());
    println!("{}", tree.to_text());

    let plus = BoundaryCondition::all_plus(&tree);
    let mut rng = substream(11, &[1]);
    let synth = BoundaryCondition::from_spec(&tree, &BoundarySpec::synthetic(p.k), &mut rng);
    for (name, bc) in [("all-plus", &plus), ("synthetic", &synth)] {
        let msgs = bp_sweep(&tree, bc)?;
        let w = trunk(&tree, bc, HConvention::NuPlus);
        println!(
            "{name}: root nu(+1) = {:.6}, trunk size {}",
            msgs.root(),
            w.iter().filter(|&&b| b).count()
        );
        println!("  {:?}", cold_report(&tree, bc, HConvention::NuPlus));
    }
    Ok(())
}
