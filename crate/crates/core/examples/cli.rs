//! Drives the command-line front end in-process.

fn main() {
    for args in [
        &["rksat", "q", "--k", "4", "--beta", "2"][..],
        &["rksat", "formula", "exact", "--n", "10", "--k", "3", "--d", "6", "--beta", "1", "--omit-timing"][..],
        &["rksat", "popdyn", "--k", "4", "--d", "7", "--beta", "1"][..],
    ] {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = rksat::cli::run(args.iter().copied(), &mut out, &mut err);
        println!("$ {}\nexit {code}", args.join(" "));
        print!("{}{}", String::from_utf8_lossy(&out), String::from_utf8_lossy(&err));
    }
}
