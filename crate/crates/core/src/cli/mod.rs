//! Command-line front end.
//!
//! Every subcommand emits one JSON line
//! `{schema_version, command, params, seed, wall_time_s, converged, result}`
//! where `params` echoes the parsed arguments, so a record can be replayed.
//! `--csv` switches tabular subcommands to CSV. Exit codes: 0 success, 2
//! invalid parameters or input, 3 non-convergence (the record is still
//! written), 1 anything else.

mod plot;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bethe::{self, BetaScan, ThresholdConfig};
use crate::error::{Error, Result};
use crate::formula::{self, Formula};
use crate::gwtree::{self, BoundarySpec, ContractionConfig, Engine, HConvention};
use crate::model::{self, ModelParams};
use crate::moments;
use crate::population::{self, PopulationQuad};

pub const SCHEMA_VERSION: u32 = 1;

/// Directory that relative `--out` paths are resolved against.
pub const OUT_DIR_ENV: &str = "RKSAT_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "rksat", version, about = "Condensation threshold of random regular k-SAT")]
pub struct Cli {
    /// Master seed; echoed in every record.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file; relative paths are joined to $RKSAT_OUT_DIR when set.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// CSV instead of JSON for tabular subcommands.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Leave `wall_time_s` out so that records are byte-reproducible.
    #[arg(long, global = true)]
    pub omit_timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Solve the scalar fixed point for q.
    Q(QArgs),
    /// Closed-form and Monte Carlo free energy at one point.
    FreeEnergy(FreeEnergyArgs),
    /// Population dynamics from the polarized start.
    Popdyn(PopdynArgs),
    /// Condensation threshold β_c(k, d).
    BetaC(BetaCArgs),
    /// Smallest degree with a finite β_c.
    #[command(name = "d-c")]
    DC(DcArgs),
    /// Second-moment rate function on an α grid.
    MomentsScan(MomentsArgs),
    /// BP contraction experiment on random trees.
    TreeExp(TreeExpArgs),
    /// Tree estimate of the Bethe functional at depth ℓ.
    BetheLevel(BetheLevelArgs),
    /// Finite formulas.
    #[command(subcommand)]
    Formula(FormulaCommand),
    /// Render CSV columns to SVG.
    Plot(plot::PlotArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct QArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = model::TOL)]
    pub tol: f64,
}

#[derive(Args, Debug, Serialize, Clone, Copy)]
pub struct Point {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub beta: f64,
}

impl Point {
    fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.k, self.d, self.beta)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct PopArgs {
    /// Population size.
    #[arg(long = "N", default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct FreeEnergyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub point: Point,
    #[command(flatten)]
    #[serde(flatten)]
    pub pop: PopArgs,
    /// Draws per estimator term; defaults to 50 N.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct PopdynArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub point: Point,
    #[command(flatten)]
    #[serde(flatten)]
    pub pop: PopArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ThresholdArgs {
    #[arg(long = "N", default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 50)]
    pub samples_per_n: usize,
    /// Target bracket width.
    #[arg(long, default_value_t = 0.1)]
    pub tol: f64,
    /// Standard errors in the sign decision.
    #[arg(long, default_value_t = 3.0)]
    pub z: f64,
}

impl ThresholdArgs {
    fn config(&self, seed: u64) -> ThresholdConfig {
        let mut c = ThresholdConfig::new(self.n, seed);
        c.max_iters = self.max_iters;
        c.samples_per_n = self.samples_per_n;
        c.tol = self.tol;
        c.z = self.z;
        c
    }
}

#[derive(Args, Debug, Serialize)]
pub struct BetaCArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub beta_lo: Option<f64>,
    #[arg(long)]
    pub beta_hi: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub threshold: ThresholdArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct DcArgs {
    #[arg(long)]
    pub k: usize,
    /// Ascending even degrees.
    #[arg(long, value_delimiter = ',', required = true)]
    pub d: Vec<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub threshold: ThresholdArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub point: Point,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryArg {
    AllPlus,
    Population,
    Synthetic,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineArg {
    Auto,
    Exact,
    Pooled,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Auto => Engine::Auto,
            EngineArg::Exact => Engine::Exact,
            EngineArg::Pooled => Engine::Pooled,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionArg {
    NuPlus,
    OwnLabel,
}

#[derive(Args, Debug, Serialize)]
pub struct TreeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub point: Point,
    #[arg(long)]
    pub ell: usize,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
    pub engine: EngineArg,
    /// Population size when `--boundary population` is used.
    #[arg(long = "N", default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct TreeExpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeArgs,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Synthetic)]
    pub boundary: BoundaryArg,
    #[arg(long, default_value_t = gwtree::DEFAULT_POOL)]
    pub pool: usize,
    #[arg(long, value_enum, default_value_t = ConventionArg::NuPlus)]
    pub convention: ConventionArg,
}

#[derive(Args, Debug, Serialize)]
pub struct BetheLevelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeArgs,
    #[arg(long, value_enum, default_value_t = BoundaryArg::AllPlus)]
    pub boundary: BoundaryArg,
}

/// Where a formula comes from: a file or a fresh regular instance.
#[derive(Args, Debug, Serialize)]
pub struct Source {
    /// Formula file in the `p rksat` text format.
    #[arg(long, conflicts_with_all = ["n", "k", "d"])]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
}

impl Source {
    fn load(&self, seed: u64) -> Result<Formula> {
        if let Some(p) = &self.input {
            return Formula::read(BufReader::new(File::open(p)?));
        }
        match (self.n, self.k, self.d) {
            (Some(n), Some(k), Some(d)) => formula::generate(n, k, d, seed),
            _ => Err(Error::Precondition("either --input or all of --n, --k, --d are required".into())),
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct Regular {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub d: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StickyFrom {
    /// Every variable.
    All,
    /// Variables outside the λ-core.
    NonCore,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
pub enum FormulaCommand {
    /// Generate a regular formula; prints it unless --write is given.
    Gen {
        #[command(flatten)]
        #[serde(flatten)]
        size: Regular,
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Exact ln Z, marginals and energy histogram.
    Exact {
        #[command(flatten)]
        #[serde(flatten)]
        source: Source,
        #[arg(long)]
        beta: f64,
    },
    /// Gibbs weight of the shell around all-ones.
    Cluster {
        #[command(flatten)]
        #[serde(flatten)]
        source: Source,
        #[arg(long)]
        beta: f64,
    },
    /// Rejection sample from the planted model.
    Planted {
        #[command(flatten)]
        #[serde(flatten)]
        size: Regular,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Loopy BP marginals and the Bethe functional at them.
    Bp {
        #[command(flatten)]
        #[serde(flatten)]
        source: Source,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[arg(long, default_value_t = 0.0)]
        damping: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// λ-core.
    Core {
        #[command(flatten)]
        #[serde(flatten)]
        source: Source,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        beta: f64,
    },
    /// Maximal λ-sticky subset.
    Sticky {
        #[command(flatten)]
        #[serde(flatten)]
        source: Source,
        #[arg(long)]
        lambda: f64,
        /// Inverse temperature of the core when starting from non-core variables.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = StickyFrom::NonCore)]
        from: StickyFrom,
    },
    /// Exact annealed first moment.
    Annealed {
        #[command(flatten)]
        #[serde(flatten)]
        size: Regular,
        #[arg(long)]
        beta: f64,
        /// Tilt of the counting measure (the result does not depend on it).
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Q(_) => "q",
            Command::FreeEnergy(_) => "free-energy",
            Command::Popdyn(_) => "popdyn",
            Command::BetaC(_) => "beta-c",
            Command::DC(_) => "d-c",
            Command::MomentsScan(_) => "moments-scan",
            Command::TreeExp(_) => "tree-exp",
            Command::BetheLevel(_) => "bethe-level",
            Command::Formula(f) => match f {
                FormulaCommand::Gen { .. } => "formula gen",
                FormulaCommand::Exact { .. } => "formula exact",
                FormulaCommand::Cluster { .. } => "formula cluster",
                FormulaCommand::Planted { .. } => "formula planted",
                FormulaCommand::Bp { .. } => "formula bp",
                FormulaCommand::Core { .. } => "formula core",
                FormulaCommand::Sticky { .. } => "formula sticky",
                FormulaCommand::Annealed { .. } => "formula annealed",
            },
            Command::Plot(_) => "plot",
        }
    }
}

/// What a subcommand produced.
struct Outcome {
    result: Value,
    converged: bool,
    /// CSV rendering for tabular subcommands.
    csv: Option<String>,
    /// Text written instead of a record (formula files).
    raw: Option<String>,
}

impl Outcome {
    fn new(result: impl Serialize) -> Result<Self> {
        Ok(Outcome {
            result: to_value(result)?,
            converged: true,
            csv: None,
            raw: None,
        })
    }

    fn converged(mut self, c: bool) -> Self {
        self.converged = c;
        self
    }

    fn csv(mut self, s: String) -> Self {
        self.csv = Some(s);
        self
    }
}

fn to_value(v: impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.into()))
}

#[derive(Serialize)]
struct Record<'a> {
    schema_version: u32,
    command: &'a str,
    params: &'a Command,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
    converged: bool,
    result: &'a Value,
}

/// Resolves an output path against `$RKSAT_OUT_DIR`.
pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf> {
    let p = resolve_out(path);
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&p, text)?;
    Ok(p)
}

fn csv_lines<T>(header: &str, rows: impl IntoIterator<Item = T>, row: impl Fn(T) -> String) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&row(r));
        s.push('\n');
    }
    s
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Precondition(_) | Error::Parse { .. } => 2,
        Error::NonConvergence { .. } => 3,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match &cli.command {
        Command::Q(a) => {
            if a.k < 3 {
                return Err(Error::Precondition(format!("k must be at least 3 (got {})", a.k)));
            }
            let c = model::c_beta(a.beta);
            let q = model::solve_q_c(a.k, c, a.tol)?;
            Outcome::new(json!({
                "q": q,
                "c_beta": c,
                "residual": model::q_residual(a.k, c, q),
                "q_asymptotic": model::q_asymptotic(a.k, a.beta),
            }))
        }
        Command::FreeEnergy(a) => {
            let p = a.point.params()?;
            let samples = a.samples.unwrap_or(50 * a.pop.n);
            let e = bethe::bethe_estimate(p, a.pop.n, a.pop.max_iters, samples, seed)?;
            let converged = e.converged;
            Ok(Outcome::new(json!({
                "F_closed": e.f_closed,
                "rate_f1": moments::rate_f1(&p),
                "F_mc": e.f_mc.f_mc,
                "B_mc": e.b_mc.b,
                "terms_F": e.f_mc.terms,
                "terms_B": e.b_mc.terms,
                "q": p.q,
                "N": e.n,
                "samples": samples,
                "iterations": e.iterations,
            }))?
            .converged(converged))
        }
        Command::Popdyn(a) => {
            let p = a.point.params()?;
            let run = population::run_popdyn(p, a.pop.n, a.pop.max_iters, seed)?;
            let q = &run.quad;
            let mixed = population::mix(q);
            let csv = csv_lines("iteration,w1", run.w1_trace.iter().enumerate(), |(i, w)| format!("{},{w}", i + 1));
            Ok(Outcome::new(json!({
                "q": p.q,
                "iterations": run.iterations,
                "final_w1": run.final_w1,
                "mean_pi_minus": q.p_minus.mean(),
                "mean_pi_plus": q.p_plus.mean(),
                "mean_pihat_minus": q.phat_minus.mean(),
                "mean_pihat_plus": q.phat_plus.mean(),
                "mean_pi": mixed.mean(),
                "mean_pi_stderr": mixed.mean_stderr(),
                "skew": population::is_skewed(&mixed, &p),
                "clamped": q.diagnostics.clamped,
                "w1_trace": run.w1_trace,
            }))?
            .converged(run.converged)
            .csv(csv))
        }
        Command::BetaC(a) => {
            let mut scan = BetaScan::default_for(a.k);
            scan.lo = a.beta_lo.unwrap_or(scan.lo);
            scan.hi = a.beta_hi.unwrap_or(scan.hi);
            scan.points = a.points.unwrap_or(scan.points);
            let r = bethe::find_beta_c(a.k, a.d, scan, a.threshold.config(seed))?;
            let converged = r.trace.iter().chain(&r.refinements).all(|p| p.converged);
            let mut csv = Vec::new();
            bethe::write_delta_csv(&r.trace, &mut csv)?;
            Ok(Outcome::new(&r)?
                .converged(converged)
                .csv(String::from_utf8_lossy(&csv).into_owned()))
        }
        Command::DC(a) => {
            let r = bethe::find_d_c(a.k, &a.d, a.threshold.config(seed))?;
            let csv = csv_lines("d,beta_c", r.table.iter(), |(d, b)| {
                format!("{d},{}", b.map_or("inf".to_string(), |x| x.to_string()))
            });
            Ok(Outcome::new(&r)?.csv(csv))
        }
        Command::MomentsScan(a) => {
            let p = a.point.params()?;
            let s = moments::scan_second_moment(&p, &moments::alpha_grid(a.points))?;
            let mut csv = Vec::new();
            moments::write_csv(&s.points, &mut csv)?;
            let ok = s.failures.is_empty();
            Ok(Outcome::new(&s)?
                .converged(ok)
                .csv(String::from_utf8_lossy(&csv).into_owned()))
        }
        Command::TreeExp(a) => {
            let p = a.tree.point.params()?;
            let quad = boundary_quad(&p, a.boundary, &a.tree, seed)?;
            let mut cfg = ContractionConfig::new(&p, a.tree.ell, a.tree.trials, seed);
            cfg.boundary = boundary_spec(&p, a.boundary, quad.as_ref());
            cfg.engine = a.tree.engine.into();
            cfg.pool = a.pool;
            cfg.convention = match a.convention {
                ConventionArg::NuPlus => HConvention::NuPlus,
                ConventionArg::OwnLabel => HConvention::OwnLabel,
            };
            let r = gwtree::contraction_experiment(&p, &cfg)?;
            let csv = csv_lines("trial,diff", r.diffs.iter().enumerate(), |(i, d)| format!("{i},{d}"));
            Ok(Outcome::new(&r)?.csv(csv))
        }
        Command::BetheLevel(a) => {
            let p = a.tree.point.params()?;
            let quad = boundary_quad(&p, a.boundary, &a.tree, seed)?;
            let spec = boundary_spec(&p, a.boundary, quad.as_ref());
            let r = gwtree::estimate_b_level(&p, a.tree.ell, a.tree.trials, spec, a.tree.engine.into(), seed)?;
            let mut v = to_value(&r)?;
            v["F_closed"] = json!(model::closed_form_f(&p));
            Outcome::new(v)
        }
        Command::Formula(f) => formula_command(f, seed),
        Command::Plot(a) => plot::run(a),
    }
}

fn boundary_quad(p: &ModelParams, b: BoundaryArg, t: &TreeArgs, seed: u64) -> Result<Option<PopulationQuad>> {
    if b != BoundaryArg::Population {
        return Ok(None);
    }
    Ok(Some(population::run_popdyn(*p, t.n, t.max_iters, seed)?.quad))
}

fn boundary_spec<'a>(p: &ModelParams, b: BoundaryArg, quad: Option<&'a PopulationQuad>) -> BoundarySpec<'a> {
    match (b, quad) {
        (BoundaryArg::Population, Some(q)) => BoundarySpec::Population(q),
        (BoundaryArg::Synthetic, _) => BoundarySpec::synthetic(p.k),
        _ => BoundarySpec::AllPlus,
    }
}

fn formula_summary(f: &Formula) -> Value {
    json!({
        "n": f.n,
        "m": f.m(),
        "k": f.k,
        "d": f.d,
        "seed": f.seed,
        "energy_all_ones": f.energy_all_ones(),
        "repeated_variable_clauses": f.repeated_variable_clauses(),
    })
}

fn formula_command(cmd: &FormulaCommand, seed: u64) -> Result<Outcome> {
    match cmd {
        FormulaCommand::Gen { size, write } => {
            let f = formula::generate(size.n, size.k, size.d, seed)?;
            emit_formula(&f, write.as_deref(), json!({ "formula": formula_summary(&f) }))
        }
        FormulaCommand::Exact { source, beta } => {
            let f = source.load(seed)?;
            let g = formula::exact_gibbs(&f, *beta)?;
            let mut v = to_value(&g)?;
            v["formula"] = formula_summary(&f);
            Outcome::new(v)
        }
        FormulaCommand::Cluster { source, beta } => {
            let f = source.load(seed)?;
            let s = formula::energy_spectrum(&f)?;
            let max_minus = formula::shell_max_minus(f.n, f.k);
            Outcome::new(json!({
                "formula": formula_summary(&f),
                "beta": beta,
                "ln_cluster": s.ln_shell(*beta, max_minus),
                "ln_z": s.ln_z(*beta),
                "shell_max_minus": max_minus,
            }))
        }
        FormulaCommand::Planted { size, beta, budget, write } => {
            let draw = formula::planted_sample(size.n, size.k, size.d, *beta, seed, *budget)?;
            let f = &draw.formula;
            emit_formula(
                f,
                write.as_deref(),
                json!({ "formula": formula_summary(f), "trials": draw.trials }),
            )
        }
        FormulaCommand::Bp {
            source,
            beta,
            max_iters,
            damping,
            tol,
        } => {
            let f = source.load(seed)?;
            let r = formula::loopy_bp(&f, *beta, *max_iters, *damping, *tol)?;
            let bethe = formula::bethe_free_energy(&f, *beta, &r.marginals).ok();
            let converged = r.converged;
            let mut v = to_value(&r)?;
            v["bethe"] = json!(bethe);
            v["formula"] = formula_summary(&f);
            Ok(Outcome::new(v)?.converged(converged))
        }
        FormulaCommand::Core { source, lambda, beta } => {
            let f = source.load(seed)?;
            let c = formula::core(&f, *lambda, *beta);
            let mut v = to_value(&c)?;
            v["formula"] = formula_summary(&f);
            Outcome::new(v)
        }
        FormulaCommand::Sticky {
            source,
            lambda,
            beta,
            from,
        } => {
            let f = source.load(seed)?;
            let candidates = match from {
                StickyFrom::All => vec![true; f.n],
                StickyFrom::NonCore => formula::core(&f, *lambda, *beta).members.iter().map(|&m| !m).collect(),
            };
            let s = formula::max_sticky(&f, *lambda, &candidates);
            Outcome::new(json!({
                "formula": formula_summary(&f),
                "candidates": candidates.iter().filter(|&&b| b).count(),
                "size": s.iter().filter(|&&b| b).count(),
                "members": s,
            }))
        }
        FormulaCommand::Annealed { size, beta, theta } => {
            let ln_ez = formula::annealed_ez_theta(size.n, size.k, size.d, *beta, *theta)?;
            let p = ModelParams::new(size.k, size.d, *beta)?;
            Outcome::new(json!({
                "ln_ez": ln_ez,
                "per_variable": ln_ez / size.n as f64,
                "richardson": formula::annealed_richardson(size.n, size.k, size.d, *beta)?,
                "F_closed": model::closed_form_f(&p),
            }))
        }
    }
}

fn emit_formula(f: &Formula, write: Option<&Path>, mut v: Value) -> Result<Outcome> {
    match write {
        Some(path) => {
            let p = write_file(path, &f.to_text())?;
            v["path"] = json!(p);
            Outcome::new(v)
        }
        None => {
            let mut o = Outcome::new(v)?;
            o.raw = Some(f.to_text());
            Ok(o)
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// writes its output. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let outcome = pool.install(|| dispatch(cli))?;
    let elapsed = start.elapsed().as_secs_f64();

    let text = if let Some(raw) = &outcome.raw {
        raw.clone()
    } else if cli.csv {
        outcome.csv.clone().ok_or_else(|| {
            Error::Precondition(format!("`{}` has no tabular output; drop --csv", cli.command.name()))
        })?
    } else {
        let rec = Record {
            schema_version: SCHEMA_VERSION,
            command: cli.command.name(),
            params: &cli.command,
            seed: cli.seed,
            wall_time_s: (!cli.omit_timing).then_some(elapsed),
            converged: outcome.converged,
            result: &outcome.result,
        };
        let mut s = serde_json::to_string(&rec).map_err(|e| Error::Io(e.into()))?;
        s.push('\n');
        s
    };
    match &cli.out {
        Some(path) => {
            write_file(path, &text)?;
        }
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(if outcome.converged { 0 } else { 3 })
}
