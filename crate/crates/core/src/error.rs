use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// `Precondition` covers every invalid-parameter case and maps to exit
/// code 2 in the command-line front end; `NonConvergence` maps to 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bisection bracket failure: g({lo}) = {g_lo}, g({hi}) = {g_hi}")]
    Bracket {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("branch weights sum to {sum} (expected 1)")]
    Normalization { sum: f64 },

    #[error("no convergence after {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("accumulator underflow in {0}; increase the population or sample size")]
    Underflow(&'static str),

    #[error("trial budget of {0} exhausted before acceptance")]
    TrialBudget(u64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(msg()))
    }
}
