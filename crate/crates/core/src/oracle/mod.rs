//! Exact sampling probabilities of the standard two-locus model.
//!
//! Two independent routes are provided: [`RecursionSystem`], which assembles
//! the typed recursion literally and solves it as one sparse system, and
//! [`PimBlockSolver`], which exploits parent-independent mutation to solve
//! the same equations block by block. [`q_exact`] uses the block solver.

mod block;
mod cache;
mod system;

pub use block::{BlockDiagnostics, PimBlockSolver};
pub use cache::{params_hash, ExactCache};
pub use system::{
    reachable_states, RecursionSystem, SolveDiagnostics, SolveMethod, SolveOptions,
    DEFAULT_STATE_CAP,
};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SampleConfig};

/// Exact ordered sampling probability of `cfg` at `p.rho`.
pub fn q_exact(cfg: &SampleConfig, p: &ModelParams) -> Result<f64> {
    q_exact_with(cfg, p, &SolveOptions::default())
}

pub fn q_exact_with(cfg: &SampleConfig, p: &ModelParams, opts: &SolveOptions) -> Result<f64> {
    let solver = PimBlockSolver::new(p, *opts)?;
    let (q, _) = solver.solve(std::slice::from_ref(cfg))?;
    Ok(q[0])
}

/// Percentage relative error `|approx - exact| / exact * 100`.
pub fn relative_error(approx: f64, exact: f64) -> Result<f64> {
    if exact == 0.0 {
        return Err(Error::ZeroExact);
    }
    Ok((approx - exact).abs() / exact.abs() * 100.0)
}
