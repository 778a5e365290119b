//! Two-player optimal stopping solver.
//!
//! Sub-problem `k` starts from a transmission at `k − 1` (the origin of its
//! own frame) and covers stages `k..=N`. At each stage the sensing unit
//! either transmits, paying the stopping cost `c'_j`, or stays silent and
//! pays the squared metric error of the estimator's fixed guess. The solver
//! alternates best responses between threshold policies and estimates until
//! the expected cost stalls, then chains sub-problems backward to fill in the
//! stopping costs.

mod chain;
mod grid;
mod subproblem;

use serde::{Deserialize, Serialize};

pub use chain::{solve_chain, strict_nondegeneracy_report, ChainSolution, NondegeneracyReport};
pub use grid::{Corner, GridGeometry, ValueGrid, Window};
pub use subproblem::{continuation_value, Solver, SubproblemSolution};

use crate::error::{Error, Result};
use crate::geometry::{distance_squared, State};

/// Stopping threshold on successive changes of the expected cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// Multiple of the sub-problem's first stopping cost.
    Relative(f64),
    Absolute(f64),
}

impl Tolerance {
    pub fn resolve(&self, first_stopping_cost: f64) -> f64 {
        match *self {
            Tolerance::Relative(r) => r * first_stopping_cost,
            Tolerance::Absolute(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridResolution {
    /// Nodes per position axis.
    pub position: usize,
    pub heading: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub eta: Tolerance,
    pub max_iters: usize,
    pub grid: GridResolution,
    /// Particles used for the no-transmission initial estimates.
    pub particles: usize,
    /// Noise draws per stage for every expectation.
    pub bank_size: usize,
    pub seed: u64,
    /// Conditional silence probability below which a solve aborts.
    pub eps_deg: f64,
    /// Conditional silence probability below which a warning is logged.
    pub eps_strict: f64,
    /// Box half-width beyond the stopping-cost ball, in speed standard
    /// deviations.
    pub margin_sd: f64,
    /// Passes allowed for re-centering boxes on moved estimates.
    pub max_passes: usize,
    /// Start sub-problem `k` from the solution of `k + 1` instead of the
    /// no-transmission means.
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: Tolerance::Relative(1e-4),
            max_iters: 100,
            grid: GridResolution {
                position: 41,
                heading: 16,
            },
            particles: 4096,
            bank_size: 512,
            seed: 0,
            eps_deg: 1e-6,
            eps_strict: 1e-3,
            margin_sd: 3.0,
            max_passes: 4,
            warm_start: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let eta = match self.eta {
            Tolerance::Relative(v) | Tolerance::Absolute(v) => v,
        };
        let fail = |msg: String| Err(Error::Config(msg));
        if !(eta >= 0.0) {
            return fail(format!("eta must be >= 0, got {eta}"));
        }
        if self.max_iters == 0 {
            return fail("max_iters must be >= 1".into());
        }
        if self.grid.position < 2 || self.grid.heading < 4 {
            return fail(format!(
                "grid needs >= 2 position nodes and >= 4 headings, got {}x{}",
                self.grid.position, self.grid.heading
            ));
        }
        if self.particles == 0 || self.bank_size == 0 {
            return fail("particles and bank_size must be >= 1".into());
        }
        if !(self.eps_deg > 0.0 && self.eps_deg < 1.0) {
            return fail(format!("eps_deg must lie in (0, 1), got {}", self.eps_deg));
        }
        if !(self.eps_strict >= 0.0 && self.eps_strict <= 1.0) {
            return fail(format!("eps_strict must lie in [0, 1], got {}", self.eps_strict));
        }
        if !(self.margin_sd.is_finite() && self.margin_sd >= 0.0) {
            return fail(format!("margin_sd must be finite and >= 0, got {}", self.margin_sd));
        }
        if self.max_passes == 0 {
            return fail("max_passes must be >= 1".into());
        }
        Ok(())
    }
}

/// Policy and estimate for one stage of a sub-problem, in that sub-problem's
/// frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSolution {
    pub stage: usize,
    pub estimate: State,
    pub stopping_cost: f64,
    /// Expected optimal cost-to-go after staying silent, tabulated over the
    /// stage state. Absent at the last stage.
    pub continuation: Option<ValueGrid>,
}

impl StageSolution {
    pub fn continuation_at(&self, x: &State) -> f64 {
        self.continuation.as_ref().map_or(0.0, |g| g.interpolate(x))
    }

    /// Silence is (weakly) preferred: the running error plus the expected
    /// cost-to-go does not exceed the stopping cost. States outside the
    /// stopping-cost ball around the estimate always transmit.
    #[inline]
    pub fn no_transmit(&self, x: &State) -> bool {
        let d2 = distance_squared(x, &self.estimate);
        d2 <= self.stopping_cost && d2 + self.continuation_at(x) <= self.stopping_cost
    }

    /// Optimal cost-to-go from `x` at this stage.
    #[inline]
    pub fn value(&self, x: &State) -> f64 {
        let d2 = distance_squared(x, &self.estimate);
        if d2 > self.stopping_cost {
            return self.stopping_cost;
        }
        (d2 + self.continuation_at(x)).min(self.stopping_cost)
    }
}
