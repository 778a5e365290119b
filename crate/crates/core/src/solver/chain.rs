//! Backward chain over sub-problems and the stopping-cost recursion.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::subproblem::{Solver, SubproblemSolution};
use super::SolverConfig;
use crate::dynamics::SppModel;
use crate::error::{Error, Result};
use crate::geometry::{from_relative, State};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSolution {
    pub costs: Vec<f64>,
    /// `c'_j` for `j = 1..=N` (index `j − 1`).
    pub c_prime: Vec<f64>,
    /// Sub-problem `k` at index `k − 1`.
    pub subproblems: Vec<SubproblemSolution>,
}

impl ChainSolution {
    pub fn horizon(&self) -> usize {
        self.costs.len()
    }

    pub fn converged(&self) -> bool {
        self.subproblems.iter().all(|s| s.converged)
    }
}

/// Initial estimates for sub-problem `k` from the solution of `k + 1`: the
/// same offsets from the last transmission, with the one missing stage
/// obtained by composing the last estimate with the first relative step.
fn warm_start(next: &SubproblemSolution) -> Vec<State> {
    let mut est = next.estimates();
    let last = *est.last().expect("sub-problems have at least one stage");
    est.push(from_relative(&last, &est[0]));
    est
}

/// Solves sub-problems `N, N−1, …, 1`, setting `c'_N = c_N` and
/// `c'_j = c_j + G_{j+1}` where `G_{j+1}` is the cost achieved by
/// sub-problem `j + 1`.
pub fn solve_chain(model: &SppModel, costs: &[f64], config: &SolverConfig) -> Result<ChainSolution> {
    let n = costs.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "at least one transmission cost is required".into(),
        ));
    }
    if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "transmission costs must be finite and > 0, got {c}"
        )));
    }
    let solver = Solver::new(*model, n, config.clone())?;
    let mut c_prime = costs.to_vec();
    let mut solved: Vec<SubproblemSolution> = Vec::with_capacity(n);
    for k in (1..=n).rev() {
        if k < n {
            c_prime[k - 1] = costs[k - 1] + solved.last().expect("k + 1 solved").achieved_cost;
        }
        let init = match solved.last() {
            Some(next) if config.warm_start => Some(warm_start(next)),
            _ => None,
        };
        let sub = solver.solve_subproblem(k, &c_prime[k - 1..], init)?;
        info!(
            "sub-problem {k}: cost {:.6} after {} iterations{}",
            sub.achieved_cost,
            sub.iterations,
            if sub.converged { "" } else { " (not converged)" }
        );
        solved.push(sub);
    }
    solved.reverse();
    Ok(ChainSolution {
        costs: costs.to_vec(),
        c_prime,
        subproblems: solved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    /// Smallest conditional silence probability seen in each sub-problem.
    pub per_subproblem: Vec<f64>,
    pub minimum: f64,
    pub below_strict: bool,
}

pub fn strict_nondegeneracy_report(chain: &ChainSolution, eps_strict: f64) -> NondegeneracyReport {
    let per_subproblem: Vec<f64> = chain.subproblems.iter().map(|s| s.min_survival()).collect();
    let minimum = per_subproblem.iter().copied().fold(1.0, f64::min);
    let below_strict = minimum < eps_strict;
    if below_strict {
        warn!("minimum silence probability {minimum:.3e} is below {eps_strict:.3e}");
    }
    NondegeneracyReport {
        per_subproblem,
        minimum,
        below_strict,
    }
}
