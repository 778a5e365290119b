//! Alternating best responses within one sub-problem.
//!
//! Expectations use a fixed noise bank. The continuation at stage `j` is
//! tabulated on a grid, and the forward pass that produces the best-response
//! estimates moves silent mass onto the same grid nodes (with the same
//! trilinear weights the interpolation uses) before pushing it through the
//! next stage's draws. Policy evaluation and estimate computation therefore
//! describe one and the same finite Markov chain, and the expected cost can
//! only fall from one iteration to the next.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::grid::{tabulate_near, GridGeometry};
use super::{SolverConfig, StageSolution};
use crate::belief::{expand, point_estimate, policy_update, process_update, ParticleCloud, StageTag};
use crate::dynamics::{make_noise_bank, step_unchecked, NoiseBank, SppModel};
use crate::error::{Error, Result};
use crate::geometry::{distance, State};

/// Expected optimal cost-to-go after a silent step from `x` into `stage`,
/// averaged over the bank row of that stage. Zero past the last stage.
pub fn continuation_value(next: Option<&StageSolution>, x: &State, bank: &NoiseBank, stage: usize) -> f64 {
    let Some(next) = next else {
        return 0.0;
    };
    let row = bank.row(stage);
    let total: f64 = row
        .iter()
        .map(|d| next.value(&step_unchecked(x, d.speed, d.turn)))
        .sum();
    total / row.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub k: usize,
    pub stages: Vec<StageSolution>,
    /// Expected cost at convergence, starting from the origin at `k − 1`.
    pub achieved_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Expected cost before the first and after every iteration, one list
    /// per pass. Boxes are fixed within a pass.
    pub history: Vec<Vec<f64>>,
    /// Conditional silence probabilities per iteration and stage.
    pub survivals: Vec<Vec<f64>>,
}

impl SubproblemSolution {
    pub fn estimates(&self) -> Vec<State> {
        self.stages.iter().map(|s| s.estimate).collect()
    }

    pub fn min_survival(&self) -> f64 {
        self.survivals.iter().flatten().copied().fold(1.0, f64::min)
    }
}

/// Successors of lattice nodes. Entry `((stage − 1)·nθ + it)·M + m` holds the
/// position increment and new heading after draw `m` of `stage` from heading
/// node `it`, computed exactly as [`crate::dynamics::step`] would.
#[derive(Debug, Clone)]
struct LatticeMoves {
    ntheta: usize,
    per_stage: usize,
    moves: Vec<(f64, f64, f64)>,
}

impl LatticeMoves {
    fn new(bank: &NoiseBank, ntheta: usize) -> Self {
        let ht = std::f64::consts::TAU / ntheta as f64;
        let mut moves = Vec::with_capacity(bank.stages() * ntheta * bank.per_stage());
        for stage in 1..=bank.stages() {
            for it in 0..ntheta {
                let from = State::from_parts_unchecked(0.0, 0.0, ht * it as f64);
                for d in bank.row(stage) {
                    let heading = from.theta() + d.turn;
                    let (s, c) = heading.sin_cos();
                    moves.push((d.speed * c, d.speed * s, crate::geometry::wrap(heading)));
                }
            }
        }
        Self {
            ntheta,
            per_stage: bank.per_stage(),
            moves,
        }
    }

    #[inline]
    fn successors(&self, stage: usize, it: usize) -> &[(f64, f64, f64)] {
        let start = ((stage - 1) * self.ntheta + it) * self.per_stage;
        &self.moves[start..start + self.per_stage]
    }

    /// Bank average of `next.value` over the successors of a lattice node.
    fn continuation(&self, next: &StageSolution, node: &State, it: usize, stage: usize) -> f64 {
        let row = self.successors(stage, it);
        let total: f64 = row
            .iter()
            .map(|&(dx, dy, th)| next.value(&State::from_parts_unchecked(node.p1 + dx, node.p2 + dy, th)))
            .sum();
        total / row.len() as f64
    }
}

/// Outcome of one backward sweep.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub stages: Vec<StageSolution>,
    /// Expected cost from the origin.
    pub cost: f64,
    /// Position radius outside of which silence is never optimal, per stage.
    pub radii: Vec<f64>,
    pub geometries: Vec<GridGeometry>,
}

/// Shared state for all sub-problems of one horizon: the model, the noise
/// bank that drives every expectation and the particle bank used for the
/// no-transmission estimates.
#[derive(Debug, Clone)]
pub struct Solver {
    model: SppModel,
    horizon: usize,
    config: SolverConfig,
    bank: NoiseBank,
    particle_bank: NoiseBank,
    moves: LatticeMoves,
}

/// Seed offset separating the particle bank from the solver bank.
const PARTICLE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

impl Solver {
    pub fn new(model: SppModel, horizon: usize, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        let bank = make_noise_bank(&model, horizon, config.bank_size, config.seed)?;
        let particle_bank = make_noise_bank(
            &model,
            horizon,
            config.particles,
            config.seed.wrapping_add(PARTICLE_SEED_OFFSET),
        )?;
        let moves = LatticeMoves::new(&bank, config.grid.heading);
        Ok(Self {
            model,
            horizon,
            config,
            bank,
            particle_bank,
            moves,
        })
    }

    pub fn model(&self) -> &SppModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn bank(&self) -> &NoiseBank {
        &self.bank
    }

    fn check_stages(&self, k: usize, len: usize) -> Result<()> {
        if k == 0 || k > self.horizon || len != self.horizon - k + 1 {
            return Err(Error::InvalidArgument(format!(
                "sub-problem {k} of horizon {} has the wrong number of stage values ({len})",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Conditional means given that nothing is transmitted after `k − 1`,
    /// from a cloud of `particles` propagated without any policy.
    pub fn no_transmit_means(&self, k: usize) -> Result<Vec<State>> {
        if k == 0 || k > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "sub-problem {k} outside horizon {}",
                self.horizon
            )));
        }
        let mut cloud = ParticleCloud::uniform(vec![State::ORIGIN; self.config.particles])?;
        let mut out = Vec::with_capacity(self.horizon - k + 1);
        let mut heading = 0.0;
        for j in k..=self.horizon {
            cloud = process_update(&cloud, &self.particle_bank, j)?;
            let est = point_estimate(&cloud, heading);
            heading = est.theta();
            out.push(est);
        }
        Ok(out)
    }

    /// Backward pass: the best-response policies to `estimates` and the
    /// expected cost they achieve from the origin.
    ///
    /// Silence at stage `j` requires `d² ≤ c'_j − c'_{j+1} + sup V_{j+1}`,
    /// where `V = c' − J` is the saving from staying silent; the supremum is
    /// bounded by `c'_{j+1}` minus the smallest tabulated continuation.
    /// Only nodes that can be a cell corner of such a state are evaluated.
    /// Without `geometries`, boxes are centred on the estimates with that
    /// radius plus the configured margin.
    pub fn evaluate_g(
        &self,
        k: usize,
        estimates: &[State],
        c_primes: &[f64],
        geometries: Option<&[GridGeometry]>,
    ) -> Result<Evaluation> {
        self.backward(k, estimates, c_primes, geometries, true)
    }

    fn backward(
        &self,
        k: usize,
        estimates: &[State],
        c_primes: &[f64],
        geometries: Option<&[GridGeometry]>,
        prune: bool,
    ) -> Result<Evaluation> {
        self.check_stages(k, estimates.len())?;
        self.check_stages(k, c_primes.len())?;
        let len = estimates.len();
        if let Some(g) = geometries {
            if g.len() + 1 != len {
                return Err(Error::InvalidArgument(format!(
                    "{len} stages need {} grids, got {}",
                    len - 1,
                    g.len()
                )));
            }
        }
        let margin = self.config.margin_sd * self.model.speed_std();
        let (n, nt) = (self.config.grid.position, self.config.grid.heading);
        let mut rev: Vec<StageSolution> = Vec::with_capacity(len);
        let mut radii = vec![0.0; len];
        let mut boxes = Vec::with_capacity(len.saturating_sub(1));
        let mut saving_bound = c_primes[len - 1];
        radii[len - 1] = c_primes[len - 1].sqrt();
        for idx in (0..len).rev() {
            let j = k + idx;
            let continuation = if idx + 1 == len {
                None
            } else {
                let c = c_primes[idx];
                let radius = (c - c_primes[idx + 1] + saving_bound).clamp(0.0, c).sqrt();
                radii[idx] = radius;
                let geo = match geometries {
                    Some(g) => g[idx],
                    None => GridGeometry::new(estimates[idx].position(), (radius + margin).max(1e-3), n, n, nt)?,
                };
                boxes.push(geo);
                if geo.shape().2 != nt {
                    return Err(Error::InvalidArgument(format!(
                        "grid has {} headings, solver uses {nt}",
                        geo.shape().2
                    )));
                }
                let next = rev.last().expect("later stage built first");
                let anchor = geo.clamp(&estimates[idx]);
                let reach = if prune {
                    radius + geo.cell_diagonal() * (1.0 + 1e-9) + 1e-9
                } else {
                    f64::INFINITY
                };
                let (grid, smallest) = tabulate_near(geo, j, c_primes[idx + 1], &anchor, reach, |it, node| {
                    self.moves.continuation(next, node, it, j + 1)
                });
                saving_bound = (c - smallest).max(0.0);
                Some(grid)
            };
            rev.push(StageSolution {
                stage: j,
                estimate: estimates[idx],
                stopping_cost: c_primes[idx],
                continuation,
            });
        }
        rev.reverse();
        boxes.reverse();
        let cost = continuation_value(rev.first(), &State::ORIGIN, &self.bank, k);
        Ok(Evaluation {
            stages: rev,
            cost,
            radii,
            geometries: boxes,
        })
    }

    /// Forward pass: estimates that are optimal for the given policies, and
    /// the conditional silence probability at every stage.
    pub fn best_response_estimates(
        &self,
        k: usize,
        policies: &[StageSolution],
        fallback: &[State],
    ) -> Result<(Vec<State>, Vec<f64>)> {
        self.check_stages(k, policies.len())?;
        let len = policies.len();
        let mut estimates = Vec::with_capacity(len);
        let mut survivals = Vec::with_capacity(len);
        let mut cloud = expand(&ParticleCloud::point(State::ORIGIN), &self.bank, k);
        for (idx, policy) in policies.iter().enumerate() {
            let j = k + idx;
            let tag = StageTag {
                sub_problem: k,
                stage: j,
            };
            let (silent, survival) = policy_update(cloud, |x| policy.no_transmit(x), self.config.eps_deg, tag)?;
            if survival < self.config.eps_strict {
                debug!("sub-problem {k} stage {j}: silence probability {survival:.3e}");
            }
            let heading = fallback.get(idx).map_or(policy.estimate.theta(), |x| x.theta());
            estimates.push(point_estimate(&silent, heading));
            survivals.push(survival);
            if idx + 1 == len {
                break;
            }
            let geo = policy
                .continuation
                .as_ref()
                .map(|g| *g.geometry())
                .ok_or_else(|| Error::InvalidArgument(format!("stage {j} has no continuation grid")))?;
            cloud = self.expand_nodes(&project(&silent, &geo), &geo, j + 1);
        }
        Ok((estimates, survivals))
    }

    fn check_bounded(
        &self,
        k: usize,
        estimates: &[State],
        c_primes: &[f64],
        geometries: &[GridGeometry],
    ) -> Result<()> {
        let slack = geometries.iter().map(|g| g.cell_diagonal()).fold(0.0, f64::max);
        for (idx, (x, c)) in estimates.iter().zip(c_primes).enumerate() {
            let dist = distance(&State::ORIGIN, x);
            let bound = c.sqrt().max(8f64.sqrt()) + (self.bank.max_speed() + slack) * (idx + 1) as f64;
            if !(dist <= bound) {
                return Err(Error::UnboundedEstimate {
                    sub_problem: k,
                    stage: k + idx,
                    distance: dist,
                    bound,
                });
            }
        }
        Ok(())
    }

    /// Alternating best responses for sub-problem `k`, starting
    /// from `init` or, when absent, from the no-transmission means.
    pub fn solve_subproblem(&self, k: usize, c_primes: &[f64], init: Option<Vec<State>>) -> Result<SubproblemSolution> {
        self.check_stages(k, c_primes.len())?;
        if let Some(c) = c_primes.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "stopping costs must be finite and > 0, got {c}"
            )));
        }
        let mut estimates = match init {
            Some(v) => {
                self.check_stages(k, v.len())?;
                v
            }
            None => self.no_transmit_means(k)?,
        };
        let eta = self.config.eta.resolve(c_primes[0]);
        let mut history = Vec::new();
        let mut survivals = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let mut result = None;

        for pass in 0..self.config.max_passes {
            let first = self.evaluate_g(k, &estimates, c_primes, None)?;
            let geometries = first.geometries.clone();
            let mut current = first;
            let mut trace = vec![current.cost];
            let mut pass_converged = false;
            while iterations < self.config.max_iters {
                iterations += 1;
                let (next, surv) = self.best_response_estimates(k, &current.stages, &estimates)?;
                self.check_bounded(k, &next, c_primes, &geometries)?;
                let evaluated = self.evaluate_g(k, &next, c_primes, Some(&geometries))?;
                trace.push(evaluated.cost);
                survivals.push(surv);
                if evaluated.cost > current.cost + 1e-9 {
                    warn!(
                        "sub-problem {k}: expected cost rose from {} to {}",
                        current.cost, evaluated.cost
                    );
                }
                let delta = (current.cost - evaluated.cost).abs();
                estimates = next;
                current = evaluated;
                if delta <= eta {
                    pass_converged = true;
                    break;
                }
            }
            debug!(
                "sub-problem {k} pass {pass}: {} iterations, cost {}",
                trace.len() - 1,
                current.cost
            );
            history.push(trace);
            let escaped = geometries
                .iter()
                .zip(&estimates)
                .zip(&current.radii)
                .any(|((geo, x), r)| {
                    let (h, _, _) = geo.spacing();
                    !geo.holds_disc(x, *r, h)
                });
            result = Some((current.stages, current.cost));
            if !pass_converged {
                break;
            }
            converged = true;
            if !escaped {
                break;
            }
            if pass + 1 < self.config.max_passes && iterations < self.config.max_iters {
                info!("sub-problem {k}: estimates left their boxes, re-centering");
            } else {
                warn!("sub-problem {k}: estimates near box faces after {} passes", pass + 1);
                break;
            }
        }

        let (stages, achieved_cost) = result.expect("at least one pass runs");
        if !converged {
            warn!(
                "sub-problem {k}: no convergence within {} iterations",
                self.config.max_iters
            );
        }
        Ok(SubproblemSolution {
            k,
            stages,
            achieved_cost,
            iterations,
            converged,
            history,
            survivals,
        })
    }
}

impl Solver {
    /// Pushes node masses through every draw of `stage`; each child carries
    /// `mass / M`, as in [`crate::belief::expand`].
    fn expand_nodes(&self, nodes: &[(usize, f64)], geometry: &GridGeometry, stage: usize) -> ParticleCloud {
        let m = self.moves.per_stage;
        let mut states = Vec::with_capacity(nodes.len() * m);
        let mut weights = Vec::with_capacity(nodes.len() * m);
        for &(idx, mass) in nodes {
            let node = geometry.node(idx);
            let (_, _, it) = geometry.unravel(idx);
            let w = mass / m as f64;
            for &(dx, dy, th) in self.moves.successors(stage, it) {
                states.push(State::from_parts_unchecked(node.p1 + dx, node.p2 + dy, th));
                weights.push(w);
            }
        }
        ParticleCloud::from_parts_unchecked(states, weights)
    }
}

/// Moves the mass of every particle onto the corners of its grid cell;
/// returns `(node index, mass)` for every node that received mass.
fn project(cloud: &ParticleCloud, geometry: &GridGeometry) -> Vec<(usize, f64)> {
    let mut mass = vec![0.0; geometry.len()];
    for (x, w) in cloud.iter() {
        if w == 0.0 {
            continue;
        }
        for (idx, cw) in geometry.corners(x) {
            mass[idx] += w * cw;
        }
    }
    mass.into_iter().enumerate().filter(|(_, m)| *m > 0.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::distance_squared;
    use crate::noise::{WeibullParams, WrappedCauchyParams};
    use crate::solver::{GridResolution, Tolerance, ValueGrid};

    fn reference_model() -> SppModel {
        SppModel::new(
            WeibullParams::new(1.35, 4.66).unwrap(),
            WrappedCauchyParams::new(0.65, 0.0).unwrap(),
        )
    }

    fn small_config() -> SolverConfig {
        SolverConfig {
            grid: GridResolution {
                position: 21,
                heading: 8,
            },
            particles: 512,
            bank_size: 128,
            seed: 3,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn pruning_leaves_values_unchanged() {
        let solver = Solver::new(reference_model(), 4, small_config()).unwrap();
        let c_primes = [30.0, 23.0, 16.0, 10.0];
        let est = solver.no_transmit_means(1).unwrap();
        let pruned = solver.evaluate_g(1, &est, &c_primes, None).unwrap();
        let dense = solver
            .backward(1, &est, &c_primes, Some(&pruned.geometries), false)
            .unwrap();
        assert_eq!(pruned.cost, dense.cost);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        for (a, b) in pruned.stages.iter().zip(&dense.stages) {
            for _ in 0..2000 {
                let x = State::new(
                    a.estimate.p1 + rng.gen_range(-15.0..15.0),
                    a.estimate.p2 + rng.gen_range(-15.0..15.0),
                    rng.gen_range(-3.1..3.1),
                );
                assert_eq!(a.value(&x), b.value(&x));
                assert_eq!(a.no_transmit(&x), b.no_transmit(&x));
            }
        }
    }

    #[test]
    fn continuation_examples() {
        let bank = make_noise_bank(&reference_model(), 2, 1, 9).unwrap();
        assert_eq!(continuation_value(None, &State::ORIGIN, &bank, 1), 0.0);

        let geo = GridGeometry::new((0.0, 0.0), 20.0, 5, 5, 4).unwrap();
        let next = StageSolution {
            stage: 2,
            estimate: State::ORIGIN,
            stopping_cost: 1e9,
            continuation: Some(ValueGrid::constant(geo, 2, 2.0)),
        };
        let x = State::new(1.0, 0.5, 0.3);
        let d = bank.draw(2, 0);
        let y = step_unchecked(&x, d.speed, d.turn);
        let expected = distance_squared(&y, &State::ORIGIN) + 2.0;
        assert!((continuation_value(Some(&next), &x, &bank, 2) - expected).abs() < 1e-12);
    }

    #[test]
    fn lattice_moves_match_step() {
        let solver = Solver::new(reference_model(), 3, small_config()).unwrap();
        let geo = GridGeometry::new((0.5, -1.0), 6.0, 21, 21, 8).unwrap();
        let nodes = vec![
            (geo.index(3, 4, 0), 0.25),
            (geo.index(10, 2, 5), 0.5),
            (geo.index(20, 20, 7), 0.25),
        ];
        let node_cloud = ParticleCloud::from_parts_unchecked(
            nodes.iter().map(|(i, _)| geo.node(*i)).collect(),
            nodes.iter().map(|(_, m)| *m).collect(),
        );
        let direct = expand(&node_cloud, solver.bank(), 2);
        assert_eq!(solver.expand_nodes(&nodes, &geo, 2), direct);

        let next = StageSolution {
            stage: 2,
            estimate: State::new(3.0, 0.0, 0.5),
            stopping_cost: 20.0,
            continuation: None,
        };
        for &(idx, _) in &nodes {
            let node = geo.node(idx);
            let it = geo.unravel(idx).2;
            let a = solver.moves.continuation(&next, &node, it, 2);
            let b = continuation_value(Some(&next), &node, solver.bank(), 2);
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn one_stage_cost_is_bank_average() {
        let model = reference_model();
        let solver = Solver::new(model, 1, small_config()).unwrap();
        let est = [State::ORIGIN];
        let g = solver.evaluate_g(1, &est, &[1e12], None).unwrap().cost;
        let direct: f64 = solver
            .bank()
            .row(1)
            .iter()
            .map(|d| distance_squared(&step_unchecked(&State::ORIGIN, d.speed, d.turn), &State::ORIGIN))
            .sum::<f64>()
            / solver.bank().per_stage() as f64;
        assert!((g - direct).abs() < 1e-9 * direct);
        let small = solver.evaluate_g(1, &est, &[1e-12], None).unwrap().cost;
        assert!(small <= 1e-12 * (1.0 + 1e-12));
    }

    #[test]
    fn cost_bounded_by_first_stopping_cost() {
        let solver = Solver::new(reference_model(), 3, small_config()).unwrap();
        let c = [6.0, 5.0, 4.0];
        let est = solver.no_transmit_means(1).unwrap();
        let eval = solver.evaluate_g(1, &est, &c, None).unwrap();
        assert!(eval.cost > 0.0 && eval.cost <= 6.0);
        assert_eq!(eval.geometries.len(), 2);
        for (s, r) in eval.stages.iter().zip(&eval.radii) {
            assert!(r * r <= s.stopping_cost * (1.0 + 1e-12));
            if let Some(grid) = &s.continuation {
                let (lo, hi) = grid.range();
                assert!(lo >= 0.0 && hi <= c[s.stage]);
            }
        }
    }

    #[test]
    fn subproblem_descends_and_contains() {
        let solver = Solver::new(reference_model(), 3, small_config()).unwrap();
        let c = [12.0, 11.0, 10.0];
        let sol = solver.solve_subproblem(1, &c, None).unwrap();
        assert!(sol.converged && sol.iterations >= 1);
        for trace in &sol.history {
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{trace:?}");
            }
        }
        assert!(sol.achieved_cost <= 12.0);
        for s in &sol.stages {
            if let Some(grid) = &s.continuation {
                for i in 0..grid.geometry().len() {
                    let node = grid.geometry().node(i);
                    if s.no_transmit(&node) {
                        assert!(distance_squared(&node, &s.estimate) <= s.stopping_cost);
                    }
                }
            }
        }
    }

    #[test]
    fn infinite_eta_stops_after_one_iteration() {
        let cfg = SolverConfig {
            eta: Tolerance::Absolute(f64::INFINITY),
            ..small_config()
        };
        let solver = Solver::new(reference_model(), 2, cfg).unwrap();
        let sol = solver.solve_subproblem(1, &[10.0, 10.0], None).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.achieved_cost.is_finite());
    }

    #[test]
    fn tiny_stopping_cost_is_degenerate() {
        let solver = Solver::new(reference_model(), 2, small_config()).unwrap();
        match solver.solve_subproblem(1, &[1e-6, 1e-6], None) {
            Err(Error::Degenerate { sub_problem: 1, .. }) => {}
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn unit_bank_forward_pass_follows_the_particle() {
        // With one draw and every policy silent, the chain is a single path
        // through grid nodes, so estimates equal the lattice path states.
        let cfg = SolverConfig {
            bank_size: 1,
            particles: 1,
            ..small_config()
        };
        let solver = Solver::new(reference_model(), 2, cfg).unwrap();
        let d = solver.bank().draw(1, 0);
        let first = step_unchecked(&State::ORIGIN, d.speed, d.turn);
        let geo = GridGeometry::new((first.p1, first.p2), 50.0, 21, 21, 8).unwrap();
        let policies = vec![
            StageSolution {
                stage: 1,
                estimate: first,
                stopping_cost: 1e9,
                continuation: Some(ValueGrid::constant(geo, 1, 0.0)),
            },
            StageSolution {
                stage: 2,
                estimate: State::ORIGIN,
                stopping_cost: 1e9,
                continuation: None,
            },
        ];
        let (est, surv) = solver.best_response_estimates(1, &policies, &[first, first]).unwrap();
        assert_eq!(surv, vec![1.0, 1.0]);
        assert!(distance(&est[0], &first) < 1e-12);
    }
}
