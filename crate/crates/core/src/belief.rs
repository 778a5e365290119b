//! Weighted particle clouds for the conditional laws of the state given that
//! nothing has been transmitted, and the estimators that are optimal for the
//! pose metric.
//!
//! Reductions run sequentially in particle order, so results do not depend on
//! the thread count even when predicates are evaluated in parallel.

use rayon::prelude::*;

use crate::dynamics::{step_unchecked, NoiseBank};
use crate::error::{Error, Result};
use crate::geometry::{wrap, State};

/// Resultant lengths at or below this are treated as zero.
pub const RESULTANT_FLOOR: f64 = 1e-12;

/// Clouds above this size evaluate predicates on the rayon pool.
const PARALLEL_MIN: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    states: Vec<State>,
    weights: Vec<f64>,
}

impl ParticleCloud {
    /// Point mass at `x`.
    pub fn point(x: State) -> Self {
        Self {
            states: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn uniform(states: Vec<State>) -> Result<Self> {
        let n = states.len();
        Self::from_weighted(states, vec![1.0; n])
    }

    /// Normalizes `weights`, which must be finite, nonnegative and not all
    /// zero.
    pub fn from_weighted(states: Vec<State>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "cloud needs matching non-empty states and weights, got {} and {}",
                states.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "particle weights must be finite and >= 0, got {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("particle weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { states, weights })
    }

    /// Caller guarantees normalized, finite, nonnegative weights.
    pub(crate) fn from_parts_unchecked(states: Vec<State>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(states.len(), weights.len());
        Self { states, weights }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&State, f64)> {
        self.states.iter().zip(self.weights.iter().copied())
    }
}

/// Advances particle `i` with draw `i` of `stage`; the bank row must hold at
/// least as many draws as there are particles.
pub fn process_update(cloud: &ParticleCloud, bank: &NoiseBank, stage: usize) -> Result<ParticleCloud> {
    let row = bank.row(stage);
    if cloud.len() > row.len() {
        return Err(Error::InvalidArgument(format!(
            "{} particles but only {} draws per stage",
            cloud.len(),
            row.len()
        )));
    }
    let states = cloud
        .states
        .iter()
        .zip(row)
        .map(|(x, d)| step_unchecked(x, d.speed, d.turn))
        .collect();
    Ok(ParticleCloud {
        states,
        weights: cloud.weights.clone(),
    })
}

/// Pushes every particle through every draw of `stage`. Each child carries
/// `w / M`; zero-weight parents are skipped.
pub fn expand(cloud: &ParticleCloud, bank: &NoiseBank, stage: usize) -> ParticleCloud {
    let row = bank.row(stage);
    let m = row.len() as f64;
    let live = cloud.weights.iter().filter(|w| **w > 0.0).count();
    let mut states = Vec::with_capacity(live * row.len());
    let mut weights = Vec::with_capacity(live * row.len());
    for (x, w) in cloud.iter() {
        if w == 0.0 {
            continue;
        }
        for d in row {
            states.push(step_unchecked(x, d.speed, d.turn));
            weights.push(w / m);
        }
    }
    ParticleCloud { states, weights }
}

/// Identifies the stage a belief update belongs to, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageTag {
    pub sub_problem: usize,
    pub stage: usize,
}

/// Zeroes the weight of every particle for which `keep` is false and
/// renormalizes the rest. Returns the cloud and the surviving mass before
/// renormalization.
pub fn policy_update<F>(cloud: ParticleCloud, keep: F, eps_deg: f64, tag: StageTag) -> Result<(ParticleCloud, f64)>
where
    F: Fn(&State) -> bool + Sync,
{
    let mask: Vec<bool> = if cloud.len() >= PARALLEL_MIN {
        cloud.states.par_iter().map(&keep).collect()
    } else {
        cloud.states.iter().map(&keep).collect()
    };
    let survival: f64 = cloud
        .weights
        .iter()
        .zip(&mask)
        .filter(|(_, k)| **k)
        .map(|(w, _)| w)
        .sum();
    if !(survival >= eps_deg) || survival == 0.0 {
        return Err(Error::Degenerate {
            sub_problem: tag.sub_problem,
            stage: tag.stage,
            survival,
        });
    }
    let ParticleCloud { states, mut weights } = cloud;
    for (w, k) in weights.iter_mut().zip(&mask) {
        *w = if *k { *w / survival } else { 0.0 };
    }
    Ok((ParticleCloud { states, weights }, survival.min(1.0)))
}

pub fn mean_position(cloud: &ParticleCloud) -> (f64, f64) {
    let (mut s1, mut s2, mut total) = (0.0, 0.0, 0.0);
    for (x, w) in cloud.iter() {
        s1 += w * x.p1;
        s2 += w * x.p2;
        total += w;
    }
    (s1 / total, s2 / total)
}

/// Weighted circular mean of the headings, or `fallback` when the weighted
/// unit vectors (nearly) cancel.
pub fn circular_mean_heading(cloud: &ParticleCloud, fallback: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (x, w) in cloud.iter() {
        let (sn, cs) = x.theta().sin_cos();
        c += w * cs;
        s += w * sn;
    }
    if c * c + s * s > RESULTANT_FLOOR {
        wrap(s.atan2(c))
    } else {
        wrap(fallback)
    }
}

/// Pose estimate minimizing the expected squared metric under `cloud`.
pub fn point_estimate(cloud: &ParticleCloud, fallback_heading: f64) -> State {
    let (p1, p2) = mean_position(cloud);
    State::from_parts_unchecked(p1, p2, circular_mean_heading(cloud, fallback_heading))
}
