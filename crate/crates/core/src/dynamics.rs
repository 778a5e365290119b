//! The self-propelled particle transition model and fixed noise banks.
//!
//! Every uniform draw is a pure function of `(seed, stage, index)`: a ChaCha8
//! stream is selected by the stage and positioned by the index, so banks and
//! simulated trajectories are reproducible regardless of evaluation order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{wrap, State};
use crate::noise::{wc_sample, weibull_sample, WeibullParams, WrappedCauchyParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SppModel {
    pub speed: WeibullParams,
    pub turn: WrappedCauchyParams,
}

impl SppModel {
    pub fn new(speed: WeibullParams, turn: WrappedCauchyParams) -> Self {
        Self { speed, turn }
    }

    /// Standard deviation of the single-step speed.
    pub fn speed_std(&self) -> f64 {
        let a = self.speed.shape();
        let g1 = gamma(1.0 + 1.0 / a);
        let g2 = gamma(1.0 + 2.0 / a);
        self.speed.scale() * (g2 - g1 * g1).max(0.0).sqrt()
    }

    pub fn speed_mean(&self) -> f64 {
        self.speed.scale() * gamma(1.0 + 1.0 / self.speed.shape())
    }
}

/// One transition: turn by `phi`, then move `v` along the new heading.
pub fn step(x: &State, v: f64, phi: f64) -> Result<State> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "speed must be finite and >= 0, got {v}"
        )));
    }
    if !phi.is_finite() {
        return Err(Error::InvalidArgument(format!("turn must be finite, got {phi}")));
    }
    Ok(step_unchecked(x, v, phi))
}

#[inline]
pub(crate) fn step_unchecked(x: &State, v: f64, phi: f64) -> State {
    let heading = x.theta() + phi;
    let (s, c) = heading.sin_cos();
    State::from_parts_unchecked(x.p1 + v * c, x.p2 + v * s, wrap(heading))
}

pub fn sample_step(model: &SppModel, x: &State, u1: f64, u2: f64) -> Result<State> {
    let v = weibull_sample(&model.speed, u1)?;
    let phi = wc_sample(&model.turn, u2)?;
    Ok(step_unchecked(x, v, phi))
}

/// Uniform pair keyed by `(seed, stage, index)`, both strictly inside (0, 1).
pub fn keyed_uniforms(seed: u64, stage: u64, index: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng.set_word_pos(u128::from(index) * 4);
    (open_unit(rng.next_u64()), open_unit(rng.next_u64()))
}

/// Sequential reader over the pairs of one stage, equivalent to calling
/// [`keyed_uniforms`] with consecutive indices.
struct StageStream {
    rng: ChaCha8Rng,
}

impl StageStream {
    fn new(seed: u64, stage: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stage);
        Self { rng }
    }

    fn next_pair(&mut self) -> (f64, f64) {
        (open_unit(self.rng.next_u64()), open_unit(self.rng.next_u64()))
    }
}

#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Trajectory `x_0, …, x_n`; the transition into stage `k` uses the pair
/// keyed `(seed, k, 0)`.
pub fn simulate(model: &SppModel, x0: State, n: usize, seed: u64) -> Result<Vec<State>> {
    if n == 0 {
        return Err(Error::InvalidArgument("trajectory length must be >= 1".into()));
    }
    let mut path = Vec::with_capacity(n + 1);
    path.push(x0);
    for k in 1..=n {
        let (u1, u2) = keyed_uniforms(seed, k as u64, 0);
        let next = sample_step(model, &path[k - 1], u1, u2)?;
        path.push(next);
    }
    Ok(path)
}

/// One speed/turn draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub speed: f64,
    pub turn: f64,
}

/// `M` draws for each of stages `1..=stages`. Row `j` drives the transition
/// into stage `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    seed: u64,
    stages: usize,
    per_stage: usize,
    draws: Vec<Draw>,
    max_speed: f64,
}

pub fn make_noise_bank(model: &SppModel, stages: usize, per_stage: usize, seed: u64) -> Result<NoiseBank> {
    if stages == 0 || per_stage == 0 {
        return Err(Error::InvalidArgument(format!(
            "noise bank needs stages >= 1 and M >= 1, got {stages} x {per_stage}"
        )));
    }
    let mut draws = Vec::with_capacity(stages * per_stage);
    let mut max_speed = 0.0f64;
    for stage in 1..=stages {
        let mut stream = StageStream::new(seed, stage as u64);
        for _ in 0..per_stage {
            let (u1, u2) = stream.next_pair();
            let speed = weibull_sample(&model.speed, u1)?;
            let turn = wc_sample(&model.turn, u2)?;
            max_speed = max_speed.max(speed);
            draws.push(Draw { speed, turn });
        }
    }
    Ok(NoiseBank {
        seed,
        stages,
        per_stage,
        draws,
        max_speed,
    })
}

impl NoiseBank {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn per_stage(&self) -> usize {
        self.per_stage
    }

    /// Largest speed anywhere in the bank, i.e. the largest single-step
    /// displacement it can produce.
    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    /// Draws for the transition into `stage` (1-based).
    pub fn row(&self, stage: usize) -> &[Draw] {
        assert!(
            (1..=self.stages).contains(&stage),
            "stage {stage} outside bank range 1..={}",
            self.stages
        );
        let start = (stage - 1) * self.per_stage;
        &self.draws[start..start + self.per_stage]
    }

    pub fn draw(&self, stage: usize, index: usize) -> Draw {
        self.row(stage)[index]
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;
    use crate::geometry::distance;

    fn reference_model() -> SppModel {
        SppModel::new(
            WeibullParams::new(1.35, 4.66).unwrap(),
            WrappedCauchyParams::new(0.65, 0.0).unwrap(),
        )
    }

    #[test]
    fn step_examples() {
        let o = State::ORIGIN;
        assert_eq!(step(&o, 1.0, 0.0).unwrap(), State::new(1.0, 0.0, 0.0));
        let turned = step(&o, 0.0, PI).unwrap();
        assert_eq!(turned.position(), (0.0, 0.0));
        assert!((turned.theta() - PI).abs() < 1e-15);
        let up = step(&State::new(0.0, 0.0, FRAC_PI_2), 2.0, 0.0).unwrap();
        assert!(up.p1.abs() < 1e-15 && (up.p2 - 2.0).abs() < 1e-15);
        assert!(step(&o, -1.0, 0.0).is_err());
    }

    #[test]
    fn speed_moments() {
        // Exponential(1): mean 1, standard deviation 1.
        let m = SppModel::new(
            WeibullParams::new(1.0, 1.0).unwrap(),
            WrappedCauchyParams::new(0.5, 0.0).unwrap(),
        );
        assert!((m.speed_mean() - 1.0).abs() < 1e-12);
        assert!((m.speed_std() - 1.0).abs() < 1e-12);
        let p = reference_model();
        assert!((p.speed_mean() - 4.27).abs() < 0.01 && (p.speed_std() - 3.20).abs() < 0.01);
    }

    #[test]
    fn keyed_draws_are_stateless() {
        let a = keyed_uniforms(9, 4, 17);
        let mut s = StageStream::new(9, 4);
        for _ in 0..17 {
            s.next_pair();
        }
        assert_eq!(s.next_pair(), a);
        assert_ne!(keyed_uniforms(9, 5, 17), a);
        assert_ne!(keyed_uniforms(10, 4, 17), a);
        assert!(a.0 > 0.0 && a.0 < 1.0 && a.1 > 0.0 && a.1 < 1.0);
        assert!(open_unit(0) > 0.0 && open_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn sample_step_is_deterministic() {
        let m = reference_model();
        let x = State::new(1.0, -2.0, 0.4);
        let a = sample_step(&m, &x, 0.3, 0.8).unwrap();
        let b = sample_step(&m, &x, 0.3, 0.8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_displacement_matches_first_moments() {
        let m = reference_model();
        let bank = make_noise_bank(&m, 1, 100_000, 77).unwrap();
        let (mut s1, mut s2) = (0.0, 0.0);
        for d in bank.row(1) {
            let y = step(&State::ORIGIN, d.speed, d.turn).unwrap();
            s1 += y.p1;
            s2 += y.p2;
        }
        let n = bank.per_stage() as f64;
        let magnitude = (s1 / n).hypot(s2 / n);
        let expected = m.speed_mean() * 0.65;
        assert!((magnitude / expected - 1.0).abs() < 0.03, "{magnitude} vs {expected}");
    }

    #[test]
    fn displacement_equals_speed() {
        let m = reference_model();
        let bank = make_noise_bank(&m, 3, 2_000, 1).unwrap();
        let x = State::new(10.0, -3.0, 2.0);
        for stage in 1..=3 {
            for d in bank.row(stage) {
                let y = step(&x, d.speed, d.turn).unwrap();
                assert!(((y.p1 - x.p1).hypot(y.p2 - x.p2) - d.speed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulate_matches_unit_bank() {
        let m = reference_model();
        let path = simulate(&m, State::ORIGIN, 6, 123).unwrap();
        assert_eq!(path.len(), 7);
        assert_eq!(path[0], State::ORIGIN);
        let bank = make_noise_bank(&m, 6, 1, 123).unwrap();
        let mut x = State::ORIGIN;
        for k in 1..=6 {
            let d = bank.draw(k, 0);
            x = step(&x, d.speed, d.turn).unwrap();
            assert_eq!(x, path[k]);
        }
        assert_eq!(simulate(&m, State::ORIGIN, 6, 123).unwrap(), path);
        let (u1, u2) = keyed_uniforms(123, 1, 0);
        assert_eq!(path[1], sample_step(&m, &State::ORIGIN, u1, u2).unwrap());
        assert!(simulate(&m, State::ORIGIN, 0, 1).is_err());
    }

    #[test]
    fn path_length_band() {
        let m = reference_model();
        let inside = (0..500u64)
            .filter(|&seed| {
                let path = simulate(&m, State::ORIGIN, 100, seed).unwrap();
                let len: f64 = path
                    .windows(2)
                    .map(|w| (w[1].p1 - w[0].p1).hypot(w[1].p2 - w[0].p2))
                    .sum();
                (250.0..=550.0).contains(&len)
            })
            .count();
        assert!(inside as f64 >= 0.95 * 500.0, "{inside}");
    }

    #[test]
    fn bank_moments_and_reproducibility() {
        let m = reference_model();
        let bank = make_noise_bank(&m, 2, 10_000, 5).unwrap();
        assert_eq!(bank, make_noise_bank(&m, 2, 10_000, 5).unwrap());
        let row = bank.row(2);
        let mean = row.iter().map(|d| d.speed).sum::<f64>() / row.len() as f64;
        let stderr = m.speed_std() / (row.len() as f64).sqrt();
        assert!((mean - m.speed_mean()).abs() < 3.0 * stderr);
        assert!(row
            .iter()
            .all(|d| d.speed >= 0.0 && (0.0..std::f64::consts::TAU).contains(&d.turn)));
        assert!(bank.max_speed() >= row.iter().map(|d| d.speed).fold(0.0, f64::max));
        assert!(make_noise_bank(&m, 0, 3, 5).is_err());
    }

    #[test]
    fn kernel_reaches_open_balls() {
        // Points reachable in one step from x: every small ball around them
        // receives some of 1e5 bank samples.
        let m = reference_model();
        let bank = make_noise_bank(&m, 1, 100_000, 9).unwrap();
        let x = State::new(1.0, 2.0, 0.5);
        let targets = [(2.0, 0.0), (6.0, 0.3), (1.0, 2.5), (10.0, -0.6), (0.5, PI)];
        for (v, phi) in targets {
            let centre = step(&x, v, phi).unwrap();
            let hits = bank
                .row(1)
                .iter()
                .filter(|d| distance(&step(&x, d.speed, d.turn).unwrap(), &centre) < 0.5)
                .count();
            assert!(hits > 0, "no samples near v={v} phi={phi}");
        }
    }
}
