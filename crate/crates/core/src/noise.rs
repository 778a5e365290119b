//! Speed and turn-angle distributions.
//!
//! Step speeds are Weibull and heading increments are wrapped Cauchy. Both
//! samplers are inverse CDFs of a caller-supplied uniform so that one
//! counter-based stream can drive every draw.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    shape: f64,
    scale: f64,
}

impl WeibullParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Weibull parameters must be positive, got shape={shape} scale={scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            -(-(v / self.scale).powf(self.shape)).exp_m1()
        }
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        let (a, s) = (self.shape, self.scale);
        let ln_s = s.ln();
        samples
            .iter()
            .map(|&x| a.ln() - ln_s + (a - 1.0) * (x.ln() - ln_s) - (x / s).powf(a))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrappedCauchyParams {
    concentration: f64,
    location: f64,
}

impl WrappedCauchyParams {
    pub fn new(concentration: f64, location: f64) -> Result<Self> {
        if !(concentration.is_finite() && (0.0..1.0).contains(&concentration)) {
            return Err(Error::InvalidArgument(format!(
                "wrapped Cauchy concentration must lie in [0, 1), got {concentration}"
            )));
        }
        if !location.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "wrapped Cauchy location must be finite, got {location}"
            )));
        }
        Ok(Self {
            concentration,
            location: wrap(location),
        })
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&phi| wc_pdf(self, phi).ln()).sum()
    }
}

pub fn weibull_pdf(params: &WeibullParams, v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::InvalidArgument(format!("Weibull support is v >= 0, got {v}")));
    }
    let (a, s) = (params.shape, params.scale);
    let z = v / s;
    Ok((a / s) * z.powf(a - 1.0) * (-z.powf(a)).exp())
}

fn check_uniform(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "uniform draw must lie in (0, 1), got {u}"
        )))
    }
}

/// Inverse CDF: `s·(−ln(1−u))^{1/a}`.
pub fn weibull_sample(params: &WeibullParams, u: f64) -> Result<f64> {
    check_uniform(u)?;
    Ok(params.scale * (-(-u).ln_1p()).powf(1.0 / params.shape))
}

pub fn wc_pdf(params: &WrappedCauchyParams, phi: f64) -> f64 {
    let a = params.concentration;
    (1.0 - a * a) / (TAU * (1.0 + a * a - 2.0 * a * (phi - params.location).cos()))
}

/// Inverse CDF, returned in `[0, 2π)`. `u = 1/2` maps to the location.
pub fn wc_sample(params: &WrappedCauchyParams, u: f64) -> Result<f64> {
    check_uniform(u)?;
    let a = params.concentration;
    let ratio = (1.0 - a) / (1.0 + a);
    Ok(wrap(params.location + 2.0 * (ratio * (PI * (u - 0.5)).tan()).atan()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub params: WeibullParams,
    pub log_likelihood: f64,
    /// Samples that entered the likelihood.
    pub used: usize,
    /// Zero-valued samples excluded from the fit (their log-density is
    /// unbounded).
    pub dropped_zeros: usize,
    pub iterations: usize,
}

const SHAPE_LO: f64 = 0.1;
const SHAPE_HI: f64 = 20.0;
const SHAPE_TOL: f64 = 1e-10;

/// Maximum-likelihood Weibull fit.
///
/// The shape solves the profile equation
/// `Σ xᵃ ln x / Σ xᵃ − 1/a − mean(ln x) = 0`, which is increasing in `a`,
/// by Newton steps safeguarded with bisection on `[0.1, 20]`; the scale then
/// follows in closed form.
pub fn weibull_mle(samples: &[f64]) -> Result<WeibullFit> {
    if let Some(bad) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "speed samples must be finite and >= 0, got {bad}"
        )));
    }
    let positive: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();
    let dropped_zeros = samples.len() - positive.len();
    if positive.len() < 10 {
        return Err(Error::FitFailure(format!(
            "Weibull fit needs at least 10 positive samples, got {}",
            positive.len()
        )));
    }
    let logs: Vec<f64> = positive.iter().map(|x| x.ln()).collect();
    let max_log = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_log = logs.iter().copied().fold(f64::INFINITY, f64::min);
    if max_log - min_log < 1e-12 {
        return Err(Error::FitFailure(
            "Weibull fit needs samples that are not all equal".into(),
        ));
    }
    let n = logs.len() as f64;
    let mean_log = logs.iter().sum::<f64>() / n;

    // Profile score and its derivative; powers are taken relative to the
    // largest sample so that exp() stays bounded for any shape in range.
    let score = |a: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let w = (a * (l - max_log)).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let m1 = s1 / s0;
        let var = (s2 / s0 - m1 * m1).max(0.0);
        (m1 - 1.0 / a - mean_log, var + 1.0 / (a * a))
    };

    let (mut lo, mut hi) = (SHAPE_LO, SHAPE_HI);
    let (f_lo, _) = score(lo);
    let (f_hi, _) = score(hi);
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::FitFailure(format!(
            "Weibull shape falls outside [{SHAPE_LO}, {SHAPE_HI}]"
        )));
    }
    let var_log = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / n;
    let mut a = (1.2 / var_log.sqrt()).clamp(lo, hi);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (f, df) = score(a);
        if f > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let mut next = a - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let converged = (next - a).abs() < SHAPE_TOL || hi - lo < SHAPE_TOL;
        a = next;
        if converged {
            break;
        }
        if iterations >= 500 {
            return Err(Error::FitFailure("Weibull shape iteration did not converge".into()));
        }
    }

    let mean_pow = logs.iter().map(|&l| (a * (l - max_log)).exp()).sum::<f64>() / n;
    let scale = max_log.exp() * mean_pow.powf(1.0 / a);
    let params = WeibullParams::new(a, scale)?;
    Ok(WeibullFit {
        log_likelihood: params.log_likelihood(&positive),
        params,
        used: positive.len(),
        dropped_zeros,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrappedCauchyFit {
    pub params: WrappedCauchyParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Set when the data are (numerically) concentrated on one direction and
    /// the concentration was pinned just below 1.
    pub clamped: bool,
}

/// Largest concentration a fit may report.
pub const MAX_CONCENTRATION: f64 = 1.0 - 1e-6;
const WC_TOL: f64 = 1e-10;
const WC_MAX_ITERS: usize = 10_000;

/// Maximum-likelihood wrapped Cauchy fit (Kent–Tyler iteration).
///
/// Works with `η = 2ψ/(1 + |ψ|²)` where `ψ = a·e^{im}`; each step reweights
/// the unit vectors by `1 / (1 − η·zᵢ)` and takes their weighted mean.
pub fn wc_mle(samples: &[f64]) -> Result<WrappedCauchyFit> {
    if samples.len() < 10 {
        return Err(Error::FitFailure(format!(
            "wrapped Cauchy fit needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "turn samples must be finite, got {bad}"
        )));
    }
    let units: Vec<(f64, f64)> = samples.iter().map(|phi| (phi.cos(), phi.sin())).collect();
    let n = units.len() as f64;
    let (c0, s0) = units.iter().fold((0.0, 0.0), |(c, s), u| (c + u.0, s + u.1));
    let (c0, s0) = (c0 / n, s0 / n);
    let resultant = c0.hypot(s0);
    let mean_dir = wrap(s0.atan2(c0));

    let clamped_fit = |location: f64, iterations: usize| -> Result<WrappedCauchyFit> {
        log::warn!("turn angles are concentrated on one direction; clamping concentration to {MAX_CONCENTRATION}");
        let params = WrappedCauchyParams::new(MAX_CONCENTRATION, location)?;
        Ok(WrappedCauchyFit {
            log_likelihood: params.log_likelihood(samples),
            params,
            iterations,
            clamped: true,
        })
    };

    if resultant >= 1.0 - 1e-12 {
        return clamped_fit(mean_dir, 0);
    }

    let rho0 = resultant;
    let scale0 = 2.0 * rho0 / (1.0 + rho0 * rho0);
    let (mut e1, mut e2) = (scale0 * mean_dir.cos(), scale0 * mean_dir.sin());
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (mut sw, mut swc, mut sws) = (0.0, 0.0, 0.0);
        for &(c, s) in &units {
            let denom = 1.0 - e1 * c - e2 * s;
            if !(denom > 0.0) {
                return clamped_fit(wrap(e2.atan2(e1)), iterations);
            }
            let w = 1.0 / denom;
            sw += w;
            swc += w * c;
            sws += w * s;
        }
        let (n1, n2) = (swc / sw, sws / sw);
        let done = (n1 - e1).abs() < WC_TOL && (n2 - e2).abs() < WC_TOL;
        e1 = n1;
        e2 = n2;
        if done {
            break;
        }
        if iterations >= WC_MAX_ITERS {
            return Err(Error::FitFailure(format!(
                "wrapped Cauchy iteration did not converge in {WC_MAX_ITERS} iterations"
            )));
        }
    }

    let eta = e1.hypot(e2);
    let (rho, location) = if eta < 1e-14 {
        (0.0, mean_dir)
    } else {
        ((1.0 - (1.0 - eta * eta).max(0.0).sqrt()) / eta, wrap(e2.atan2(e1)))
    };
    if rho > MAX_CONCENTRATION {
        return clamped_fit(location, iterations);
    }
    let params = WrappedCauchyParams::new(rho, location)?;
    Ok(WrappedCauchyFit {
        log_likelihood: params.log_likelihood(samples),
        params,
        iterations,
        clamped: false,
    })
}
