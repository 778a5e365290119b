//! GPS track loading, step/turn extraction and model fitting.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::SppModel;
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, State};
use crate::noise::{wc_mle, weibull_mle, WeibullFit, WrappedCauchyFit};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Timestamped planar positions in meters (p1 east, p2 north).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    timestamps: Vec<f64>,
    positions: Vec<(f64, f64)>,
}

impl Track {
    pub fn new(timestamps: Vec<f64>, positions: Vec<(f64, f64)>) -> Result<Self> {
        if timestamps.len() != positions.len() {
            return Err(Error::Validation(format!(
                "{} timestamps for {} positions",
                timestamps.len(),
                positions.len()
            )));
        }
        if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("timestamp {i} is not finite")));
        }
        if let Some(i) = positions.iter().position(|(a, b)| !(a.is_finite() && b.is_finite())) {
            return Err(Error::Validation(format!("position {i} is not finite")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "timestamps must increase strictly: row {} has t = {} after {}",
                i + 1,
                timestamps[i + 1],
                timestamps[i]
            )));
        }
        Ok(Self { timestamps, positions })
    }

    /// Track of the positions of a simulated path, one second apart.
    pub fn from_states(states: &[State]) -> Result<Self> {
        Self::new(
            (0..states.len()).map(|i| i as f64).collect(),
            states.iter().map(State::position).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    /// Bearing of each displacement, carrying the previous bearing over
    /// zero-length steps. The first zero-length steps take the first nonzero
    /// bearing (or 0 if the track never moves).
    pub fn headings(&self) -> Vec<f64> {
        bearings(&self.positions).0
    }
}

fn bearings(positions: &[(f64, f64)]) -> (Vec<f64>, Vec<bool>) {
    let raw: Vec<Option<f64>> = positions
        .windows(2)
        .map(|w| {
            let (d1, d2) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            (d1 != 0.0 || d2 != 0.0).then(|| d2.atan2(d1))
        })
        .collect();
    let first = raw.iter().flatten().next().copied().unwrap_or(0.0);
    let mut last = first;
    let mut carried = Vec::with_capacity(raw.len());
    let headings = raw
        .iter()
        .map(|b| {
            carried.push(b.is_none());
            if let Some(b) = b {
                last = *b;
            }
            last
        })
        .collect();
    (headings, carried)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Columns {
    Meters,
    LatLon,
}

/// Reads a comma-separated track with a header row of either
/// `t_s,x_m,y_m` or `t_s,lat_deg,lon_deg`. Lat/lon input is projected
/// equirectangularly about the track centroid.
pub fn load_track(path: &Path) -> Result<Track> {
    let file = std::fs::File::open(path).map_err(|e| crate::error::io_at(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let columns = match names.as_slice() {
        ["t_s", "x_m", "y_m"] => Columns::Meters,
        ["t_s", "lat_deg", "lon_deg"] => Columns::LatLon,
        _ => {
            return Err(parse_err(
                1,
                format!(
                    "expected header t_s,x_m,y_m or t_s,lat_deg,lon_deg, got {}",
                    names.join(",")
                ),
            ))
        }
    };
    let mut times = Vec::new();
    let mut coords = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", record.len())));
        }
        let mut vals = [0.0; 3];
        for (v, field) in vals.iter_mut().zip(record.iter()) {
            *v = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("not a finite number: {field:?}")))?;
        }
        if columns == Columns::LatLon && !(vals[1].abs() <= 90.0 && vals[2].abs() <= 180.0) {
            return Err(parse_err(
                line,
                format!("latitude/longitude out of range: {}, {}", vals[1], vals[2]),
            ));
        }
        times.push(vals[0]);
        coords.push((vals[1], vals[2]));
    }
    let positions = match columns {
        Columns::Meters => coords,
        Columns::LatLon => project_equirectangular(&coords),
    };
    Track::new(times, positions)
}

/// Maps `(lat_deg, lon_deg)` to `(east_m, north_m)` about the centroid.
/// Longitudes are unwrapped around the first point so tracks crossing the
/// antimeridian stay contiguous.
pub fn project_equirectangular(lat_lon: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if lat_lon.is_empty() {
        return Vec::new();
    }
    let ref_lon = lat_lon[0].1;
    let unwrap = |lon: f64| ref_lon + angle_diff(lon.to_radians(), ref_lon.to_radians()).to_degrees();
    let n = lat_lon.len() as f64;
    let lat0 = lat_lon.iter().map(|p| p.0).sum::<f64>() / n;
    let lon0 = lat_lon.iter().map(|p| unwrap(p.1)).sum::<f64>() / n;
    let cos0 = lat0.to_radians().cos();
    lat_lon
        .iter()
        .map(|&(lat, lon)| {
            (
                EARTH_RADIUS_M * (unwrap(lon) - lon0).to_radians() * cos0,
                EARTH_RADIUS_M * (lat - lat0).to_radians(),
            )
        })
        .collect()
}

/// Most common sampling interval, with gaps compared at microsecond
/// resolution. Ties go to the shorter interval.
pub fn modal_interval(timestamps: &[f64]) -> Option<f64> {
    let mut counts: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    for w in timestamps.windows(2) {
        let gap = w[1] - w[0];
        let slot = counts.entry((gap * 1e6).round() as i64).or_insert((0, gap));
        slot.0 += 1;
    }
    let mut best: Option<(usize, f64)> = None;
    for (count, gap) in counts.values() {
        if best.is_none_or(|(c, _)| *count > c) {
            best = Some((*count, *gap));
        }
    }
    best.map(|(_, g)| g)
}

/// Resamples to the modal interval by linear interpolation. A regularly
/// sampled track is returned unchanged.
pub fn regularize(track: &Track) -> Result<Track> {
    let Some(dt) = modal_interval(&track.timestamps) else {
        return Ok(track.clone());
    };
    let gaps: Vec<f64> = track.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.iter().all(|g| (g - dt).abs() <= 1e-9 * dt.max(1.0)) {
        return Ok(track.clone());
    }
    let off = gaps.iter().filter(|g| (*g - dt).abs() > 0.5 * dt).count();
    if off as f64 > 0.1 * gaps.len() as f64 {
        warn!(
            "{off} of {} sampling gaps deviate from the modal interval {dt} s by more than 50%",
            gaps.len()
        );
    }
    let t0 = track.timestamps[0];
    let t_end = *track.timestamps.last().expect("non-empty");
    let steps = ((t_end - t0) / dt + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut seg = 0;
    for i in 0..=steps {
        let t = t0 + i as f64 * dt;
        while seg + 2 < track.len() && track.timestamps[seg + 1] < t {
            seg += 1;
        }
        let (ta, tb) = (track.timestamps[seg], track.timestamps[seg + 1]);
        let (pa, pb) = (track.positions[seg], track.positions[seg + 1]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        times.push(t);
        positions.push((pa.0 + w * (pb.0 - pa.0), pa.1 + w * (pb.1 - pa.1)));
    }
    Track::new(times, positions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Increments {
    /// Displacement magnitude of every step.
    pub speeds: Vec<f64>,
    /// Heading change between consecutive steps, in `(−π, π]`.
    pub turns: Vec<f64>,
    /// Steps whose heading was carried over from the previous one.
    pub carried: Vec<bool>,
}

/// Speeds and turning angles of a regularly sampled track: `n` points give
/// `n − 1` speeds and `n − 2` turns. The first turn of the generating process
/// is not observable, since positions alone do not fix the initial heading.
pub fn extract_increments(track: &Track) -> Result<Increments> {
    if track.len() < 3 {
        return Err(Error::Validation(format!("need >= 3 points, got {}", track.len())));
    }
    let track = regularize(track)?;
    if track.len() < 3 {
        return Err(Error::Validation("fewer than 3 points after resampling".into()));
    }
    let speeds: Vec<f64> = track
        .positions
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .collect();
    let (headings, carried) = bearings(&track.positions);
    if carried.iter().any(|c| *c) {
        warn!(
            "{} zero-length steps took the previous heading",
            carried.iter().filter(|c| **c).count()
        );
    }
    let turns = headings.windows(2).map(|w| angle_diff(w[1], w[0])).collect();
    Ok(Increments { speeds, turns, carried })
}

pub const MIN_INCREMENTS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: SppModel,
    pub speed: WeibullFit,
    pub turn: WrappedCauchyFit,
    pub points: usize,
    pub turn_samples: usize,
    pub carried_headings: usize,
}

pub fn fit_increments(inc: &Increments) -> Result<(SppModel, WeibullFit, WrappedCauchyFit)> {
    if inc.turns.len() < MIN_INCREMENTS {
        return Err(Error::FitFailure(format!(
            "need >= {MIN_INCREMENTS} increments, got {}",
            inc.turns.len()
        )));
    }
    let speed = weibull_mle(&inc.speeds)?;
    let turn = wc_mle(&inc.turns)?;
    Ok((SppModel::new(speed.params, turn.params), speed, turn))
}

pub fn fit_model(track: &Track) -> Result<ModelFit> {
    let inc = extract_increments(track)?;
    let (model, speed, turn) = fit_increments(&inc)?;
    Ok(ModelFit {
        model,
        speed,
        turn,
        points: track.len(),
        turn_samples: inc.turns.len(),
        carried_headings: inc.carried.iter().filter(|c| **c).count(),
    })
}

/// Great-circle distance in meters.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la, lb) = (a.0.to_radians(), b.0.to_radians());
    let dlat = lb - la;
    let dlon = (b.1 - a.1).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}
