//! Deployable scheme: per (last transmission, stage) policies and estimates,
//! the sensing-unit and estimator sides that use them, and episode costing.
//!
//! Entry `(k, j)` is stage `j` of sub-problem `k`, expressed relative to the
//! pose transmitted at `k − 1`. Both sides know that pose, so they agree on
//! the estimate without the estimator ever seeing an untransmitted state.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::SppModel;
use crate::error::{Error, Result};
use crate::geometry::{distance, from_relative, to_relative, State};
use crate::noise::{WeibullParams, WrappedCauchyParams};
use crate::solver::{ChainSolution, GridGeometry, Solver, SolverConfig, StageSolution, ValueGrid, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeTable {
    model: SppModel,
    costs: Vec<f64>,
    c_prime: Vec<f64>,
    entries: Vec<StageSolution>,
}

fn triangle_offset(horizon: usize, k: usize) -> usize {
    (k - 1) * horizon - (k - 1) * k.saturating_sub(2) / 2
}

impl SchemeTable {
    fn from_parts(model: SppModel, costs: Vec<f64>, c_prime: Vec<f64>, entries: Vec<StageSolution>) -> Result<Self> {
        let n = costs.len();
        if n == 0 || c_prime.len() != n {
            return Err(Error::Assembly(format!(
                "horizon {n} needs as many stopping costs, got {}",
                c_prime.len()
            )));
        }
        if entries.len() != n * (n + 1) / 2 {
            return Err(Error::Assembly(format!(
                "horizon {n} needs {} entries, got {}",
                n * (n + 1) / 2,
                entries.len()
            )));
        }
        let table = Self {
            model,
            costs,
            c_prime,
            entries,
        };
        for k in 1..=n {
            for j in k..=n {
                let e = table.entry(k, j);
                if e.stage != j || (e.continuation.is_none() != (j == n)) {
                    return Err(Error::Assembly(format!("entry ({k}, {j}) is inconsistent")));
                }
            }
        }
        Ok(table)
    }

    pub fn horizon(&self) -> usize {
        self.costs.len()
    }

    pub fn model(&self) -> &SppModel {
        &self.model
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn c_prime(&self) -> &[f64] {
        &self.c_prime
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stage `j` after a transmission at `k − 1`.
    pub fn entry(&self, k: usize, j: usize) -> &StageSolution {
        let n = self.horizon();
        assert!(1 <= k && k <= j && j <= n, "entry ({k}, {j}) outside horizon {n}");
        &self.entries[triangle_offset(n, k) + (j - k)]
    }
}

/// Collects every sub-problem of a solved chain into a table.
pub fn assemble(chain: &ChainSolution, model: &SppModel) -> Result<SchemeTable> {
    let n = chain.horizon();
    if chain.subproblems.len() != n {
        return Err(Error::Assembly(format!(
            "horizon {n} needs {n} sub-problems, got {}",
            chain.subproblems.len()
        )));
    }
    let mut entries = Vec::with_capacity(n * (n + 1) / 2);
    for (i, sub) in chain.subproblems.iter().enumerate() {
        let k = i + 1;
        if sub.k != k || sub.stages.len() != n - k + 1 {
            return Err(Error::Assembly(format!(
                "sub-problem at position {k} is k = {} with {} stages",
                sub.k,
                sub.stages.len()
            )));
        }
        entries.extend(sub.stages.iter().cloned());
    }
    SchemeTable::from_parts(*model, chain.costs.clone(), chain.c_prime.clone(), entries)
}

/// Scheme that transmits at every stage.
pub fn transmit_always(model: &SppModel, costs: &[f64]) -> Result<SchemeTable> {
    let n = costs.len();
    let entries = baseline_entries(n, |_, _| State::ORIGIN, f64::NEG_INFINITY)?;
    SchemeTable::from_parts(*model, costs.to_vec(), vec![f64::NEG_INFINITY; n], entries)
}

/// Scheme that never transmits; the estimator follows the no-transmission
/// conditional means.
pub fn transmit_never(model: &SppModel, costs: &[f64], config: &SolverConfig) -> Result<SchemeTable> {
    let n = costs.len();
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let solver = Solver::new(*model, n, config.clone())?;
    let means: Vec<Vec<State>> = (1..=n).map(|k| solver.no_transmit_means(k)).collect::<Result<_>>()?;
    let entries = baseline_entries(n, |k, j| means[k - 1][j - k], f64::INFINITY)?;
    SchemeTable::from_parts(*model, costs.to_vec(), vec![f64::INFINITY; n], entries)
}

fn baseline_entries(
    n: usize,
    estimate: impl Fn(usize, usize) -> State,
    stopping_cost: f64,
) -> Result<Vec<StageSolution>> {
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let geo = GridGeometry::new((0.0, 0.0), 1.0, 2, 2, 4)?;
    let mut entries = Vec::with_capacity(n * (n + 1) / 2);
    for k in 1..=n {
        for j in k..=n {
            entries.push(StageSolution {
                stage: j,
                estimate: estimate(k, j),
                stopping_cost,
                continuation: (j < n).then(|| ValueGrid::constant(geo, j, 0.0)),
            });
        }
    }
    Ok(entries)
}

/// What both sides know: the last transmission time (0 before any) and the
/// pose sent then (the common initial pose at time 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub tau: usize,
    pub x_tau: State,
}

impl LinkState {
    pub fn new(x0: State) -> Self {
        Self { tau: 0, x_tau: x0 }
    }
}

fn check_step(table: &SchemeTable, link: &LinkState, k: usize) -> Result<()> {
    if k == 0 || k > table.horizon() || link.tau >= k {
        return Err(Error::Protocol(format!(
            "step {k} with last transmission {} outside horizon {}",
            link.tau,
            table.horizon()
        )));
    }
    Ok(())
}

/// Sensing-unit rule: `true` means transmit `x_k`.
pub fn sensing_decide(table: &SchemeTable, link: &LinkState, k: usize, x_k: &State) -> Result<bool> {
    check_step(table, link, k)?;
    let rel = to_relative(&link.x_tau, x_k);
    Ok(!table.entry(link.tau + 1, k).no_transmit(&rel))
}

/// Estimator rule. It sees the pose only when it was transmitted.
pub fn estimator_output(
    table: &SchemeTable,
    link: &LinkState,
    k: usize,
    transmitted: bool,
    payload: Option<&State>,
) -> Result<State> {
    check_step(table, link, k)?;
    match (transmitted, payload) {
        (true, Some(x)) => Ok(*x),
        (false, None) => Ok(from_relative(&link.x_tau, &table.entry(link.tau + 1, k).estimate)),
        (true, None) => Err(Error::Protocol(format!(
            "step {k}: transmission flagged without a payload"
        ))),
        (false, Some(_)) => Err(Error::Protocol(format!(
            "step {k}: payload present without a transmission"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    /// Metric error `d(x_k, x̂_k)` for `k = 1..=N`.
    pub distortion: Vec<f64>,
    pub transmitted: Vec<bool>,
    pub estimates: Vec<State>,
    pub squared_error: f64,
    pub transmissions: usize,
    pub communication_cost: f64,
    pub realized_cost: f64,
}

/// Runs both sides over `trajectory = x_0, …, x_N`.
pub fn run_episode(table: &SchemeTable, trajectory: &[State]) -> Result<EpisodeReport> {
    let n = table.horizon();
    if trajectory.len() != n + 1 {
        return Err(Error::HorizonMismatch(format!(
            "scheme horizon {n} needs {} states, got {}",
            n + 1,
            trajectory.len()
        )));
    }
    let mut link = LinkState::new(trajectory[0]);
    let mut report = EpisodeReport {
        distortion: Vec::with_capacity(n),
        transmitted: Vec::with_capacity(n),
        estimates: Vec::with_capacity(n),
        squared_error: 0.0,
        transmissions: 0,
        communication_cost: 0.0,
        realized_cost: 0.0,
    };
    for k in 1..=n {
        let x = &trajectory[k];
        let send = sensing_decide(table, &link, k, x)?;
        let est = estimator_output(table, &link, k, send, send.then_some(x))?;
        let d = if send { 0.0 } else { distance(x, &est) };
        report.distortion.push(d);
        report.transmitted.push(send);
        report.estimates.push(est);
        report.squared_error += d * d;
        if send {
            report.transmissions += 1;
            report.communication_cost += table.costs[k - 1];
            link = LinkState { tau: k, x_tau: *x };
        }
    }
    report.realized_cost = report.squared_error + report.communication_cost;
    Ok(report)
}

const MAGIC: &[u8; 8] = b"SPPSCHEM";
pub const FORMAT_VERSION: u32 = 1;

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.inner.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: usize) -> Result<()> {
        Ok(self.inner.write_all(&(v as u64).to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn state(&mut self, x: &State) -> Result<()> {
        self.f64(x.p1)?;
        self.f64(x.p2)?;
        self.f64(x.theta())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated scheme file: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes()?);
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} too large")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn state(&mut self) -> Result<State> {
        let (p1, p2, t) = (self.f64()?, self.f64()?, self.f64()?);
        State::try_new(p1, p2, t).map_err(|e| Error::Format(format!("bad state: {e}")))
    }
    fn bounded(&mut self, limit: usize, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > limit {
            return Err(Error::Format(format!("{what} {v} exceeds {limit}")));
        }
        Ok(v)
    }
}

/// Largest horizon or grid dimension accepted when reading.
const READ_LIMIT: usize = 1 << 20;

impl SchemeTable {
    /// Writes the versioned binary form, with `provenance` (the run
    /// configuration) embedded verbatim. All numbers are little-endian.
    pub fn write_to<W: Write>(&self, out: W, provenance: &str) -> Result<()> {
        let mut w = Writer { inner: out };
        w.inner.write_all(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        w.u64(provenance.len())?;
        w.inner.write_all(provenance.as_bytes())?;
        w.f64(self.model.speed.shape())?;
        w.f64(self.model.speed.scale())?;
        w.f64(self.model.turn.concentration())?;
        w.f64(self.model.turn.location())?;
        w.u64(self.horizon())?;
        for c in self.costs.iter().chain(&self.c_prime) {
            w.f64(*c)?;
        }
        for e in &self.entries {
            w.u64(e.stage)?;
            w.state(&e.estimate)?;
            w.f64(e.stopping_cost)?;
            match &e.continuation {
                None => w.u8(0)?,
                Some(g) => {
                    w.u8(1)?;
                    let geo = g.geometry();
                    let (n1, n2, nt) = geo.shape();
                    w.f64(geo.center().0)?;
                    w.f64(geo.center().1)?;
                    w.f64(geo.half_width())?;
                    w.u64(n1)?;
                    w.u64(n2)?;
                    w.u64(nt)?;
                    w.u64(g.stage())?;
                    w.f64(g.default_value())?;
                    let win = g.window();
                    for v in [win.lo1, win.hi1, win.lo2, win.hi2] {
                        w.u64(v)?;
                    }
                    w.u64(g.stored().len())?;
                    for v in g.stored() {
                        w.f64(*v)?;
                    }
                }
            }
        }
        w.inner.flush()?;
        Ok(())
    }

    /// Reads a table written by [`SchemeTable::write_to`] and returns it with
    /// the embedded provenance text.
    pub fn read_from<R: Read>(input: R) -> Result<(SchemeTable, String)> {
        let mut r = Reader { inner: input };
        if &r.bytes::<8>()? != MAGIC {
            return Err(Error::Format("not a scheme file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported scheme version {version}")));
        }
        let len = r.bounded(1 << 26, "provenance length")?;
        let mut text = vec![0u8; len];
        r.inner
            .read_exact(&mut text)
            .map_err(|e| Error::Format(format!("truncated provenance: {e}")))?;
        let provenance = String::from_utf8(text).map_err(|_| Error::Format("provenance is not UTF-8".into()))?;
        let fmt = |e: Error| Error::Format(format!("bad model: {e}"));
        let speed = WeibullParams::new(r.f64()?, r.f64()?).map_err(fmt)?;
        let turn = WrappedCauchyParams::new(r.f64()?, r.f64()?).map_err(fmt)?;
        let n = r.bounded(READ_LIMIT, "horizon")?;
        let costs = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let c_prime = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let count = n * (n + 1) / 2;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let stage = r.u64()?;
            let estimate = r.state()?;
            let stopping_cost = r.f64()?;
            let continuation = match r.u8()? {
                0 => None,
                1 => {
                    let (c1, c2, hw) = (r.f64()?, r.f64()?, r.f64()?);
                    let n1 = r.bounded(READ_LIMIT, "grid size")?;
                    let n2 = r.bounded(READ_LIMIT, "grid size")?;
                    let nt = r.bounded(READ_LIMIT, "grid size")?;
                    let geo = GridGeometry::new((c1, c2), hw, n1, n2, nt).map_err(|e| Error::Format(e.to_string()))?;
                    let gstage = r.u64()?;
                    let default = r.f64()?;
                    let window = Window {
                        lo1: r.u64()?,
                        hi1: r.u64()?,
                        lo2: r.u64()?,
                        hi2: r.u64()?,
                    };
                    let stored = r.bounded(geo.len(), "stored values")?;
                    let values = (0..stored).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    Some(
                        ValueGrid::from_window(geo, gstage, default, window, values)
                            .map_err(|e| Error::Format(e.to_string()))?,
                    )
                }
                t => return Err(Error::Format(format!("bad grid tag {t}"))),
            };
            entries.push(StageSolution {
                stage,
                estimate,
                stopping_cost,
                continuation,
            });
        }
        let mut rest = [0u8; 1];
        if r.inner.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after scheme".into()));
        }
        let table = SchemeTable::from_parts(SppModel::new(speed, turn), costs, c_prime, entries)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok((table, provenance))
    }
}
