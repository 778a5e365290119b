//! Tabulated functions over a square position box times the heading circle.
//!
//! Nodes sit on a regular lattice including both box faces; the heading axis
//! is periodic with `ntheta` nodes at multiples of `2π / ntheta`. Queries
//! outside the box are clamped to the nearest face before interpolating.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::State;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    center: (f64, f64),
    half_width: f64,
    n1: usize,
    n2: usize,
    ntheta: usize,
}

/// Flat node index together with its trilinear weight.
pub type Corner = (usize, f64);

impl GridGeometry {
    pub fn new(center: (f64, f64), half_width: f64, n1: usize, n2: usize, ntheta: usize) -> Result<Self> {
        if !(center.0.is_finite() && center.1.is_finite() && half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid box must be finite with positive half-width, got center {center:?} half-width {half_width}"
            )));
        }
        if n1 < 2 || n2 < 2 || ntheta < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2x2 position nodes and 4 headings, got {n1}x{n2}x{ntheta}"
            )));
        }
        Ok(Self {
            center,
            half_width,
            n1,
            n2,
            ntheta,
        })
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.ntheta)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing along p1, p2 and heading.
    pub fn spacing(&self) -> (f64, f64, f64) {
        let w = 2.0 * self.half_width;
        (
            w / (self.n1 - 1) as f64,
            w / (self.n2 - 1) as f64,
            TAU / self.ntheta as f64,
        )
    }

    /// Metric length of a cell diagonal.
    pub fn cell_diagonal(&self) -> f64 {
        let (h1, h2, ht) = self.spacing();
        (h1 * h1 + h2 * h2 + 4.0 * (1.0 - ht.cos())).sqrt()
    }

    fn lower(&self) -> (f64, f64) {
        (self.center.0 - self.half_width, self.center.1 - self.half_width)
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize, it: usize) -> usize {
        (i1 * self.n2 + i2) * self.ntheta + it
    }

    pub fn unravel(&self, index: usize) -> (usize, usize, usize) {
        let it = index % self.ntheta;
        let rest = index / self.ntheta;
        (rest / self.n2, rest % self.n2, it)
    }

    pub fn node_coords(&self, i1: usize, i2: usize, it: usize) -> (f64, f64, f64) {
        let (lo1, lo2) = self.lower();
        let (h1, h2, ht) = self.spacing();
        (lo1 + h1 * i1 as f64, lo2 + h2 * i2 as f64, ht * it as f64)
    }

    pub fn node(&self, index: usize) -> State {
        let (i1, i2, it) = self.unravel(index);
        let (p1, p2, theta) = self.node_coords(i1, i2, it);
        State::from_parts_unchecked(p1, p2, theta)
    }

    /// Projection of `x` onto the box (heading untouched).
    pub fn clamp(&self, x: &State) -> State {
        let (lo1, lo2) = self.lower();
        let p1 = x.p1.clamp(lo1, lo1 + 2.0 * self.half_width);
        let p2 = x.p2.clamp(lo2, lo2 + 2.0 * self.half_width);
        State::from_parts_unchecked(p1, p2, x.theta())
    }

    /// Whether the box holds the position disc of `radius` about `x` with at
    /// least `slack` to spare on every side.
    pub fn holds_disc(&self, x: &State, radius: f64, slack: f64) -> bool {
        let off = (x.p1 - self.center.0).abs().max((x.p2 - self.center.1).abs());
        off + radius + slack <= self.half_width
    }

    #[inline]
    fn axis(&self, value: f64, lo: f64, h: f64, n: usize) -> (usize, f64) {
        let u = ((value - lo) / h).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        (i, u - i as f64)
    }

    #[inline]
    fn heading_axis(&self, theta: f64) -> (usize, usize, f64) {
        let s = theta * (self.ntheta as f64 / TAU);
        let f = s.floor();
        let i0 = (f as usize) % self.ntheta;
        (i0, (i0 + 1) % self.ntheta, (s - f).clamp(0.0, 1.0))
    }

    /// The eight nodes of the (clamped) cell containing `x` and their
    /// trilinear weights. Weights are nonnegative and sum to one.
    pub fn corners(&self, x: &State) -> [Corner; 8] {
        let (lo1, lo2) = self.lower();
        let (h1, h2, _) = self.spacing();
        let (i1, t1) = self.axis(x.p1, lo1, h1, self.n1);
        let (i2, t2) = self.axis(x.p2, lo2, h2, self.n2);
        let (a0, a1, tt) = self.heading_axis(x.theta());
        let mut out = [(0usize, 0.0f64); 8];
        let mut n = 0;
        for (d1, w1) in [(0, 1.0 - t1), (1, t1)] {
            for (d2, w2) in [(0, 1.0 - t2), (1, t2)] {
                for (at, wt) in [(a0, 1.0 - tt), (a1, tt)] {
                    out[n] = (self.index(i1 + d1, i2 + d2, at), w1 * w2 * wt);
                    n += 1;
                }
            }
        }
        out
    }
}

/// Rectangular block of position nodes `[lo1, hi1] × [lo2, hi2]` (inclusive)
/// over all headings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo1: usize,
    pub hi1: usize,
    pub lo2: usize,
    pub hi2: usize,
}

impl Window {
    fn contains(&self, i1: usize, i2: usize) -> bool {
        (self.lo1..=self.hi1).contains(&i1) && (self.lo2..=self.hi2).contains(&i2)
    }

    fn width2(&self) -> usize {
        self.hi2 - self.lo2 + 1
    }

    fn position_count(&self) -> usize {
        (self.hi1 - self.lo1 + 1) * self.width2()
    }
}

/// Function values on a [`GridGeometry`]. Only nodes inside `window` are
/// stored; every other node reads as `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    geometry: GridGeometry,
    stage: usize,
    default: f64,
    window: Window,
    values: Vec<f64>,
}

impl ValueGrid {
    pub fn constant(geometry: GridGeometry, stage: usize, value: f64) -> Self {
        Self {
            geometry,
            stage,
            default: value,
            window: Window {
                lo1: 0,
                hi1: 0,
                lo2: 0,
                hi2: 0,
            },
            values: vec![value; geometry.ntheta],
        }
    }

    pub fn from_window(
        geometry: GridGeometry,
        stage: usize,
        default: f64,
        window: Window,
        values: Vec<f64>,
    ) -> Result<Self> {
        if window.lo1 > window.hi1 || window.lo2 > window.hi2 || window.hi1 >= geometry.n1 || window.hi2 >= geometry.n2
        {
            return Err(Error::InvalidArgument(format!(
                "window {window:?} outside grid {:?}",
                geometry.shape()
            )));
        }
        if values.len() != window.position_count() * geometry.ntheta {
            return Err(Error::InvalidArgument(format!(
                "window {window:?} needs {} values, got {}",
                window.position_count() * geometry.ntheta,
                values.len()
            )));
        }
        Ok(Self {
            geometry,
            stage,
            default,
            window,
            values,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn stored(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i1: usize, i2: usize, it: usize) -> f64 {
        if self.window.contains(i1, i2) {
            let w = &self.window;
            self.values[((i1 - w.lo1) * w.width2() + (i2 - w.lo2)) * self.geometry.ntheta + it]
        } else {
            self.default
        }
    }

    pub fn at_index(&self, index: usize) -> f64 {
        let (i1, i2, it) = self.geometry.unravel(index);
        self.get(i1, i2, it)
    }

    /// Trilinear interpolation, periodic in heading, clamped in position.
    #[inline]
    pub fn interpolate(&self, x: &State) -> f64 {
        let geo = &self.geometry;
        let (lo1, lo2) = geo.lower();
        let (h1, h2, _) = geo.spacing();
        let (i1, t1) = geo.axis(x.p1, lo1, h1, geo.n1);
        let (i2, t2) = geo.axis(x.p2, lo2, h2, geo.n2);
        let (a0, a1, tt) = geo.heading_axis(x.theta());
        let w = &self.window;
        let mut acc = 0.0;
        for (d1, w1) in [(0, 1.0 - t1), (1, t1)] {
            for (d2, w2) in [(0, 1.0 - t2), (1, t2)] {
                let (j1, j2) = (i1 + d1, i2 + d2);
                let (v0, v1) = if w.contains(j1, j2) {
                    let base = ((j1 - w.lo1) * w.width2() + (j2 - w.lo2)) * geo.ntheta;
                    (self.values[base + a0], self.values[base + a1])
                } else {
                    (self.default, self.default)
                };
                acc += w1 * w2 * ((1.0 - tt) * v0 + tt * v1);
            }
        }
        acc
    }

    /// Smallest and largest value over all nodes.
    pub fn range(&self) -> (f64, f64) {
        let full = self.window.position_count() == self.geometry.n1 * self.geometry.n2;
        let init = if full {
            (f64::INFINITY, f64::NEG_INFINITY)
        } else {
            (self.default, self.default)
        };
        self.values.iter().fold(init, |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Builds a grid by evaluating `f` at every node within metric distance
/// `radius` of `anchor`; all other nodes take `default`. `f` receives the
/// node's heading index and the node. Also returns the
/// smallest evaluated value (`+∞` if no node was evaluated).
pub(crate) fn tabulate_near<F>(
    geometry: GridGeometry,
    stage: usize,
    default: f64,
    anchor: &State,
    radius: f64,
    f: F,
) -> (ValueGrid, f64)
where
    F: Fn(usize, &State) -> f64 + Sync,
{
    use rayon::prelude::*;

    let (lo1, lo2) = geometry.lower();
    let (h1, h2, _) = geometry.spacing();
    let (n1, n2, nt) = geometry.shape();
    let span = |c: f64, lo: f64, h: f64, n: usize| {
        let a = ((c - radius - lo) / h).floor().max(0.0) as usize;
        let b = (((c + radius - lo) / h).ceil().max(0.0) as usize).min(n - 1);
        (a.min(n - 1), b)
    };
    let (w1lo, w1hi) = span(anchor.p1, lo1, h1, n1);
    let (w2lo, w2hi) = span(anchor.p2, lo2, h2, n2);
    let window = Window {
        lo1: w1lo,
        hi1: w1hi,
        lo2: w2lo,
        hi2: w2hi,
    };
    let r2 = radius * radius;
    let w2 = window.width2();
    let evaluated: Vec<Option<f64>> = (0..window.position_count() * nt)
        .into_par_iter()
        .map(|local| {
            let it = local % nt;
            let pos = local / nt;
            let (i1, i2) = (w1lo + pos / w2, w2lo + pos % w2);
            let node = geometry.node(geometry.index(i1, i2, it));
            (crate::geometry::distance_squared(&node, anchor) <= r2).then(|| f(it, &node))
        })
        .collect();
    let smallest = evaluated.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let values = evaluated.into_iter().map(|v| v.unwrap_or(default)).collect();
    let grid = ValueGrid {
        geometry,
        stage,
        default,
        window,
        values,
    };
    (grid, smallest)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn geometry() -> GridGeometry {
        GridGeometry::new((1.0, -2.0), 3.0, 7, 5, 8).unwrap()
    }

    /// Function that trilinear interpolation reproduces exactly on a cell:
    /// affine in position and affine in the heading coordinate within one
    /// heading interval.
    fn affine(p1: f64, p2: f64) -> f64 {
        2.0 + 0.5 * p1 - 1.5 * p2 + 0.25 * p1 * p2
    }

    fn dense(geometry: GridGeometry, f: impl Fn(&State) -> f64) -> ValueGrid {
        let (n1, n2, nt) = geometry.shape();
        let values = (0..geometry.len()).map(|i| f(&geometry.node(i))).collect();
        ValueGrid::from_window(
            geometry,
            1,
            0.0,
            Window {
                lo1: 0,
                hi1: n1 - 1,
                lo2: 0,
                hi2: n2 - 1,
            },
            values,
        )
        .inspect(|g| assert_eq!(g.stored().len(), n1 * n2 * nt))
        .unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridGeometry::new((0.0, 0.0), 1.0, 1, 5, 8).is_err());
        assert!(GridGeometry::new((0.0, 0.0), 1.0, 5, 5, 3).is_err());
        assert!(GridGeometry::new((0.0, 0.0), 0.0, 5, 5, 8).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = geometry();
        for i in 0..g.len() {
            let (a, b, c) = g.unravel(i);
            assert_eq!(g.index(a, b, c), i);
        }
        let n = g.node(g.index(6, 4, 7));
        assert!((n.p1 - 4.0).abs() < 1e-12 && (n.p2 - 1.0).abs() < 1e-12);
        assert!((n.theta() - 7.0 * TAU / 8.0).abs() < 1e-12);
    }

    #[test]
    fn constant_grid_interpolates_to_constant() {
        let g = ValueGrid::constant(geometry(), 2, 3.5);
        for x in [
            State::new(0.0, 0.0, 0.0),
            State::new(100.0, -100.0, 6.2),
            State::new(1.3, -2.2, 3.0),
        ] {
            assert!((g.interpolate(&x) - 3.5).abs() < 1e-14);
        }
        assert_eq!(g.range(), (3.5, 3.5));
    }

    #[test]
    fn nodes_are_reproduced() {
        let g = dense(geometry(), |x| affine(x.p1, x.p2) + x.theta());
        for i in 0..g.geometry().len() {
            let x = g.geometry().node(i);
            assert!((g.interpolate(&x) - affine(x.p1, x.p2) - x.theta()).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_interpolation() {
        // Box [0,2]² with 3 nodes per axis; value = i1 + 10·i2 + 100·iθ.
        let geo = GridGeometry::new((1.0, 1.0), 1.0, 3, 3, 4).unwrap();
        let g = dense(geo, |x| {
            let it = (x.theta() / (TAU / 4.0)).round();
            x.p1 + 10.0 * x.p2 + 100.0 * it
        });
        // Midway in every axis of the first cell, and a quarter of the way
        // from heading node 3 back round to node 0.
        let x = State::new(0.5, 0.5, 0.0);
        assert!((g.interpolate(&x) - 5.5).abs() < 1e-12);
        let wrap_case = State::new(0.5, 0.5, 3.25 * TAU / 4.0);
        assert!((g.interpolate(&wrap_case) - (5.5 + 0.75 * 300.0)).abs() < 1e-9);
        // Outside the box the nearest face is used.
        let outside = State::new(-5.0, 9.0, 0.0);
        assert!((g.interpolate(&outside) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn window_reads_default_elsewhere() {
        let geo = geometry();
        let anchor = geo.node(geo.index(3, 2, 0));
        let (g, smallest) = tabulate_near(geo, 1, -1.0, &anchor, 1.1, |_, _| 5.0);
        assert_eq!(smallest, 5.0);
        assert_eq!(g.get(3, 2, 0), 5.0);
        assert_eq!(g.get(0, 0, 4), -1.0);
        assert_eq!(g.get(3, 2, 4), -1.0);
        assert!(g.stored().len() < geo.len());
        assert_eq!(g.range(), (-1.0, 5.0));
    }

    proptest! {
        #[test]
        fn corner_weights_form_partition(p1 in -10.0..10.0f64, p2 in -10.0..10.0f64, t in 0.0..TAU) {
            let g = geometry();
            let x = State::new(p1, p2, t);
            let corners = g.corners(&x);
            let total: f64 = corners.iter().map(|c| c.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(corners.iter().all(|c| c.1 >= 0.0 && c.0 < g.len()));
            let near = g.clamp(&x);
            for &(idx, w) in &corners {
                if w > 0.0 {
                    prop_assert!(crate::geometry::distance(&g.node(idx), &near) <= g.cell_diagonal() + 1e-9);
                }
            }
        }

        #[test]
        fn interpolation_matches_corner_weights(p1 in -10.0..10.0f64, p2 in -10.0..10.0f64, t in 0.0..TAU) {
            let geo = geometry();
            let anchor = geo.node(geo.index(3, 2, 1));
            let (grid, _) = tabulate_near(geo, 1, 9.0, &anchor, 2.5, |_, x| x.p1 * x.p1 + (x.p2 + x.theta()).sin());
            let x = State::new(p1, p2, t);
            let by_corners: f64 = geo.corners(&x).iter().map(|&(i, w)| w * grid.at_index(i)).sum();
            prop_assert!((grid.interpolate(&x) - by_corners).abs() < 1e-12);
        }

        #[test]
        fn bilinear_functions_are_exact(p1 in -2.0..4.0f64, p2 in -5.0..1.0f64, t in 0.0..TAU) {
            let grid = dense(geometry(), |x| affine(x.p1, x.p2));
            let x = State::new(p1, p2, t);
            prop_assert!((grid.interpolate(&x) - affine(p1, p2)).abs() < 1e-10);
        }
    }
}
