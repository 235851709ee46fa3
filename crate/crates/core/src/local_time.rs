//! Occupation-density estimates of the local-time field L(t, x).
//!
//! Levels are binned one-sidedly: bin `j` is `[x0 + j·dx, x0 + (j+1)·dx)` and
//! step `[t_i, t_{i+1})` deposits `dt` into the bin holding its left endpoint
//! `X_{t_i}`. Dividing by `dx` gives the estimate
//!
//! ```text
//! L̂(t_i, bin j) = (dt/dx) · #{ s < i : X_s ∈ bin j }.
//! ```
//!
//! A one-sided bin average estimates L at the bin *midpoint* to second order;
//! callers that want L at a specific level should place a bin centre on it
//! (see [`LevelGrid::centered_on`]).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::path_engine::{MuProcessPath, TimeIndex};

/// Relative tolerance used to snap values sitting on a bin edge.
const EDGE_SNAP: f64 = 1e-9;

/// Share of occupation mass outside the window above which a field is flagged.
pub const TRUNCATION_WARN: f64 = 1e-3;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= EDGE_SNAP * r.abs().max(1.0) {
        r
    } else {
        v
    }
}

/// Uniform level bins `[x0 + j·dx, x0 + (j+1)·dx)`, `j < m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub x0: f64,
    pub dx: f64,
    pub m: usize,
}

impl LevelGrid {
    pub fn new(x0: f64, dx: f64, m: usize) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(param(
                "dx",
                format!("level spacing must be positive, got {dx}"),
            ));
        }
        if m == 0 {
            return Err(param("m", "at least one level bin is required"));
        }
        if !x0.is_finite() {
            return Err(param("x0", "lowest level must be finite"));
        }
        Ok(LevelGrid { x0, dx, m })
    }

    /// Bins with edges on `lo + k·dx` covering `[lo, hi]`.
    pub fn covering(lo: f64, hi: f64, dx: f64) -> Result<Self> {
        let m = snap((hi - lo) / dx).ceil().max(1.0) as usize;
        LevelGrid::new(lo, dx, m)
    }

    /// Bins whose centres sit on `center + k·dx` and cover `[lo, hi]`.
    pub fn centered_on(center: f64, lo: f64, hi: f64, dx: f64) -> Result<Self> {
        let below = snap((center - lo) / dx).ceil().max(0.0);
        let above = snap((hi - center) / dx).ceil().max(0.0);
        let x0 = center - (below + 0.5) * dx;
        LevelGrid::new(x0, dx, (below + above) as usize + 1)
    }

    pub fn edge(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x0 + (j as f64 + 0.5) * self.dx
    }

    pub fn lo(&self) -> f64 {
        self.x0
    }

    pub fn hi(&self) -> f64 {
        self.edge(self.m)
    }

    /// Bin holding `x`, if it lies inside the window.
    #[inline]
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let k = snap((x - self.x0) / self.dx).floor();
        if k >= 0.0 && k < self.m as f64 {
            Some(k as usize)
        } else {
            None
        }
    }
}

const OUTSIDE: u32 = u32::MAX;

/// Estimated local times of one sampled path on a level window.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeField {
    pub grid: LevelGrid,
    pub dt: f64,
    /// Bin of the left endpoint of every step, [`u32::MAX`] when outside.
    step_bins: Vec<u32>,
    /// Increasing list of the steps deposited in each bin.
    visits: Vec<Vec<usize>>,
    outside: usize,
}

impl LocalTimeField {
    /// Bins the steps of the sample sequence `xs` (spacing `dt`).
    pub fn from_samples(xs: &[f64], dt: f64, grid: LevelGrid) -> Self {
        let n = xs.len().saturating_sub(1);
        let mut step_bins = Vec::with_capacity(n);
        let mut visits = vec![Vec::new(); grid.m];
        let mut outside = 0;
        for (s, &x) in xs[..n].iter().enumerate() {
            match grid.bin_of(x) {
                Some(j) => {
                    step_bins.push(j as u32);
                    visits[j].push(s);
                }
                None => {
                    step_bins.push(OUTSIDE);
                    outside += 1;
                }
            }
        }
        LocalTimeField {
            grid,
            dt,
            step_bins,
            visits,
            outside,
        }
    }

    /// Number of steps (rows are `0..=n_steps()`).
    pub fn n_steps(&self) -> usize {
        self.step_bins.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    #[inline]
    pub(crate) fn count_to_value(&self, count: f64) -> f64 {
        count * self.dt / self.grid.dx
    }

    /// Bin of step `i`'s left endpoint.
    pub fn step_bin(&self, i: usize) -> Option<usize> {
        match self.step_bins.get(i) {
            Some(&b) if b != OUTSIDE => Some(b as usize),
            _ => None,
        }
    }

    /// L̂(t_i, bin j).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let c = self.visits[j].partition_point(|&s| s < i);
        self.count_to_value(c as f64)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.grid.m).map(|j| self.value(i, j)).collect()
    }

    /// Share of occupation mass that fell outside the window.
    pub fn truncated_fraction(&self) -> f64 {
        if self.step_bins.is_empty() {
            0.0
        } else {
            self.outside as f64 / self.step_bins.len() as f64
        }
    }

    /// Warning text when more than 0.1% of the mass is truncated.
    pub fn truncation_warning(&self) -> Option<String> {
        let f = self.truncated_fraction();
        (f > TRUNCATION_WARN).then(|| {
            format!(
                "{:.3}% of occupation mass outside level window [{}, {})",
                100.0 * f,
                self.grid.lo(),
                self.grid.hi()
            )
        })
    }

    pub fn write_csv<W: Write>(&self, out: &mut W, stride: usize) -> io::Result<()> {
        writeln!(out, "t,level,value")?;
        let stride = stride.max(1);
        for i in (0..=self.n_steps()).step_by(stride) {
            for j in 0..self.grid.m {
                writeln!(
                    out,
                    "{},{},{}",
                    self.time(i),
                    self.grid.edge(j),
                    self.value(i, j)
                )?;
            }
        }
        Ok(())
    }
}

/// Occupation-density field of a μ-process path.
pub fn occupation_local_time(
    path: &MuProcessPath,
    x0: f64,
    dx: f64,
    m: usize,
) -> Result<LocalTimeField> {
    let grid = LevelGrid::new(x0, dx, m)?;
    Ok(LocalTimeField::from_samples(&path.x, path.dt, grid))
}

/// Number of deposits after which the local time exceeds `a`, and the
/// fraction of the last deposit at which it equals `a`.
pub(crate) fn exceed_threshold(a: f64, dt: f64, dx: f64) -> (usize, f64) {
    let q = snap(a * dx / dt);
    let whole = q.floor();
    (whole as usize + 1, q - whole)
}

/// Inverse local time τ_a at `level`, read from the bin holding `level`.
///
/// The local time in a bin rises linearly across each step deposited there;
/// the returned index is the step on which it passes `a`, with the
/// interpolated fraction.
pub fn inverse_local_time(field: &LocalTimeField, a: f64, level: f64) -> Result<TimeIndex> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(param("a", format!("local-time level must be ≥ 0, got {a}")));
    }
    let j = field
        .grid
        .bin_of(level)
        .ok_or_else(|| param("level", format!("{level} is outside the level window")))?;
    let (needed, frac) = exceed_threshold(a, field.dt, field.grid.dx);
    Ok(match field.visits[j].get(needed - 1) {
        Some(&s) => TimeIndex::at(s, frac),
        None => TimeIndex::NOT_REACHED,
    })
}

/// Row of the field at a stopping time; the partially elapsed step is
/// credited to its bin in proportion to `stop.frac`.
pub fn profile_at(field: &LocalTimeField, stop: TimeIndex) -> Result<Vec<f64>> {
    if !stop.reached {
        return Err(Error::NotReached(
            "profile requested at an unreached stop".into(),
        ));
    }
    if stop.step > field.n_steps() {
        return Err(param("stop", "stopping index beyond the path horizon"));
    }
    let mut row = field.row(stop.step);
    if stop.frac > 0.0 {
        if let Some(j) = field.step_bin(stop.step) {
            row[j] += field.count_to_value(stop.frac);
        }
    }
    Ok(row)
}

/// Writes `level,value` rows, one per bin.
pub fn write_profile_csv<W: Write>(
    out: &mut W,
    grid: &LevelGrid,
    profile: &[f64],
) -> io::Result<()> {
    writeln!(out, "level,value")?;
    for (j, v) in profile.iter().enumerate() {
        writeln!(out, "{},{}", grid.edge(j), v)?;
    }
    Ok(())
}

/// Streaming counterpart of [`LocalTimeField`]: per-bin deposit counts only.
#[derive(Debug, Clone)]
pub struct OccupationCounter {
    pub grid: LevelGrid,
    pub dt: f64,
    counts: Vec<u64>,
    outside: u64,
}

impl OccupationCounter {
    pub fn new(grid: LevelGrid, dt: f64) -> Self {
        OccupationCounter {
            grid,
            dt,
            counts: vec![0; grid.m],
            outside: 0,
        }
    }

    /// Deposits one step starting at `x`; returns its bin.
    #[inline]
    pub fn deposit(&mut self, x: f64) -> Option<usize> {
        let b = self.grid.bin_of(x);
        match b {
            Some(j) => self.counts[j] += 1,
            None => self.outside += 1,
        }
        b
    }

    #[inline]
    pub fn count(&self, j: usize) -> u64 {
        self.counts[j]
    }

    #[inline]
    pub fn value(&self, j: usize) -> f64 {
        self.counts[j] as f64 * self.dt / self.grid.dx
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.grid.m).map(|j| self.value(j)).collect()
    }

    pub fn outside(&self) -> u64 {
        self.outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_engine::{build_mu_process, simulate_driver};

    fn ramp() -> (Vec<f64>, f64) {
        let dt = 1e-3;
        ((0..=1000).map(|i| i as f64 * dt).collect(), dt)
    }

    #[test]
    fn ramp_spends_dx_in_every_bin() {
        let (xs, dt) = ramp();
        let f = LocalTimeField::from_samples(&xs, dt, LevelGrid::new(0.0, 0.1, 10).unwrap());
        for v in f.row(1000) {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
        assert_eq!(f.truncated_fraction(), 0.0);
    }

    #[test]
    fn occupation_identity_on_random_path() {
        let d = simulate_driver(4, 1e-3, 20_000).unwrap();
        let p = build_mu_process(&d, 1.3).unwrap();
        let lo = p.inf_run[p.n()] - 0.01;
        let hi = p.x.iter().cloned().fold(f64::MIN, f64::max) + 0.01;
        let grid = LevelGrid::covering(lo, hi, 0.05).unwrap();
        let f = LocalTimeField::from_samples(&p.x, p.dt, grid);
        assert_eq!(f.truncated_fraction(), 0.0);
        for i in [0, 1, 17, 5000, 20_000] {
            let total: f64 = f.row(i).iter().map(|v| v * grid.dx).sum();
            assert!(
                (total - p.time(i)).abs() <= 1e-12 * (i as f64 + 1.0),
                "{total} vs {}",
                p.time(i)
            );
        }
    }

    #[test]
    fn field_is_monotone_in_time() {
        let d = simulate_driver(8, 1e-3, 3000).unwrap();
        let p = build_mu_process(&d, 0.5).unwrap();
        let f = occupation_local_time(&p, -1.0, 0.1, 30).unwrap();
        for j in 0..30 {
            let mut prev = 0.0;
            for i in (0..=3000).step_by(50) {
                let v = f.value(i, j);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn truncation_is_flagged() {
        let (xs, dt) = ramp();
        let f = LocalTimeField::from_samples(&xs, dt, LevelGrid::new(0.0, 0.1, 5).unwrap());
        assert!((f.truncated_fraction() - 0.5).abs() < 1e-12);
        assert!(f.truncation_warning().is_some());
    }

    #[test]
    fn inverse_local_time_on_ramp() {
        let (xs, dt) = ramp();
        let f = LocalTimeField::from_samples(&xs, dt, LevelGrid::new(0.0, 0.1, 10).unwrap());
        let t = inverse_local_time(&f, 0.5, 0.5).unwrap();
        assert!((t.time(dt).unwrap() - 0.55).abs() < 1e-12);
        assert_eq!(t.step, 550);
        let t0 = inverse_local_time(&f, 0.0, 0.0).unwrap();
        assert_eq!(t0, TimeIndex::at(0, 0.0));
        assert!(!inverse_local_time(&f, 2.0, 0.5).unwrap().reached);
        assert!(inverse_local_time(&f, -1.0, 0.5).is_err());
        assert!(inverse_local_time(&f, 0.5, 3.0).is_err());
    }

    #[test]
    fn inverse_local_time_interpolates_within_step() {
        let (xs, dt) = ramp();
        let f = LocalTimeField::from_samples(&xs, dt, LevelGrid::new(0.0, 0.1, 10).unwrap());
        let t = inverse_local_time(&f, 0.505, 0.5).unwrap();
        assert_eq!(t.step, 550);
        assert!((t.frac - 0.5).abs() < 1e-9);
        let prof = profile_at(&f, t).unwrap();
        assert!((prof[5] - 0.505).abs() < 1e-12);
    }

    #[test]
    fn profile_examples() {
        let (xs, dt) = ramp();
        let f = LocalTimeField::from_samples(&xs, dt, LevelGrid::new(0.0, 0.1, 10).unwrap());
        assert!(profile_at(&f, TimeIndex::at(0, 0.0))
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let end = profile_at(&f, TimeIndex::at(1000, 0.0)).unwrap();
        assert!(end.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(profile_at(&f, TimeIndex::NOT_REACHED).is_err());
    }

    #[test]
    fn local_time_at_tau_brackets_level() {
        let d = simulate_driver(21, 1e-4, 200_000).unwrap();
        let p = build_mu_process(&d, 2.0).unwrap();
        let f = occupation_local_time(&p, -0.5, 0.04, 25).unwrap();
        let a = 0.3;
        let t = inverse_local_time(&f, a, 0.0).unwrap();
        if t.reached {
            let j = f.grid.bin_of(0.0).unwrap();
            let after = f.value(t.step + 1, j);
            assert!(after > a && after <= a + f.dt / f.grid.dx + 1e-12);
            let at = profile_at(&f, t).unwrap()[j];
            assert!((at - a).abs() < 1e-9);
        }
    }

    #[test]
    fn centered_grid_places_center_on_level() {
        let g = LevelGrid::centered_on(-0.5, -0.6, -0.4, 0.04).unwrap();
        let j = g.bin_of(-0.5).unwrap();
        assert!((g.center(j) + 0.5).abs() < 1e-12);
        assert!(g.lo() <= -0.6 && g.hi() >= -0.4);
    }

    #[test]
    fn streaming_counter_matches_field() {
        let d = simulate_driver(2, 1e-3, 5000).unwrap();
        let p = build_mu_process(&d, 1.0).unwrap();
        let grid = LevelGrid::new(-1.0, 0.05, 40).unwrap();
        let f = LocalTimeField::from_samples(&p.x, p.dt, grid);
        let mut c = OccupationCounter::new(grid, p.dt);
        for &x in &p.x[..5000] {
            c.deposit(x);
        }
        assert_eq!(c.values(), f.row(5000));
    }
}
