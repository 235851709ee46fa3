//! The white noise W carried by a μ-process and its martingale measures.
//!
//! For a test function g on ℝ₊ × ℝ,
//!
//! ```text
//! W(g) = ∫ g(L(t, X_t), X_t) sgn(B_t) dB_t ≈ Σ_i g(L̂(t_i, X_{t_i}), X_{t_i}) · (−ΔB̃_i),
//! ```
//!
//! the integrand being read at the left endpoint of each step with the local
//! time accumulated strictly before it.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::local_time::{LevelGrid, LocalTimeField, OccupationCounter};
use crate::path_engine::{DriverPath, MuProcessPath, TimeIndex};

/// Weighted rectangle `weight · 1{ℓ0 ≤ ℓ < ℓ1, x0 ≤ x < x1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub l0: f64,
    pub l1: f64,
    pub x0: f64,
    pub x1: f64,
    pub weight: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.l1 - self.l0) * (self.x1 - self.x0)
    }

    #[inline]
    fn contains(&self, l: f64, x: f64) -> bool {
        self.l0 <= l && l < self.l1 && self.x0 <= x && x < self.x1
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.l0 < o.l1 && o.l0 < self.l1 && self.x0 < o.x1 && o.x0 < self.x1
    }
}

/// Simple function: a finite sum of disjoint weighted rectangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction2D {
    rects: Vec<Rect>,
    norm2: f64,
}

impl StepFunction2D {
    pub fn new(rects: Vec<Rect>) -> Result<Self> {
        for r in &rects {
            let finite = [r.l0, r.l1, r.x0, r.x1, r.weight]
                .iter()
                .all(|v| v.is_finite());
            if !finite || r.l0 < 0.0 || r.l1 < r.l0 || r.x1 < r.x0 {
                return Err(param("g", format!("invalid rectangle {r:?}")));
            }
        }
        for (i, a) in rects.iter().enumerate() {
            if rects[i + 1..].iter().any(|b| a.overlaps(b)) {
                return Err(param("g", "rectangles must be pairwise disjoint"));
            }
        }
        let norm2 = rects.iter().map(|r| r.weight * r.weight * r.area()).sum();
        Ok(StepFunction2D { rects, norm2 })
    }

    /// The function ≡ 0.
    pub fn zero() -> Self {
        StepFunction2D {
            rects: Vec::new(),
            norm2: 0.0,
        }
    }

    /// Indicator of `[l0, l1) × [x0, x1)`.
    pub fn indicator(l0: f64, l1: f64, x0: f64, x1: f64) -> Result<Self> {
        StepFunction2D::new(vec![Rect {
            l0,
            l1,
            x0,
            x1,
            weight: 1.0,
        }])
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    /// ∫∫ g² dℓ dx.
    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    #[inline]
    pub fn eval(&self, l: f64, x: f64) -> f64 {
        self.rects
            .iter()
            .filter(|r| r.contains(l, x))
            .map(|r| r.weight)
            .sum()
    }

    /// Smallest x-interval holding the support, `None` for g ≡ 0.
    pub fn x_support(&self) -> Option<(f64, f64)> {
        let live = self
            .rects
            .iter()
            .filter(|r| r.weight != 0.0 && r.area() > 0.0);
        live.fold(None, |acc, r| match acc {
            None => Some((r.x0, r.x1)),
            Some((lo, hi)) => Some((f64::min(lo, r.x0), f64::max(hi, r.x1))),
        })
    }

    fn check_covered(&self, grid: &LevelGrid) -> Result<()> {
        if let Some((lo, hi)) = self.x_support() {
            let tol = 1e-9 * grid.dx;
            if lo < grid.lo() - tol || hi > grid.hi() + tol {
                return Err(Error::Coverage {
                    lo,
                    hi,
                    win_lo: grid.lo(),
                    win_hi: grid.hi(),
                });
            }
        }
        Ok(())
    }

    /// Share of ∫∫ g² lying under the swept region {ℓ < L(x)}, with `lt`
    /// the local-time profile on `grid`.
    pub fn coverage(&self, grid: &LevelGrid, lt: &[f64]) -> f64 {
        if self.norm2 == 0.0 {
            return 1.0;
        }
        let mut swept = 0.0;
        for r in &self.rects {
            for (j, &l) in lt.iter().enumerate() {
                let xw = (r.x1.min(grid.edge(j + 1)) - r.x0.max(grid.edge(j))).max(0.0);
                let lw = (r.l1.min(l) - r.l0).max(0.0);
                swept += r.weight * r.weight * xw * lw;
            }
        }
        swept / self.norm2
    }
}

/// Streaming evaluation of W(g) for several g along one path.
#[derive(Debug, Clone)]
pub struct NoiseIntegrator {
    gs: Vec<StepFunction2D>,
    counter: OccupationCounter,
    sums: Vec<f64>,
}

impl NoiseIntegrator {
    pub fn new(gs: Vec<StepFunction2D>, grid: LevelGrid, dt: f64) -> Result<Self> {
        for g in &gs {
            g.check_covered(&grid)?;
        }
        let n = gs.len();
        Ok(NoiseIntegrator {
            gs,
            counter: OccupationCounter::new(grid, dt),
            sums: vec![0.0; n],
        })
    }

    /// Accounts for one step starting at `x` with Itô increment `xi`.
    #[inline]
    pub fn step(&mut self, x: f64, xi: f64) {
        if let Some(j) = self.counter.deposit(x) {
            let l = (self.counter.count(j) - 1) as f64 * self.counter.dt / self.counter.grid.dx;
            for (s, g) in self.sums.iter_mut().zip(&self.gs) {
                *s += g.eval(l, x) * xi;
            }
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.sums
    }

    pub fn counter(&self) -> &OccupationCounter {
        &self.counter
    }

    pub fn coverage(&self) -> Vec<f64> {
        let lt = self.counter.values();
        self.gs
            .iter()
            .map(|g| g.coverage(&self.counter.grid, &lt))
            .collect()
    }
}

#[inline]
fn increment(driver: &DriverPath, i: usize) -> f64 {
    -(driver.btilde[i + 1] - driver.btilde[i])
}

fn check_same_path(
    path: &MuProcessPath,
    field: &LocalTimeField,
    driver: &DriverPath,
) -> Result<()> {
    if path.n() != driver.n() || field.n_steps() != path.n() {
        return Err(param(
            "path",
            "path, field and driver have different lengths",
        ));
    }
    Ok(())
}

/// Riemann–Itô sum for W(g) over the steps before `horizon`.
pub fn integrate(
    g: &StepFunction2D,
    path: &MuProcessPath,
    field: &LocalTimeField,
    driver: &DriverPath,
    horizon: TimeIndex,
) -> Result<f64> {
    check_same_path(path, field, driver)?;
    if !horizon.reached {
        return Err(Error::NotReached("integration horizon".into()));
    }
    let mut acc = NoiseIntegrator::new(vec![g.clone()], field.grid, field.dt)?;
    for i in (0..path.n()).take_while(|&i| horizon.covers_step(i)) {
        acc.step(path.x[i], increment(driver, i));
    }
    Ok(acc.values()[0])
}

/// Cumulative Itô sums over a nested family of level slabs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleMeasurePath {
    /// Slab parameters h_k (ascending, starting at 0 when the family is
    /// anchored there).
    pub levels: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub qv: Vec<f64>,
    /// First index whose slab reaches past the running infimum, if any.
    pub truncated_from: Option<usize>,
}

impl MartingaleMeasurePath {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "h,cumulative,qv")?;
        for k in 0..self.levels.len() {
            writeln!(
                out,
                "{},{},{}",
                self.levels[k], self.cumulative[k], self.qv[k]
            )?;
        }
        Ok(())
    }
}

/// How slab k is anchored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slabs {
    /// `top − h_k < x ≤ top`.
    Below { top: f64 },
    /// `x ≤ base + h_k`.
    Above { base: f64 },
}

/// Fixed-point accumulator with resolution 2⁻⁹⁰. Integer addition is
/// associative, so sums over unions of slabs do not depend on bracketing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactSum(i128);

const FIXED_SCALE: f64 = (1u128 << 90) as f64;

impl ExactSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        self.0 += (v * FIXED_SCALE).round() as i128;
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / FIXED_SCALE
    }
}

/// Accumulates Σ 1{x_i ∈ slab k}·ξ_i and Σ 1{x_i ∈ slab k}·ξ_i² for all k in
/// one pass: each step lands in the smallest slab containing it.
#[derive(Debug, Clone)]
pub struct SlabSums {
    slabs: Slabs,
    hs: Vec<f64>,
    sum: Vec<ExactSum>,
    sq: Vec<ExactSum>,
}

impl SlabSums {
    pub fn new(slabs: Slabs, hs: &[f64]) -> Result<Self> {
        validate_h_grid(hs)?;
        Ok(SlabSums {
            slabs,
            hs: hs.to_vec(),
            sum: vec![ExactSum::default(); hs.len()],
            sq: vec![ExactSum::default(); hs.len()],
        })
    }

    #[inline]
    fn first_slab(&self, x: f64) -> Option<usize> {
        let k = match self.slabs {
            Slabs::Below { top } => {
                if x > top {
                    return None;
                }
                let depth = top - x;
                self.hs.partition_point(|&h| h <= depth)
            }
            Slabs::Above { base } => {
                let height = x - base;
                self.hs.partition_point(|&h| h < height)
            }
        };
        (k < self.hs.len()).then_some(k)
    }

    #[inline]
    pub fn push(&mut self, x: f64, xi: f64) {
        if let Some(k) = self.first_slab(x) {
            self.sum[k].add(xi);
            self.sq[k].add(xi * xi);
        }
    }

    pub fn finish(&self) -> MartingaleMeasurePath {
        let prefix = |v: &[ExactSum]| {
            v.iter()
                .scan(ExactSum::default(), |s, d| {
                    s.0 += d.0;
                    Some(s.value())
                })
                .collect::<Vec<_>>()
        };
        MartingaleMeasurePath {
            levels: self.hs.clone(),
            cumulative: prefix(&self.sum),
            qv: prefix(&self.sq),
            truncated_from: None,
        }
    }
}

pub(crate) fn validate_h_grid(hs: &[f64]) -> Result<()> {
    if hs.is_empty() {
        return Err(param("h_grid", "at least one level is required"));
    }
    if hs.iter().any(|h| !(*h >= 0.0 && h.is_finite())) {
        return Err(param("h_grid", "levels must be finite and ≥ 0"));
    }
    if hs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("h_grid", "levels must be strictly increasing"));
    }
    Ok(())
}

/// M_r(A) = W(1_{A × (−r, 0]}) for every r in `levels`, over the whole path.
pub fn martingale_measure(
    l0: f64,
    l1: f64,
    path: &MuProcessPath,
    field: &LocalTimeField,
    driver: &DriverPath,
    levels: &[f64],
) -> Result<MartingaleMeasurePath> {
    check_same_path(path, field, driver)?;
    if !(0.0 <= l0 && l0 <= l1 && l1.is_finite()) {
        return Err(param(
            "A",
            format!("need 0 ≤ ℓ0 ≤ ℓ1 < ∞, got [{l0}, {l1})"),
        ));
    }
    let mut sums = SlabSums::new(Slabs::Below { top: 0.0 }, levels)?;
    let r_max = levels[levels.len() - 1];
    StepFunction2D::indicator(l0, l1, -r_max, 0.0)?.check_covered(&field.grid)?;
    let mut counts = vec![0u64; field.grid.m];
    for i in 0..path.n() {
        if let Some(j) = field.step_bin(i) {
            let l = field.count_to_value(counts[j] as f64);
            counts[j] += 1;
            if l0 <= l && l < l1 {
                sums.push(path.x[i], increment(driver, i));
            }
        }
    }
    Ok(sums.finish())
}

fn slab_integral(
    slabs: Slabs,
    path: &MuProcessPath,
    driver: &DriverPath,
    stop: TimeIndex,
    hs: &[f64],
) -> Result<MartingaleMeasurePath> {
    let mut sums = SlabSums::new(slabs, hs)?;
    for i in (0..path.n()).take_while(|&i| stop.covers_step(i)) {
        sums.push(path.x[i], increment(driver, i));
    }
    Ok(sums.finish())
}

/// h ↦ ∫_{−h}^0 W([0, L(τ_a^0, x)], dx), the Itô sum of
/// 1{t < τ_a^0, −h < X_t ≤ 0}·sgn(B_t) dB_t.
pub fn rk_integral_first(
    path: &MuProcessPath,
    field: &LocalTimeField,
    driver: &DriverPath,
    a: f64,
    h_grid: &[f64],
) -> Result<MartingaleMeasurePath> {
    check_same_path(path, field, driver)?;
    let tau = crate::local_time::inverse_local_time(field, a, 0.0)?;
    if !tau.reached {
        return Err(Error::NotReached(format!("τ_a at level 0 for a = {a}")));
    }
    let mut mm = slab_integral(Slabs::Below { top: 0.0 }, path, driver, tau, h_grid)?;
    let depth = -path.inf_run[(tau.step + 1).min(path.n())];
    mm.truncated_from = h_grid.iter().position(|&h| h > depth);
    Ok(mm)
}

/// h ↦ ∫_b^{b+h} W([0, L(T_b, x)], dx), the Itô sum of
/// 1{t < T_b, X_t ≤ b + h}·sgn(B_t) dB_t.
pub fn rk_integral_second(
    path: &MuProcessPath,
    field: &LocalTimeField,
    driver: &DriverPath,
    b: f64,
    h_grid: &[f64],
) -> Result<MartingaleMeasurePath> {
    check_same_path(path, field, driver)?;
    if !(b < 0.0) {
        return Err(param("b", format!("level must be negative, got {b}")));
    }
    let tb = crate::path_engine::hitting_time(path, b);
    if !tb.reached {
        return Err(Error::NotReached(format!("T_b for b = {b}")));
    }
    slab_integral(Slabs::Above { base: b }, path, driver, tb, h_grid)
}
