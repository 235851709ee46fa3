//! Paths glued from the excursions of X below or above a level.
//!
//! For a level x, X^{−,x} runs X on the clock A^{−,x}_t = ∫_0^t 1{X_s ≤ x} ds
//! and X^{+,x} on A^{+,x}_t = ∫_0^t 1{X_s > x} ds. On the grid a step is
//! assigned to a side by its left endpoint, so the two clocks add up to the
//! horizon exactly.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::path_engine::{
    validate_grid, validate_mu, DriverPath, FastForward, MuProcessPath, Walker,
};
use crate::rng::{replica_rng, Lane};
use crate::verify::stats::{correlation, median_split_chi2, CHI2_1DF_1PCT};
use crate::verify::{Check, TestReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Below,
    Above,
}

impl Side {
    #[inline]
    pub fn keeps(self, value: f64, level: f64) -> bool {
        match self {
            Side::Below => value <= level,
            Side::Above => value > level,
        }
    }
}

/// X^{±,x} sampled at the kept grid points of one original path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluedPath {
    pub side: Side,
    pub level: f64,
    pub dt: f64,
    /// Bin width used for the local time at the level.
    pub dx: f64,
    /// Number of steps of the original path.
    pub horizon_steps: usize,
    pub values: Vec<f64>,
    /// Original sample index of each glued sample (realizes α^{±,x}).
    pub back_map: Vec<usize>,
    /// Glued clock A^{±,x} at each glued sample.
    pub u: Vec<f64>,
    /// L(α_u, x) read from a bin centred on the level.
    pub local_time_at_x: Vec<f64>,
}

impl GluedPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// A^{±,x} at the horizon: `dt` times the number of kept steps.
    pub fn clock(&self) -> f64 {
        let kept_steps = self
            .back_map
            .iter()
            .filter(|&&i| i < self.horizon_steps)
            .count();
        kept_steps as f64 * self.dt
    }

    /// Writes `u,value,original_index` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "u,value,original_index")?;
        for k in 0..self.len() {
            writeln!(out, "{},{},{}", self.u[k], self.values[k], self.back_map[k])?;
        }
        Ok(())
    }
}

/// Default bin width for reading local time at the gluing level.
pub fn default_dx(dt: f64) -> f64 {
    4.0 * dt.sqrt()
}

pub fn glue(path: &MuProcessPath, x: f64, side: Side) -> GluedPath {
    glue_with(path, x, side, default_dx(path.dt))
}

pub fn glue_with(path: &MuProcessPath, x: f64, side: Side, dx: f64) -> GluedPath {
    let n = path.n();
    let (lo, hi) = (x - 0.5 * dx, x + 0.5 * dx);
    let mut g = GluedPath {
        side,
        level: x,
        dt: path.dt,
        dx,
        horizon_steps: n,
        values: Vec::new(),
        back_map: Vec::new(),
        u: Vec::new(),
        local_time_at_x: Vec::new(),
    };
    let (mut kept_steps, mut at_level) = (0usize, 0usize);
    for (i, &v) in path.x.iter().enumerate() {
        if side.keeps(v, x) {
            g.values.push(v);
            g.back_map.push(i);
            g.u.push(kept_steps as f64 * path.dt);
            g.local_time_at_x.push(at_level as f64 * path.dt / dx);
            if i < n {
                kept_steps += 1;
            }
        }
        if lo <= v && v < hi {
            at_level += 1;
        }
    }
    g
}

/// Interleaves two glued paths back into the original sample sequence.
pub fn reconstruct(below: &GluedPath, above: &GluedPath) -> Result<Vec<f64>> {
    if below.side != Side::Below || above.side != Side::Above {
        return Err(Error::Provenance(
            "expected one below and one above path".into(),
        ));
    }
    if below.level != above.level
        || below.dt != above.dt
        || below.horizon_steps != above.horizon_steps
    {
        return Err(Error::Provenance(format!(
            "levels {} / {}, dt {} / {}, horizons {} / {}",
            below.level, above.level, below.dt, above.dt, below.horizon_steps, above.horizon_steps
        )));
    }
    let n = below.horizon_steps + 1;
    if below.len() + above.len() != n {
        return Err(Error::Provenance(format!(
            "{} + {} samples do not make up {n}",
            below.len(),
            above.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    for t in 0..n {
        if i < below.len() && below.back_map[i] == t {
            out.push(below.values[i]);
            i += 1;
        } else if j < above.len() && above.back_map[j] == t {
            out.push(above.values[j]);
            j += 1;
        } else {
            return Err(Error::Provenance(format!(
                "sample {t} is missing from both sides"
            )));
        }
    }
    Ok(out)
}

/// Residual of the semimartingale decomposition along the glued clock:
///
/// above: X⁺_u − [β⁺_u − ((1−μ)/μ)·I⁺_u + ½L⁺(u, x)],
/// below: X⁻_u − [x + β⁻_u − ((1−μ)/μ)·(I⁻_u − x) − ½L⁻(u, x)],
///
/// with β^± the glued sum of the exact Itô increments and I^± the running
/// infimum of the glued path.
pub fn decomposition_residual(glued: &GluedPath, driver: &DriverPath, mu: f64) -> Result<Vec<f64>> {
    validate_mu(mu)?;
    if driver.n() != glued.horizon_steps {
        return Err(Error::Provenance(
            "driver and glued path have different horizons".into(),
        ));
    }
    let c = (1.0 - mu) / mu;
    let x = glued.level;
    let mut beta = 0.0;
    let mut inf = f64::INFINITY;
    let mut out = Vec::with_capacity(glued.len());
    for k in 0..glued.len() {
        if k > 0 {
            let s = glued.back_map[k - 1];
            beta += -(driver.btilde[s + 1] - driver.btilde[s]);
        }
        let v = glued.values[k];
        inf = inf.min(v);
        let l = glued.local_time_at_x[k];
        let model = match glued.side {
            Side::Above => beta - c * inf + 0.5 * l,
            Side::Below => x + beta - c * (inf - x) - 0.5 * l,
        };
        out.push(v - model);
    }
    Ok(out)
}

pub fn sup_norm(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Correlation and median-split chi-square of paired functional values.
///
/// Passes iff |ρ| ≤ 3/√N and the chi-square stays below its 1% critical
/// value; a functional without variance makes the report inconclusive.
pub fn independence_from_samples(name: &str, below: &[f64], above: &[f64]) -> Result<TestReport> {
    if below.is_empty() || below.len() != above.len() {
        return Err(Error::EmptySample);
    }
    let n = below.len();
    let bound = 3.0 / (n as f64).sqrt();
    let mut r = TestReport::new(name).param("N", n);
    match correlation(below, above) {
        Some(rho) => {
            r.push(Check::at_most("abs_correlation", rho.abs(), bound));
            r.push(Check::at_most(
                "median_split_chi2",
                median_split_chi2(below, above),
                CHI2_1DF_1PCT,
            ));
            r.meta("correlation", rho);
        }
        None => {
            r.push(Check::at_most("abs_correlation", 0.0, bound));
            r.meta("correlation", 0.0);
            r.inconclusive("a functional has zero sample variance");
        }
    }
    Ok(r)
}

/// Applies `f_below` / `f_above` to each pair of glued paths and tests their
/// independence.
pub fn independence_test<F, G>(
    pairs: &[(GluedPath, GluedPath)],
    f_below: F,
    f_above: G,
) -> Result<TestReport>
where
    F: Fn(&GluedPath) -> f64,
    G: Fn(&GluedPath) -> f64,
{
    let fb: Vec<f64> = pairs.iter().map(|(b, _)| f_below(b)).collect();
    let fa: Vec<f64> = pairs.iter().map(|(_, a)| f_above(a)).collect();
    let mut r = independence_from_samples("independence", &fb, &fa)?;
    if let Some((b, _)) = pairs.first() {
        r.params.insert("x".into(), b.level.into());
    }
    Ok(r)
}

/// Time a glued path spends beyond `offset` from its level (deeper below
/// for the lower side, further above for the upper side) during its first
/// `u` units of glued time.
pub fn occupation_beyond(g: &GluedPath, u: f64, offset: f64) -> f64 {
    let mut t = 0.0;
    for k in 0..g.len() {
        if g.back_map[k] >= g.horizon_steps || g.u[k] >= u {
            break;
        }
        let beyond = match g.side {
            Side::Below => g.values[k] <= g.level - offset,
            Side::Above => g.values[k] > g.level + offset,
        };
        if beyond {
            t += g.dt;
        }
    }
    t
}

/// Monte Carlo check that X^{−,x} and X^{+,x} are independent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndependenceConfig {
    pub mu: f64,
    pub x: f64,
    /// Glued time over which each functional is evaluated.
    pub u: f64,
    /// Distance from the level defining the occupation functionals.
    pub offset: f64,
    pub n: usize,
    pub dt: f64,
    pub master_seed: u64,
    /// Grid steps allowed per replica.
    pub cap: u64,
}

impl Default for IndependenceConfig {
    fn default() -> Self {
        IndependenceConfig {
            mu: 2.0,
            x: -0.5,
            u: 1.0,
            offset: 0.25,
            n: 10_000,
            dt: 1e-4,
            master_seed: 8,
            cap: 200_000_000,
        }
    }
}

impl IndependenceConfig {
    pub fn validate(&self) -> Result<()> {
        validate_mu(self.mu)?;
        validate_grid(self.dt, self.n)?;
        if !(self.u > 0.0 && self.offset >= 0.0) {
            return Err(param("u", "glued horizon must be positive and offset ≥ 0"));
        }
        if !self.x.is_finite() {
            return Err(param("x", "level must be finite"));
        }
        Ok(())
    }
}

/// Functional values of one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GluedOccupation {
    pub below: f64,
    pub above: f64,
    /// Occupation of the upper glued path beyond the level during its
    /// first u/2 units; a functional of the same path as `above`.
    pub above_early: f64,
}

/// Streams one replica until both glued clocks reach `u`.
///
/// Once one clock is full, excursions to that side of the level are
/// skipped: they cannot change either functional.
pub fn glued_occupation(cfg: &IndependenceConfig, replica: u64) -> Result<GluedOccupation> {
    let mut w = Walker::new(
        cfg.mu,
        cfg.dt,
        replica_rng(cfg.master_seed, replica, Lane::Forward),
    )?;
    let (x, off) = (cfg.x, cfg.offset);
    let need = (cfg.u / cfg.dt).round() as u64;
    let (mut k_below, mut k_above) = (0u64, 0u64);
    let (mut n_below, mut n_above, mut n_early) = (0u64, 0u64, 0u64);
    let mut ff = FastForward::NONE;
    while k_below < need || k_above < need {
        if w.steps() >= cfg.cap {
            return Err(Error::CapReached {
                cap: cfg.cap,
                what: "both glued clocks reached u".into(),
            });
        }
        let v = w.x();
        if Side::Below.keeps(v, x) {
            if k_below < need {
                n_below += (v <= x - off) as u64;
                k_below += 1;
                if k_below == need {
                    ff.below = Some(x);
                }
            }
        } else if k_above < need {
            if v > x + off {
                n_above += 1;
                n_early += (2 * k_above < need) as u64;
            }
            k_above += 1;
            if k_above == need {
                ff.above = Some(x);
            }
        }
        w.advance(&ff);
    }
    Ok(GluedOccupation {
        below: n_below as f64 * cfg.dt,
        above: n_above as f64 * cfg.dt,
        above_early: n_early as f64 * cfg.dt,
    })
}

/// Independence report for occupation functionals of the two glued paths,
/// with a negative control pairing two functionals of the upper path.
pub fn independence_experiment(cfg: &IndependenceConfig) -> Result<TestReport> {
    independence_run(cfg).map(|(r, _)| r)
}

/// The report with the kept functional values of every replica.
pub fn independence_run(cfg: &IndependenceConfig) -> Result<(TestReport, Vec<GluedOccupation>)> {
    cfg.validate()?;
    let samples: Vec<Result<GluedOccupation>> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|r| glued_occupation(cfg, r))
        .collect();
    let mut ok = Vec::with_capacity(cfg.n);
    let mut discarded = 0usize;
    for s in samples {
        match s {
            Ok(v) => ok.push(v),
            Err(Error::CapReached { .. }) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    let below: Vec<f64> = ok.iter().map(|s| s.below).collect();
    let above: Vec<f64> = ok.iter().map(|s| s.above).collect();
    let early: Vec<f64> = ok.iter().map(|s| s.above_early).collect();
    let mut r = independence_from_samples("independence", &below, &above)?;
    r.params.insert("mu".into(), cfg.mu.into());
    r.params.insert("x".into(), cfg.x.into());
    r.params.insert("u".into(), cfg.u.into());
    r.params.insert("offset".into(), cfg.offset.into());
    r.params.insert("dt".into(), cfg.dt.into());
    r.params
        .insert("master_seed".into(), cfg.master_seed.into());
    r.meta("discarded", discarded);
    r.push(Check::at_most(
        "discard_fraction",
        discarded as f64 / cfg.n as f64,
        0.01,
    ));
    let control = independence_from_samples("negative_control", &early, &above)?;
    let rho_c = control
        .metadata
        .get("correlation")
        .and_then(|v| v.as_f64())
        .unwrap_or(0.0);
    r.meta("negative_control_correlation", rho_c);
    r.meta("negative_control_pass", control.pass);
    r.push(Check::holds("negative_control_rejected", !control.pass));
    Ok((r, ok))
}
