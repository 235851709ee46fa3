//! The two-sided μ-process.
//!
//! For t ≤ 0 the process is X_t = |B′_{−t}| + μ𝔏′_{−t} for an independent
//! Brownian motion B′. On its own clock s = −t this is, by Lévy's identity,
//!
//! ```text
//! Y_s = (1 + μ)·S′_s − B̃′_s,
//! ```
//!
//! which never returns below μS′. Once μS′ exceeds r_max the backward side
//! has produced T_r for every r ≤ r_max, and no local time at levels below
//! r_max is missed by starting the clock there.
//!
//! Read in forward time, a backward step s → s − ds has Itô increment
//! sgn(B) dB = d|B| − d𝔏 = ΔB̃′ − 2ΔS′ (with Δ taken along the backward
//! clock), so the drift (1 − μ) d𝔏 again only acts at the running infimum.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::local_time::{exceed_threshold, LevelGrid, OccupationCounter};
use crate::path_engine::{
    brownian_increment, validate_grid, validate_mu, DriverPath, FastForward, MuProcessPath, Walker,
};
use crate::rng::{replica_rng, Lane, StreamRng};
use crate::verify::ray_knight::{collect_kept, default_dx};
use crate::verify::residual::{residual_path, Identity, ResidualConfig};
use crate::verify::stats::{mean, median, std_err};
use crate::verify::{Check, TestReport};
use crate::white_noise::{NoiseIntegrator, Rect, StepFunction2D};

/// How far the forward side (t ≥ 0) is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardPolicy {
    Steps(usize),
    /// Until the first sample at or below the level.
    UntilBelow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedConfig {
    pub mu: f64,
    pub dt: f64,
    pub r_max: f64,
    pub forward: ForwardPolicy,
    /// Steps allowed on each side.
    pub cap: u64,
}

impl TwoSidedConfig {
    pub fn new(mu: f64, dt: f64, r_max: f64, forward: ForwardPolicy) -> Self {
        TwoSidedConfig {
            mu,
            dt,
            r_max,
            forward,
            cap: 50_000_000,
        }
    }
}

/// Both sides of a two-sided μ-process, each kept as its driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedPath {
    pub mu: f64,
    pub dt: f64,
    pub r_max: f64,
    /// Driver of the backward side on its own clock: sample k sits at
    /// t = −k·dt.
    pub backward: DriverPath,
    pub forward: DriverPath,
}

#[inline]
fn backward_value(mu: f64, smax: f64, btilde: f64) -> f64 {
    (1.0 + mu) * smax - btilde
}

fn push_state(d: &mut DriverPath, b: f64, s: f64) {
    d.btilde.push(b);
    d.smax.push(s);
}

fn empty_driver(seed: u64, dt: f64) -> DriverPath {
    DriverPath {
        seed,
        dt,
        btilde: vec![0.0],
        smax: vec![0.0],
    }
}

/// Simulates replica `replica` of a two-sided path. The sides draw from the
/// backward and forward lanes of the replica.
pub fn simulate_two_sided(
    cfg: &TwoSidedConfig,
    master_seed: u64,
    replica: u64,
) -> Result<TwoSidedPath> {
    validate_mu(cfg.mu)?;
    validate_grid(cfg.dt, 1)?;
    if !(cfg.r_max > 0.0 && cfg.r_max.is_finite()) {
        return Err(param(
            "r_max",
            format!("must be positive, got {}", cfg.r_max),
        ));
    }
    let sqrt_dt = cfg.dt.sqrt();
    let mut rng = replica_rng(master_seed, replica, Lane::Backward);
    let mut backward = empty_driver(master_seed, cfg.dt);
    let (mut b, mut s) = (0.0_f64, 0.0_f64);
    while cfg.mu * s <= cfg.r_max {
        if backward.n() as u64 >= cfg.cap {
            return Err(Error::CapReached {
                cap: cfg.cap,
                what: format!("backward side exceeding r_max = {}", cfg.r_max),
            });
        }
        b += brownian_increment(&mut rng, sqrt_dt);
        s = s.max(b);
        push_state(&mut backward, b, s);
    }

    let mut w = Walker::new(
        cfg.mu,
        cfg.dt,
        replica_rng(master_seed, replica, Lane::Forward),
    )?;
    let mut forward = empty_driver(master_seed, cfg.dt);
    let done = |w: &Walker, n: usize| match cfg.forward {
        ForwardPolicy::Steps(k) => n >= k,
        ForwardPolicy::UntilBelow(level) => w.x() <= level,
    };
    while !done(&w, forward.n()) {
        if forward.n() as u64 >= cfg.cap {
            return Err(Error::CapReached {
                cap: cfg.cap,
                what: "forward side".into(),
            });
        }
        w.step();
        push_state(&mut forward, w.btilde(), w.smax());
    }
    Ok(TwoSidedPath {
        mu: cfg.mu,
        dt: cfg.dt,
        r_max: cfg.r_max,
        backward,
        forward,
    })
}

impl TwoSidedPath {
    pub fn n_back(&self) -> usize {
        self.backward.n()
    }

    /// Number of samples, both sides and the splice.
    pub fn len(&self) -> usize {
        self.backward.n() + self.forward.n() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of t = 0.
    pub fn splice(&self) -> usize {
        self.n_back()
    }

    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.n_back() as f64) * self.dt
    }

    /// Value at the backward clock s = k·dt.
    pub fn backward_value(&self, k: usize) -> f64 {
        backward_value(self.mu, self.backward.smax[k], self.backward.btilde[k])
    }

    pub fn value(&self, i: usize) -> f64 {
        let nb = self.n_back();
        if i <= nb {
            self.backward_value(nb - i)
        } else {
            let j = i - nb;
            (1.0 - self.mu) * self.forward.smax[j] - self.forward.btilde[j]
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Itô increment sgn(B) ΔB of step i → i + 1, in forward time.
    pub fn increment(&self, i: usize) -> f64 {
        let nb = self.n_back();
        if i < nb {
            let (k, d) = (nb - i, &self.backward);
            (d.btilde[k] - d.btilde[k - 1]) - 2.0 * (d.smax[k] - d.smax[k - 1])
        } else {
            let j = i - nb;
            -(self.forward.btilde[j + 1] - self.forward.btilde[j])
        }
    }

    pub fn increments(&self) -> Vec<f64> {
        (0..self.len() - 1).map(|i| self.increment(i)).collect()
    }

    /// The forward side as a one-sided μ-process.
    pub fn forward_path(&self) -> Result<MuProcessPath> {
        crate::path_engine::build_mu_process(&self.forward, self.mu)
    }

    /// First sample at or below `r`: T_r rounded up to the grid.
    pub fn hitting_index(&self, r: f64) -> Option<usize> {
        (0..self.len()).find(|&i| self.value(i) <= r)
    }

    /// (X_{T_r + t} − r, t ≥ 0) with its Itô increments.
    pub fn shifted(&self, r: f64) -> Result<ShiftedPath> {
        if r > self.r_max {
            return Err(param("r", format!("{r} lies above r_max = {}", self.r_max)));
        }
        let start = self
            .hitting_index(r)
            .ok_or_else(|| Error::NotReached(format!("T_r for r = {r}")))?;
        Ok(ShiftedPath {
            start,
            x: (start..self.len()).map(|i| self.value(i) - r).collect(),
            xi: (start..self.len() - 1).map(|i| self.increment(i)).collect(),
        })
    }

    /// `t,x` with negative times on the backward side.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,x")?;
        for i in 0..self.len() {
            writeln!(out, "{},{}", self.time(i), self.value(i))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedPath {
    /// Index of T_r in the two-sided path.
    pub start: usize,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Σ g(L̂, x_i)·ξ_i over all steps of `xs`, local time counted from the
/// first sample.
pub fn noise_integral(
    xs: &[f64],
    xis: &[f64],
    g: &StepFunction2D,
    grid: LevelGrid,
    dt: f64,
) -> Result<f64> {
    if xs.len() != xis.len() + 1 {
        return Err(param("xs", "need one more sample than increments"));
    }
    let mut acc = NoiseIntegrator::new(vec![g.clone()], grid, dt)?;
    for (&x, &xi) in xs.iter().zip(xis) {
        acc.step(x, xi);
    }
    Ok(acc.values()[0])
}

fn translate(g: &StepFunction2D, r: f64) -> Result<StepFunction2D> {
    StepFunction2D::new(
        g.rects()
            .iter()
            .map(|q| Rect {
                x0: q.x0 + r,
                x1: q.x1 + r,
                ..*q
            })
            .collect(),
    )
}

/// W^{(r)}(g) from the shifted path and W(g(·, · − r)) from the whole path.
/// `g` must vanish at levels ≥ 0 and `grid` must cover its support.
pub fn shifted_and_global(
    path: &TwoSidedPath,
    r: f64,
    g: &StepFunction2D,
    grid: LevelGrid,
) -> Result<(f64, f64)> {
    if let Some((_, hi)) = g.x_support() {
        if hi > 0.0 {
            return Err(param("g", "support must lie below the shift level"));
        }
    }
    let sh = path.shifted(r)?;
    let local = noise_integral(&sh.x, &sh.xi, g, grid, path.dt)?;
    let global_grid = LevelGrid::new(grid.x0 + r, grid.dx, grid.m)?;
    let global = noise_integral(
        &path.values(),
        &path.increments(),
        &translate(g, r)?,
        global_grid,
        path.dt,
    )?;
    Ok((local, global))
}

/// Streaming backward side with excursions above `top` cut out. Returns the
/// samples in forward-time order, each with the Itô increment of the step
/// leaving it; a skipped excursion leaves a sample at `top` whose increment
/// is 0.
fn backward_window(
    mu: f64,
    dt: f64,
    top: f64,
    cap: u64,
    skip: bool,
    mut rng: StreamRng,
) -> Result<(Vec<(f64, f64)>, u64)> {
    let sqrt_dt = dt.sqrt();
    let (mut b, mut s) = (0.0_f64, 0.0_f64);
    let mut out = vec![(0.0, f64::NAN)];
    let mut steps = 0u64;
    while mu * s <= top {
        if steps >= cap {
            return Err(Error::CapReached {
                cap,
                what: format!("backward side exceeding {top}"),
            });
        }
        let (b0, s0) = (b, s);
        b += brownian_increment(&mut rng, sqrt_dt);
        s = s.max(b);
        steps += 1;
        out.last_mut().expect("nonempty").1 = (b - b0) - 2.0 * (s - s0);
        let y = backward_value(mu, s, b);
        out.push((y, f64::NAN));
        if skip && y > top && mu * s <= top {
            b = backward_value(mu, s, 0.0) - top;
            out.last_mut().expect("nonempty").1 = 0.0;
            out.push((top, f64::NAN));
        }
    }
    // the last entry is the starting sample in forward time
    let (mut prev, _) = out.pop().expect("at least one step");
    let mut fwd = Vec::with_capacity(out.len());
    for &(y, xi) in out.iter().rev() {
        fwd.push((prev, xi));
        prev = y;
    }
    debug_assert_eq!(prev, 0.0);
    Ok((fwd, steps))
}

/// Residuals of both identities around level r, anchored on the bin centred
/// on r; see [`crate::verify::residual`] for the bin averaging. With
/// u = k·dx, the reading of bin k obeys
///
/// ```text
/// L̂_k = a + 2(R_k − R_0) + φ(u) − dx/4,   φ(u) = 2u/μ (u > 0), −(2 − 2/μ)u (u < 0),
/// ```
///
/// R_k being the Itô sum against clamp(k + ½ − y, 0, 1) − 1{y ≤ 0},
/// y = (x − r)/dx. Negative k is the first identity and needs
/// r − (|k| + ½)dx ≥ I_τ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MainBisConfig {
    pub mu: f64,
    pub r: f64,
    pub a: f64,
    pub h_max: f64,
    pub n: usize,
    pub dt: f64,
    pub dx: f64,
    /// Level offset and bin width of the mean check on L(τ_a^r, r + h).
    pub moment_h: f64,
    pub moment_dx: f64,
    pub master_seed: u64,
    pub cap: u64,
    pub margin_bins: f64,
    pub rel_tol: f64,
}

impl MainBisConfig {
    pub fn new(mu: f64, r: f64, a: f64, h_max: f64, n: usize, dt: f64, master_seed: u64) -> Self {
        MainBisConfig {
            mu,
            r,
            a,
            h_max,
            n,
            dt,
            dx: 0.1,
            moment_h: h_max,
            moment_dx: default_dx(dt),
            master_seed,
            cap: 500_000_000,
            margin_bins: 4.0,
            rel_tol: 0.15,
        }
    }

    fn levels(&self) -> usize {
        (self.h_max / self.dx + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        validate_mu(self.mu)?;
        validate_grid(self.dt, self.n)?;
        if !self.r.is_finite() {
            return Err(param("r", "must be finite"));
        }
        if !(self.a > 0.0) {
            return Err(param("a", format!("must be positive, got {}", self.a)));
        }
        if !(self.h_max > 0.0 && self.moment_h >= 0.0) {
            return Err(param(
                "h",
                "h_max must be positive and the moment offset ≥ 0",
            ));
        }
        if !(self.dx > 0.0 && self.moment_dx > 0.0) {
            return Err(param("dx", "bin widths must be positive"));
        }
        if self.levels() == 0 {
            return Err(param("h_max", "must be at least one bin width"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisSample {
    /// Bin readings at r + k·dx for k = −K..=K.
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Lower levels with |k| ≤ valid_below enter the sup.
    pub valid_below: usize,
    /// L̂(τ_a^r, r + moment_h).
    pub moment: f64,
    pub steps: u64,
}

impl BisSample {
    fn levels(&self) -> usize {
        (self.lhs.len() - 1) / 2
    }

    /// sup over 1 ≤ k ≤ valid_below of the residual at r − k·dx.
    pub fn sup_below(&self) -> f64 {
        let k = self.levels();
        (1..=self.valid_below.min(k))
            .map(|j| (self.lhs[k - j] - self.rhs[k - j]).abs())
            .fold(0.0, f64::max)
    }

    /// sup over 1 ≤ k ≤ K of the residual at r + k·dx.
    pub fn sup_above(&self) -> f64 {
        let k = self.levels();
        (k + 1..=2 * k)
            .map(|j| (self.lhs[j] - self.rhs[j]).abs())
            .fold(0.0, f64::max)
    }
}

struct BisState<'a> {
    cfg: &'a MainBisConfig,
    k: usize,
    counter: OccupationCounter,
    moment: OccupationCounter,
    sums: Vec<f64>,
    needed: usize,
    frac: f64,
    inf: f64,
}

impl BisState<'_> {
    /// Accounts for the step leaving `x`; returns the sample once τ is hit.
    /// `xi` is only evaluated for steps counted before τ.
    fn visit(&mut self, x: f64, xi: impl FnOnce() -> f64, steps: u64) -> Option<BisSample> {
        self.inf = self.inf.min(x);
        let bin = self.counter.deposit(x);
        let mbin = self.moment.deposit(x);
        let stop = bin == Some(self.k) && self.counter.count(self.k) as usize == self.needed;
        if !stop || self.frac > 0.0 {
            self.push(x, xi());
        }
        stop.then(|| self.finish(bin, mbin, steps))
    }

    fn push(&mut self, x: f64, xi: f64) {
        let k = self.k as f64;
        let y = (x - self.cfg.r) / self.cfg.dx;
        if y.abs() >= k + 1.0 {
            return;
        }
        let below = if y <= 0.0 { 1.0 } else { 0.0 };
        for (j, s) in self.sums.iter_mut().enumerate() {
            let w = (j as f64 - k + 0.5 - y).clamp(0.0, 1.0) - below;
            *s += w * xi;
        }
    }

    fn finish(&self, bin: Option<usize>, mbin: Option<usize>, steps: u64) -> BisSample {
        let c = self.cfg;
        let k = self.k;
        let read = |counter: &OccupationCounter, j: usize, hit: Option<usize>| {
            let mut n = counter.count(j) as f64;
            if hit == Some(j) {
                n -= 1.0 - self.frac;
            }
            n * c.dt / counter.grid.dx
        };
        let mut lhs = Vec::with_capacity(2 * k + 1);
        let mut rhs = Vec::with_capacity(2 * k + 1);
        for j in 0..=2 * k {
            lhs.push(read(&self.counter, j, bin));
            let u = (j as f64 - k as f64) * c.dx;
            rhs.push(if j == k {
                c.a
            } else {
                let phi = if u > 0.0 {
                    2.0 * u / c.mu
                } else {
                    -(2.0 - 2.0 / c.mu) * u
                };
                c.a + 2.0 * (self.sums[j] - self.sums[k]) + phi - 0.25 * c.dx
            });
        }
        let depth = c.r - self.inf;
        let valid_below = (0..=k)
            .take_while(|&h| h == 0 || (h as f64 + 0.5) * c.dx <= depth)
            .last()
            .unwrap_or(0);
        BisSample {
            lhs,
            rhs,
            valid_below,
            moment: read(&self.moment, 0, mbin),
            steps,
        }
    }
}

/// One replica of [`verify_main_bis`].
pub fn main_bis_sample(cfg: &MainBisConfig, replica: u64) -> Result<BisSample> {
    let k = cfg.levels();
    let (r, dx) = (cfg.r, cfg.dx);
    let grid = LevelGrid::centered_on(r, r - k as f64 * dx, r + k as f64 * dx, dx)?;
    debug_assert_eq!(grid.m, 2 * k + 1);
    let mc = r + cfg.moment_h;
    let mgrid = LevelGrid::centered_on(mc, mc, mc, cfg.moment_dx)?;
    let margin = cfg.margin_bins * dx;
    let top = grid.hi().max(mgrid.hi()) + margin;
    let lo = grid.lo().min(mgrid.lo()) - margin;
    let (needed, frac) = exceed_threshold(cfg.a, cfg.dt, dx);
    let mut st = BisState {
        cfg,
        k,
        counter: OccupationCounter::new(grid, cfg.dt),
        moment: OccupationCounter::new(mgrid, cfg.dt),
        sums: vec![0.0; 2 * k + 1],
        needed,
        frac,
        inf: f64::INFINITY,
    };
    let back_rng = replica_rng(cfg.master_seed, replica, Lane::Backward);
    let (back, back_steps) = backward_window(cfg.mu, cfg.dt, top, cfg.cap, true, back_rng)?;
    for &(x, xi) in &back {
        if let Some(s) = st.visit(x, || xi, back_steps) {
            return Ok(s);
        }
    }
    let mut w = Walker::new(
        cfg.mu,
        cfg.dt,
        replica_rng(cfg.master_seed, replica, Lane::Forward),
    )?;
    let ff = FastForward {
        below: Some(lo),
        above: Some(top),
    };
    loop {
        if back_steps + w.steps() >= cfg.cap {
            return Err(Error::CapReached {
                cap: cfg.cap,
                what: format!("τ_a at level {r}"),
            });
        }
        let x = w.x();
        st.inf = st.inf.min(w.inf());
        let steps = back_steps + w.steps();
        if let Some(s) = st.visit(x, || w.advance(&ff), steps) {
            return Ok(s);
        }
    }
}

pub fn verify_main_bis(cfg: &MainBisConfig) -> Result<TestReport> {
    cfg.validate()?;
    let results: Vec<_> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| main_bis_sample(cfg, i))
        .collect();
    let (kept, discarded) = collect_kept(results)?;
    let mut r = TestReport::new("two-sided")
        .param("mu", cfg.mu)
        .param("r", cfg.r)
        .param("a", cfg.a)
        .param("h_max", cfg.h_max)
        .param("N", cfg.n)
        .param("dt", cfg.dt)
        .param("dx", cfg.dx)
        .param("moment_h", cfg.moment_h)
        .param("moment_dx", cfg.moment_dx)
        .param("master_seed", cfg.master_seed);
    if kept.len() < 2 {
        r.push(Check::at_most(
            "discard_fraction",
            discarded as f64 / cfg.n as f64,
            0.01,
        ));
        r.inconclusive("fewer than two replicas reached τ_a^r");
        return Ok(r);
    }
    let k = cfg.levels();
    let below: Vec<f64> = kept.iter().map(|s| s.sup_below()).collect();
    let above: Vec<f64> = kept.iter().map(|s| s.sup_above()).collect();
    let endpoint = kept
        .iter()
        .map(|s| (s.lhs[k] - cfg.a).abs())
        .fold(0.0, f64::max);
    let moments: Vec<f64> = kept.iter().map(|s| s.moment).collect();
    let target = cfg.a + 2.0 * cfg.moment_h / cfg.mu;
    let h_top = k as f64 * cfg.dx;
    r.push(Check::at_most(
        "median_sup_below",
        median(&below),
        cfg.rel_tol * cfg.a,
    ));
    // both thresholds are relative to the mean left-hand side at the
    // extreme level of the second identity, a + 2h/μ, and to a for the first
    r.push(Check::at_most(
        "median_sup_above",
        median(&above),
        cfg.rel_tol * (cfg.a + 2.0 * h_top / cfg.mu),
    ));
    r.push(Check::at_most("endpoint_identity", endpoint, 1e-9));
    r.push(Check::within(
        "moment_mean_3se",
        mean(&moments),
        target,
        3.0 * std_err(&moments),
    ));
    r.push(Check::at_most(
        "discard_fraction",
        discarded as f64 / cfg.n as f64,
        0.01,
    ));
    r.meta("moment_mean", mean(&moments));
    r.meta("moment_std_err", std_err(&moments));
    r.meta("moment_target", target);
    r.meta("mean_sup_below", mean(&below));
    r.meta("mean_sup_above", mean(&above));
    r.meta("discarded", discarded);
    r.meta(
        "mean_steps",
        mean(&kept.iter().map(|s| s.steps as f64).collect::<Vec<_>>()),
    );
    r.meta(
        "lhs_mean",
        (0..=2 * k)
            .map(|j| mean(&kept.iter().map(|s| s.lhs[j]).collect::<Vec<_>>()))
            .collect::<Vec<_>>(),
    );
    r.meta(
        "rhs_mean",
        (0..=2 * k)
            .map(|j| mean(&kept.iter().map(|s| s.rhs[j]).collect::<Vec<_>>()))
            .collect::<Vec<_>>(),
    );
    Ok(r)
}

/// At r = 0 the levels below 0 are visited by the forward side only, so the
/// residual of the first identity must match the one-sided computation in
/// law. Compares the mean sup residual of both within three combined
/// standard errors.
pub fn r_zero_reduction(cfg: &MainBisConfig) -> Result<TestReport> {
    let mut c0 = cfg.clone();
    c0.r = 0.0;
    c0.validate()?;
    let mut one = ResidualConfig::new(
        Identity::First,
        cfg.mu,
        cfg.a,
        cfg.h_max,
        cfg.n,
        cfg.master_seed,
    );
    one.dt_ladder = vec![cfg.dt];
    one.dx = Some(cfg.dx);
    one.margin_bins = cfg.margin_bins;
    one.cap = cfg.cap;
    let two: Vec<_> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| main_bis_sample(&c0, i).map(|s| s.sup_below()))
        .collect();
    let single: Vec<_> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| residual_path(&one, cfg.dt, i).map(|p| p.sup(Identity::First)))
        .collect();
    let (two, d2) = collect_kept(two)?;
    let (single, d1) = collect_kept(single)?;
    let mut r = TestReport::new("two-sided-r0")
        .param("mu", cfg.mu)
        .param("a", cfg.a)
        .param("h_max", cfg.h_max)
        .param("N", cfg.n)
        .param("dt", cfg.dt)
        .param("dx", cfg.dx)
        .param("master_seed", cfg.master_seed);
    if two.len() < 2 || single.len() < 2 {
        r.inconclusive("too few replicas completed");
        return Ok(r);
    }
    let se = (std_err(&two).powi(2) + std_err(&single).powi(2)).sqrt();
    r.push(Check::within(
        "mean_sup_agreement",
        mean(&two),
        mean(&single),
        3.0 * se,
    ));
    r.push(Check::at_most(
        "discard_fraction",
        (d1 + d2) as f64 / (2 * cfg.n) as f64,
        0.01,
    ));
    r.meta("mean_sup_two_sided", mean(&two));
    r.meta("mean_sup_one_sided", mean(&single));
    r.meta("median_sup_two_sided", median(&two));
    r.meta("median_sup_one_sided", median(&single));
    Ok(r)
}

/// Compares W^{(r)}(g) with W(g(·, · − r)) on `paths` two-sided paths, each
/// run for `steps` forward steps. The integrand is a two-rectangle step
/// function on a dyadic level grid reaching h_max below the shift.
pub fn shift_consistency(cfg: &MainBisConfig, paths: usize, steps: usize) -> Result<TestReport> {
    cfg.validate()?;
    let dx = 1.0 / 32.0;
    let depth = ((cfg.h_max / dx).floor() * dx).max(2.0 * dx);
    let g = StepFunction2D::new(vec![
        Rect {
            l0: 0.0,
            l1: cfg.a,
            x0: -depth,
            x1: -0.5 * depth,
            weight: 1.0,
        },
        Rect {
            l0: 0.5 * cfg.a,
            l1: 2.0 * cfg.a,
            x0: -0.5 * depth,
            x1: 0.0,
            weight: -0.5,
        },
    ])?;
    let grid = LevelGrid::covering(-depth, 0.0, dx)?;
    let ts = TwoSidedConfig::new(cfg.mu, cfg.dt, cfg.r.max(dx), ForwardPolicy::Steps(steps));
    let pairs: Vec<Result<(f64, f64)>> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = simulate_two_sided(&ts, cfg.master_seed, i)?;
            shifted_and_global(&p, cfg.r, &g, grid)
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let diff = pairs.iter().map(|(l, g)| (l - g).abs()).fold(0.0, f64::max);
    let mut r = TestReport::new("two-sided-shift")
        .param("mu", cfg.mu)
        .param("r", cfg.r)
        .param("a", cfg.a)
        .param("depth", depth)
        .param("paths", paths)
        .param("steps", steps)
        .param("dt", cfg.dt)
        .param("master_seed", cfg.master_seed);
    r.push(Check::holds(
        "shifted_equals_global",
        pairs.iter().all(|(l, g)| l == g),
    ));
    r.meta("max_abs_difference", diff);
    r.meta(
        "mean_abs_integral",
        mean(&pairs.iter().map(|p| p.0.abs()).collect::<Vec<_>>()),
    );
    Ok(r)
}
