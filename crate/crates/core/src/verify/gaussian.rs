//! Gaussianity and orthogonality of W(g) for simple functions g.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ray_knight::collect_kept;
use super::stats::{covariance, mean, sorted, std_err, variance};
use super::{ks_critical_one_sample, ks_statistic, Check, TestReport};
use crate::error::{param, Error, Result};
use crate::local_time::LevelGrid;
use crate::path_engine::{validate_grid, validate_mu, FastForward, Walker};
use crate::rng::{replica_rng, Lane};
use crate::white_noise::{NoiseIntegrator, StepFunction2D};

/// Each replica runs until every bin of the level window covering the
/// supports has local time at least the largest ℓ in the supports, so the
/// whole of every g is swept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianityConfig {
    pub mu: f64,
    pub gs: Vec<StepFunction2D>,
    pub n: usize,
    pub dt: f64,
    pub dx: f64,
    pub master_seed: u64,
    pub cap: u64,
    /// Skip margin around the level window.
    pub margin: f64,
    /// Multiplier on the 1% one-sample KS critical value.
    pub ks_inflation: f64,
    pub min_coverage: f64,
}

impl GaussianityConfig {
    pub fn new(
        mu: f64,
        gs: Vec<StepFunction2D>,
        n: usize,
        dt: f64,
        dx: f64,
        master_seed: u64,
    ) -> Self {
        GaussianityConfig {
            mu,
            gs,
            n,
            dt,
            dx,
            master_seed,
            cap: 500_000_000,
            margin: 4.0 * dx,
            ks_inflation: 2.0,
            min_coverage: 0.99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_mu(self.mu)?;
        validate_grid(self.dt, self.n)?;
        if !(self.dx > 0.0 && self.margin >= 0.0) {
            return Err(param("dx", "bin width must be positive and margin ≥ 0"));
        }
        Ok(())
    }

    fn window(&self) -> Option<(f64, f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut l_top: f64 = 0.0;
        for g in &self.gs {
            if let Some((a, b)) = g.x_support() {
                lo = lo.min(a);
                hi = hi.max(b);
                for r in g.rects() {
                    if r.weight != 0.0 && r.area() > 0.0 {
                        l_top = l_top.max(r.l1);
                    }
                }
            }
        }
        (lo < hi).then_some((lo, hi, l_top))
    }
}

/// W(g) for each g and the coverage fraction of each, for one replica.
pub fn gaussian_sample(cfg: &GaussianityConfig, replica: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi, l_top) = cfg
        .window()
        .ok_or_else(|| param("g", "all test functions vanish"))?;
    let grid = LevelGrid::covering(lo, hi, cfg.dx)?;
    let mut acc = NoiseIntegrator::new(cfg.gs.clone(), grid, cfg.dt)?;
    let mut w = Walker::new(
        cfg.mu,
        cfg.dt,
        replica_rng(cfg.master_seed, replica, Lane::Forward),
    )?;
    let ff = FastForward::window(grid.lo(), grid.hi(), cfg.margin);
    let needed = (l_top * cfg.dx / cfg.dt - 1e-9).ceil().max(0.0) as u64;
    let mut short = grid.m;
    while short > 0 {
        if w.steps() >= cfg.cap {
            return Err(Error::CapReached {
                cap: cfg.cap,
                what: "full sweep of the test-function supports".into(),
            });
        }
        let x = w.x();
        let xi = w.advance(&ff);
        let before = grid.bin_of(x).map(|j| acc.counter().count(j));
        acc.step(x, xi);
        if before == Some(needed.saturating_sub(1)) && needed > 0 {
            short -= 1;
        }
        if needed == 0 {
            short = 0;
        }
    }
    Ok((acc.values().to_vec(), acc.coverage()))
}

pub fn gaussianity_check(cfg: &GaussianityConfig) -> Result<TestReport> {
    gaussianity_run(cfg).map(|(r, _)| r)
}

/// The report with the kept values of W(g), one column per g.
pub fn gaussianity_run(cfg: &GaussianityConfig) -> Result<(TestReport, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let mut r = TestReport::new("whitenoise")
        .param("mu", cfg.mu)
        .param("N", cfg.n)
        .param("dt", cfg.dt)
        .param("dx", cfg.dx)
        .param("master_seed", cfg.master_seed)
        .param(
            "g",
            serde_json::to_value(&cfg.gs).expect("step functions serialize"),
        );
    if cfg.gs.is_empty() || cfg.gs.iter().any(|g| g.norm2() == 0.0) {
        r.push(Check::at_most("norm2_positive", 0.0, 0.0));
        r.inconclusive("a test function has zero norm, so W(g) ≡ 0");
        return Ok((r, Vec::new()));
    }
    let results: Vec<_> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| gaussian_sample(cfg, i))
        .collect();
    let (kept, discarded) = collect_kept(results)?;
    if kept.len() < 2 {
        r.push(Check::at_most(
            "discard_fraction",
            discarded as f64 / cfg.n as f64,
            0.01,
        ));
        r.inconclusive("fewer than two replicas completed");
        return Ok((r, Vec::new()));
    }
    let n = kept.len();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let cols: Vec<Vec<f64>> = (0..cfg.gs.len())
        .map(|k| kept.iter().map(|(v, _)| v[k]).collect())
        .collect();
    for (k, g) in cfg.gs.iter().enumerate() {
        let sd = g.norm2().sqrt();
        let z: Vec<f64> = cols[k].iter().map(|v| v / sd).collect();
        let (d, _) = ks_statistic(&sorted(&z), |t| normal.cdf(t))?;
        r.push(Check::at_most(
            format!("ks_standardized_{k}"),
            d,
            cfg.ks_inflation * ks_critical_one_sample(n),
        ));
        r.push(Check::within(
            format!("mean_3se_{k}"),
            mean(&cols[k]),
            0.0,
            3.0 * std_err(&cols[k]),
        ));
        r.push(Check::relative(
            format!("variance_rel_{k}"),
            variance(&cols[k]),
            g.norm2(),
            0.05,
        ));
        let cov = kept.iter().map(|(_, c)| c[k]).fold(f64::INFINITY, f64::min);
        r.push(Check::at_most(
            format!("coverage_shortfall_{k}"),
            1.0 - cov,
            1.0 - cfg.min_coverage,
        ));
        r.meta(&format!("min_coverage_{k}"), cov);
    }
    for i in 0..cfg.gs.len() {
        for j in i + 1..cfg.gs.len() {
            let disjoint = cfg.gs[i].rects().iter().all(|a| {
                cfg.gs[j]
                    .rects()
                    .iter()
                    .all(|b| a.l1 <= b.l0 || b.l1 <= a.l0 || a.x1 <= b.x0 || b.x1 <= a.x0)
            });
            if disjoint {
                let scale = (cfg.gs[i].norm2() * cfg.gs[j].norm2()).sqrt();
                let c = covariance(&cols[i], &cols[j]);
                r.push(Check::at_most(
                    format!("abs_cov_{i}_{j}"),
                    c.abs(),
                    3.0 * scale / (n as f64).sqrt(),
                ));
            }
        }
    }
    r.push(Check::at_most(
        "discard_fraction",
        discarded as f64 / cfg.n as f64,
        0.01,
    ));
    r.meta("discarded", discarded);
    Ok((r, cols))
}
