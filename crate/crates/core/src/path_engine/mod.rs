//! Driving Brownian paths and the μ-process built from them.
//!
//! The pair (|B|, 𝔏) is never estimated: by Lévy's identity it has the law of
//! (S − B̃, S) where B̃ is a Brownian motion and S its running maximum. The
//! μ-process is therefore
//!
//! ```text
//! X = |B| − μ𝔏 = (1 − μ)·S − B̃,
//! ```
//!
//! its running infimum is −μS up to grid error, and the Itô increments
//! sgn(B) dB = d|B| − d𝔏 = −dB̃ are exact on the grid.

mod walker;

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::rng::{replica_rng, Lane, StreamRng};

pub use walker::{FastForward, Walker};

/// One N(0, dt) increment, scaled from a standard normal draw.
#[inline]
pub(crate) fn brownian_increment<R: Rng + ?Sized>(rng: &mut R, sqrt_dt: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sqrt_dt * z
}

/// Driving Brownian motion B̃ with its running maximum S on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPath {
    pub seed: u64,
    pub dt: f64,
    pub btilde: Vec<f64>,
    pub smax: Vec<f64>,
}

impl DriverPath {
    /// Number of steps (the path has `n() + 1` samples).
    pub fn n(&self) -> usize {
        self.btilde.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// Simulates `n` steps of the driver from the forward lane of `seed`.
pub fn simulate_driver(seed: u64, dt: f64, n: usize) -> Result<DriverPath> {
    let mut rng = replica_rng(seed, 0, Lane::Forward);
    simulate_driver_with(&mut rng, seed, dt, n)
}

/// Like [`simulate_driver`] but drawing from a caller-supplied stream.
pub fn simulate_driver_with(
    rng: &mut StreamRng,
    seed: u64,
    dt: f64,
    n: usize,
) -> Result<DriverPath> {
    validate_grid(dt, n)?;
    let sqrt_dt = dt.sqrt();
    let mut btilde = Vec::with_capacity(n + 1);
    let mut smax = Vec::with_capacity(n + 1);
    let (mut b, mut s) = (0.0_f64, 0.0_f64);
    btilde.push(b);
    smax.push(s);
    for _ in 0..n {
        b += brownian_increment(rng, sqrt_dt);
        if b > s {
            s = b;
        }
        btilde.push(b);
        smax.push(s);
    }
    Ok(DriverPath {
        seed,
        dt,
        btilde,
        smax,
    })
}

pub(crate) fn validate_grid(dt: f64, n: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(param("dt", format!("time step must be positive, got {dt}")));
    }
    if n == 0 {
        return Err(param("n", "at least one step is required"));
    }
    Ok(())
}

pub(crate) fn validate_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(param(
            "mu",
            format!("the μ-process is only recurrent for μ > 0, got {mu}"),
        ));
    }
    Ok(())
}

/// The μ-process X = |B| − μ𝔏 sampled on the driver's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuProcessPath {
    pub mu: f64,
    pub dt: f64,
    pub x: Vec<f64>,
    /// Local time at zero of B, equal to the driver's running maximum.
    pub lt_zero_b: Vec<f64>,
    /// Running minimum of `x`.
    pub inf_run: Vec<f64>,
}

impl MuProcessPath {
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

#[inline]
pub(crate) fn mu_value(mu: f64, smax: f64, btilde: f64) -> f64 {
    (1.0 - mu) * smax - btilde
}

pub fn build_mu_process(driver: &DriverPath, mu: f64) -> Result<MuProcessPath> {
    validate_mu(mu)?;
    let x: Vec<f64> = driver
        .smax
        .iter()
        .zip(&driver.btilde)
        .map(|(&s, &b)| mu_value(mu, s, b))
        .collect();
    let mut inf_run = Vec::with_capacity(x.len());
    let mut m = f64::INFINITY;
    for &v in &x {
        if v < m {
            m = v;
        }
        inf_run.push(m);
    }
    Ok(MuProcessPath {
        mu,
        dt: driver.dt,
        x,
        lt_zero_b: driver.smax.clone(),
        inf_run,
    })
}

/// Position of a stopping time on the grid: the event happens inside step
/// `[step, step + 1]` at fraction `frac`, or exactly at grid point `step`
/// when `frac == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeIndex {
    pub step: usize,
    pub frac: f64,
    pub reached: bool,
}

impl TimeIndex {
    pub const NOT_REACHED: TimeIndex = TimeIndex {
        step: 0,
        frac: 0.0,
        reached: false,
    };

    pub fn at(step: usize, frac: f64) -> Self {
        debug_assert!((0.0..1.0).contains(&frac));
        TimeIndex {
            step,
            frac,
            reached: true,
        }
    }

    pub fn time(&self, dt: f64) -> Option<f64> {
        self.reached.then(|| (self.step as f64 + self.frac) * dt)
    }

    /// Whether grid step `i` starts strictly before the stopping time.
    #[inline]
    pub fn covers_step(&self, i: usize) -> bool {
        i < self.step || (i == self.step && self.frac > 0.0)
    }
}

/// Linear-interpolation crossing of `r` between two consecutive samples.
#[inline]
pub(crate) fn crossing(prev: f64, next: f64, r: f64) -> Option<f64> {
    if (prev - r) * (next - r) > 0.0 {
        return None;
    }
    if prev == r {
        return Some(0.0);
    }
    Some((r - prev) / (next - prev))
}

fn normalize(step: usize, frac: f64) -> TimeIndex {
    if frac >= 1.0 {
        TimeIndex::at(step + 1, 0.0)
    } else {
        TimeIndex::at(step, frac)
    }
}

/// First passage of the sampled path through level `r` (def. of T_r).
pub fn hitting_time(path: &MuProcessPath, r: f64) -> TimeIndex {
    hitting_time_in(&path.x, r)
}

pub(crate) fn hitting_time_in(xs: &[f64], r: f64) -> TimeIndex {
    if xs.first() == Some(&r) {
        return TimeIndex::at(0, 0.0);
    }
    xs.windows(2)
        .enumerate()
        .find_map(|(i, w)| crossing(w[0], w[1], r).map(|f| normalize(i, f)))
        .unwrap_or(TimeIndex::NOT_REACHED)
}

/// Grid increments of ∫ sgn(B) dB, which are exactly −ΔB̃.
pub fn sgn_b_increments(driver: &DriverPath) -> Vec<f64> {
    driver.btilde.windows(2).map(|w| -(w[1] - w[0])).collect()
}

/// Writes `t,btilde,smax,x,inf_run` rows.
pub fn write_path_csv<W: Write>(
    out: &mut W,
    driver: &DriverPath,
    path: &MuProcessPath,
) -> io::Result<()> {
    writeln!(out, "t,btilde,smax,x,inf_run")?;
    for i in 0..=path.n() {
        writeln!(
            out,
            "{},{},{},{},{}",
            path.time(i),
            driver.btilde[i],
            driver.smax[i],
            path.x[i],
            path.inf_run[i]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_driver() -> DriverPath {
        DriverPath {
            seed: 0,
            dt: 1.0,
            btilde: vec![0.0, 0.1, -0.2],
            smax: vec![0.0, 0.1, 0.1],
        }
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(simulate_driver(42, 0.01, 0).is_err());
        assert!(simulate_driver(42, 0.0, 10).is_err());
        assert!(simulate_driver(42, -1.0, 10).is_err());
    }

    #[test]
    fn initial_condition() {
        let d = simulate_driver(5, 0.1, 20).unwrap();
        assert_eq!(d.btilde[0], 0.0);
        assert_eq!(d.smax[0], 0.0);
        assert_eq!(d.n(), 20);
    }

    #[test]
    fn running_max_matches_prefix_max() {
        let d = simulate_driver(11, 0.01, 500).unwrap();
        let mut m = f64::NEG_INFINITY;
        for i in 0..=d.n() {
            m = m.max(d.btilde[i]);
            assert_eq!(d.smax[i], m);
        }
    }

    #[test]
    fn increment_variance_matches_dt() {
        let dt = 1e-4;
        let d = simulate_driver(7, dt, 1_000_000).unwrap();
        let inc = sgn_b_increments(&d);
        let n = inc.len() as f64;
        let mean = inc.iter().sum::<f64>() / n;
        let var = inc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / dt - 1.0).abs() < 0.01, "var/dt = {}", var / dt);
    }

    #[test]
    fn mu_one_is_negated_driver() {
        let p = build_mu_process(&toy_driver(), 1.0).unwrap();
        assert!(close(&p.x, &[0.0, -0.1, 0.2]));
    }

    #[test]
    fn mu_two_direct_evaluation() {
        let p = build_mu_process(&toy_driver(), 2.0).unwrap();
        assert!(close(&p.x, &[0.0, -0.2, 0.1]));
        assert_eq!(p.lt_zero_b, vec![0.0, 0.1, 0.1]);
    }

    #[test]
    fn nonpositive_mu_rejected() {
        assert!(build_mu_process(&toy_driver(), 0.0).is_err());
        assert!(build_mu_process(&toy_driver(), -1.0).is_err());
    }

    #[test]
    fn hitting_time_examples() {
        let p = MuProcessPath {
            mu: 2.0,
            dt: 1.0,
            x: vec![0.0, -0.2, 0.1],
            lt_zero_b: vec![0.0; 3],
            inf_run: vec![0.0, -0.2, -0.2],
        };
        let t = hitting_time(&p, -0.15);
        assert!(t.reached);
        assert_eq!(t.step, 0);
        assert!((t.frac - 0.75).abs() < 1e-12);
        assert!(!hitting_time(&p, -0.5).reached);
        assert_eq!(hitting_time(&p, 0.0), TimeIndex::at(0, 0.0));
        // landing exactly on a grid point is reported at that point
        assert_eq!(hitting_time(&p, -0.2), TimeIndex::at(1, 0.0));
    }

    #[test]
    fn sgn_b_increments_flip_sign() {
        let inc = sgn_b_increments(&toy_driver());
        assert!(close(&inc, &[-0.1, 0.3]));
        let d = simulate_driver(3, 0.01, 1000).unwrap();
        let s: f64 = sgn_b_increments(&d).iter().sum();
        assert!((s + d.btilde[d.n()]).abs() < 1e-9);
    }

    #[test]
    fn reproducible_bitwise() {
        let a = simulate_driver(99, 1e-3, 5000).unwrap();
        let b = simulate_driver(99, 1e-3, 5000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_header_and_rows() {
        let d = toy_driver();
        let p = build_mu_process(&d, 1.0).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &d, &p).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "t,btilde,smax,x,inf_run");
        assert_eq!(lines.len(), 4);
    }
}
