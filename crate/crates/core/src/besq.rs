//! Squared Bessel processes BESQ(δ): dZ = 2√Z dγ + δ dt.
//!
//! These serve as oracles for the Ray–Knight laws. For δ > 0 the transition
//! law is sampled exactly; processes absorbed at zero (and any δ ≤ 0) use an
//! Euler scheme that freezes at the first zero.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{param, Result};

/// A sampled BESQ path on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesqPath {
    pub delta: f64,
    pub z0: f64,
    pub dt: f64,
    pub z: Vec<f64>,
    pub absorbed_at: Option<usize>,
}

impl BesqPath {
    pub fn n(&self) -> usize {
        self.z.len() - 1
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,z")?;
        for (i, z) in self.z.iter().enumerate() {
            writeln!(out, "{},{}", i as f64 * self.dt, z)?;
        }
        Ok(())
    }
}

fn check_step(delta: f64, dt: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(param(
            "delta",
            format!("exact sampling needs a positive dimension, got {delta}; use euler_absorbed"),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(param("dt", format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Exact draw of Z_{t+dt} given Z_t = `z`.
///
/// Z_{t+dt}/dt is noncentral chi-square with δ degrees of freedom and
/// noncentrality z/dt, i.e. a Gamma(δ/2 + N) variable times 2 with
/// N ~ Poisson(z/(2dt)).
pub fn exact_step<R: Rng + ?Sized>(z: f64, delta: f64, dt: f64, rng: &mut R) -> Result<f64> {
    check_step(delta, dt)?;
    if !(z >= 0.0 && z.is_finite()) {
        return Err(param("z", format!("state must be ≥ 0, got {z}")));
    }
    let n = if z > 0.0 {
        Poisson::new(z / (2.0 * dt))
            .map_err(|e| param("z", e.to_string()))?
            .sample(rng)
    } else {
        0.0
    };
    let g = GammaDist::new(0.5 * delta + n, 1.0)
        .map_err(|e| param("delta", e.to_string()))?
        .sample(rng);
    Ok(2.0 * dt * g)
}

/// Exact path of `n` steps from `z0`.
pub fn exact_path<R: Rng + ?Sized>(
    z0: f64,
    delta: f64,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> Result<BesqPath> {
    let mut z = Vec::with_capacity(n + 1);
    z.push(z0);
    let mut cur = z0;
    for _ in 0..n {
        cur = exact_step(cur, delta, dt, rng)?;
        z.push(cur);
    }
    Ok(BesqPath {
        delta,
        z0,
        dt,
        z,
        absorbed_at: None,
    })
}

/// Euler scheme absorbed at zero, for any real δ:
/// `z ← max(0, z + δ·dt + 2√z·√dt·N)`, frozen from the first zero on.
pub fn euler_absorbed<R: Rng + ?Sized>(
    z0: f64,
    delta: f64,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> Result<BesqPath> {
    if !(z0 >= 0.0 && z0.is_finite()) {
        return Err(param("z0", format!("start must be ≥ 0, got {z0}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(param("dt", format!("time step must be positive, got {dt}")));
    }
    let mut z = Vec::with_capacity(n + 1);
    z.push(z0);
    if z0 == 0.0 && delta <= 0.0 {
        z.resize(n + 1, 0.0);
        return Ok(BesqPath {
            delta,
            z0,
            dt,
            z,
            absorbed_at: Some(0),
        });
    }
    let mut cur = z0;
    let mut absorbed_at = None;
    for i in 1..=n {
        cur = euler_increment(cur, delta, dt, rng);
        z.push(cur);
        if cur == 0.0 {
            absorbed_at = Some(i);
            z.resize(n + 1, 0.0);
            break;
        }
    }
    Ok(BesqPath {
        delta,
        z0,
        dt,
        z,
        absorbed_at,
    })
}

#[inline]
fn euler_increment<R: Rng + ?Sized>(z: f64, delta: f64, dt: f64, rng: &mut R) -> f64 {
    let g: f64 = rng.sample(StandardNormal);
    (z + delta * dt + 2.0 * (z.max(0.0) * dt).sqrt() * g).max(0.0)
}

/// Value at time `n·dt` of the absorbed Euler scheme, without storing the path.
pub fn euler_absorbed_terminal<R: Rng + ?Sized>(
    z0: f64,
    delta: f64,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> f64 {
    let mut cur = z0;
    if cur == 0.0 && delta <= 0.0 {
        return 0.0;
    }
    for _ in 0..n {
        cur = euler_increment(cur, delta, dt, rng);
        if cur == 0.0 {
            return 0.0;
        }
    }
    cur
}

/// CDF at `z` of the BESQ(δ) marginal at time `h` from 0, the
/// Gamma(δ/2, scale 2h) law.
pub fn marginal_from_zero_cdf(delta: f64, h: f64, z: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(param(
            "delta",
            format!("dimension must be positive, got {delta}"),
        ));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(param("h", format!("time must be positive, got {h}")));
    }
    if z <= 0.0 {
        return Ok(0.0);
    }
    let g = Gamma::new(0.5 * delta, 1.0 / (2.0 * h)).map_err(|e| param("delta", e.to_string()))?;
    Ok(g.cdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{replica_rng, Lane};
    use crate::verify::stats::{mean, sorted, std_err, variance};

    #[test]
    fn exact_step_rejects_nonpositive_dimension() {
        let mut rng = replica_rng(0, 0, Lane::Oracle);
        assert!(exact_step(1.0, 0.0, 0.1, &mut rng).is_err());
        assert!(exact_step(1.0, -1.0, 0.1, &mut rng).is_err());
    }

    #[test]
    fn exponential_marginal_from_zero() {
        let mut rng = replica_rng(1, 0, Lane::Oracle);
        let n = 100_000;
        let below = (0..n)
            .filter(|_| exact_step(0.0, 2.0, 0.5, &mut rng).unwrap() <= 1.0)
            .count();
        let p = below as f64 / n as f64;
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 0.02, "{p}");
    }

    #[test]
    fn exact_step_moments() {
        let mut rng = replica_rng(2, 0, Lane::Oracle);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| exact_step(2.0, 1.0, 3.0, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        let m = mean(&xs);
        assert!((m - 5.0).abs() <= 3.0 * std_err(&xs), "{m}");
        let v = variance(&xs);
        let target = 4.0 * 2.0 * 3.0 + 2.0 * 1.0 * 9.0;
        assert!((v / target - 1.0).abs() < 0.05, "{v} vs {target}");
    }

    #[test]
    fn euler_from_zero_with_nonpositive_dimension_stays_at_zero() {
        let mut rng = replica_rng(3, 0, Lane::Oracle);
        let p = euler_absorbed(0.0, -0.5, 0.01, 100, &mut rng).unwrap();
        assert_eq!(p.absorbed_at, Some(0));
        assert!(p.z.iter().all(|&z| z == 0.0));
        assert_eq!(p.n(), 100);
    }

    #[test]
    fn euler_freezes_after_absorption() {
        for seed in 0..20 {
            let mut rng = replica_rng(seed, 0, Lane::Oracle);
            let p = euler_absorbed(0.2, 1.0, 1e-3, 5000, &mut rng).unwrap();
            assert!(p.z.iter().all(|&z| z >= 0.0));
            if let Some(k) = p.absorbed_at {
                assert!(p.z[k..].iter().all(|&z| z == 0.0));
                assert!(p.z[..k].iter().all(|&z| z > 0.0));
            }
        }
    }

    #[test]
    fn terminal_matches_stored_path() {
        for seed in 0..10 {
            let p = euler_absorbed(
                1.0,
                1.0,
                1e-3,
                2000,
                &mut replica_rng(seed, 0, Lane::Oracle),
            )
            .unwrap();
            let t = euler_absorbed_terminal(
                1.0,
                1.0,
                1e-3,
                2000,
                &mut replica_rng(seed, 0, Lane::Oracle),
            );
            assert_eq!(p.z[2000], t);
        }
    }

    #[test]
    fn marginal_cdf_values() {
        let e = marginal_from_zero_cdf(2.0, 0.5, 1.0).unwrap();
        assert!((e - 0.632_120_558_8).abs() < 1e-9);
        assert_eq!(marginal_from_zero_cdf(2.0, 0.5, 0.0).unwrap(), 0.0);
        // δ = 1 is a squared Brownian motion: P(h·N² ≤ z) = erf(√(z/2h))
        let half = marginal_from_zero_cdf(1.0, 0.5, 1.0).unwrap();
        assert!((half - 0.842_700_792_9).abs() < 1e-9, "{half}");
        let unit = marginal_from_zero_cdf(1.0, 1.0, 1.0).unwrap();
        assert!((unit - 0.682_689_492_1).abs() < 1e-9, "{unit}");
        assert!(marginal_from_zero_cdf(0.0, 1.0, 1.0).is_err());
        assert!(marginal_from_zero_cdf(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn marginal_cdf_is_monotone_probability() {
        let mut prev = 0.0;
        for k in 0..200 {
            let p = marginal_from_zero_cdf(0.7, 0.3, k as f64 * 0.02).unwrap();
            assert!((0.0..=1.0).contains(&p) && p >= prev);
            prev = p;
        }
    }

    #[test]
    fn exact_sampler_matches_closed_form_marginal() {
        for (delta, seed) in [(1.0, 5), (4.0, 6), (0.5, 7)] {
            let mut rng = replica_rng(seed, 0, Lane::Oracle);
            let xs: Vec<f64> = (0..100_000)
                .map(|_| exact_step(0.0, delta, 0.7, &mut rng).unwrap())
                .collect();
            let (d, _) = crate::verify::ks_statistic(&sorted(&xs), |z| {
                marginal_from_zero_cdf(delta, 0.7, z).unwrap()
            })
            .unwrap();
            assert!(d <= 0.01, "delta {delta}: D = {d}");
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = BesqPath {
            delta: 1.0,
            z0: 1.0,
            dt: 0.5,
            z: vec![1.0, 0.5, 0.0],
            absorbed_at: Some(2),
        };
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,z\n0,1\n0.5,0.5\n1,0\n");
    }
}
