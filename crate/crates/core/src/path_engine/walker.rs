use rand::Rng;

use super::{brownian_increment, mu_value, validate_grid, validate_mu};
use crate::error::Result;
use crate::rng::StreamRng;

/// Streaming μ-process: the same recursion as [`super::simulate_driver`] and
/// [`super::build_mu_process`], one step at a time and without storing the
/// path. Without fast-forwarding it reproduces the stored path bit for bit
/// from the same stream.
///
/// Long excursions away from the levels of interest can be cut out with
/// [`FastForward`]: the process is moved to the boundary level by sampling
/// the exact state at its first return there, skipping the grid steps in
/// between. Elapsed time is not tracked across a skip, so only functionals
/// that ignore time spent outside the window may be computed this way.
#[derive(Debug, Clone)]
pub struct Walker {
    mu: f64,
    dt: f64,
    sqrt_dt: f64,
    btilde: f64,
    smax: f64,
    x: f64,
    inf: f64,
    steps: u64,
    lifts: u64,
    rng: StreamRng,
}

/// Levels outside of which excursions are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FastForward {
    pub below: Option<f64>,
    pub above: Option<f64>,
}

impl FastForward {
    pub const NONE: FastForward = FastForward {
        below: None,
        above: None,
    };

    /// Skip excursions leaving `[lo - margin, hi + margin]`.
    pub fn window(lo: f64, hi: f64, margin: f64) -> Self {
        FastForward {
            below: Some(lo - margin),
            above: Some(hi + margin),
        }
    }

    pub fn above_only(hi: f64, margin: f64) -> Self {
        FastForward {
            below: None,
            above: Some(hi + margin),
        }
    }
}

impl Walker {
    pub fn new(mu: f64, dt: f64, rng: StreamRng) -> Result<Self> {
        validate_mu(mu)?;
        validate_grid(dt, 1)?;
        Ok(Walker {
            mu,
            dt,
            sqrt_dt: dt.sqrt(),
            btilde: 0.0,
            smax: 0.0,
            x: 0.0,
            inf: 0.0,
            steps: 0,
            lifts: 0,
            rng,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn inf(&self) -> f64 {
        self.inf
    }

    pub fn smax(&self) -> f64 {
        self.smax
    }

    pub fn btilde(&self) -> f64 {
        self.btilde
    }

    /// Grid steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Number of excursions skipped.
    pub fn lifts(&self) -> u64 {
        self.lifts
    }

    /// Advances one grid step and returns the Itô increment −ΔB̃.
    #[inline]
    pub fn step(&mut self) -> f64 {
        let prev = self.btilde;
        self.btilde += brownian_increment(&mut self.rng, self.sqrt_dt);
        if self.btilde > self.smax {
            self.smax = self.btilde;
        }
        self.x = mu_value(self.mu, self.smax, self.btilde);
        if self.x < self.inf {
            self.inf = self.x;
        }
        self.steps += 1;
        -(self.btilde - prev)
    }

    /// One grid step followed by any skip `ff` calls for.
    #[inline]
    pub fn advance(&mut self, ff: &FastForward) -> f64 {
        let xi = self.step();
        if let Some(hi) = ff.above {
            if self.x > hi {
                self.lift_from_above(hi);
            }
        }
        if let Some(lo) = ff.below {
            if self.x < lo {
                self.lift_from_below(lo);
            }
        }
        xi
    }

    /// Moves X from above `y` to its first return to `y`.
    ///
    /// While X stays above its running infimum it moves as −B̃ with S frozen,
    /// so the return is deterministic in (S, B̃). If the infimum itself is
    /// above `y`, X must first set new minima: it reaches `y` when S first
    /// reaches −y/μ, at which instant B̃ = S.
    pub fn lift_from_above(&mut self, y: f64) {
        debug_assert!(self.x > y);
        if self.inf <= y {
            self.btilde = (1.0 - self.mu) * self.smax - y;
        } else {
            self.smax = -y / self.mu;
            self.btilde = self.smax;
        }
        self.x = mu_value(self.mu, self.smax, self.btilde);
        if self.x < self.inf {
            self.inf = self.x;
        }
        self.lifts += 1;
    }

    /// Moves X from below `y` to its first return to `y`.
    ///
    /// Writing X = Y − μS with Y = S − B̃ a reflected Brownian motion, X is at
    /// `y` exactly when Y = y + μS. The current excursion of Y reaches that
    /// height before returning to zero with probability Y/(y + μS). Otherwise
    /// excursions of Y with height above m occur at rate 1/m per unit of S,
    /// so the value S* of S at the first success satisfies
    /// P(S* > s) = ((y + μs₀)/(y + μs))^{1/μ}, sampled by inversion.
    pub fn lift_from_below(&mut self, y: f64) {
        debug_assert!(self.x < y);
        let reflected = self.smax - self.btilde;
        let target = y + self.mu * self.smax;
        let u: f64 = self.rng.random();
        if u >= reflected / target {
            let v: f64 = 1.0 - self.rng.random::<f64>();
            let s_star = (target * v.powf(-self.mu) - y) / self.mu;
            self.smax = s_star.max(self.smax);
            let floor = -self.mu * self.smax;
            if floor < self.inf {
                self.inf = floor;
            }
        }
        self.btilde = (1.0 - self.mu) * self.smax - y;
        self.x = mu_value(self.mu, self.smax, self.btilde);
        self.lifts += 1;
    }
}
