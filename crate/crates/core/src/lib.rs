//! Simulation of μ-processes (perturbed reflecting Brownian motion), their
//! local-time fields and the associated white noise, with Monte Carlo checks
//! of the Ray–Knight laws and of their white-noise SDE representations.

pub mod besq;
pub mod error;
pub mod excursion;
pub mod local_time;
pub mod path_engine;
pub mod rng;
pub mod two_sided;
pub mod verify;
pub mod white_noise;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mu-process.md")]
    mod mu_process {}
    #[doc = include_str!("../../../book/src/local-time.md")]
    mod local_time {}
    #[doc = include_str!("../../../book/src/ray-knight.md")]
    mod ray_knight {}
    #[doc = include_str!("../../../book/src/white-noise.md")]
    mod white_noise {}
    #[doc = include_str!("../../../book/src/excursions.md")]
    mod excursions {}
    #[doc = include_str!("../../../book/src/two-sided.md")]
    mod two_sided {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
