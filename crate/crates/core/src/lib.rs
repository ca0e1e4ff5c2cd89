//! A small GAN laboratory for studying gradient penalties on synthetic data.
//!
//! The crate contains everything needed to train fully-connected GANs in
//! double precision on a single CPU core and to measure what the
//! discriminator learns:
//!
//! - [`autodiff`]: a re-entrant reverse-mode tape with second-order support.
//! - [`nets`]: MLPs with deterministic initialization and a JSON parameter format.
//! - [`gan`]: the GAN objective, the non-saturating generator loss and the
//!   zero-centered, one-centered and sample-only gradient penalties.
//! - [`synth`]: synthetic distributions with analytic densities.
//! - [`theory`]: the density-ratio optimal discriminator, a constructive
//!   ε-optimal discriminator, the linear alternating-descent analysis and
//!   the Dirac GAN.
//! - [`trainer`]: alternating gradient descent with SGD or Adam.
//! - [`metrics`]: generalization gap, line integrals, gradient fields,
//!   mode coverage and capacity balance.
//! - [`pathfind`]: encoder-based interpolation paths through the generator.

pub mod autodiff;
mod error;
pub mod gan;
pub mod matrix;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod pathfind;
pub mod rng;
pub mod synth;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/penalties.md")]
    mod penalties {}
    #[doc = include_str!("../../../book/src/value-surfaces.md")]
    mod value_surfaces {}
    #[doc = include_str!("../../../book/src/ring.md")]
    mod ring {}
    #[doc = include_str!("../../../book/src/dirac.md")]
    mod dirac {}
}
