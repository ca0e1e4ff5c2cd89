//! Experiment runner behind the `ganlab` binary.
//!
//! A run directory holds everything one experiment emitted plus a
//! `manifest.json` listing each file with its SHA-256. CSV schemas:
//!
//! | file | columns |
//! |---|---|
//! | `metrics.csv` (GAN) | `iter,d_loss,g_loss,penalty_value,gen_gap,modes_covered,hq_fraction,grad_sq_mean,grad_norm_mean,gamma,grad_norm_cv,clamp_events,jensen_ok` |
//! | `metrics.csv` (Dirac) | `iter,psi,theta` |
//! | `samples.csv` | `x0,x1,label` with label 1 for held-out reals and 0 for fakes |
//! | `value_surface.csv`, `oracle_surface.csv` | `x,y,value` |
//! | `gradient_field.csv` | `x,y,gx,gy` |

pub mod compare;
pub mod config;
pub mod manifest;
pub mod plot;
pub mod run;

use std::path::PathBuf;

pub use config::{preset, ExperimentConfig, PRESETS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or missing input; nothing was computed.
    #[error("invalid input: {0}")]
    Schema(String),
    #[error("missing input: {0}")]
    Missing(PathBuf),
    #[error("training diverged at iteration {iter}: {detail}; last good checkpoint at {}", checkpoint.display())]
    Diverged {
        iter: usize,
        detail: String,
        checkpoint: PathBuf,
    },
    #[error(transparent)]
    Lab(#[from] ganlab::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Missing(_) => 2,
            CliError::Diverged { .. } => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book {}
