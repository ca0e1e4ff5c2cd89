//! Experiment configuration files and the built-in presets.

use ganlab::gan::PenaltyConfig;
use ganlab::metrics::GridSpec;
use ganlab::optim::OptimizerKind;
use ganlab::synth::DatasetSpec;
use ganlab::theory::DiracConfig;
use ganlab::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::CliError;

/// One experiment: either a GAN (or lone discriminator) training run or a
/// Dirac-GAN trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Run directory; overridden by `--out`.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Grid for the value surface and gradient field.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub dirac: Option<DiracConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let schema = |m: String| Err(CliError::Schema(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return schema(format!("name {:?} must be non-empty and free of path separators", self.name));
        }
        match (&self.train, &self.dirac) {
            (Some(t), None) => {
                t.validate().map_err(|e| CliError::Schema(e.to_string()))?;
                if t.dataset.dim() != 2 && self.grid.is_some() {
                    return schema("grids need 2-dimensional data".into());
                }
            }
            (None, Some(d)) => {
                d.penalty.validate().map_err(|e| CliError::Schema(e.to_string()))?;
                if !(d.lr > 0.0) || !d.lr.is_finite() || d.iters == 0 {
                    return schema("dirac needs lr > 0 and iters > 0".into());
                }
                if self.grid.is_some() {
                    return schema("dirac runs have no grid".into());
                }
            }
            _ => return schema("exactly one of \"train\" and \"dirac\" must be given".into()),
        }
        if let Some(g) = &self.grid {
            g.validate().map_err(|e| CliError::Schema(e.to_string()))?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        match (&self.train, &self.dirac) {
            (Some(t), _) => t.seed,
            (_, Some(d)) => d.seed,
            _ => 0,
        }
    }

    /// Sets the run seed. A Dirac run keeps its starting point.
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(t) = &mut self.train {
            t.seed = seed;
        }
        if let Some(d) = &mut self.dirac {
            d.seed = seed;
        }
    }
}

pub const PRESETS: &[&str] = &[
    "fig1-nogp",
    "fig1-0gp",
    "fig1-1gp",
    "fig1-0gp-sample",
    "fig2-ring8-nogp",
    "fig2-ring8-0gp",
    "fig2-ring8-1gp",
    "fig2-ring8-0gp-sample",
    "ttur",
    "fig3-adam",
    "swissroll-0gp",
    "dirac-nogp",
    "dirac-0gp",
    "dirac-1gp",
];

/// Overlapping pair used for the value-surface experiments. Real data is
/// the right-hand Gaussian.
pub fn fig1_pair() -> (DatasetSpec, DatasetSpec) {
    let pair = |c| DatasetSpec::TwoGaussians {
        means: [[-1.0, 0.0], [1.0, 0.0]],
        std: 1.0,
        component: Some(c),
        scale: 1.0,
    };
    (pair(1), pair(0))
}

fn fig1(penalty: PenaltyConfig, seed: u64) -> (TrainConfig, GridSpec) {
    let (real, fake) = fig1_pair();
    let t = TrainConfig {
        fake_dataset: Some(fake),
        penalty,
        train_size: Some(32),
        batch_size: 32,
        d_hidden: vec![64, 64],
        eval_every: 500,
        seed,
        ..TrainConfig::new(real, 10_000)
    };
    (t, GridSpec::square(4.0, 41))
}

fn ring8(penalty: PenaltyConfig, seed: u64) -> (TrainConfig, GridSpec) {
    let t = TrainConfig {
        penalty,
        batch_size: 256,
        d_hidden: vec![512, 512],
        g_hidden: vec![512, 512],
        eval_every: 500,
        seed,
        ..TrainConfig::new(DatasetSpec::ring8(10.0), 10_000)
    };
    (t, GridSpec::square(15.0, 41))
}

/// The named experiment with the given seed.
pub fn preset(name: &str, seed: u64) -> Result<ExperimentConfig, CliError> {
    let gan = |(train, grid): (TrainConfig, GridSpec)| ExperimentConfig {
        name: name.to_string(),
        out_dir: None,
        train: Some(train),
        grid: Some(grid),
        dirac: None,
    };
    let dirac = |p: PenaltyConfig| ExperimentConfig {
        name: name.to_string(),
        out_dir: None,
        train: None,
        grid: None,
        dirac: Some(DiracConfig::seeded(p, 0.1, 5000, seed)),
    };
    Ok(match name {
        "fig1-nogp" => gan(fig1(PenaltyConfig::none(), seed)),
        "fig1-0gp" => gan(fig1(PenaltyConfig::zero_gp(1.0), seed)),
        "fig1-1gp" => gan(fig1(PenaltyConfig::one_gp(1.0), seed)),
        "fig1-0gp-sample" => gan(fig1(PenaltyConfig::zero_gp_sample(1.0), seed)),
        "fig2-ring8-nogp" => gan(ring8(PenaltyConfig::none(), seed)),
        "fig2-ring8-0gp" => gan(ring8(PenaltyConfig::zero_gp(10.0), seed)),
        "fig2-ring8-1gp" => gan(ring8(PenaltyConfig::one_gp(10.0), seed)),
        "fig2-ring8-0gp-sample" => gan(ring8(PenaltyConfig::zero_gp_sample(10.0), seed)),
        "ttur" => {
            let (mut t, g) = ring8(PenaltyConfig::zero_gp(10.0), seed);
            t.lr_g = 0.003;
            t.lr_d = 0.009;
            gan((t, g))
        }
        "fig3-adam" => {
            let (mut t, g) = ring8(PenaltyConfig::zero_gp(10.0), seed);
            t.optimizer = OptimizerKind::adam();
            t.n_critic = 5;
            gan((t, g))
        }
        "swissroll-0gp" => {
            let (mut t, _) = ring8(PenaltyConfig::zero_gp(10.0), seed);
            t.dataset = DatasetSpec::Swissroll { scale: 10.0, noise: 0.02 };
            gan((t, GridSpec::square(15.0, 41)))
        }
        "dirac-nogp" => dirac(PenaltyConfig::none()),
        "dirac-0gp" => dirac(PenaltyConfig::zero_gp(1.0)),
        "dirac-1gp" => dirac(PenaltyConfig::one_gp(10.0)),
        _ => {
            return Err(CliError::Schema(format!(
                "unknown preset {name:?}; known presets: {}",
                PRESETS.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_roundtrips() {
        for name in PRESETS {
            let cfg = preset(name, 3).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.seed(), 3);
            let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(ExperimentConfig::from_json("{"), Err(CliError::Schema(_))));
        let mut v = serde_json::to_value(preset("fig1-0gp", 0).unwrap()).unwrap();
        v["colour"] = 1.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut both = preset("fig1-0gp", 0).unwrap();
        both.dirac = preset("dirac-0gp", 0).unwrap().dirac;
        assert!(both.validate().is_err());
        assert!(preset("fig9", 0).is_err());
    }
}
