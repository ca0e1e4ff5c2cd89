//! `ganlab run`: train, then emit metrics, samples, grids and a manifest.

use ganlab::metrics::{gradient_field, value_surface, MetricsWriter};
use ganlab::synth::SampleSet;
use ganlab::theory::{dirac_gan_run, DensityRatio};
use ganlab::trainer::Trainer;
use ganlab::{rng, Error, Matrix};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::manifest::{now_unix, sha256_hex, RunManifest, RunStatus};
use crate::{CliError, CliResult};

/// Stream used for the final sample dump.
const SAMPLE_STREAM: u64 = 40;

pub const CONFIG: &str = "config.json";
pub const METRICS: &str = "metrics.csv";
pub const SAMPLES: &str = "samples.csv";
pub const VALUE_SURFACE: &str = "value_surface.csv";
pub const ORACLE_SURFACE: &str = "oracle_surface.csv";
pub const GRADIENT_FIELD: &str = "gradient_field.csv";
pub const CHECKPOINT: &str = "checkpoint.json";

/// The run directory: `--out` if given, else the config's `out_dir`, else
/// `<root>/<name>-seed<seed>`.
pub fn run_dir(cfg: &ExperimentConfig, out: Option<&Path>, root: &Path) -> PathBuf {
    match (out, &cfg.out_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => root.join(format!("{}-seed{}", cfg.name, cfg.seed())),
    }
}

/// Runs `cfg`, writing every artifact into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> CliResult<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let config_json = serde_json::to_vec_pretty(cfg).map_err(Error::from)?;
    std::fs::write(dir.join(CONFIG), &config_json)?;
    let mut manifest = RunManifest {
        name: cfg.name.clone(),
        config_sha256: sha256_hex(&config_json),
        seed: cfg.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: now_unix(),
        finished_unix: 0.0,
        status: RunStatus::Complete,
        files: Vec::new(),
    };
    manifest.record(dir, CONFIG)?;
    let emitted = match (&cfg.train, &cfg.dirac) {
        (Some(_), _) => run_gan(cfg, dir),
        (_, Some(d)) => {
            dirac_gan_run(d)?.write_csv(dir.join(METRICS))?;
            Ok(vec![METRICS])
        }
        _ => unreachable!("validated"),
    };
    let emitted = match emitted {
        Ok(files) => files,
        Err(e) => {
            if matches!(e, CliError::Diverged { .. }) {
                manifest.status = RunStatus::Diverged;
                manifest.finished_unix = now_unix();
                for f in [METRICS, CHECKPOINT] {
                    if dir.join(f).exists() {
                        manifest.record(dir, f)?;
                    }
                }
                manifest.write(dir)?;
            }
            return Err(e);
        }
    };
    for f in emitted {
        manifest.record(dir, f)?;
    }
    manifest.finished_unix = now_unix();
    manifest.write(dir)?;
    Ok(manifest)
}

fn run_gan(cfg: &ExperimentConfig, dir: &Path) -> CliResult<Vec<&'static str>> {
    let train = cfg.train.clone().expect("gan run");
    let mut trainer = Trainer::new(train.clone())?;
    let mut writer = MetricsWriter::create(dir.join(METRICS))?;
    let outcome = trainer.run(|r| writer.append(r));
    drop(writer);
    if let Err(e) = outcome {
        return Err(match e {
            Error::Divergence { iter, detail } => {
                let checkpoint = dir.join(CHECKPOINT);
                if let Some(ck) = trainer.last_good_checkpoint() {
                    ck.save(&checkpoint)?;
                }
                CliError::Diverged {
                    iter,
                    detail,
                    checkpoint,
                }
            }
            e => e.into(),
        });
    }
    let mut files = vec![METRICS, SAMPLES];

    let mut r = rng::stream(train.seed, SAMPLE_STREAM);
    let reals = trainer.held_out_reals().clone();
    let fakes = trainer.sample_fakes(train.eval_samples, &mut r)?;
    let mut labels = vec![1; reals.rows()];
    labels.extend(std::iter::repeat_n(0, fakes.rows()));
    let mut points = Vec::with_capacity((reals.rows() + fakes.rows()) * 2);
    points.extend_from_slice(reals.as_slice());
    points.extend_from_slice(fakes.as_slice());
    SampleSet {
        points: Matrix::from_vec(labels.len(), reals.cols(), points),
        labels: Some(labels),
    }
    .write_csv(dir.join(SAMPLES))?;

    if let Some(grid) = &cfg.grid {
        let d = &trainer.state().d;
        value_surface(d, grid)?.write_csv(dir.join(VALUE_SURFACE))?;
        gradient_field(d, grid)?.write_csv(dir.join(GRADIENT_FIELD))?;
        files.extend([VALUE_SURFACE, GRADIENT_FIELD]);
        if let Some(fake) = &train.fake_dataset {
            let oracle = DensityRatio {
                real: train.dataset.clone(),
                fake: fake.clone(),
            };
            if let Ok(s) = value_surface(&oracle, grid) {
                s.write_csv(dir.join(ORACLE_SURFACE))?;
                files.push(ORACLE_SURFACE);
            }
        }
    }
    Ok(files)
}
