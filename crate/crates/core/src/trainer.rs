//! Alternating gradient descent for GANs.
//!
//! One iteration takes `n_critic` discriminator ascent steps on the
//! penalized objective, each on a fresh minibatch, followed by one generator
//! descent step. Without a generator (`fake_dataset` set) the discriminator
//! is trained alone against a fixed fake distribution.
//!
//! All randomness comes from numbered streams of the configured seed:
//! parameter initialization, finite training sets and held-out sets are
//! drawn once, the training stream is part of the checkpointed state, and
//! each evaluation uses its own stream keyed by the iteration number. A run
//! restored from a checkpoint therefore continues bit-identically.

use crate::autodiff::{grad_wrt_params, Tape};
use crate::error::{Error, Result};
use crate::gan::{self, GeneratorLoss, Minibatch, PenaltyConfig};
use crate::matrix::Matrix;
use crate::metrics::{self, MetricsRecord};
use crate::nets::{init_params_with, MlpNet, NetSpec};
use crate::optim::{Optimizer, OptimizerKind};
use crate::pathfind::{self, Encoder, EncoderConfig};
use crate::rng::{self, Rng};
use crate::synth::{self, DatasetSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn default_lr() -> f64 {
    0.003
}
fn default_n_critic() -> usize {
    1
}
fn default_batch() -> usize {
    64
}
fn default_eval_every() -> usize {
    500
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_d_z() -> usize {
    2
}
fn default_eval_samples() -> usize {
    2048
}

/// Replaces straight-line penalty interpolates with paths through the
/// generator's latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentPathConfig {
    /// Iterations between encoder refreshes.
    pub refresh_every: usize,
    #[serde(default = "default_hidden")]
    pub encoder_hidden: Vec<usize>,
    #[serde(default)]
    pub encoder: EncoderConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Real data distribution.
    pub dataset: DatasetSpec,
    /// Fixed fake distribution; when set there is no generator.
    #[serde(default)]
    pub fake_dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default = "sgd")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_lr")]
    pub lr_d: f64,
    #[serde(default = "default_lr")]
    pub lr_g: f64,
    #[serde(default = "default_n_critic")]
    pub n_critic: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_hidden")]
    pub d_hidden: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub g_hidden: Vec<usize>,
    #[serde(default = "default_d_z")]
    pub d_z: usize,
    /// Size of a finite training set drawn once (for fakes too when there
    /// is no generator); `None` draws fresh data every step.
    #[serde(default)]
    pub train_size: Option<usize>,
    /// Size of held-out sets and of generated evaluation samples.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default)]
    pub generator_loss: GeneratorLoss,
    #[serde(default)]
    pub latent_paths: Option<LatentPathConfig>,
}

fn sgd() -> OptimizerKind {
    OptimizerKind::Sgd
}

impl TrainConfig {
    /// Defaults for everything but the data and the iteration budget.
    pub fn new(dataset: DatasetSpec, iters: usize) -> Self {
        TrainConfig {
            dataset,
            fake_dataset: None,
            penalty: PenaltyConfig::none(),
            optimizer: sgd(),
            lr_d: default_lr(),
            lr_g: default_lr(),
            n_critic: default_n_critic(),
            batch_size: default_batch(),
            iters,
            seed: 0,
            eval_every: default_eval_every(),
            d_hidden: default_hidden(),
            g_hidden: default_hidden(),
            d_z: default_d_z(),
            train_size: None,
            eval_samples: default_eval_samples(),
            generator_loss: GeneratorLoss::NonSaturating,
            latent_paths: None,
        }
    }

    /// Different learning rates for the two players.
    pub fn is_ttur(&self) -> bool {
        self.lr_d != self.lr_g
    }

    pub fn has_generator(&self) -> bool {
        self.fake_dataset.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.penalty.validate()?;
        self.optimizer.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if let Some(f) = &self.fake_dataset {
            f.validate()?;
            if f.dim() != self.dataset.dim() {
                return bad("real and fake datasets differ in dimension".into());
            }
            if self.latent_paths.is_some() {
                return bad("latent paths need a generator".into());
            }
        }
        for (name, lr) in [("lr_d", self.lr_d), ("lr_g", self.lr_g)] {
            if !(lr >= 0.0) || !lr.is_finite() {
                return bad(format!("{name} must be a finite non-negative number, got {lr}"));
            }
        }
        for (name, v) in [
            ("n_critic", self.n_critic),
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("d_z", self.d_z),
            ("eval_samples", self.eval_samples),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.d_hidden.contains(&0) || self.g_hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if let Some(n) = self.train_size {
            if n < self.batch_size {
                return bad(format!("train_size {n} is smaller than batch_size {}", self.batch_size));
            }
        }
        if let Some(lp) = &self.latent_paths {
            if lp.refresh_every == 0 {
                return bad("latent_paths.refresh_every must be positive".into());
            }
        }
        Ok(())
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub d: MlpNet,
    pub g: Option<MlpNet>,
    pub opt_d: Optimizer,
    pub opt_g: Option<Optimizer>,
    pub encoder: Option<Encoder>,
    /// Completed iterations.
    pub iter: usize,
    pub d_steps: u64,
    pub g_steps: u64,
    pub rng: Rng,
}

/// A resumable snapshot of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Outcome of one discriminator step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DStep {
    /// Unpenalized objective before the update.
    pub loss: f64,
    pub penalty: f64,
    pub clamp_events: usize,
}

/// Outcome of one generator step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GStep {
    pub loss: f64,
    pub clamp_events: usize,
}

/// Data fixed for the whole run.
#[derive(Clone, Debug)]
struct Fixed {
    train_real: Option<Matrix>,
    train_fake: Option<Matrix>,
    held_real: Matrix,
    held_fake: Option<Matrix>,
}

// Stream numbers under the run seed.
const S_TRAIN: u64 = 0;
const S_INIT_D: u64 = 10;
const S_INIT_G: u64 = 11;
const S_TRAIN_REAL: u64 = 20;
const S_TRAIN_FAKE: u64 = 21;
const S_HELD_REAL: u64 = 30;
const S_HELD_FAKE: u64 = 31;
const S_EVAL: u64 = 1 << 32;

pub struct Trainer {
    cfg: TrainConfig,
    state: TrainState,
    fixed: Fixed,
    last_d: Option<(DStep, Minibatch)>,
    last_g: Option<GStep>,
    clamp_since_eval: usize,
    last_good: Option<TrainState>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let d_x = cfg.dataset.dim();
        let d = init_params_with(
            &NetSpec::discriminator(d_x, &cfg.d_hidden),
            &mut rng::stream(cfg.seed, S_INIT_D),
        )?;
        let g = if cfg.has_generator() {
            Some(init_params_with(
                &NetSpec::generator(cfg.d_z, &cfg.g_hidden, d_x),
                &mut rng::stream(cfg.seed, S_INIT_G),
            )?)
        } else {
            None
        };
        let encoder = match &cfg.latent_paths {
            Some(lp) => Some(Encoder::init(d_x, &lp.encoder_hidden, cfg.d_z, cfg.seed)?),
            None => None,
        };
        let state = TrainState {
            opt_d: Optimizer::new(cfg.optimizer),
            opt_g: g.as_ref().map(|_| Optimizer::new(cfg.optimizer)),
            d,
            g,
            encoder,
            iter: 0,
            d_steps: 0,
            g_steps: 0,
            rng: rng::stream(cfg.seed, S_TRAIN),
        };
        Self::assemble(cfg, state)
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        Self::assemble(ck.config, ck.state)
    }

    fn assemble(cfg: TrainConfig, state: TrainState) -> Result<Self> {
        let draw = |spec: &DatasetSpec, n: usize, stream: u64| -> Result<Matrix> {
            Ok(synth::sample(spec, n, &mut rng::stream(cfg.seed, stream))?.points)
        };
        let fixed = Fixed {
            train_real: cfg.train_size.map(|n| draw(&cfg.dataset, n, S_TRAIN_REAL)).transpose()?,
            train_fake: match (&cfg.fake_dataset, cfg.train_size) {
                (Some(f), Some(n)) => Some(draw(f, n, S_TRAIN_FAKE)?),
                _ => None,
            },
            held_real: draw(&cfg.dataset, cfg.eval_samples, S_HELD_REAL)?,
            held_fake: cfg
                .fake_dataset
                .as_ref()
                .map(|f| draw(f, cfg.eval_samples, S_HELD_FAKE))
                .transpose()?,
        };
        Ok(Trainer {
            last_good: Some(state.clone()),
            cfg,
            state,
            fixed,
            last_d: None,
            last_g: None,
            clamp_since_eval: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    /// Real samples held out from training, drawn once per run.
    pub fn held_out_reals(&self) -> &Matrix {
        &self.fixed.held_real
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            state: self.state.clone(),
        }
    }

    /// The most recent state known to be finite (refreshed at every
    /// evaluation); what a diverged run should be resumed from.
    pub fn last_good_checkpoint(&self) -> Option<Checkpoint> {
        self.last_good.as_ref().map(|s| Checkpoint {
            config: self.cfg.clone(),
            state: s.clone(),
        })
    }

    fn draw_set(&mut self, finite: Option<&Matrix>, spec: &DatasetSpec, n: usize) -> Result<Matrix> {
        Ok(match finite {
            Some(set) => set.select_rows(&rng::sample_without_replacement(&mut self.state.rng, set.rows(), n)),
            None => synth::sample(spec, n, &mut self.state.rng)?.points,
        })
    }

    /// A fresh minibatch from the training stream.
    pub fn draw_batch(&mut self) -> Result<Minibatch> {
        let n = self.cfg.batch_size;
        let train_real = self.fixed.train_real.clone();
        let reals = self.draw_set(train_real.as_ref(), &self.cfg.dataset.clone(), n)?;
        match (&self.state.g, self.cfg.fake_dataset.clone()) {
            (Some(g), _) => {
                let z = rng::normal_matrix(&mut self.state.rng, n, self.cfg.d_z);
                let fakes = g.predict(&z)?;
                Minibatch::new(reals, fakes, Some(z))
            }
            (None, Some(spec)) => {
                let train_fake = self.fixed.train_fake.clone();
                let fakes = self.draw_set(train_fake.as_ref(), &spec, n)?;
                Minibatch::new(reals, fakes, None)
            }
            (None, None) => Err(Error::Structural("no generator and no fake dataset".into())),
        }
    }

    fn penalty_points(&mut self, batch: &Minibatch) -> Result<Option<Matrix>> {
        let cfg = self.cfg.penalty;
        if let (Some(e), Some(g), Some(z)) = (&self.state.encoder, &self.state.g, &batch.noises) {
            if cfg.kind.uses_interpolates() && !cfg.is_inactive() {
                let alphas = gan::sample_alphas(batch.len(), &mut self.state.rng);
                return pathfind::latent_interpolate(e, g, &batch.reals, z, &alphas).map(Some);
            }
        }
        gan::penalty_points(batch, &cfg, &mut self.state.rng)
    }

    /// One ascent step of the discriminator on `batch`.
    pub fn discriminator_step(&mut self, batch: &Minibatch) -> Result<DStep> {
        let points = self.penalty_points(batch)?;
        let mut tape = Tape::new();
        let bd = self.state.d.bind(&mut tape);
        let obj = gan::total_d_objective_at(&mut tape, &bd, batch, &self.cfg.penalty, points.as_ref())?;
        let step = DStep {
            loss: tape.scalar(obj.loss)?,
            penalty: tape.scalar(obj.penalty)?,
            clamp_events: obj.clamp_events,
        };
        if !step.loss.is_finite() || !step.penalty.is_finite() {
            return Err(self.diverged(format!(
                "discriminator objective {} with penalty {}",
                step.loss, step.penalty
            )));
        }
        let descend = tape.neg(obj.value)?;
        let grads = grad_wrt_params(&mut tape, descend, &bd.params())?;
        let lr = self.cfg.lr_d;
        self.state
            .opt_d
            .step(&mut self.state.d.params_mut(), &grads, lr)
            .map_err(|e| self.relabel(e))?;
        self.state.d_steps += 1;
        Ok(step)
    }

    /// One descent step of the generator on fresh latent codes.
    pub fn generator_step(&mut self) -> Result<GStep> {
        let z = rng::normal_matrix(&mut self.state.rng, self.cfg.batch_size, self.cfg.d_z);
        let g = self
            .state
            .g
            .as_ref()
            .ok_or_else(|| Error::Contract("this run has no generator".into()))?;
        let mut tape = Tape::new();
        let bg = g.bind(&mut tape);
        let bd = self.state.d.bind(&mut tape);
        let zv = tape.leaf(z);
        let y = bg.forward(&mut tape, zv)?;
        let loss = gan::generator_loss(&mut tape, &bd, y, self.cfg.generator_loss)?;
        let step = GStep {
            loss: tape.scalar(loss.value)?,
            clamp_events: loss.clamp_events,
        };
        if !step.loss.is_finite() {
            return Err(self.diverged(format!("generator loss {}", step.loss)));
        }
        let grads = grad_wrt_params(&mut tape, loss.value, &bg.params())?;
        let lr = self.cfg.lr_g;
        let (g, opt) = (self.state.g.as_mut().unwrap(), self.state.opt_g.as_mut().unwrap());
        opt.step(&mut g.params_mut(), &grads, lr).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence {
                iter: self.state.iter,
                detail: format!("generator: {detail}"),
            },
            e => e,
        })?;
        self.state.g_steps += 1;
        Ok(step)
    }

    fn diverged(&self, detail: String) -> Error {
        Error::Divergence {
            iter: self.state.iter,
            detail,
        }
    }

    fn relabel(&self, e: Error) -> Error {
        match e {
            Error::Divergence { detail, .. } => self.diverged(format!("discriminator: {detail}")),
            e => e,
        }
    }

    fn refresh_encoder(&mut self) -> Result<()> {
        let Some(lp) = self.cfg.latent_paths.clone() else {
            return Ok(());
        };
        if self.state.iter % lp.refresh_every != 0 {
            return Ok(());
        }
        let (Some(e), Some(g)) = (self.state.encoder.take(), self.state.g.as_ref()) else {
            return Ok(());
        };
        let n = lp.encoder.batch_size.max(self.cfg.batch_size);
        let reals = match &self.fixed.train_real {
            Some(set) => set.clone(),
            None => synth::sample(&self.cfg.dataset, n, &mut self.state.rng)?.points,
        };
        let enc_cfg = EncoderConfig {
            seed: self.cfg.seed ^ self.state.iter as u64,
            ..lp.encoder
        };
        let (e, _) = pathfind::train_encoder(e, g, &reals, &enc_cfg)?;
        self.state.encoder = Some(e);
        Ok(())
    }

    /// One full iteration: `n_critic` discriminator steps, then one
    /// generator step when there is a generator.
    pub fn step(&mut self) -> Result<()> {
        // configs are validated up front, so a domain error mid-run means
        // the numbers blew up
        self.step_inner().map_err(|e| match e {
            Error::Domain(detail) => self.diverged(detail),
            e => e,
        })
    }

    fn step_inner(&mut self) -> Result<()> {
        self.refresh_encoder()?;
        for _ in 0..self.cfg.n_critic {
            let batch = self.draw_batch()?;
            let s = self.discriminator_step(&batch)?;
            self.clamp_since_eval += s.clamp_events;
            self.last_d = Some((s, batch));
        }
        if self.state.g.is_some() {
            let s = self.generator_step()?;
            self.clamp_since_eval += s.clamp_events;
            self.last_g = Some(s);
        }
        self.state.iter += 1;
        Ok(())
    }

    /// Samples from the current generator (or the fake dataset).
    pub fn sample_fakes(&self, n: usize, r: &mut Rng) -> Result<Matrix> {
        match (&self.state.g, &self.cfg.fake_dataset) {
            (Some(g), _) => g.predict(&rng::normal_matrix(r, n, self.cfg.d_z)),
            (None, Some(f)) => Ok(synth::sample(f, n, r)?.points),
            (None, None) => Err(Error::Structural("no source of fakes".into())),
        }
    }

    /// Metrics for the current state. Uses its own random stream, so it
    /// never perturbs training.
    pub fn evaluate(&mut self) -> Result<MetricsRecord> {
        let mut er = rng::stream(self.cfg.seed, S_EVAL + self.state.iter as u64);
        let n = self.cfg.eval_samples;
        let held_fake = match &self.fixed.held_fake {
            Some(h) => h.clone(),
            None => self.sample_fakes(n, &mut er)?,
        };
        let d = &self.state.d;
        let (train_real, train_fake) = match (&self.fixed.train_real, &self.fixed.train_fake, &self.last_d) {
            (Some(r), Some(f), _) => (r.clone(), f.clone()),
            (Some(r), None, Some((_, b))) => (r.clone(), b.fakes.clone()),
            (None, _, Some((_, b))) => (b.reals.clone(), b.fakes.clone()),
            (_, _, None) => {
                let b = Minibatch::new(
                    synth::sample(&self.cfg.dataset, self.cfg.batch_size, &mut er)?.points,
                    self.sample_fakes(self.cfg.batch_size, &mut er)?,
                    None,
                )?;
                (b.reals, b.fakes)
            }
        };
        let gen_gap = metrics::generalization_gap(d, &train_real, &train_fake, &self.fixed.held_real, &held_fake)?;
        let coverage = if self.state.g.is_some() && self.cfg.dataset.mixture()?.is_some() {
            Some(metrics::mode_coverage(&held_fake, &self.cfg.dataset)?)
        } else {
            None
        };
        let alphas = gan::sample_alphas(n, &mut er);
        let interps = gan::interpolate(&self.fixed.held_real, &held_fake, &alphas)?;
        let cap = metrics::capacity_balance(d, &interps)?;
        let (d_loss, penalty_value) = match &self.last_d {
            Some((s, _)) => (s.loss, s.penalty),
            None => {
                let pr = d.predict(&train_real)?.into_vec();
                let pf = d.predict(&train_fake)?.into_vec();
                (gan::objective_value(&pr, &pf)?.0, 0.0)
            }
        };
        let lambda = if self.cfg.penalty.is_inactive() { 0.0 } else { self.cfg.penalty.lambda };
        let rec = MetricsRecord {
            iter: self.state.iter,
            d_loss,
            g_loss: self.last_g.map(|s| s.loss),
            penalty_value,
            gen_gap,
            modes_covered: coverage.as_ref().map(|c| c.covered),
            hq_fraction: coverage.as_ref().map(|c| c.hq_fraction),
            grad_sq_mean: cap.grad_sq_mean,
            grad_norm_mean: cap.grad_norm_mean,
            gamma: lambda * cap.grad_sq_mean,
            grad_norm_cv: cap.cv,
            clamp_events: self.clamp_since_eval,
            jensen_ok: cap.jensen_ok,
        };
        if !rec.is_finite() {
            return Err(self.diverged(format!("non-finite metrics {rec:?}")));
        }
        self.clamp_since_eval = 0;
        self.last_good = Some(self.state.clone());
        Ok(rec)
    }

    /// Trains until the configured iteration budget, evaluating at
    /// iteration 0, every `eval_every` iterations and at the end.
    pub fn run(&mut self, mut sink: impl FnMut(&MetricsRecord) -> Result<()>) -> Result<()> {
        if self.state.iter == 0 {
            sink(&self.evaluate()?)?;
        }
        while self.state.iter < self.cfg.iters {
            self.step()?;
            let it = self.state.iter;
            if it % self.cfg.eval_every == 0 || it == self.cfg.iters {
                sink(&self.evaluate()?)?;
            }
        }
        Ok(())
    }

    /// Runs to completion and returns the final state and every metrics row.
    pub fn into_trained(mut self) -> Result<(TrainState, Vec<MetricsRecord>)> {
        let mut rows = Vec::new();
        self.run(|r| {
            rows.push(r.clone());
            Ok(())
        })?;
        Ok((self.state, rows))
    }
}

/// Trains a GAN (or a lone discriminator) as configured.
pub fn train_gan(cfg: TrainConfig) -> Result<(TrainState, Vec<MetricsRecord>)> {
    Trainer::new(cfg)?.into_trained()
}
