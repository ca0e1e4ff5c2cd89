//! Interpolation paths through the generator's latent space.
//!
//! An encoder `E` maps data to latent codes. A path from a fake sample
//! `y = G(z)` to a real sample `x` then runs through the generator:
//!
//! ```text
//! z_x = E(x)
//! z̃   = α z_x + (1 − α) z
//! x̃   = G(z̃)
//! ```
//!
//! The encoder is trained to reconstruct data through the generator,
//! `‖G(E(x)) − x‖²`, while a moment-matching term pulls the batch mean of
//! `E(x)` towards 0 and its covariance towards the identity, so that codes
//! look like draws from the generator's latent prior.

use crate::autodiff::{grad_wrt_params, Tape, Var};
use crate::error::{Error, Result};
use crate::gan;
use crate::matrix::Matrix;
use crate::nets::{init_params_with, MlpNet, NetSpec};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng;
use serde::{Deserialize, Serialize};

/// A network from data space to latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub net: MlpNet,
}

impl Encoder {
    pub fn new(net: MlpNet) -> Self {
        Encoder { net }
    }

    /// A freshly initialized encoder `d_x → hidden → d_z`.
    pub fn init(d_x: usize, hidden: &[usize], d_z: usize, seed: u64) -> Result<Self> {
        let net = init_params_with(&NetSpec::encoder(d_x, hidden, d_z), &mut rng::stream(seed, 50))?;
        Ok(Encoder { net })
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.net.predict(x)
    }

    fn check_against(&self, g: &MlpNet) -> Result<()> {
        if self.net.output_dim() != g.input_dim() {
            return Err(Error::Structural(format!(
                "encoder emits {}-dim codes but the generator takes {}",
                self.net.output_dim(),
                g.input_dim()
            )));
        }
        if self.net.input_dim() != g.output_dim() {
            return Err(Error::Structural(format!(
                "encoder reads {}-dim data but the generator emits {}",
                self.net.input_dim(),
                g.output_dim()
            )));
        }
        Ok(())
    }
}

fn default_steps() -> usize {
    500
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    64
}
fn default_moment_weight() -> f64 {
    1.0
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Weight of the mean/covariance matching term.
    #[serde(default = "default_moment_weight")]
    pub moment_weight: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            steps: default_steps(),
            lr: default_lr(),
            batch_size: default_batch(),
            moment_weight: default_moment_weight(),
            optimizer: default_optimizer(),
            seed: 0,
        }
    }
}

/// Per-step losses from [`train_encoder`].
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EncoderTrace {
    pub reconstruction: Vec<f64>,
    pub moments: Vec<f64>,
}

/// `‖mean(z)‖² + ‖cov(z) − I‖²_F` on the tape.
fn moment_loss(tape: &mut Tape, z: Var) -> Result<Var> {
    let (n, k) = tape.value(z)?.shape();
    let s = tape.col_sum(z)?;
    let mu = tape.scale(s, 1.0 / n as f64)?;
    let mean_term = tape.norm_sq(mu)?;
    let mu_b = tape.broadcast_rows(mu, n)?;
    let zc = tape.sub(z, mu_b)?;
    let prod = tape.matmul_t(zc, zc, true, false)?;
    let cov = tape.scale(prod, 1.0 / n as f64)?;
    let eye = tape.leaf(Matrix::identity(k));
    let dev = tape.sub(cov, eye)?;
    let cov_term = tape.norm_sq(dev)?;
    tape.add(mean_term, cov_term)
}

/// Mean squared reconstruction error `‖G(E(x)) − x‖²` over the rows of `x`.
pub fn reconstruction_error(e: &Encoder, g: &MlpNet, x: &Matrix) -> Result<f64> {
    e.check_against(g)?;
    let xr = g.predict(&e.encode(x)?)?;
    Ok(xr.zip_map(x, |a, b| (a - b) * (a - b)).sum() / x.rows() as f64)
}

/// Trains `e` against a fixed generator on `reals`.
pub fn train_encoder(
    e: Encoder,
    g: &MlpNet,
    reals: &Matrix,
    cfg: &EncoderConfig,
) -> Result<(Encoder, EncoderTrace)> {
    e.check_against(g)?;
    cfg.optimizer.validate()?;
    if reals.rows() == 0 {
        return Err(Error::Contract("encoder training needs data".into()));
    }
    let mut e = e;
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut r = rng::stream(cfg.seed, 51);
    let mut trace = EncoderTrace::default();
    let batch = cfg.batch_size.min(reals.rows()).max(2);
    for step in 0..cfg.steps {
        let x = if batch >= reals.rows() {
            reals.clone()
        } else {
            reals.select_rows(&rng::sample_without_replacement(&mut r, reals.rows(), batch))
        };
        let mut tape = Tape::new();
        let be = e.net.bind(&mut tape);
        let bg = g.bind(&mut tape);
        let xv = tape.leaf(x);
        let z = be.forward(&mut tape, xv)?;
        let xr = bg.forward(&mut tape, z)?;
        let diff = tape.sub(xr, xv)?;
        let per_row = tape.row_norm_sq(diff)?;
        let recon = tape.mean(per_row)?;
        let moments = moment_loss(&mut tape, z)?;
        let weighted = tape.scale(moments, cfg.moment_weight)?;
        let loss = tape.add(recon, weighted)?;
        let (rv, mv) = (tape.scalar(recon)?, tape.scalar(moments)?);
        if !rv.is_finite() || !mv.is_finite() {
            return Err(Error::Divergence {
                iter: step,
                detail: format!(
                    "encoder loss became non-finite; reconstruction trace ends {:?}",
                    &trace.reconstruction[trace.reconstruction.len().saturating_sub(5)..]
                ),
            });
        }
        trace.reconstruction.push(rv);
        trace.moments.push(mv);
        let grads = grad_wrt_params(&mut tape, loss, &be.params())?;
        opt.step(&mut e.net.params_mut(), &grads, cfg.lr)?;
    }
    Ok((e, trace))
}

/// Latent codes `αᵢ E(xᵢ) + (1 − αᵢ) zᵢ`, one per row.
pub fn latent_codes(e: &Encoder, x: &Matrix, z: &Matrix, alphas: &[f64]) -> Result<Matrix> {
    if e.net.input_dim() != x.cols() || e.net.output_dim() != z.cols() {
        return Err(Error::Structural("data or latent dimension does not match the encoder".into()));
    }
    gan::interpolate(&e.encode(x)?, z, alphas)
}

/// `G(α E(x) + (1 − α) z)` row by row.
pub fn latent_interpolate(e: &Encoder, g: &MlpNet, x: &Matrix, z: &Matrix, alphas: &[f64]) -> Result<Matrix> {
    e.check_against(g)?;
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Contract(format!("interpolation weight {a} is outside [0, 1]")));
    }
    g.predict(&latent_codes(e, x, z, alphas)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Activation, Layer};

    fn identity_net(d: usize) -> MlpNet {
        MlpNet::new(vec![Layer {
            weight: Matrix::identity(d),
            bias: None,
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn endpoints() {
        let g = crate::nets::init_params(&NetSpec::generator(2, &[8], 2), 1).unwrap();
        let e = Encoder::init(2, &[8], 2, 3).unwrap();
        let x = rng::normal_matrix(&mut rng::seeded(1), 4, 2);
        let z = rng::normal_matrix(&mut rng::seeded(2), 4, 2);
        let at0 = latent_interpolate(&e, &g, &x, &z, &[0.0; 4]).unwrap();
        assert_eq!(at0, g.predict(&z).unwrap());
        let at1 = latent_interpolate(&e, &g, &x, &z, &[1.0; 4]).unwrap();
        assert_eq!(at1, g.predict(&e.encode(&x).unwrap()).unwrap());
        assert!(latent_interpolate(&e, &g, &x, &z, &[1.5; 4]).is_err());
    }

    #[test]
    fn perfect_autoencoder_returns_x() {
        let e = Encoder::new(identity_net(2));
        let g = identity_net(2);
        let x = Matrix::from_rows(&[[0.25, -3.0]]);
        let z = Matrix::from_rows(&[[9.0, 9.0]]);
        assert_eq!(latent_interpolate(&e, &g, &x, &z, &[1.0]).unwrap(), x);
    }

    #[test]
    fn zero_steps_leave_encoder_unchanged() {
        let g = identity_net(2);
        let e = Encoder::init(2, &[8], 2, 3).unwrap();
        let x = rng::normal_matrix(&mut rng::seeded(1), 16, 2);
        let cfg = EncoderConfig {
            steps: 0,
            ..EncoderConfig::default()
        };
        let (trained, trace) = train_encoder(e.clone(), &g, &x, &cfg).unwrap();
        assert_eq!(trained, e);
        assert!(trace.reconstruction.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let g = identity_net(3);
        let e = Encoder::init(2, &[4], 2, 0).unwrap();
        let x = Matrix::zeros(1, 2);
        assert!(matches!(
            train_encoder(e, &g, &x, &EncoderConfig::default()),
            Err(Error::Structural(_))
        ));
    }
}
