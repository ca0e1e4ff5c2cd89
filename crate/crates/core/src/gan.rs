//! GAN losses and gradient penalties.
//!
//! The discriminator maximizes
//!
//! ```text
//! L = E[log D(x)] + E[log(1 − D(y))]            (y = G(z))
//! ```
//!
//! minus one of the penalties below; the generator minimizes the
//! non-saturating loss `−E[log D(y)]`.
//!
//! | kind                         | penalty                                         |
//! |------------------------------|-------------------------------------------------|
//! | `zero-centered-interpolate`  | `λ E[‖∇D(x̃)‖²]`, `x̃ = αx + (1 − α)y`            |
//! | `one-centered`               | `λ E[(‖∇D(x̃)‖ − 1)²]`                            |
//! | `zero-centered-sample`       | `λ E[‖∇D(v)‖²]` over the real and fake points   |
//!
//! Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before taking
//! logs; every clamped entry is counted so it can be surfaced in metrics.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nets::BoundNet;
use crate::rng::{self, Rng};
use serde::{Deserialize, Serialize};

/// Probability clamp used before every `log`.
pub const PROB_EPS: f64 = 1e-7;

/// Added under the square root of `‖∇D‖` so the one-centered penalty stays
/// differentiable at a zero gradient.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    None,
    /// Zero-centered penalty on straight-line interpolates (0-GP).
    ZeroCenteredInterpolate,
    /// One-centered penalty on straight-line interpolates (1-GP).
    OneCentered,
    /// Zero-centered penalty on the training points themselves.
    ZeroCenteredSample,
}

impl PenaltyKind {
    pub fn label(self) -> &'static str {
        match self {
            PenaltyKind::None => "none",
            PenaltyKind::ZeroCenteredInterpolate => "0-gp",
            PenaltyKind::OneCentered => "1-gp",
            PenaltyKind::ZeroCenteredSample => "0-gp-sample",
        }
    }

    /// Whether the penalty is evaluated on interpolates between pairs.
    pub fn uses_interpolates(self) -> bool {
        matches!(
            self,
            PenaltyKind::ZeroCenteredInterpolate | PenaltyKind::OneCentered
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    #[serde(default)]
    pub lambda: f64,
    /// For `zero-centered-sample`: penalize at real points only.
    #[serde(default)]
    pub reals_only: bool,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig::none()
    }
}

impl PenaltyConfig {
    pub fn none() -> Self {
        PenaltyConfig {
            kind: PenaltyKind::None,
            lambda: 0.0,
            reals_only: false,
        }
    }

    pub fn new(kind: PenaltyKind, lambda: f64) -> Self {
        PenaltyConfig {
            kind,
            lambda,
            reals_only: false,
        }
    }

    pub fn zero_gp(lambda: f64) -> Self {
        Self::new(PenaltyKind::ZeroCenteredInterpolate, lambda)
    }

    pub fn one_gp(lambda: f64) -> Self {
        Self::new(PenaltyKind::OneCentered, lambda)
    }

    pub fn zero_gp_sample(lambda: f64) -> Self {
        Self::new(PenaltyKind::ZeroCenteredSample, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "penalty coefficient must be a non-negative number, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// True when the penalty contributes nothing.
    pub fn is_inactive(&self) -> bool {
        self.kind == PenaltyKind::None || self.lambda == 0.0
    }
}

/// Paired real and fake points, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Minibatch {
    pub reals: Matrix,
    pub fakes: Matrix,
    /// Latent codes the fakes were generated from, when there is a generator.
    pub noises: Option<Matrix>,
}

impl Minibatch {
    pub fn new(reals: Matrix, fakes: Matrix, noises: Option<Matrix>) -> Result<Self> {
        if reals.shape() != fakes.shape() {
            return Err(Error::Structural(format!(
                "reals are {:?} but fakes are {:?}",
                reals.shape(),
                fakes.shape()
            )));
        }
        if let Some(z) = &noises {
            if z.rows() != reals.rows() {
                return Err(Error::Structural("one latent code per fake is required".into()));
            }
        }
        Ok(Minibatch {
            reals,
            fakes,
            noises,
        })
    }

    pub fn len(&self) -> usize {
        self.reals.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.reals.rows() == 0
    }
}

/// A scalar objective on the tape, with the number of clamped probabilities.
#[derive(Clone, Copy, Debug)]
pub struct Term {
    pub value: Var,
    pub clamp_events: usize,
}

fn clamped_log(tape: &mut Tape, p: Var, complement: bool) -> Result<(Var, usize)> {
    let events = tape
        .value(p)?
        .as_slice()
        .iter()
        .filter(|&&x| !(x > PROB_EPS && x < 1.0 - PROB_EPS))
        .count();
    let c = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
    let arg = if complement {
        let n = tape.neg(c)?;
        tape.add_scalar(n, 1.0)?
    } else {
        c
    };
    Ok((tape.log(arg)?, events))
}

fn require_rows(m: &Matrix, what: &str) -> Result<()> {
    if m.rows() == 0 {
        return Err(Error::Contract(format!("{what} is empty")));
    }
    Ok(())
}

/// `mean log D(x) + mean log(1 − D(y))`, to be maximized.
pub fn discriminator_loss(tape: &mut Tape, d: &BoundNet, batch: &Minibatch) -> Result<Term> {
    require_rows(&batch.reals, "real batch")?;
    require_rows(&batch.fakes, "fake batch")?;
    let x = tape.leaf(batch.reals.clone());
    let y = tape.leaf(batch.fakes.clone());
    let dx = d.forward(tape, x)?;
    let dy = d.forward(tape, y)?;
    let (lx, ex) = clamped_log(tape, dx, false)?;
    let (ly, ey) = clamped_log(tape, dy, true)?;
    let mx = tape.mean(lx)?;
    let my = tape.mean(ly)?;
    Ok(Term {
        value: tape.add(mx, my)?,
        clamp_events: ex + ey,
    })
}

/// Non-saturating generator loss `−mean log D(y)`, to be minimized.
/// `fakes` may be a node that depends on generator parameters.
pub fn generator_loss_nonsat(tape: &mut Tape, d: &BoundNet, fakes: Var) -> Result<Term> {
    require_rows(tape.value(fakes)?, "fake batch")?;
    let dy = d.forward(tape, fakes)?;
    let (l, events) = clamped_log(tape, dy, false)?;
    let m = tape.mean(l)?;
    Ok(Term {
        value: tape.neg(m)?,
        clamp_events: events,
    })
}

/// Minimax generator loss `mean log(1 − D(y))`, to be minimized: the
/// generator descends on the same objective the discriminator ascends.
pub fn generator_loss_minimax(tape: &mut Tape, d: &BoundNet, fakes: Var) -> Result<Term> {
    require_rows(tape.value(fakes)?, "fake batch")?;
    let dy = d.forward(tape, fakes)?;
    let (l, events) = clamped_log(tape, dy, true)?;
    Ok(Term {
        value: tape.mean(l)?,
        clamp_events: events,
    })
}

/// Which loss the generator minimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLoss {
    #[default]
    NonSaturating,
    Minimax,
}

pub fn generator_loss(tape: &mut Tape, d: &BoundNet, fakes: Var, kind: GeneratorLoss) -> Result<Term> {
    match kind {
        GeneratorLoss::NonSaturating => generator_loss_nonsat(tape, d, fakes),
        GeneratorLoss::Minimax => generator_loss_minimax(tape, d, fakes),
    }
}

/// The discriminator objective from precomputed probabilities, without a
/// tape: `mean ln D(x) + mean ln(1 − D(y))` with the same clamping, and the
/// number of clamped entries.
pub fn objective_value(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, usize)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Contract("objective of an empty set".into()));
    }
    let mut events = 0;
    let mut clamp = |p: f64| {
        if !(p > PROB_EPS && p < 1.0 - PROB_EPS) {
            events += 1;
        }
        p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    };
    let lx: f64 = d_real.iter().map(|&p| clamp(p).ln()).sum::<f64>() / d_real.len() as f64;
    let ly: f64 = d_fake.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / d_fake.len() as f64;
    Ok((lx + ly, events))
}

/// `αᵢ xᵢ + (1 − αᵢ) yᵢ` row by row.
pub fn interpolate(reals: &Matrix, fakes: &Matrix, alphas: &[f64]) -> Result<Matrix> {
    if reals.shape() != fakes.shape() || alphas.len() != reals.rows() {
        return Err(Error::Structural(
            "interpolation needs paired points and one α per pair".into(),
        ));
    }
    let mut out = fakes.clone();
    for (i, &a) in alphas.iter().enumerate() {
        for (o, &x) in out.row_slice_mut(i).iter_mut().zip(reals.row_slice(i)) {
            *o = a * x + (1.0 - a) * *o;
        }
    }
    Ok(out)
}

/// One `α ~ U(0, 1)` per pair.
pub fn sample_alphas(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng::unit(rng)).collect()
}

/// Straight-line interpolates with a fresh `α ~ U(0, 1)` per pair.
pub fn sample_interpolates(batch: &Minibatch, rng: &mut Rng) -> Result<Matrix> {
    let alphas = sample_alphas(batch.len(), rng);
    interpolate(&batch.reals, &batch.fakes, &alphas)
}

/// Where the penalty of `cfg` is evaluated for this batch, or `None` when
/// the penalty is inactive. Interpolating kinds consume one `α` per pair
/// from `rng`.
pub fn penalty_points(batch: &Minibatch, cfg: &PenaltyConfig, rng: &mut Rng) -> Result<Option<Matrix>> {
    cfg.validate()?;
    if cfg.is_inactive() {
        return Ok(None);
    }
    Ok(Some(match cfg.kind {
        PenaltyKind::None => unreachable!(),
        PenaltyKind::ZeroCenteredInterpolate | PenaltyKind::OneCentered => {
            sample_interpolates(batch, rng)?
        }
        PenaltyKind::ZeroCenteredSample => {
            if cfg.reals_only {
                batch.reals.clone()
            } else {
                let mut data = batch.reals.as_slice().to_vec();
                data.extend_from_slice(batch.fakes.as_slice());
                Matrix::from_vec(2 * batch.len(), batch.reals.cols(), data)
            }
        }
    }))
}

/// Input gradients of `D` at every row of `points`, as an `n × d` node.
pub fn input_gradients(tape: &mut Tape, d: &BoundNet, points: &Matrix) -> Result<Var> {
    let v = tape.leaf(points.clone());
    let out = d.forward(tape, v)?;
    // Rows are independent, so the gradient of the sum holds each row's gradient.
    let s = tape.sum(out)?;
    Ok(tape.grad(s, &[v])?[0])
}

/// The penalty of `cfg` evaluated at `points`.
pub fn penalty_at(tape: &mut Tape, d: &BoundNet, points: &Matrix, cfg: &PenaltyConfig) -> Result<Var> {
    cfg.validate()?;
    if cfg.is_inactive() {
        return Ok(tape.constant(0.0));
    }
    require_rows(points, "penalty point set")?;
    let g = input_gradients(tape, d, points)?;
    let sq = tape.row_norm_sq(g)?;
    let per_point = match cfg.kind {
        PenaltyKind::OneCentered => {
            let shifted = tape.add_scalar(sq, NORM_EPS)?;
            let norm = tape.sqrt(shifted)?;
            let dev = tape.add_scalar(norm, -1.0)?;
            tape.square(dev)?
        }
        _ => sq,
    };
    let m = tape.mean(per_point)?;
    tape.scale(m, cfg.lambda)
}

/// Samples penalty points for the batch and evaluates the penalty there.
pub fn penalty(
    tape: &mut Tape,
    d: &BoundNet,
    batch: &Minibatch,
    cfg: &PenaltyConfig,
    rng: &mut Rng,
) -> Result<Var> {
    match penalty_points(batch, cfg, rng)? {
        Some(points) => penalty_at(tape, d, &points, cfg),
        None => Ok(tape.constant(0.0)),
    }
}

/// The discriminator's full objective, `L − penalty`, to be maximized.
#[derive(Clone, Copy, Debug)]
pub struct DObjective {
    pub value: Var,
    pub loss: Var,
    pub penalty: Var,
    pub clamp_events: usize,
}

/// `L − penalty` with penalty points already chosen (`None`: no penalty).
pub fn total_d_objective_at(
    tape: &mut Tape,
    d: &BoundNet,
    batch: &Minibatch,
    cfg: &PenaltyConfig,
    points: Option<&Matrix>,
) -> Result<DObjective> {
    let loss = discriminator_loss(tape, d, batch)?;
    let pen = match points {
        Some(p) => penalty_at(tape, d, p, cfg)?,
        None => {
            cfg.validate()?;
            tape.constant(0.0)
        }
    };
    let value = if cfg.is_inactive() {
        loss.value
    } else {
        tape.sub(loss.value, pen)?
    };
    Ok(DObjective {
        value,
        loss: loss.value,
        penalty: pen,
        clamp_events: loss.clamp_events,
    })
}

pub fn total_d_objective(
    tape: &mut Tape,
    d: &BoundNet,
    batch: &Minibatch,
    cfg: &PenaltyConfig,
    rng: &mut Rng,
) -> Result<DObjective> {
    let points = penalty_points(batch, cfg, rng)?;
    total_d_objective_at(tape, d, batch, cfg, points.as_ref())
}
