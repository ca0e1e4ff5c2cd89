//! Analytic reference points.
//!
//! - [`optimal_discriminator`]: the density-ratio discriminator
//!   `p_r / (p_r + p_g)` for specs with known densities.
//! - [`construct_epsilon_optimal`]: a one-hidden-layer softmax network that
//!   separates two finite point sets by a margin `ε` around ½.
//! - [`linear_grad_ratio`], [`fixed_alt_gd_probe`] and
//!   [`annealed_alt_gd_probe`]: the linear single-point GAN under a linear
//!   (Wasserstein-style) objective, where the discriminator has to grow
//!   without bound to stay ε-optimal as the fake point approaches the real one.
//! - [`dirac_gan_run`]: the one-dimensional GAN learning a point mass at 0.

use crate::autodiff::{grad_wrt_params, Tape};
use crate::error::{Error, Result};
use crate::gan::{self, GeneratorLoss, Minibatch, PenaltyConfig};
use crate::matrix::Matrix;
use crate::nets::{Activation, Discriminator, Layer, MlpNet};
use crate::rng;
use crate::synth::{self, DatasetSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `p_r(v) / (p_r(v) + p_g(v))`, computed from log densities.
///
/// ```
/// use ganlab::synth::DatasetSpec;
/// use ganlab::theory::optimal_discriminator;
///
/// let r = DatasetSpec::gaussian_of_pair(0);
/// let g = DatasetSpec::gaussian_of_pair(1);
/// assert_eq!(optimal_discriminator(&r, &g, &[0.0, 0.0]).unwrap(), 0.5);
/// assert!(optimal_discriminator(&r, &g, &[-2.0, 0.0]).unwrap() > 0.999);
/// ```
pub fn optimal_discriminator(spec_r: &DatasetSpec, spec_g: &DatasetSpec, v: &[f64]) -> Result<f64> {
    let lr = synth::log_density(spec_r, v)?;
    let lg = synth::log_density(spec_g, v)?;
    if lr == f64::NEG_INFINITY && lg == f64::NEG_INFINITY {
        return Err(Error::UndefinedSupport(v.to_vec()));
    }
    if lr == lg {
        return Ok(0.5);
    }
    Ok(crate::autodiff::sigmoid(lr - lg))
}

/// [`optimal_discriminator`] as a [`Discriminator`], for surfaces and gaps.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityRatio {
    pub real: DatasetSpec,
    pub fake: DatasetSpec,
}

impl Discriminator for DensityRatio {
    fn input_dim(&self) -> usize {
        self.real.dim()
    }

    fn probs(&self, points: &Matrix) -> Result<Vec<f64>> {
        points
            .row_iter()
            .map(|v| optimal_discriminator(&self.real, &self.fake, v))
            .collect()
    }
}

/// Parameters of the ε-optimal construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonOptimalSpec {
    pub epsilon: f64,
    /// Offset added beyond `ε/2` to the output weights.
    pub alpha_margin: f64,
    /// Softmax sharpness. `None` picks the smallest power of two for which
    /// every training point's off-target softmax mass is below
    /// `alpha_margin / (m + n)`.
    #[serde(default)]
    pub k_sharpness: Option<f64>,
}

impl EpsilonOptimalSpec {
    pub fn new(epsilon: f64, alpha_margin: f64) -> Self {
        EpsilonOptimalSpec {
            epsilon,
            alpha_margin,
            k_sharpness: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.epsilon < 1.0
            && self.alpha_margin > 0.0
            && self.epsilon + 2.0 * self.alpha_margin < 1.0
            && self.k_sharpness.is_none_or(|k| k > 0.0 && k.is_finite());
        if !ok {
            return Err(Error::Config(format!(
                "need 0 < ε < 1, α > 0, ε + 2α < 1 and k > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Points closer than this after normalization count as the same point.
pub const COLLISION_TOL: f64 = 1e-9;

const MAX_SHARPNESS: f64 = 1.152_921_504_606_847e18; // 2^60

/// The constructed network. Inputs are projected onto the unit sphere
/// before the network sees them, matching how the training points were
/// normalized during construction.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonOptimalNet {
    pub net: MlpNet,
    pub k: f64,
}

impl Discriminator for EpsilonOptimalNet {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn probs(&self, points: &Matrix) -> Result<Vec<f64>> {
        let mut unit = points.clone();
        for i in 0..unit.rows() {
            normalize(unit.row_slice_mut(i));
        }
        Ok(self.net.predict(&unit)?.into_vec())
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest off-target softmax mass over the training points for sharpness `k`.
fn max_off_target_mass(gram: &[Vec<f64>], k: f64) -> f64 {
    let mut worst = 0.0f64;
    for (j, row) in gram.iter().enumerate() {
        // the on-target logit k·vⱼᵀvⱼ = k is the largest, so shift by it
        let off: f64 = row
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, &c)| (k * (c - row[j])).exp())
            .sum();
        worst = worst.max(off / (1.0 + off));
    }
    worst
}

/// Builds `D(v) = W₂ᵀ softmax(W₁ v)` with `W₁` rows `k·vᵢᵀ` and `W₂` entries
/// `½ + ε/2 + α` for reals and `½ − ε/2 − α` for fakes.
pub fn construct_epsilon_optimal(
    reals: &Matrix,
    fakes: &Matrix,
    spec: &EpsilonOptimalSpec,
) -> Result<EpsilonOptimalNet> {
    spec.validate()?;
    if reals.rows() == 0 || fakes.rows() == 0 {
        return Err(Error::Contract("both point sets must be non-empty".into()));
    }
    if reals.cols() != fakes.cols() {
        return Err(Error::Structural("real and fake points differ in dimension".into()));
    }
    let (n, m, d) = (reals.rows(), fakes.rows(), reals.cols());
    let mut points: Vec<Vec<f64>> = reals.row_iter().chain(fakes.row_iter()).map(<[f64]>::to_vec).collect();
    for (i, p) in points.iter_mut().enumerate() {
        if normalize(p) == 0.0 {
            return Err(Error::Contract(format!("point {i} is the origin and has no direction")));
        }
    }
    for i in 0..points.len() {
        for j in 0..i {
            let dist = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist < COLLISION_TOL {
                let side = |k: usize| if k < n { "real" } else { "fake" };
                return Err(Error::Contract(format!(
                    "{} point {} and {} point {} coincide after normalization",
                    side(j),
                    j,
                    side(i),
                    i
                )));
            }
        }
    }
    let gram: Vec<Vec<f64>> = points
        .iter()
        .map(|a| points.iter().map(|b| dot(a, b)).collect())
        .collect();
    let k = match spec.k_sharpness {
        Some(k) => k,
        None => {
            let target = spec.alpha_margin / (n + m) as f64;
            let mut k = 1.0;
            while max_off_target_mass(&gram, k) >= target {
                k *= 2.0;
                if k > MAX_SHARPNESS {
                    return Err(Error::Contract(
                        "points are too close together for any representable sharpness".into(),
                    ));
                }
            }
            k
        }
    };
    let mut w1 = Matrix::zeros(n + m, d);
    for (i, p) in points.iter().enumerate() {
        for (w, &x) in w1.row_slice_mut(i).iter_mut().zip(p) {
            *w = k * x;
        }
    }
    let hi = 0.5 + spec.epsilon / 2.0 + spec.alpha_margin;
    let lo = 0.5 - spec.epsilon / 2.0 - spec.alpha_margin;
    let w2: Vec<f64> = (0..n + m).map(|i| if i < n { hi } else { lo }).collect();
    let net = MlpNet::new(vec![
        Layer {
            weight: w1,
            bias: None,
            activation: Activation::Softmax,
        },
        Layer {
            weight: Matrix::row(&w2),
            bias: None,
            activation: Activation::Identity,
        },
    ])?;
    Ok(EpsilonOptimalNet { net, k })
}

/// Outcome of an ε-optimality check. Margins are positive when satisfied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonReport {
    pub optimal: bool,
    /// `min D(x) − (½ + ε/2)` over reals.
    pub real_margin: f64,
    /// `(½ − ε/2) − max D(y)` over fakes.
    pub fake_margin: f64,
}

pub fn verify_epsilon_optimal(
    d: &dyn Discriminator,
    reals: &Matrix,
    fakes: &Matrix,
    epsilon: f64,
) -> Result<EpsilonReport> {
    let pr = d.probs(reals)?;
    let pf = d.probs(fakes)?;
    let real_margin = pr.iter().cloned().fold(f64::INFINITY, f64::min) - (0.5 + epsilon / 2.0);
    let fake_margin = (0.5 - epsilon / 2.0) - pf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(EpsilonReport {
        optimal: real_margin >= 0.0 && fake_margin >= 0.0,
        real_margin,
        fake_margin,
    })
}

/// Linear GAN with one real point: `D(v) = θ_Dᵀv`, `G(z) = θ_G z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGanState {
    pub theta_d: Vec<f64>,
    /// `d_x × d_z`.
    pub theta_g: Matrix,
    pub x: Vec<f64>,
    /// Always `θ_G z`.
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl LinearGanState {
    pub fn new(theta_d: Vec<f64>, theta_g: Matrix, x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let d = x.len();
        if theta_d.len() != d || theta_g.shape() != (d, z.len()) {
            return Err(Error::Structural(format!(
                "θ_D has {} entries and θ_G is {:?} for d_x = {d}, d_z = {}",
                theta_d.len(),
                theta_g.shape(),
                z.len()
            )));
        }
        let y = theta_g.row_iter().map(|r| dot(r, &z)).collect();
        Ok(LinearGanState {
            theta_d,
            theta_g,
            x,
            y,
            z,
        })
    }

    /// A generator that maps `z` exactly onto `y`.
    pub fn with_fake(theta_d: Vec<f64>, x: Vec<f64>, y: &[f64], z: Vec<f64>) -> Result<Self> {
        let zz = dot(&z, &z);
        if zz == 0.0 {
            return Err(Error::Contract("latent code must be non-zero".into()));
        }
        let mut g = Matrix::zeros(y.len(), z.len());
        for (i, &yi) in y.iter().enumerate() {
            for (w, &zj) in g.row_slice_mut(i).iter_mut().zip(&z) {
                *w = yi * zj / zz;
            }
        }
        let mut s = Self::new(theta_d, g, x, z)?;
        // θ_G z reproduces y only up to rounding; keep the requested point.
        s.y = y.to_vec();
        Ok(s)
    }

    pub fn distance(&self) -> f64 {
        self.x.iter().zip(&self.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// `D(x) − D(y)`.
    pub fn margin(&self) -> f64 {
        dot(&self.theta_d, &self.x) - dot(&self.theta_d, &self.y)
    }
}

/// Norms of the objective's gradients with respect to `θ_D` and `θ_G`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradRatio {
    /// `‖x − y‖`.
    pub grad_d_norm: f64,
    /// `‖θ_D zᵀ‖ = ‖θ_D‖·‖z‖`.
    pub grad_g_norm: f64,
    pub ratio: f64,
}

pub fn linear_grad_ratio(state: &LinearGanState) -> Result<GradRatio> {
    let zn = dot(&state.z, &state.z).sqrt();
    if zn == 0.0 {
        return Err(Error::Contract("latent code must be non-zero".into()));
    }
    let grad_d_norm = state.distance();
    let grad_g_norm = dot(&state.theta_d, &state.theta_d).sqrt() * zn;
    Ok(GradRatio {
        grad_d_norm,
        grad_g_norm,
        ratio: grad_d_norm / grad_g_norm,
    })
}

/// Discriminator ascent `θ_D ← θ_D + lr·(x − y)` until `θ_Dᵀ(x − y) = ε`.
///
/// Each step raises the margin by exactly `lr‖x − y‖²`, so the number of
/// steps is `(ε − margin)/(lr‖x − y‖²)`. It is returned as a real number and
/// applied as one update that lands on the ε-optimality boundary, which
/// keeps the count free of rounding slack carried between rounds. Returns
/// `None` when `x = y` (no number of steps suffices).
fn regain_optimality(state: &mut LinearGanState, epsilon: f64, lr: f64) -> Option<f64> {
    let diff: Vec<f64> = state.x.iter().zip(&state.y).map(|(a, b)| a - b).collect();
    let per_step = lr * dot(&diff, &diff);
    let gap = epsilon - state.margin();
    if gap <= 0.0 {
        return Some(0.0);
    }
    if !(per_step > 0.0) {
        return None;
    }
    let steps = gap / per_step;
    for (t, d) in state.theta_d.iter_mut().zip(&diff) {
        *t += steps * lr * d;
    }
    Some(steps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub epsilon: f64,
    pub lr: f64,
    /// Discriminator steps Fixed-Alt-GD allows per generator step.
    pub steps_per_g: u64,
    pub x: Vec<f64>,
    pub y0: Vec<f64>,
    pub z: Vec<f64>,
    pub g_updates: usize,
}

impl ProbeConfig {
    pub fn new(epsilon: f64, lr: f64, steps_per_g: u64) -> Self {
        ProbeConfig {
            epsilon,
            lr,
            steps_per_g,
            x: vec![1.0, 0.0],
            y0: vec![0.0, 0.0],
            z: vec![1.0],
            g_updates: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbePoint {
    pub t: usize,
    pub distance: f64,
    /// Discriminator steps needed to become ε-optimal again (real-valued).
    pub d_steps_needed: f64,
    /// More steps were needed than Fixed-Alt-GD allows.
    pub over_budget: bool,
    pub grad_ratio: f64,
    pub theta_d_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeTrace {
    /// Steps taken from `θ_D = 0` to the first ε-optimal discriminator.
    pub initial_d_steps: f64,
    /// One point per generator update.
    pub points: Vec<ProbePoint>,
    /// `‖x − y‖` grew past ten times its initial value.
    pub diverged: bool,
    /// The fake point reached or passed the real one.
    pub crossed: bool,
}

impl ProbeTrace {
    pub fn steps_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].d_steps_needed >= w[0].d_steps_needed)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(crate::synth::csv_err)?;
        w.write_record(["t", "distance", "d_steps_needed", "over_budget", "grad_ratio", "theta_d_norm"])
            .map_err(crate::synth::csv_err)?;
        for p in &self.points {
            w.write_record([
                p.t.to_string(),
                p.distance.to_string(),
                p.d_steps_needed.to_string(),
                (p.over_budget as u8).to_string(),
                p.grad_ratio.to_string(),
                p.theta_d_norm.to_string(),
            ])
            .map_err(crate::synth::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn probe_point(t: usize, s: &LinearGanState, needed: f64, budget: u64) -> Result<ProbePoint> {
    let r = linear_grad_ratio(s)?;
    Ok(ProbePoint {
        t,
        distance: r.grad_d_norm,
        d_steps_needed: needed,
        over_budget: needed.ceil() > budget as f64,
        grad_ratio: r.ratio,
        theta_d_norm: r.grad_g_norm / dot(&s.z, &s.z).sqrt(),
    })
}

/// Alternating updates of the linear single-point GAN.
///
/// Starting from `θ_D = 0`, the discriminator is first made ε-optimal.
/// Each round then takes one generator step `θ_G ← θ_G + lr·θ_D zᵀ`
/// (moving `y` towards larger `D(y)`) and counts the discriminator steps
/// needed to restore ε-optimality. Those steps are taken, so the trace shows
/// what keeping the discriminator optimal would cost at each distance.
pub fn fixed_alt_gd_probe(cfg: &ProbeConfig) -> Result<ProbeTrace> {
    if !(cfg.lr > 0.0) || !(cfg.epsilon > 0.0) {
        return Err(Error::Contract("learning rate and ε must be positive".into()));
    }
    let mut s = LinearGanState::with_fake(vec![0.0; cfg.x.len()], cfg.x.clone(), &cfg.y0, cfg.z.clone())?;
    let d0 = s.distance();
    let mut trace = ProbeTrace {
        initial_d_steps: 0.0,
        points: Vec::new(),
        diverged: false,
        crossed: false,
    };
    let Some(first) = regain_optimality(&mut s, cfg.epsilon, cfg.lr) else {
        trace.crossed = true;
        return Ok(trace);
    };
    trace.initial_d_steps = first;
    for t in 1..=cfg.g_updates {
        for i in 0..s.theta_g.rows() {
            let td = s.theta_d[i];
            for (w, &zj) in s.theta_g.row_slice_mut(i).iter_mut().zip(&s.z) {
                *w += cfg.lr * td * zj;
            }
        }
        let zz = dot(&s.z, &s.z);
        for (y, &td) in s.y.iter_mut().zip(&s.theta_d) {
            *y += cfg.lr * zz * td;
        }
        if s.distance() > 10.0 * d0 || !s.distance().is_finite() {
            trace.diverged = true;
            break;
        }
        if s.margin() <= 0.0 {
            trace.crossed = true;
            break;
        }
        let Some(needed) = regain_optimality(&mut s, cfg.epsilon, cfg.lr) else {
            trace.crossed = true;
            break;
        };
        trace.points.push(probe_point(t, &s, needed, cfg.steps_per_g)?);
    }
    Ok(trace)
}

/// The same linear GAN with the fake point placed at distance
/// `d0·2^{−t}` from the real point for `t = 0..halvings`. After each move
/// the discriminator, carrying its parameters over, is made ε-optimal again.
pub fn annealed_alt_gd_probe(epsilon: f64, lr: f64, d0: f64, halvings: usize) -> Result<ProbeTrace> {
    if !(lr > 0.0) || !(epsilon > 0.0) || !(d0 > 0.0) {
        return Err(Error::Contract("ε, learning rate and distance must be positive".into()));
    }
    let x = vec![1.0, 0.0];
    let mut s = LinearGanState::with_fake(vec![0.0, 0.0], x.clone(), &[1.0 - d0, 0.0], vec![1.0])?;
    let mut trace = ProbeTrace {
        initial_d_steps: 0.0,
        points: Vec::new(),
        diverged: false,
        crossed: false,
    };
    for t in 0..halvings {
        let d = d0 * 0.5f64.powi(t as i32);
        s = LinearGanState::with_fake(s.theta_d.clone(), x.clone(), &[1.0 - d, 0.0], vec![1.0])?;
        let needed = regain_optimality(&mut s, epsilon, lr).ok_or_else(|| {
            Error::Contract("distance underflowed to zero".into())
        })?;
        trace.points.push(probe_point(t, &s, needed, u64::MAX)?);
    }
    Ok(trace)
}

/// Settings of a Dirac GAN run: `D(v) = sigmoid(ψv)`, real point 0, fake
/// point `θ`.
///
/// The generator defaults to the minimax loss, which makes the game
/// zero-sum: without a penalty the gradient flow then conserves `ψ² + θ²`
/// and circles the equilibrium forever. With the non-saturating loss
/// `ψ² + θ²` slowly decreases even without a penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracConfig {
    pub penalty: PenaltyConfig,
    #[serde(default = "minimax")]
    pub generator_loss: GeneratorLoss,
    pub lr: f64,
    pub iters: usize,
    pub theta0: f64,
    pub psi0: f64,
    /// Seeds the interpolation coefficients.
    pub seed: u64,
}

impl DiracConfig {
    /// Random start with `|θ₀| ∈ [0.5, 1.5]` and `ψ₀ ∈ [−0.5, 0.5]`.
    pub fn seeded(penalty: PenaltyConfig, lr: f64, iters: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, 1);
        let mag = rng::uniform(&mut r, 0.5, 1.5);
        let theta0 = if rng::unit(&mut r) < 0.5 { -mag } else { mag };
        let psi0 = rng::uniform(&mut r, -0.5, 0.5);
        DiracConfig {
            penalty,
            generator_loss: GeneratorLoss::Minimax,
            lr,
            iters,
            theta0,
            psi0,
            seed,
        }
    }
}

fn minimax() -> GeneratorLoss {
    GeneratorLoss::Minimax
}

/// Minimum sign changes of the `θ` update in the final window for a run to
/// count as oscillating.
pub const DIRAC_MIN_SIGN_CHANGES: usize = 10;
pub const DIRAC_SIGN_WINDOW: usize = 1000;
/// Relative slack when comparing `|θ|` amplitude across the final third.
pub const DIRAC_AMPLITUDE_TOL: f64 = 0.05;

/// `(ψ, θ)` after each iteration; index 0 is the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracTrajectory {
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OscillationReport {
    pub sign_changes: usize,
    /// Peak `|θ|` over the first and second halves of the final third.
    pub early_amplitude: f64,
    pub late_amplitude: f64,
    pub oscillating: bool,
}

impl DiracTrajectory {
    /// First iteration from which `|θ| ≤ tol` holds for the rest of the run.
    pub fn settled_within(&self, tol: f64) -> Option<usize> {
        let last_bad = self.theta.iter().rposition(|t| t.abs() > tol);
        match last_bad {
            None => Some(0),
            Some(i) if i + 1 < self.theta.len() => Some(i + 1),
            Some(_) => None,
        }
    }

    /// At least [`DIRAC_MIN_SIGN_CHANGES`] sign changes of `θ`'s update in
    /// the last [`DIRAC_SIGN_WINDOW`] iterations, and no net decrease of the
    /// `|θ|` amplitude over the final third of the run.
    pub fn oscillation(&self) -> OscillationReport {
        let steps: Vec<f64> = self.theta.windows(2).map(|w| w[1] - w[0]).collect();
        let window = &steps[steps.len().saturating_sub(DIRAC_SIGN_WINDOW)..];
        let signs: Vec<f64> = window.iter().filter(|s| **s != 0.0).map(|s| s.signum()).collect();
        let sign_changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        let n = self.theta.len();
        let third = &self.theta[n - n / 3..];
        let half = third.len() / 2;
        let peak = |s: &[f64]| s.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let early_amplitude = peak(&third[..half]);
        let late_amplitude = peak(&third[half..]);
        OscillationReport {
            sign_changes,
            early_amplitude,
            late_amplitude,
            oscillating: sign_changes >= DIRAC_MIN_SIGN_CHANGES
                && late_amplitude > 0.0
                && late_amplitude >= early_amplitude * (1.0 - DIRAC_AMPLITUDE_TOL),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(crate::synth::csv_err)?;
        w.write_record(["iter", "psi", "theta"]).map_err(crate::synth::csv_err)?;
        for (i, (p, t)) in self.psi.iter().zip(&self.theta).enumerate() {
            w.write_record([i.to_string(), p.to_string(), t.to_string()])
                .map_err(crate::synth::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn dirac_d(psi: f64) -> MlpNet {
    MlpNet::new(vec![Layer {
        weight: Matrix::scalar(psi),
        bias: None,
        activation: Activation::Sigmoid,
    }])
    .expect("1x1 layer")
}

/// Alternating gradient descent on the Dirac GAN: one discriminator ascent
/// step on the penalized objective, then one generator descent step.
pub fn dirac_gan_run(cfg: &DiracConfig) -> Result<DiracTrajectory> {
    if cfg.iters == 0 {
        return Err(Error::Contract("a run needs at least one iteration".into()));
    }
    cfg.penalty.validate()?;
    let mut r = rng::stream(cfg.seed, 2);
    let (mut psi, mut theta) = (cfg.psi0, cfg.theta0);
    let mut traj = DiracTrajectory {
        psi: vec![psi],
        theta: vec![theta],
    };
    for iter in 0..cfg.iters {
        let d = dirac_d(psi);
        let batch = Minibatch::new(Matrix::scalar(0.0), Matrix::scalar(theta), None)?;
        let mut tape = Tape::new();
        let bd = d.bind(&mut tape);
        let obj = gan::total_d_objective(&mut tape, &bd, &batch, &cfg.penalty, &mut r)?;
        let g = grad_wrt_params(&mut tape, obj.value, &bd.params())?;
        psi += cfg.lr * g[0].item();

        let d = dirac_d(psi);
        let mut tape = Tape::new();
        let bd = d.bind(&mut tape);
        let th = tape.leaf(Matrix::scalar(theta));
        let loss = gan::generator_loss(&mut tape, &bd, th, cfg.generator_loss)?;
        let g = grad_wrt_params(&mut tape, loss.value, &[th])?;
        theta -= cfg.lr * g[0].item();

        if !psi.is_finite() || !theta.is_finite() {
            return Err(Error::Divergence {
                iter,
                detail: format!("ψ = {psi}, θ = {theta}"),
            });
        }
        traj.psi.push(psi);
        traj.theta.push(theta);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::init_params;
    use crate::nets::NetSpec;

    #[test]
    fn optimal_discriminator_cases() {
        let r = DatasetSpec::ring8(10.0);
        assert_eq!(optimal_discriminator(&r, &r, &[3.0, -1.0]).unwrap(), 0.5);
        let a = DatasetSpec::Dirac { point: vec![0.0, 0.0] };
        let b = DatasetSpec::Dirac { point: vec![1.0, 0.0] };
        assert_eq!(optimal_discriminator(&a, &b, &[0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(
            optimal_discriminator(&a, &b, &[5.0, 5.0]),
            Err(Error::UndefinedSupport(_))
        ));
        let g = DatasetSpec::gaussian_of_pair(1);
        let far = optimal_discriminator(&g, &r, &[1e6, 0.0]).unwrap();
        assert!((0.0..=1.0).contains(&far));
    }

    #[test]
    fn orthogonal_pair_closed_form() {
        let x = Matrix::row(&[1.0, 0.0]);
        let y = Matrix::row(&[0.0, 1.0]);
        let spec = EpsilonOptimalSpec {
            epsilon: 0.2,
            alpha_margin: 0.05,
            k_sharpness: Some(50.0),
        };
        let d = construct_epsilon_optimal(&x, &y, &spec).unwrap();
        let px = d.probs(&x).unwrap()[0];
        let py = d.probs(&y).unwrap()[0];
        // softmax([50, 0]) puts 1/(1 + e^-50) on the matching unit
        let s = 1.0 / (1.0 + (-50f64).exp());
        assert!((px - (0.65 * s + 0.35 * (1.0 - s))).abs() < 1e-15);
        assert!(px >= 0.6 && py <= 0.4);
        assert!(verify_epsilon_optimal(&d, &x, &y, 0.2).unwrap().optimal);
    }

    #[test]
    fn parameter_count_matches_size_formula() {
        let mut r = rng::seeded(3);
        let x = rng::normal_matrix(&mut r, 50, 10);
        let y = rng::normal_matrix(&mut r, 50, 10);
        let d = construct_epsilon_optimal(&x, &y, &EpsilonOptimalSpec::new(0.2, 0.05)).unwrap();
        assert_eq!(d.net.param_count(), 10 * 100 + 100);
        assert_eq!(d.net.param_count(), 1100);
    }

    #[test]
    fn collisions_are_rejected() {
        let x = Matrix::from_rows(&[[1.0, 1.0]]);
        let y = Matrix::from_rows(&[[2.0, 2.0]]);
        let err = construct_epsilon_optimal(&x, &y, &EpsilonOptimalSpec::new(0.2, 0.05)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn constant_half_is_never_epsilon_optimal() {
        let half = MlpNet::new(vec![Layer {
            weight: Matrix::zeros(1, 2),
            bias: Some(Matrix::scalar(0.0)),
            activation: Activation::Sigmoid,
        }])
        .unwrap();
        let x = Matrix::row(&[1.0, 0.0]);
        let y = Matrix::row(&[0.0, 1.0]);
        assert!(!verify_epsilon_optimal(&half, &x, &y, 0.1).unwrap().optimal);
        assert!(verify_epsilon_optimal(&half, &x, &y, 0.0).unwrap().optimal);
    }

    #[test]
    fn grad_ratio_unit_case_and_homogeneity() {
        let s = LinearGanState::with_fake(vec![1.0, 0.0], vec![1.0, 0.0], &[0.0, 0.0], vec![1.0]).unwrap();
        let r = linear_grad_ratio(&s).unwrap();
        assert_eq!((r.grad_d_norm, r.grad_g_norm, r.ratio), (1.0, 1.0, 1.0));
        for c in [0.5, 2.0, 8.0] {
            let sc = LinearGanState { z: vec![c], ..s.clone() };
            assert_eq!(linear_grad_ratio(&sc).unwrap().grad_g_norm, c * r.grad_g_norm);
        }
        let zero = LinearGanState { z: vec![0.0], ..s };
        assert!(linear_grad_ratio(&zero).is_err());
    }

    #[test]
    fn probe_steps_are_non_decreasing_and_respect_bound() {
        let trace = fixed_alt_gd_probe(&ProbeConfig::new(0.2, 0.01, 5)).unwrap();
        assert!(trace.points.len() > 5);
        assert!(trace.steps_non_decreasing());
        for p in &trace.points {
            assert!(p.theta_d_norm >= 0.2 / p.distance * (1.0 - 1e-12));
        }
    }

    #[test]
    fn probe_matches_scalar_recurrence() {
        let cfg = ProbeConfig {
            g_updates: 30,
            ..ProbeConfig::new(0.3, 0.05, 3)
        };
        let trace = fixed_alt_gd_probe(&cfg).unwrap();
        // the same dynamics written out on the line through x and y
        let (x, mut y) = (1.0f64, 0.0f64);
        let mut td = 0.3 / (x - y);
        let mut expected = Vec::new();
        for _ in 0..30 {
            y += 0.05 * td;
            if td * (x - y) <= 0.0 {
                break;
            }
            let gap = 0.3 - td * (x - y);
            expected.push(gap / (0.05 * (x - y) * (x - y)));
            td = 0.3 / (x - y);
        }
        assert_eq!(trace.points.len(), expected.len());
        for (p, e) in trace.points.iter().zip(&expected) {
            assert!((p.d_steps_needed - e).abs() <= 1e-9 * e.abs(), "{} vs {e}", p.d_steps_needed);
        }
        assert!((trace.initial_d_steps - 0.3 / 0.05).abs() < 1e-12);
    }

    #[test]
    fn tiny_lr_keeps_fake_still() {
        let cfg = ProbeConfig {
            g_updates: 20,
            ..ProbeConfig::new(0.2, 1e-9, 1)
        };
        let trace = fixed_alt_gd_probe(&cfg).unwrap();
        // with y fixed the requirement per round is ε²‖z‖²/‖x − y‖⁴ = 0.04
        for p in &trace.points {
            assert!((p.d_steps_needed - 0.04).abs() < 1e-6, "{p:?}");
        }
        assert!((trace.points.last().unwrap().distance - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dirac_equilibrium_is_fixed() {
        for penalty in [PenaltyConfig::none(), PenaltyConfig::zero_gp(10.0)] {
            let cfg = DiracConfig {
                penalty,
                generator_loss: GeneratorLoss::Minimax,
                lr: 0.1,
                iters: 50,
                theta0: 0.0,
                psi0: 0.0,
                seed: 0,
            };
            let t = dirac_gan_run(&cfg).unwrap();
            assert!(t.theta.iter().all(|&x| x == 0.0));
            assert!(t.psi.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn dirac_matches_hand_derived_updates() {
        // D(v) = σ(ψv), real 0, fake θ, 0-GP at x̃ = (1 − α)θ:
        //   ∂/∂ψ [ln σ(0) + ln(1 − σ(ψθ))] = −σ(ψθ)θ
        //   ∂/∂ψ λ(σ'(ψx̃)ψ)² = 2λ s'ψ (s' + ψ x̃ s'(1 − 2s)), s = σ(ψx̃)
        //   ∂/∂θ −ln σ(ψθ) = −(1 − σ(ψθ))ψ       (non-saturating)
        let lambda = 3.0;
        let cfg = DiracConfig {
            penalty: PenaltyConfig::zero_gp(lambda),
            generator_loss: GeneratorLoss::NonSaturating,
            lr: 0.1,
            iters: 40,
            theta0: 0.9,
            psi0: -0.3,
            seed: 11,
        };
        let traj = dirac_gan_run(&cfg).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut r = rng::stream(11, 2);
        let (mut psi, mut theta) = (cfg.psi0, cfg.theta0);
        for i in 0..cfg.iters {
            let a = rng::unit(&mut r);
            let xt = (1.0 - a) * theta;
            let s = sig(psi * xt);
            let sp = s * (1.0 - s);
            let dpen = 2.0 * lambda * sp * psi * (sp + psi * xt * sp * (1.0 - 2.0 * s));
            psi += 0.1 * (-sig(psi * theta) * theta - dpen);
            theta += 0.1 * (1.0 - sig(psi * theta)) * psi;
            assert!((psi - traj.psi[i + 1]).abs() < 1e-12, "iter {i}");
            assert!((theta - traj.theta[i + 1]).abs() < 1e-12, "iter {i}");
        }
    }

    #[test]
    fn minimax_dirac_matches_hand_derived_updates() {
        // ∂/∂θ ln(1 − σ(ψθ)) = −σ(ψθ)ψ
        let cfg = DiracConfig {
            penalty: PenaltyConfig::none(),
            generator_loss: GeneratorLoss::Minimax,
            lr: 0.1,
            iters: 40,
            theta0: -0.7,
            psi0: 0.2,
            seed: 5,
        };
        let traj = dirac_gan_run(&cfg).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (mut psi, mut theta) = (cfg.psi0, cfg.theta0);
        for i in 0..cfg.iters {
            psi -= 0.1 * sig(psi * theta) * theta;
            theta += 0.1 * sig(psi * theta) * psi;
            assert!((psi - traj.psi[i + 1]).abs() < 1e-12, "iter {i}");
            assert!((theta - traj.theta[i + 1]).abs() < 1e-12, "iter {i}");
        }
    }

    #[test]
    fn plain_mlp_is_a_discriminator() {
        let d = init_params(&NetSpec::discriminator(2, &[4]), 0).unwrap();
        let p = d.probs(&Matrix::from_rows(&[[0.0, 1.0], [3.0, 3.0]])).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
