//! Measurements of a discriminator and of generated samples.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::gan;
use crate::matrix::Matrix;
use crate::nets::{Activation, Discriminator, MlpNet};
use crate::synth::{csv_err, DatasetSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A 2D grid of cell centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// `(min, max)` for each axis.
    pub bounds: [(f64, f64); 2],
    /// Cells along each axis.
    pub resolution: [usize; 2],
}

impl GridSpec {
    pub fn square(half_width: f64, resolution: usize) -> Self {
        GridSpec {
            bounds: [(-half_width, half_width), (-half_width, half_width)],
            resolution: [resolution, resolution],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (&(lo, hi), &n) in self.bounds.iter().zip(&self.resolution) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) || n < 2 {
                return Err(Error::Config(format!(
                    "grid axes need finite min < max and at least 2 cells, got {self:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution[0] * self.resolution[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell centers, `x` varying fastest.
    pub fn points(&self) -> Result<Matrix> {
        self.validate()?;
        let [nx, ny] = self.resolution;
        let center = |axis: usize, i: usize, n: usize| {
            let (lo, hi) = self.bounds[axis];
            lo + (i as f64 + 0.5) * (hi - lo) / n as f64
        };
        let mut out = Matrix::zeros(nx * ny, 2);
        for j in 0..ny {
            for i in 0..nx {
                out.row_slice_mut(j * nx + i)
                    .copy_from_slice(&[center(0, i, nx), center(1, j, ny)]);
            }
        }
        Ok(out)
    }
}

/// Scalar values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Surface {
    pub grid: GridSpec,
    pub points: Matrix,
    pub values: Vec<f64>,
}

/// 2D vectors on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub points: Matrix,
    /// `n × 2`.
    pub vectors: Matrix,
}

impl Surface {
    /// Columns `x,y,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["x", "y", "value"]).map_err(csv_err)?;
        for (p, v) in self.points.row_iter().zip(&self.values) {
            w.write_record([p[0].to_string(), p[1].to_string(), v.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pearson correlation of the values of two surfaces on the same grid.
    pub fn correlation(&self, other: &Surface) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Structural("surfaces are on different grids".into()));
        }
        pearson(&self.values, &other.values)
    }
}

/// Pearson correlation coefficient; a constant input has none.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Structural("correlation needs two equal-length series of length >= 2".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Domain("correlation with a constant series is undefined".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

impl Field {
    pub fn norms(&self) -> Vec<f64> {
        self.vectors.row_norms()
    }

    /// Largest cell norm over the median cell norm.
    pub fn concentration(&self) -> f64 {
        let mut n = self.norms();
        n.sort_by(f64::total_cmp);
        let median = if n.len() % 2 == 1 {
            n[n.len() / 2]
        } else {
            0.5 * (n[n.len() / 2 - 1] + n[n.len() / 2])
        };
        n.last().copied().unwrap_or(0.0) / median
    }

    /// Columns `x,y,gx,gy`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["x", "y", "gx", "gy"]).map_err(csv_err)?;
        for (p, g) in self.points.row_iter().zip(self.vectors.row_iter()) {
            w.write_record([
                p[0].to_string(),
                p[1].to_string(),
                g[0].to_string(),
                g[1].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV written by [`Surface::write_csv`] or [`Field::write_csv`]
/// into its header and numeric rows.
pub fn read_grid_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// `D` on every grid cell.
pub fn value_surface(d: &dyn Discriminator, grid: &GridSpec) -> Result<Surface> {
    let points = grid.points()?;
    let values = d.probs(&points)?;
    Ok(Surface {
        grid: *grid,
        points,
        values,
    })
}

/// Input gradients of the network's single output at every row of `points`.
pub fn input_gradients(d: &MlpNet, points: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bd = d.bind(&mut tape);
    let g = gan::input_gradients(&mut tape, &bd, points)?;
    Ok(tape.value(g)?.clone())
}

/// `∇ log D(v)` at every grid cell.
///
/// For a sigmoid head with logit `a` this is `(1 − D)∇a`, which stays
/// accurate where `D` underflows; other heads use `∇D / D`.
pub fn gradient_field(d: &MlpNet, grid: &GridSpec) -> Result<Field> {
    let points = grid.points()?;
    let vectors = grad_log_d(d, &points)?;
    Ok(Field {
        grid: *grid,
        points,
        vectors,
    })
}

fn grad_log_d(d: &MlpNet, points: &Matrix) -> Result<Matrix> {
    if d.has_probability_head() {
        let mut logit = d.clone();
        logit.set_head_activation(Activation::Identity);
        let ga = input_gradients(&logit, points)?;
        let p = d.predict(points)?;
        let mut out = ga;
        for i in 0..out.rows() {
            let w = 1.0 - p.as_slice()[i];
            out.row_slice_mut(i).iter_mut().for_each(|g| *g *= w);
        }
        Ok(out)
    } else {
        let g = input_gradients(d, points)?;
        let p = d.predict(points)?;
        let mut out = g;
        for i in 0..out.rows() {
            let v = p.as_slice()[i];
            out.row_slice_mut(i).iter_mut().for_each(|g| *g /= v);
        }
        Ok(out)
    }
}

/// Result of integrating `∇D` along the segment from `y` to `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineIntegral {
    pub integral: f64,
    /// `D(x) − D(y)`.
    pub difference: f64,
    pub residual: f64,
}

/// Midpoint-rule integral of `∇D(v)·(x − y)` over the straight segment
/// `v = y + t(x − y)`, `t ∈ [0, 1]`.
pub fn line_integral(d: &MlpNet, x: &[f64], y: &[f64], quadrature_points: usize) -> Result<LineIntegral> {
    if quadrature_points < 2 {
        return Err(Error::Contract("line integral needs at least 2 quadrature points".into()));
    }
    if x.len() != y.len() || x.len() != d.input_dim() {
        return Err(Error::Structural("endpoints must match the network input".into()));
    }
    let n = quadrature_points;
    let dir: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut pts = Matrix::zeros(n, x.len());
    for k in 0..n {
        let t = (k as f64 + 0.5) / n as f64;
        for (p, (&b, &dv)) in pts.row_slice_mut(k).iter_mut().zip(y.iter().zip(&dir)) {
            *p = b + t * dv;
        }
    }
    let g = input_gradients(d, &pts)?;
    let integral = g
        .row_iter()
        .map(|row| row.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let ends = d.predict(&Matrix::from_rows(&[x, y]))?;
    let difference = ends.as_slice()[0] - ends.as_slice()[1];
    Ok(LineIntegral {
        integral,
        difference,
        residual: (integral - difference).abs(),
    })
}

/// `|L(train) − L(held-out)|` where `L` is the discriminator objective.
pub fn generalization_gap(
    d: &dyn Discriminator,
    train_real: &Matrix,
    train_fake: &Matrix,
    held_real: &Matrix,
    held_fake: &Matrix,
) -> Result<f64> {
    let (train, _) = gan::objective_value(&d.probs(train_real)?, &d.probs(train_fake)?)?;
    let (held, _) = gan::objective_value(&d.probs(held_real)?, &d.probs(held_fake)?)?;
    Ok((train - held).abs())
}

/// A sample within this many component standard deviations of its nearest
/// mean counts as high quality.
pub const HQ_STDS: f64 = 3.0;
/// A mode is covered when at least `N / (COVERAGE_DIVISOR · K)` high-quality
/// samples fall on it.
pub const COVERAGE_DIVISOR: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeCoverage {
    pub covered: usize,
    pub modes: usize,
    pub hq_fraction: f64,
    /// High-quality samples per mode.
    pub per_mode: Vec<usize>,
}

pub fn mode_coverage(samples: &Matrix, spec: &DatasetSpec) -> Result<ModeCoverage> {
    let mix = spec
        .mixture()?
        .ok_or_else(|| Error::Unsupported("mode coverage needs a finite Gaussian mixture".into()))?;
    if samples.cols() != spec.dim() {
        return Err(Error::Structural("sample dimension does not match the dataset".into()));
    }
    let k = mix.means.len();
    let mut per_mode = vec![0usize; k];
    let mut hq = 0usize;
    for v in samples.row_iter() {
        let (j, dist) = mix.nearest(v);
        if dist <= HQ_STDS * mix.stds[j] {
            per_mode[j] += 1;
            hq += 1;
        }
    }
    let n = samples.rows();
    let need = n as f64 / (COVERAGE_DIVISOR * k as f64);
    Ok(ModeCoverage {
        covered: per_mode.iter().filter(|&&c| c > 0 && c as f64 >= need).count(),
        modes: k,
        hq_fraction: if n == 0 { 0.0 } else { hq as f64 / n as f64 },
        per_mode,
    })
}

/// Gradient-norm statistics over a set of points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CapacityBalance {
    /// `E‖∇D‖²`, so `γ = λ · grad_sq_mean`.
    pub grad_sq_mean: f64,
    /// `η = E‖∇D‖`.
    pub grad_norm_mean: f64,
    /// Standard deviation over mean of the norms.
    pub cv: f64,
    /// `η² ≤ E‖∇D‖²` held (up to rounding).
    pub jensen_ok: bool,
}

/// Relative slack allowed when checking `η² ≤ E‖∇D‖²` in floating point.
pub const JENSEN_RTOL: f64 = 1e-12;

pub fn capacity_balance(d: &MlpNet, points: &Matrix) -> Result<CapacityBalance> {
    if points.rows() == 0 {
        return Err(Error::Contract("capacity balance of an empty point set".into()));
    }
    Ok(norm_stats(&input_gradients(d, points)?.row_norms()))
}

pub(crate) fn norm_stats(norms: &[f64]) -> CapacityBalance {
    let n = norms.len() as f64;
    let grad_sq_mean = norms.iter().map(|x| x * x).sum::<f64>() / n;
    let grad_norm_mean = norms.iter().sum::<f64>() / n;
    let all_equal = norms.iter().all(|&x| x == norms[0]);
    let cv = if all_equal || grad_norm_mean == 0.0 {
        0.0
    } else {
        let var = norms.iter().map(|x| (x - grad_norm_mean).powi(2)).sum::<f64>() / n;
        var.sqrt() / grad_norm_mean
    };
    CapacityBalance {
        grad_sq_mean,
        grad_norm_mean,
        cv,
        jensen_ok: grad_norm_mean * grad_norm_mean <= grad_sq_mean * (1.0 + JENSEN_RTOL),
    }
}

/// One row of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: usize,
    pub d_loss: f64,
    pub g_loss: Option<f64>,
    pub penalty_value: f64,
    pub gen_gap: f64,
    pub modes_covered: Option<usize>,
    pub hq_fraction: Option<f64>,
    /// `E‖∇D(x̃)‖²` on evaluation interpolates.
    pub grad_sq_mean: f64,
    /// `η = E‖∇D(x̃)‖`.
    pub grad_norm_mean: f64,
    /// `γ = λ E‖∇D(x̃)‖²`.
    pub gamma: f64,
    pub grad_norm_cv: f64,
    pub clamp_events: usize,
    pub jensen_ok: bool,
}

impl MetricsRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.d_loss,
            self.g_loss.unwrap_or(0.0),
            self.penalty_value,
            self.gen_gap,
            self.hq_fraction.unwrap_or(0.0),
            self.grad_sq_mean,
            self.grad_norm_mean,
            self.gamma,
            self.grad_norm_cv,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Appends metrics rows to a CSV file, one flush per row.
pub struct MetricsWriter {
    inner: csv::Writer<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Ok(MetricsWriter {
            inner: csv::Writer::from_path(path).map_err(csv_err)?,
        })
    }

    pub fn append(&mut self, rec: &MetricsRecord) -> Result<()> {
        self.inner.serialize(rec).map_err(csv_err)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{init_params, Layer, NetSpec};
    use crate::rng;
    use crate::synth;

    fn linear(theta: &[f64], b: f64, act: Activation) -> MlpNet {
        MlpNet::new(vec![Layer {
            weight: Matrix::row(theta),
            bias: Some(Matrix::scalar(b)),
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn grid_centers() {
        let g = GridSpec {
            bounds: [(0.0, 2.0), (-1.0, 1.0)],
            resolution: [2, 4],
        };
        let p = g.points().unwrap();
        assert_eq!(p.rows(), 8);
        assert_eq!(p.row_slice(0), &[0.5, -0.75]);
        assert_eq!(p.row_slice(1), &[1.5, -0.75]);
        assert_eq!(p.row_slice(7), &[1.5, 0.75]);
        assert!(GridSpec::square(1.0, 1).validate().is_err());
    }

    #[test]
    fn linear_line_integral_is_exact() {
        let d = linear(&[0.3, -1.7], 0.2, Activation::Identity);
        for n in [2, 3, 17] {
            let r = line_integral(&d, &[1.0, 2.0], &[-4.0, 0.5], n).unwrap();
            assert!(r.residual <= 1e-12, "{r:?}");
        }
        let r = line_integral(&d, &[1.0, 2.0], &[1.0, 2.0], 10).unwrap();
        assert_eq!((r.integral, r.difference), (0.0, 0.0));
        assert!(line_integral(&d, &[1.0, 2.0], &[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn constant_discriminator_has_zero_field_and_gap() {
        let d = linear(&[0.0, 0.0], 0.4, Activation::Sigmoid);
        let f = gradient_field(&d, &GridSpec::square(3.0, 5)).unwrap();
        assert!(f.vectors.as_slice().iter().all(|&g| g == 0.0));
        let mut r = rng::seeded(1);
        let a = rng::normal_matrix(&mut r, 10, 2);
        let b = rng::normal_matrix(&mut r, 10, 2);
        assert_eq!(generalization_gap(&d, &a, &b, &b, &a).unwrap(), 0.0);
    }

    #[test]
    fn log_gradient_matches_ratio_form() {
        let d = init_params(&NetSpec::discriminator(2, &[6, 6]), 2).unwrap();
        let pts = rng::normal_matrix(&mut rng::seeded(4), 5, 2);
        let via_logit = grad_log_d(&d, &pts).unwrap();
        let g = input_gradients(&d, &pts).unwrap();
        let p = d.predict(&pts).unwrap();
        for i in 0..5 {
            for j in 0..2 {
                let direct = g[(i, j)] / p.as_slice()[i];
                assert!((direct - via_logit[(i, j)]).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn coverage_archetypes() {
        let spec = DatasetSpec::ring8(10.0);
        let s = synth::sample(&spec, 1000, &mut rng::seeded(0)).unwrap();
        let c = mode_coverage(&s.points, &spec).unwrap();
        assert_eq!(c.covered, 8);
        assert!(c.hq_fraction >= 0.95);
        let one = Matrix::from_rows(&vec![[10.0, 0.0]; 100]);
        let c = mode_coverage(&one, &spec).unwrap();
        assert_eq!((c.covered, c.hq_fraction), (1, 1.0));
        let far = Matrix::from_rows(&vec![[100.0, 100.0]; 50]);
        let c = mode_coverage(&far, &spec).unwrap();
        assert_eq!((c.covered, c.hq_fraction), (0, 0.0));
        let swiss = DatasetSpec::Swissroll { scale: 1.0, noise: 0.0 };
        assert!(matches!(mode_coverage(&one, &swiss), Err(Error::Unsupported(_))));
    }

    #[test]
    fn linear_capacity_balance() {
        let d = linear(&[0.6, 0.8], 0.0, Activation::Identity);
        let pts = rng::normal_matrix(&mut rng::seeded(5), 33, 2);
        let c = capacity_balance(&d, &pts).unwrap();
        assert_eq!(c.cv, 0.0);
        assert!((c.grad_norm_mean - 1.0).abs() < 1e-15 && c.jensen_ok);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("ganlab-metrics-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let rec = MetricsRecord {
            iter: 10,
            d_loss: -1.25,
            g_loss: None,
            penalty_value: 0.0,
            gen_gap: 0.1,
            modes_covered: Some(3),
            hq_fraction: None,
            grad_sq_mean: 2.0,
            grad_norm_mean: 1.0,
            gamma: 0.0,
            grad_norm_cv: 0.5,
            clamp_events: 0,
            jensen_ok: true,
        };
        let mut w = MetricsWriter::create(&path).unwrap();
        w.append(&rec).unwrap();
        w.append(&rec).unwrap();
        drop(w);
        assert_eq!(read_metrics_csv(&path).unwrap(), vec![rec.clone(), rec]);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
