//! Synthetic distributions with analytic densities.
//!
//! Every distribution except the swissroll is a finite Gaussian mixture (or
//! a point mass), so its density is available in closed form and the
//! density-ratio optimal discriminator can be evaluated exactly.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Rng};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

fn default_scale() -> f64 {
    1.0
}

fn default_two_means() -> [[f64; 2]; 2] {
    [[-2.0, 0.0], [2.0, 0.0]]
}

fn default_two_std() -> f64 {
    0.5
}

fn default_ring_radius() -> f64 {
    1.0
}

fn default_ring_std() -> f64 {
    0.05
}

fn default_swiss_noise() -> f64 {
    0.02
}

/// A synthetic data distribution.
///
/// Serialized with a `kind` tag, e.g. `{"kind":"ring8","scale":10}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Two isotropic Gaussians. `component` selects one of them (so the pair
    /// can play real and fake roles); `None` is their equal mixture.
    TwoGaussians {
        #[serde(default = "default_two_means")]
        means: [[f64; 2]; 2],
        #[serde(default = "default_two_std")]
        std: f64,
        #[serde(default)]
        component: Option<usize>,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Eight Gaussians equally spaced on a circle. Radius and standard
    /// deviation are multiplied by `scale`.
    #[serde(rename = "ring8")]
    Ring8 {
        #[serde(default = "default_ring_radius")]
        radius: f64,
        #[serde(default = "default_ring_std")]
        std: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// A 2D spiral of 1.5 turns with outer radius `scale`. No analytic density.
    Swissroll {
        #[serde(default = "default_scale")]
        scale: f64,
        /// Noise standard deviation relative to `scale`.
        #[serde(default = "default_swiss_noise")]
        noise: f64,
    },
    /// Point mass.
    Dirac { point: Vec<f64> },
    /// General isotropic Gaussian mixture; means and stds are multiplied by
    /// `scale`, weights default to uniform.
    GaussianMixture {
        means: Vec<Vec<f64>>,
        stds: Vec<f64>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

/// An isotropic Gaussian mixture in resolved (scaled) coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Mixture {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(Error::Config("mixture has no components".into()));
        }
        let d = self.means[0].len();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return Err(Error::Config("mixture means have inconsistent dimensions".into()));
        }
        if self.stds.len() != self.means.len() || self.weights.len() != self.means.len() {
            return Err(Error::Config("mixture parameter lists differ in length".into()));
        }
        if self.stds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("mixture standard deviations must be positive".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        if self.means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("mixture means must be finite".into()));
        }
        Ok(())
    }

    /// `log p(v)`, computed with log-sum-exp so far-away points give a
    /// finite (very negative) value rather than `log 0`.
    pub fn log_density(&self, v: &[f64]) -> f64 {
        let d = self.dim() as f64;
        let total_w: f64 = self.weights.iter().sum();
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.stds)
            .zip(&self.weights)
            .map(|((m, &s), &w)| {
                let dist2: f64 = m.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
                (w / total_w).ln() - 0.5 * d * (2.0 * PI * s * s).ln() - dist2 / (2.0 * s * s)
            })
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    /// Index of the component whose mean is nearest to `v`, and the distance.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, m) in self.means.iter().enumerate() {
            let d: f64 = m.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

impl DatasetSpec {
    pub fn ring8(scale: f64) -> Self {
        DatasetSpec::Ring8 {
            radius: default_ring_radius(),
            std: default_ring_std(),
            scale,
        }
    }

    /// One Gaussian of the default pair: component 0 at (−2, 0), 1 at (2, 0).
    pub fn gaussian_of_pair(component: usize) -> Self {
        DatasetSpec::TwoGaussians {
            means: default_two_means(),
            std: default_two_std(),
            component: Some(component),
            scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetSpec::Dirac { point } => point.len(),
            DatasetSpec::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
            _ => 2,
        }
    }

    /// The spec as a Gaussian mixture, when it is one.
    pub fn mixture(&self) -> Result<Option<Mixture>> {
        let mix = match self {
            DatasetSpec::TwoGaussians {
                means,
                std,
                component,
                scale,
            } => {
                check_scale(*scale)?;
                let comps: Vec<usize> = match component {
                    None => vec![0, 1],
                    Some(c) if *c < 2 => vec![*c],
                    Some(c) => {
                        return Err(Error::Config(format!(
                            "two-gaussians component must be 0 or 1, got {c}"
                        )))
                    }
                };
                Mixture {
                    means: comps
                        .iter()
                        .map(|&c| means[c].iter().map(|x| x * scale).collect())
                        .collect(),
                    stds: vec![std * scale; comps.len()],
                    weights: vec![1.0; comps.len()],
                }
            }
            DatasetSpec::Ring8 { radius, std, scale } => {
                check_scale(*scale)?;
                let r = radius * scale;
                Mixture {
                    means: (0..8)
                        .map(|k| {
                            let a = k as f64 * PI / 4.0;
                            vec![r * a.cos(), r * a.sin()]
                        })
                        .collect(),
                    stds: vec![std * scale; 8],
                    weights: vec![1.0; 8],
                }
            }
            DatasetSpec::GaussianMixture {
                means,
                stds,
                weights,
                scale,
            } => {
                check_scale(*scale)?;
                Mixture {
                    means: means
                        .iter()
                        .map(|m| m.iter().map(|x| x * scale).collect())
                        .collect(),
                    stds: stds.iter().map(|s| s * scale).collect(),
                    weights: weights.clone().unwrap_or_else(|| vec![1.0; means.len()]),
                }
            }
            DatasetSpec::Swissroll { .. } | DatasetSpec::Dirac { .. } => return Ok(None),
        };
        mix.validate()?;
        Ok(Some(mix))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Swissroll { scale, noise } => {
                check_scale(*scale)?;
                if !(*noise >= 0.0) || !noise.is_finite() {
                    return Err(Error::Config("swissroll noise must be non-negative".into()));
                }
                Ok(())
            }
            DatasetSpec::Dirac { point } => {
                if point.is_empty() || point.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config("dirac point must be finite and non-empty".into()));
                }
                Ok(())
            }
            _ => self.mixture().map(|_| ()),
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    Ok(())
}

/// Points drawn from a distribution, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub points: Matrix,
    /// Mixture component each point came from, where meaningful.
    pub labels: Option<Vec<usize>>,
}

impl SampleSet {
    pub fn new(points: Matrix) -> Self {
        SampleSet {
            points,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Writes `x0,x1,…,label`; the label column is empty for unlabeled sets.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.points.row_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            rec.push(
                self.labels
                    .as_ref()
                    .map_or(String::new(), |l| l[i].to_string()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        let dim = header.iter().filter(|h| h.starts_with('x')).count();
        if dim == 0 || header.get(dim) != Some("label") {
            return Err(Error::Parse("sample CSV header must be x0,…,label".into()));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut any_label = false;
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            for j in 0..dim {
                data.push(parse_f64(&rec[j])?);
            }
            let l = &rec[dim];
            if l.is_empty() {
                labels.push(0);
            } else {
                any_label = true;
                labels.push(l.parse().map_err(|_| Error::Parse(format!("bad label {l:?}")))?);
            }
            rows += 1;
        }
        Ok(SampleSet {
            points: Matrix::from_vec(rows, dim, data),
            labels: any_label.then_some(labels),
        })
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

/// Draws `count` i.i.d. points.
pub fn sample(spec: &DatasetSpec, count: usize, rng: &mut Rng) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    spec.validate()?;
    match spec {
        DatasetSpec::Dirac { point } => {
            let data = point.iter().cloned().cycle().take(count * point.len()).collect();
            Ok(SampleSet {
                points: Matrix::from_vec(count, point.len(), data),
                labels: Some(vec![0; count]),
            })
        }
        DatasetSpec::Swissroll { scale, noise } => {
            let mut data = Vec::with_capacity(2 * count);
            let t_max = 4.5 * PI;
            for _ in 0..count {
                let t = 1.5 * PI * (1.0 + 2.0 * rng::unit(rng));
                let nx = rng::standard_normal(rng);
                let ny = rng::standard_normal(rng);
                data.push(scale * (t * t.cos() / t_max + noise * nx));
                data.push(scale * (t * t.sin() / t_max + noise * ny));
            }
            Ok(SampleSet::new(Matrix::from_vec(count, 2, data)))
        }
        _ => {
            let mix = spec.mixture()?.expect("mixture kinds resolve to a mixture");
            let total: f64 = mix.weights.iter().sum();
            let d = mix.dim();
            let mut data = Vec::with_capacity(count * d);
            let mut labels = Vec::with_capacity(count);
            for _ in 0..count {
                let mut u = rng::unit(rng) * total;
                let mut k = mix.len() - 1;
                for (i, w) in mix.weights.iter().enumerate() {
                    if u < *w {
                        k = i;
                        break;
                    }
                    u -= w;
                }
                for j in 0..d {
                    data.push(mix.means[k][j] + mix.stds[k] * rng::standard_normal(rng));
                }
                labels.push(k);
            }
            Ok(SampleSet {
                points: Matrix::from_vec(count, d, data),
                labels: Some(labels),
            })
        }
    }
}

/// `log p(v)`. A point mass has log density `+∞` at its point and `−∞`
/// elsewhere; the swissroll is unsupported.
pub fn log_density(spec: &DatasetSpec, v: &[f64]) -> Result<f64> {
    if v.len() != spec.dim() {
        return Err(Error::Structural(format!(
            "point has dimension {}, distribution has {}",
            v.len(),
            spec.dim()
        )));
    }
    match spec {
        DatasetSpec::Swissroll { .. } => Err(Error::Unsupported(
            "the swissroll has no analytic density".into(),
        )),
        DatasetSpec::Dirac { point } => {
            spec.validate()?;
            Ok(if point.as_slice() == v {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            })
        }
        _ => Ok(spec.mixture()?.expect("mixture").log_density(v)),
    }
}

pub fn density(spec: &DatasetSpec, v: &[f64]) -> Result<f64> {
    Ok(log_density(spec, v)?.exp())
}

/// Number of points of `a` that also occur, bit for bit, in `b`.
pub fn disjointness_check(a: &SampleSet, b: &SampleSet) -> Result<usize> {
    if a.dim() != b.dim() {
        return Err(Error::Structural(format!(
            "sample sets have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let key = |row: &[f64]| -> Vec<u64> {
        // +0.0 and -0.0 compare equal
        row.iter().map(|x| (x + 0.0).to_bits()).collect()
    };
    let in_b: HashSet<Vec<u64>> = b.points.row_iter().map(key).collect();
    Ok(a.points.row_iter().filter(|r| in_b.contains(&key(r))).count())
}
