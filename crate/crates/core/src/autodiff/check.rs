//! Central finite-difference checks for analytic gradients.
//!
//! Deviations are reported two ways. `max_abs` is the largest absolute
//! componentwise difference. `max_rel` is `‖ad − fd‖∞ / max(‖ad‖∞, ‖fd‖∞)`
//! over the probed coordinates, which stays meaningful when individual
//! components are near zero.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FdReport {
    pub max_abs: f64,
    pub max_rel: f64,
    /// Coordinates compared.
    pub probes: usize,
    /// Coordinates where `f` was non-finite at a probe point.
    pub non_finite: usize,
    /// Coordinates skipped because the probe straddled a non-smooth point.
    pub non_smooth: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl FdReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.non_finite == 0 && self.max_rel <= rel_tol
    }
}

/// Compares `analytic` against central differences of `f` at every coordinate.
pub fn finite_diff_check<F>(f: F, point: &[f64], analytic: &[f64], step: f64) -> Result<FdReport>
where
    F: FnMut(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    finite_diff_check_coords(f, point, analytic, &coords, step)
}

/// Like [`finite_diff_check`] but only probes `coords`; `analytic` is the
/// full gradient.
pub fn finite_diff_check_coords<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
) -> Result<FdReport>
where
    F: FnMut(&[f64]) -> f64,
{
    check_regime(|x| (f(x), 0), point, analytic, coords, step)
}

/// Finite-difference check for piecewise-smooth functions.
///
/// `f` returns its value together with a fingerprint of the smooth piece the
/// point lies in (for ReLU networks, the activation pattern). A coordinate
/// whose probes `x − h`, `x`, `x + h` land in different pieces straddles a
/// kink, where central differences are not an estimate of the derivative;
/// it is counted in `non_smooth` and left out of the comparison.
pub fn check_regime<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
) -> Result<FdReport>
where
    F: FnMut(&[f64]) -> (f64, u64),
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Contract(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    if analytic.len() != point.len() {
        return Err(Error::Structural(format!(
            "gradient has {} entries but the point has {}",
            analytic.len(),
            point.len()
        )));
    }
    let mut report = FdReport::default();
    let (_, base_regime) = f(point);
    let mut x = point.to_vec();
    for &i in coords {
        let orig = x[i];
        x[i] = orig + step;
        let (fp, rp) = f(&x);
        x[i] = orig - step;
        let (fm, rm) = f(&x);
        x[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            report.non_finite += 1;
            continue;
        }
        if rp != base_regime || rm != base_regime {
            report.non_smooth += 1;
            continue;
        }
        report.analytic.push(analytic[i]);
        report.numeric.push((fp - fm) / (2.0 * step));
    }
    report.probes = report.analytic.len();
    let mut scale = 0.0f64;
    for (a, n) in report.analytic.iter().zip(&report.numeric) {
        report.max_abs = report.max_abs.max((a - n).abs());
        scale = scale.max(a.abs()).max(n.abs());
    }
    report.max_rel = if scale > 0.0 {
        report.max_abs / scale
    } else {
        0.0
    };
    Ok(report)
}
