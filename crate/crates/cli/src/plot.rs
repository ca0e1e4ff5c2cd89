//! Plain-text SVG renderings of run artifacts.

use ganlab::metrics::read_grid_csv;
use std::fmt::Write as _;
use std::path::Path;

use crate::manifest::RunManifest;
use crate::run::{GRADIENT_FIELD, METRICS, ORACLE_SURFACE, SAMPLES, VALUE_SURFACE};
use crate::{CliError, CliResult};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 30.0;

/// Viridis-like ramp through five anchor colors.
fn color(t: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Maps data coordinates into the drawing square, `y` pointing up.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            if !lo.is_finite() || !hi.is_finite() {
                (-1.0, 1.0)
            } else if lo == hi {
                (lo - 1.0, hi + 1.0)
            } else {
                (lo, hi)
            }
        };
        Frame {
            x: span(&mut xs.clone()),
            y: span(&mut ys.clone()),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * SIZE
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN + (self.y.1 - y) / (self.y.1 - self.y.0) * SIZE
    }
}

fn document(title: &str, body: &str) -> String {
    let side = SIZE + 2.0 * MARGIN;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side}\" height=\"{side}\" viewBox=\"0 0 {side} {side}\">\n\
         <title>{title}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Sorted distinct values and the spacing between neighbours.
fn axis(values: &[f64]) -> (Vec<f64>, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let step = if v.len() > 1 { (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64 } else { 1.0 };
    (v, step)
}

/// Heatmap of `x,y,value` rows on a regular grid. A constant surface is a
/// single color.
pub fn heatmap(rows: &[Vec<f64>], title: &str) -> String {
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let ((_, dx), (_, dy)) = (axis(&xs), axis(&ys));
    let frame = Frame::fit(
        xs.iter().flat_map(|&x| [x - dx / 2.0, x + dx / 2.0]),
        ys.iter().flat_map(|&y| [y - dy / 2.0, y + dy / 2.0]),
    );
    let (lo, hi) = rows
        .iter()
        .map(|r| r[2])
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let mut body = String::new();
    for r in rows {
        let t = if hi > lo { (r[2] - lo) / (hi - lo) } else { 0.5 };
        let (x0, y0) = (frame.px(r[0] - dx / 2.0), frame.py(r[1] + dy / 2.0));
        let w = frame.px(r[0] + dx / 2.0) - x0;
        let h = frame.py(r[1] - dy / 2.0) - y0;
        let _ = writeln!(
            body,
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
            color(t)
        );
    }
    document(title, &body)
}

/// Arrows for `x,y,gx,gy` rows, scaled so the longest spans one cell.
pub fn quiver(rows: &[Vec<f64>], title: &str) -> String {
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let ((_, dx), (_, dy)) = (axis(&xs), axis(&ys));
    let frame = Frame::fit(
        xs.iter().flat_map(|&x| [x - dx, x + dx]),
        ys.iter().flat_map(|&y| [y - dy, y + dy]),
    );
    let longest = rows
        .iter()
        .map(|r| r[2].hypot(r[3]))
        .filter(|n| n.is_finite())
        .fold(0.0, f64::max);
    let scale = if longest > 0.0 { 0.9 * dx.min(dy) / longest } else { 0.0 };
    let mut body = String::from("<g stroke=\"#1f3b73\" stroke-width=\"1\">\n");
    for r in rows {
        let (gx, gy) = if r[2].is_finite() && r[3].is_finite() { (r[2], r[3]) } else { (0.0, 0.0) };
        let (x1, y1) = (frame.px(r[0]), frame.py(r[1]));
        let (x2, y2) = (frame.px(r[0] + scale * gx), frame.py(r[1] + scale * gy));
        let _ = writeln!(body, "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\"/>");
        let _ = writeln!(body, "<circle cx=\"{x2:.2}\" cy=\"{y2:.2}\" r=\"1\" fill=\"#1f3b73\"/>");
    }
    body.push_str("</g>\n");
    document(title, &body)
}

/// Points from `x0,x1,label` rows; label 1 is drawn in blue, others in red.
pub fn scatter(rows: &[Vec<f64>], title: &str) -> String {
    let frame = Frame::fit(rows.iter().map(|r| r[0]), rows.iter().map(|r| r[1]));
    let mut body = String::new();
    for r in rows.iter().filter(|r| r[0].is_finite() && r[1].is_finite()) {
        let fill = if r.get(2) == Some(&1.0) { "#2b6cb0" } else { "#c53030" };
        let _ = writeln!(
            body,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{fill}\" fill-opacity=\"0.5\"/>",
            frame.px(r[0]),
            frame.py(r[1])
        );
    }
    document(title, &body)
}

/// The `(θ, ψ)` path of a Dirac run.
pub fn phase_portrait(rows: &[Vec<f64>], title: &str) -> String {
    let frame = Frame::fit(rows.iter().map(|r| r[2]), rows.iter().map(|r| r[1]));
    let pts: Vec<String> = rows
        .iter()
        .filter(|r| r[1].is_finite() && r[2].is_finite())
        .map(|r| format!("{:.2},{:.2}", frame.px(r[2]), frame.py(r[1])))
        .collect();
    let body = format!(
        "<polyline fill=\"none\" stroke=\"#2b6cb0\" stroke-width=\"0.8\" points=\"{}\"/>\n",
        pts.join(" ")
    );
    document(title, &body)
}

fn load(dir: &Path, name: &str, columns: usize) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(CliError::Missing(path));
    }
    let (header, rows) = read_grid_csv(&path)?;
    if header.len() != columns || rows.iter().any(|r| r.len() != columns) {
        return Err(CliError::Schema(format!("{} should have {columns} columns", path.display())));
    }
    Ok((header, rows))
}

/// Renders every plottable artifact in a run directory and records the SVGs
/// in its manifest. Returns the names of the files written.
pub fn plot_run(dir: &Path) -> CliResult<Vec<String>> {
    let mut manifest = RunManifest::read(dir)?;
    let has = |f: &str| manifest.files.iter().any(|e| e.path == f);
    let mut out: Vec<(String, String)> = Vec::new();
    if has(VALUE_SURFACE) || has(GRADIENT_FIELD) {
        let (_, v) = load(dir, VALUE_SURFACE, 3)?;
        out.push(("value_surface.svg".into(), heatmap(&v, "discriminator value surface")));
        let (_, g) = load(dir, GRADIENT_FIELD, 4)?;
        out.push(("gradient_field.svg".into(), quiver(&g, "gradient of log D")));
        if has(ORACLE_SURFACE) {
            let (_, o) = load(dir, ORACLE_SURFACE, 3)?;
            out.push(("oracle_surface.svg".into(), heatmap(&o, "optimal discriminator")));
        }
        if has(SAMPLES) {
            let (_, s) = load(dir, SAMPLES, 3)?;
            out.push(("samples.svg".into(), scatter(&s, "held-out reals (blue) and fakes (red)")));
        }
    } else if has(METRICS) {
        let (header, rows) = load(dir, METRICS, 3)?;
        if header != ["iter", "psi", "theta"] {
            return Err(CliError::Missing(dir.join(VALUE_SURFACE)));
        }
        out.push(("trajectory.svg".into(), phase_portrait(&rows, "Dirac GAN trajectory (theta, psi)")));
    } else {
        return Err(CliError::Missing(dir.join(VALUE_SURFACE)));
    }
    let mut names = Vec::new();
    for (name, svg) in out {
        std::fs::write(dir.join(&name), svg)?;
        manifest.record(dir, &name)?;
        names.push(name);
    }
    manifest.write(dir)?;
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fills(svg: &str) -> std::collections::BTreeSet<&str> {
        svg.match_indices("fill=\"#")
            .map(|(i, _)| &svg[i + 6..i + 13])
            .collect()
    }

    #[test]
    fn constant_surface_is_one_color() {
        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64, (i / 3) as f64, 0.7]).collect();
        assert_eq!(fills(&heatmap(&rows, "c")).len(), 1);
    }

    #[test]
    fn zero_field_draws_zero_length_glyphs() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![(i % 2) as f64, (i / 2) as f64, 0.0, 0.0]).collect();
        let svg = quiver(&rows, "z");
        for line in svg.lines().filter(|l| l.starts_with("<line")) {
            let attr = |k: &str| {
                let s = &line[line.find(&format!("{k}=\"")).unwrap() + k.len() + 2..];
                s[..s.find('"').unwrap()].to_string()
            };
            assert_eq!(attr("x1"), attr("x2"));
            assert_eq!(attr("y1"), attr("y2"));
        }
        assert_eq!(svg.matches("<line").count(), 4);
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(f64::NAN), color(0.5));
    }
}
