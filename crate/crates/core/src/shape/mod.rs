//! Least squares under s-concavity.
//!
//! A link `psi` is estimated as `h_s(phi)` with `phi` concave and
//! piecewise linear on the sorted design points. The concave part is fitted
//! by projected Gauss-Newton steps onto the concave cone intersected with a
//! codomain box.

mod fit;
mod projection;

use std::io::{BufRead, Write};
use std::path::Path;

pub use fit::{FitOptions, fit_transformed_concave, fit_transformed_concave_with};
pub use projection::{max_slope_increase, project_concave, project_concave_bounded, project_concave_weighted};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::links::{d_transform, h_value};

/// `d_s([l, u])` in ascending order: the range of `phi = d_s(psi)` when
/// `l <= psi <= u`.
pub fn codomain_bounds(s: f64, l_psi: f64, u_psi: f64) -> Result<Interval> {
    if !(0.0 < l_psi && l_psi < u_psi) {
        return Err(Error::domain(format!(
            "need 0 < l_psi < u_psi, got [{l_psi}, {u_psi}]"
        )));
    }
    let a = d_transform(s, l_psi)?;
    let b = d_transform(s, u_psi)?;
    Interval::new(a.min(b), a.max(b))
}

/// Box used when the bounds of the link are unknown:
/// `[d_s(1e-4), d_s(10 max y)]`.
pub fn default_codomain(s: f64, y: &[f64]) -> Result<Interval> {
    let max_y = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let upper = (10.0 * max_y).max(1e-3);
    codomain_bounds(s, 1e-4, upper)
}

/// Concave piecewise-linear `phi` on sorted knots; `h_s(phi)` estimates the
/// link.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcaveFit {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub s: f64,
    pub codomain: Interval,
    /// Slopes used to extend `phi` linearly left of the first and right of
    /// the last knot.
    pub left_slope: f64,
    pub right_slope: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Sup norm of the last Gauss-Newton step.
    pub stationarity: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub objective_trace: Vec<f64>,
}

impl ConcaveFit {
    /// Builds a fit from knots and values, deriving the boundary slopes.
    pub fn from_values(knots: Vec<f64>, values: Vec<f64>, s: f64, codomain: Interval) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::precondition("knots and values must be nonempty and equal length"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::precondition("knots must be strictly increasing"));
        }
        let (left_slope, right_slope) = boundary_slopes(&knots, &values);
        Ok(Self {
            knots,
            values,
            s,
            codomain,
            left_slope,
            right_slope,
            converged: true,
            iterations: 0,
            objective: f64::NAN,
            stationarity: 0.0,
            objective_trace: Vec::new(),
        })
    }

    /// `phi(u)`: linear interpolation between knots, linear extension with
    /// the boundary slopes, clipped to the codomain box.
    pub fn phi(&self, u: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        let n = k.len();
        let raw = if u <= k[0] {
            v[0] + self.left_slope * (u - k[0])
        } else if u >= k[n - 1] {
            v[n - 1] + self.right_slope * (u - k[n - 1])
        } else {
            let j = k.partition_point(|&x| x <= u) - 1;
            let t = (u - k[j]) / (k[j + 1] - k[j]);
            v[j] + t * (v[j + 1] - v[j])
        };
        self.codomain.clamp(raw)
    }

    /// `h_s(phi(u))`, the estimated link.
    pub fn eval(&self, u: f64) -> f64 {
        h_value(self.s, self.phi(u))
    }

    /// Consecutive slopes, nonincreasing for a concave fit.
    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, z)| (z[1] - z[0]) / (x[1] - x[0]))
            .collect()
    }

    pub fn is_concave(&self, tol: f64) -> bool {
        self.knots.len() < 3 || max_slope_increase(&self.knots, &self.values) <= tol
    }

    /// Writes `# s=.. a=.. b=.. left_slope=.. right_slope=..` followed by
    /// `knot,value` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "# s={} a={} b={} left_slope={} right_slope={}",
            self.s, self.codomain.lo, self.codomain.hi, self.left_slope, self.right_slope
        )?;
        writeln!(out, "knot,value")?;
        for (k, v) in self.knots.iter().zip(&self.values) {
            writeln!(out, "{k},{v}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::format(path, "empty file"))?;
        let mut fields = std::collections::HashMap::new();
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                let v: f64 = v
                    .parse()
                    .map_err(|_| Error::format(path, format!("bad header value {tok}")))?;
                fields.insert(k.to_string(), v);
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::format(path, format!("header lacks {k}")))
        };
        let (s, a, b) = (get("s")?, get("a")?, get("b")?);
        let (left_slope, right_slope) = (get("left_slope")?, get("right_slope")?);
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "knot,value" {
                continue;
            }
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| Error::format(path, format!("bad row {line}")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(path, format!("bad number {x}")))
            };
            knots.push(parse(k)?);
            values.push(parse(v)?);
        }
        let mut fit = Self::from_values(knots, values, s, Interval::new(a, b)?)?;
        fit.left_slope = left_slope;
        fit.right_slope = right_slope;
        Ok(fit)
    }
}

pub(crate) fn boundary_slopes(knots: &[f64], values: &[f64]) -> (f64, f64) {
    let n = knots.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let left = (values[1] - values[0]) / (knots[1] - knots[0]);
    let right = (values[n - 1] - values[n - 2]) / (knots[n - 1] - knots[n - 2]);
    (left, right)
}

/// Evaluates the estimated link `h_s(phi(u))`.
pub fn eval_fit(fit: &ConcaveFit, u: f64) -> f64 {
    fit.eval(u)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeFitReport {
    pub sup_error: f64,
    pub interior_window: Interval,
    pub delta: f64,
    pub sample_count: usize,
    /// The shrunken window was empty; `sup_error` is NaN.
    pub window_empty: bool,
}

/// Window shrink `C_win (log m / m)^{1/5}`.
pub fn window_shrink(m: usize, c_win: f64) -> f64 {
    let m = m as f64;
    c_win * (m.ln() / m).powf(0.2)
}

/// Sup over a 1000-point grid of `|h_s(phi) - truth|` on the window shrunk
/// by `window_shrink(m, c_win)` at both ends.
pub fn uniform_error(
    fit: &ConcaveFit,
    truth: impl Fn(f64) -> f64,
    m: usize,
    full_window: Interval,
    c_win: f64,
) -> ShapeFitReport {
    let delta = window_shrink(m, c_win);
    if m < 2 || delta >= 0.5 * full_window.width() {
        return ShapeFitReport {
            sup_error: f64::NAN,
            interior_window: Interval {
                lo: full_window.midpoint(),
                hi: full_window.midpoint(),
            },
            delta,
            sample_count: m,
            window_empty: true,
        };
    }
    let window = Interval {
        lo: full_window.lo + delta,
        hi: full_window.hi - delta,
    };
    let sup_error = window
        .linspace(1000)
        .into_iter()
        .map(|u| (fit.eval(u) - truth(u)).abs())
        .fold(0.0, f64::max);
    ShapeFitReport {
        sup_error,
        interior_window: window,
        delta,
        sample_count: m,
        window_empty: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::h_transform;

    #[test]
    fn codomain_bound_branches() {
        let b = codomain_bounds(0.0, 0.1, 0.9).unwrap();
        assert!((b.lo - (-2.302585)).abs() < 1e-6 && (b.hi - (-0.105361)).abs() < 1e-6);
        let b = codomain_bounds(-1.0, 0.5, 2.0).unwrap();
        assert_eq!((b.lo, b.hi), (-2.0, -0.5));
        let b = codomain_bounds(1.0, 0.2, 3.0).unwrap();
        assert_eq!((b.lo, b.hi), (0.2, 3.0));
        assert!(codomain_bounds(0.0, 0.5, 0.5).is_err());
        assert!(codomain_bounds(0.0, 0.0, 0.5).is_err());
    }

    fn wide() -> Interval {
        Interval::new(-100.0, 100.0).unwrap()
    }

    #[test]
    fn eval_at_knot_and_midpoint() {
        let fit = ConcaveFit::from_values(vec![0.0, 1.0], vec![0.0, 2.0], 1.0, wide()).unwrap();
        assert_eq!(fit.eval(0.5), 1.0);
        let fit = ConcaveFit::from_values(vec![0.0, 1.0, 2.0], vec![-1.0, 0.0, 0.5], 0.0, wide()).unwrap();
        assert_eq!(fit.eval(1.0), h_transform(0.0, 0.0).unwrap());
    }

    #[test]
    fn extrapolation_clips_to_box() {
        let b = Interval::new(-5.0, 0.3).unwrap();
        let fit = ConcaveFit::from_values(vec![0.0, 1.0, 2.0], vec![-1.0, -0.5, -0.25], 0.0, b).unwrap();
        assert_eq!(fit.right_slope, 0.25);
        assert!((fit.eval(1e3) - 0.3f64.exp()).abs() < 1e-15);
        // left extension keeps the first slope
        assert!((fit.phi(-1.0) - (-1.5)).abs() < 1e-15);
    }

    #[test]
    fn window_shrink_formula() {
        let d = window_shrink(1000, 1.0);
        let expected = ((1000f64).ln() / 1000.0).powf(0.2);
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.36972).abs() < 1e-4);
    }

    #[test]
    fn uniform_error_flags_empty_window() {
        let fit = ConcaveFit::from_values(vec![0.0, 1.0], vec![0.0, 0.0], 0.0, wide()).unwrap();
        let r = uniform_error(&fit, |_| 1.0, 100, Interval::new(0.0, 0.2).unwrap(), 1.0);
        assert!(r.window_empty);
        let r = uniform_error(&fit, |_| 1.0, 100, Interval::new(-5.0, 5.0).unwrap(), 1.0);
        assert!(!r.window_empty);
        assert!(r.sup_error < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let fit = ConcaveFit::from_values(vec![0.0, 0.5, 2.0], vec![-1.0, -0.2, -0.1], 0.0, wide()).unwrap();
        let dir = std::env::temp_dir().join(format!("fitcsv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fit.csv");
        fit.save(&path).unwrap();
        let back = ConcaveFit::load(&path).unwrap();
        assert_eq!(back.knots, fit.knots);
        assert_eq!(back.values, fit.values);
        assert_eq!(back.left_slope, fit.left_slope);
        assert_eq!(back.codomain, fit.codomain);
        std::fs::remove_dir_all(dir).ok();
    }
}
