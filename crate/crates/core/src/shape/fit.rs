use super::projection::project_concave_bounded;
use super::{ConcaveFit, boundary_slopes, default_codomain};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::links::{d_value, h_derivative, h_value};

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative sup-norm tolerance on the projected step.
    pub tol: f64,
    /// Stop after this many consecutive steps without a measurable decrease
    /// of the objective.
    pub stall_limit: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-8,
            stall_limit: 5,
        }
    }
}

/// Least squares `sum_t (y_t - h_s(phi(w_t)))^2` over concave `phi` with
/// values in `codomain` (default `[d_s(1e-4), d_s(10 max y)]`).
pub fn fit_transformed_concave(w: &[f64], y: &[f64], s: f64, codomain: Option<Interval>) -> Result<ConcaveFit> {
    fit_transformed_concave_with(w, y, s, codomain, &FitOptions::default())
}

pub fn fit_transformed_concave_with(
    w: &[f64],
    y: &[f64],
    s: f64,
    codomain: Option<Interval>,
    opts: &FitOptions,
) -> Result<ConcaveFit> {
    if w.len() != y.len() {
        return Err(Error::precondition("w and y differ in length"));
    }
    if w.len() < 2 {
        return Err(Error::precondition("need at least two observations"));
    }
    if w.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::precondition("w and y must be finite"));
    }
    if !(s > -1.0) {
        return Err(Error::domain(format!("s must exceed -1, got {s}")));
    }
    let codomain = match codomain {
        Some(b) => b,
        None => default_codomain(s, y)?,
    };
    check_codomain(s, codomain)?;

    let data = Grouped::new(w, y);
    let lo_psi = h_value(s, codomain.lo);
    let hi_psi = h_value(s, codomain.hi);
    let init: Vec<f64> = data
        .mean
        .iter()
        .map(|&v| codomain.clamp(d_value(s, v.clamp(lo_psi, hi_psi))))
        .collect();
    let mut phi = project_feasible(&data.x, &init, &data.mult, codomain)?;
    let mut obj = data.objective(s, &phi);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut stationarity;
    let mut iterations = 0;

    let mut stalled = 0;
    loop {
        let scale = 1.0 + phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let grad = data.gradient(s, &phi);
        // Stationarity: unit-step projected-gradient move.
        let pg_target: Vec<f64> = phi.iter().zip(&grad).map(|(f, g)| f - g).collect();
        let pg = project_feasible(&data.x, &pg_target, &vec![1.0; phi.len()], codomain)?;
        stationarity = pg.iter().zip(&phi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if stationarity <= opts.tol * scale {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter || stalled >= opts.stall_limit {
            break;
        }

        // Gauss-Newton metric W = mult * h'(phi)^2 (floored), and the target
        // phi - W^{-1} grad / 2.
        let mut weights: Vec<f64> = phi
            .iter()
            .zip(&data.mult)
            .map(|(&f, &m)| m * h_derivative(s, f).powi(2))
            .collect();
        let wmax = weights.iter().copied().fold(0.0, f64::max);
        for wk in &mut weights {
            *wk = wk.max(1e-14 * wmax).max(f64::MIN_POSITIVE);
        }
        let target: Vec<f64> = phi
            .iter()
            .zip(&grad)
            .zip(&weights)
            .map(|((&f, &g), &wk)| f - 0.5 * g / wk)
            .collect();
        let mut dir = direction(&data.x, &target, &weights, codomain, &phi)?;
        let mut slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            // Capping at the upper bound spoiled the step; retry with the
            // target pulled into the box.
            let clipped: Vec<f64> = target.iter().map(|&t| codomain.clamp(t)).collect();
            dir = direction(&data.x, &clipped, &weights, codomain, &phi)?;
            slope = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        }
        if !(slope < 0.0) {
            dir = pg.iter().zip(&phi).map(|(a, b)| a - b).collect();
            slope = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            if !(slope < 0.0) {
                break;
            }
        }
        iterations += 1;
        if !line_search(&data, s, &mut phi, &mut obj, &dir, slope, &mut trace, &mut stalled) {
            break;
        }
    }

    let (left_slope, right_slope) = boundary_slopes(&data.x, &phi);
    Ok(ConcaveFit {
        knots: data.x,
        values: phi,
        s,
        codomain,
        left_slope,
        right_slope,
        converged,
        iterations,
        objective: obj + data.within,
        stationarity,
        objective_trace: trace.into_iter().map(|v| v + data.within).collect(),
    })
}

fn direction(x: &[f64], target: &[f64], weights: &[f64], codomain: Interval, phi: &[f64]) -> Result<Vec<f64>> {
    let next = project_feasible(x, target, weights, codomain)?;
    Ok(next.iter().zip(phi).map(|(a, b)| a - b).collect())
}

/// Armijo backtracking from a unit step, halving, with factor `1e-4`.
/// Returns false when no step is accepted.
#[allow(clippy::too_many_arguments)]
fn line_search(
    data: &Grouped,
    s: f64,
    phi: &mut Vec<f64>,
    obj: &mut f64,
    dir: &[f64],
    slope: f64,
    trace: &mut Vec<f64>,
    stalled: &mut usize,
) -> bool {
    let mut alpha = 1.0;
    for _ in 0..60 {
        let cand: Vec<f64> = phi.iter().zip(dir).map(|(f, d)| f + alpha * d).collect();
        let c_obj = data.objective(s, &cand);
        if c_obj <= *obj + 1e-4 * alpha * slope {
            if *obj - c_obj <= 1e-15 * obj.abs() {
                *stalled += 1;
            } else {
                *stalled = 0;
            }
            *phi = cand;
            *obj = c_obj;
            trace.push(c_obj);
            return true;
        }
        alpha *= 0.5;
    }
    false
}

fn check_codomain(s: f64, b: Interval) -> Result<()> {
    let ok = if s == 1.0 {
        true
    } else if s < 0.0 {
        b.hi < 0.0
    } else if s > 0.0 {
        b.lo >= 0.0
    } else {
        true
    };
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "codomain [{}, {}] leaves the range of d_s for s = {s}",
            b.lo, b.hi
        )))
    }
}

/// Observations merged on identical abscissae.
struct Grouped {
    x: Vec<f64>,
    mean: Vec<f64>,
    mult: Vec<f64>,
    /// Within-group sum of squares, constant in `phi`.
    within: f64,
}

impl Grouped {
    fn new(w: &[f64], y: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
        let mut x: Vec<f64> = Vec::new();
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut mult: Vec<f64> = Vec::new();
        for k in order {
            if x.last() == Some(&w[k]) {
                *sum.last_mut().unwrap() += y[k];
                *sum_sq.last_mut().unwrap() += y[k] * y[k];
                *mult.last_mut().unwrap() += 1.0;
            } else {
                x.push(w[k]);
                sum.push(y[k]);
                sum_sq.push(y[k] * y[k]);
                mult.push(1.0);
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&mult).map(|(s, m)| s / m).collect();
        let within = sum_sq
            .iter()
            .zip(&mean)
            .zip(&mult)
            .map(|((q, mu), m)| (q - m * mu * mu).max(0.0))
            .sum();
        Self { x, mean, mult, within }
    }

    /// Gradient of the grouped objective in `phi`.
    fn gradient(&self, s: f64, phi: &[f64]) -> Vec<f64> {
        phi.iter()
            .zip(&self.mean)
            .zip(&self.mult)
            .map(|((&f, &ybar), &m)| -2.0 * m * (ybar - h_value(s, f)) * h_derivative(s, f))
            .collect()
    }

    fn objective(&self, s: f64, phi: &[f64]) -> f64 {
        phi.iter()
            .zip(&self.mean)
            .zip(&self.mult)
            .map(|((&f, &ybar), &m)| {
                let r = ybar - h_value(s, f);
                m * r * r
            })
            .sum()
    }
}

/// Weighted projection onto concave sequences with values in `b`. The lower
/// bound is handled exactly; values above `b.hi` are then capped, which keeps
/// the sequence concave.
fn project_feasible(x: &[f64], v: &[f64], weights: &[f64], b: Interval) -> Result<Vec<f64>> {
    let mut z = project_concave_bounded(x, v, weights, b.lo)?;
    for zk in &mut z {
        *zk = zk.clamp(b.lo, b.hi);
    }
    Ok(z)
}
