//! Weighted least-squares projection onto concave sequences.
//!
//! A sequence on sorted abscissae is concave when its consecutive slopes are
//! nonincreasing. Writing it as an affine function minus nonnegative hinges
//! `c_j (x - x_j)_+` at interior knots turns the projection into a nonnegative
//! least-squares problem in the hinge coefficients, solved exactly by an
//! active-set (Lawson-Hanson) iteration. For a fixed set of kinks the fit is
//! a linear spline whose normal equations are tridiagonal, so every inner
//! solve is linear in the number of points.

use crate::error::{Error, Result};

/// Projects `values` (unit weights, abscissae `0, 1, ..., n-1`) onto the cone
/// of concave sequences.
pub fn project_concave(values: &[f64]) -> Vec<f64> {
    let x: Vec<f64> = (0..values.len()).map(|k| k as f64).collect();
    let w = vec![1.0; values.len()];
    project_concave_weighted(&x, values, &w).expect("equispaced unit-weight input is valid")
}

/// Minimises `sum_k w_k (z_k - v_k)^2` over sequences `z` with nonincreasing
/// slopes on the strictly increasing abscissae `x`.
pub fn project_concave_weighted(x: &[f64], values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if x.len() != n || weights.len() != n {
        return Err(Error::precondition("abscissae, values and weights differ in length"));
    }
    if x.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::precondition("abscissae must be strictly increasing"));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::precondition("weights must be positive and finite"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::precondition("values must be finite"));
    }
    if n <= 2 {
        return Ok(values.to_vec());
    }
    Ok(ActiveSet::new(x, values, weights, None, None).solve().0)
}

/// Weighted projection onto concave sequences bounded below by `lower`.
///
/// A concave sequence attains its minimum at an end, so only the two end
/// values can meet the bound. The solution pins some subset of the ends at
/// `lower`; each of the four subsets is solved exactly and the one meeting
/// the optimality conditions is returned.
pub fn project_concave_bounded(x: &[f64], values: &[f64], weights: &[f64], lower: f64) -> Result<Vec<f64>> {
    let unbounded = project_concave_weighted(x, values, weights)?;
    let n = values.len();
    if n == 0 || (unbounded[0] >= lower && unbounded[n - 1] >= lower) {
        return Ok(unbounded);
    }
    if n <= 2 {
        return Ok(values.iter().map(|v| v.max(lower)).collect());
    }
    let scale: f64 = weights.iter().zip(values).map(|(w, v)| w * (1.0 + v.abs() + lower.abs())).sum();
    let mut fallback = None;
    for (left, right) in [(true, false), (false, true), (true, true)] {
        let pins = (left.then_some(lower), right.then_some(lower));
        let (z, mu_left, mu_right) = ActiveSet::new(x, values, weights, pins.0, pins.1).solve();
        let tol_z = 1e-12 * (1.0 + lower.abs());
        let tol_mu = 1e-12 * scale;
        let ok_left = if left { mu_left >= -tol_mu } else { z[0] >= lower - tol_z };
        let ok_right = if right { mu_right >= -tol_mu } else { z[n - 1] >= lower - tol_z };
        if ok_left && ok_right {
            return Ok(z);
        }
        if left && right {
            fallback = Some(z);
        }
    }
    // Round-off defeated every sign test; both ends pinned is always
    // feasible.
    Ok(fallback.expect("both-pinned state is evaluated"))
}

/// Concavity violation: the largest increase between consecutive slopes.
pub fn max_slope_increase(x: &[f64], z: &[f64]) -> f64 {
    let slopes: Vec<f64> = x
        .windows(2)
        .zip(z.windows(2))
        .map(|(xs, zs)| (zs[1] - zs[0]) / (xs[1] - xs[0]))
        .collect();
    slopes
        .windows(2)
        .map(|s| s[1] - s[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

struct ActiveSet<'a> {
    x: &'a [f64],
    v: &'a [f64],
    w: &'a [f64],
    /// End values held fixed.
    pin_left: Option<f64>,
    pin_right: Option<f64>,
}

impl<'a> ActiveSet<'a> {
    fn new(x: &'a [f64], v: &'a [f64], w: &'a [f64], pin_left: Option<f64>, pin_right: Option<f64>) -> Self {
        Self {
            x,
            v,
            w,
            pin_left,
            pin_right,
        }
    }

    /// `span * sum |w r|`: the scale of round-off in the candidate gains.
    fn residual_mass(&self, z: &[f64]) -> f64 {
        let span = self.x[self.x.len() - 1] - self.x[0];
        let mass: f64 = (0..z.len()).map(|k| (self.w[k] * (self.v[k] - z[k])).abs()).sum();
        span * mass.max(f64::MIN_POSITIVE)
    }

    /// Multipliers of the end pins: the forces at the two ends that make the
    /// weighted residual orthogonal to constants and to `x`.
    fn pin_forces(&self, z: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let (x0, xn) = (self.x[0], self.x[n - 1]);
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for k in 0..n {
            let r = self.w[k] * (self.v[k] - z[k]);
            s0 += r;
            s1 += r * self.x[k];
        }
        match (self.pin_left.is_some(), self.pin_right.is_some()) {
            (false, false) => (0.0, 0.0),
            (true, false) => (-s0, 0.0),
            (false, true) => (0.0, -s0),
            (true, true) => {
                let right = (s0 * x0 - s1) / (xn - x0);
                (-s0 - right, right)
            }
        }
    }

    /// Solution and the end-pin multipliers.
    fn solve(&self) -> (Vec<f64>, f64, f64) {
        let n = self.x.len();
        let mut kinks: Vec<usize> = Vec::new();
        let mut z = self.spline_fit(&kinks);
        for _ in 0..(4 * n + 20) {
            let (best, gain) = self.best_candidate(&z, &kinks);
            let tol = 64.0 * f64::EPSILON * self.residual_mass(&z);
            let Some(j) = best.filter(|_| gain > tol) else {
                break;
            };
            let mut trial = kinks.clone();
            insert_sorted(&mut trial, j);
            let mut added = false;
            for attempt in 0..(n + 2) {
                let cand = self.spline_fit(&trial);
                let new_c = kink_coefficients(self.x, &cand, &trial);
                if attempt == 0 {
                    let pos = trial.partition_point(|&k| k < j);
                    if new_c[pos] <= 0.0 {
                        // Round-off: opening the best hinge does not help.
                        break;
                    }
                }
                if new_c.iter().all(|&c| c > 0.0) {
                    z = cand;
                    kinks = trial;
                    added = true;
                    break;
                }
                let old_c = kink_coefficients(self.x, &z, &trial);
                // Step toward the unconstrained solution until a kink
                // coefficient reaches zero; that kink leaves the set.
                let mut alpha = 1.0f64;
                let mut blocking = None;
                for (pos, (&o, &c)) in old_c.iter().zip(&new_c).enumerate() {
                    if c <= 0.0 {
                        let denom = o - c;
                        let a = if denom > 0.0 { (o / denom).max(0.0) } else { 0.0 };
                        if blocking.is_none() || a < alpha {
                            alpha = a.min(1.0);
                            blocking = Some(pos);
                        }
                    }
                }
                for (zk, ck) in z.iter_mut().zip(&cand) {
                    *zk += alpha * (ck - *zk);
                }
                let mixed = kink_coefficients(self.x, &z, &trial);
                let cutoff = 1e-14 * (1.0 + mixed.iter().fold(0.0f64, |m, c| m.max(c.abs())));
                let keep: Vec<usize> = trial
                    .iter()
                    .zip(&mixed)
                    .enumerate()
                    .filter(|(pos, (_, c))| Some(*pos) != blocking && **c > cutoff)
                    .map(|(_, (k, _))| *k)
                    .collect();
                trial = keep;
                if trial.is_empty() {
                    z = self.spline_fit(&trial);
                    kinks = trial.clone();
                    added = true;
                    break;
                }
            }
            if !added {
                break;
            }
        }
        let (ml, mr) = self.pin_forces(&z);
        (z, ml, mr)
    }

    /// Interior knot with the largest objective decrease rate when a new
    /// hinge is opened there.
    fn best_candidate(&self, z: &[f64], kinks: &[usize]) -> (Option<usize>, f64) {
        let n = self.x.len();
        // q_j = -sum_{k > j} w_k r_k (x_k - x_j)
        let mut swr = 0.0;
        let mut swrx = 0.0;
        let mut best = (None, f64::NEG_INFINITY);
        let mut next_kink = kinks.len();
        let (_, right_force) = self.pin_forces(z);
        for j in (1..n - 1).rev() {
            let k = j + 1;
            let mut r = self.w[k] * (self.v[k] - z[k]);
            if k == n - 1 {
                r += right_force;
            }
            swr += r;
            swrx += r * self.x[k];
            while next_kink > 0 && kinks[next_kink - 1] > j {
                next_kink -= 1;
            }
            if next_kink > 0 && kinks[next_kink - 1] == j {
                continue;
            }
            let q = -(swrx - self.x[j] * swr);
            if q > best.1 {
                best = (Some(j), q);
            }
        }
        best
    }

    /// Weighted least-squares linear spline with breakpoints at the first
    /// and last abscissa and at `kinks`.
    fn spline_fit(&self, kinks: &[usize]) -> Vec<f64> {
        let n = self.x.len();
        let mut bps = Vec::with_capacity(kinks.len() + 2);
        bps.push(0);
        bps.extend_from_slice(kinks);
        bps.push(n - 1);
        let m = bps.len();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m - 1];
        let mut rhs = vec![0.0; m];
        for seg in 0..m - 1 {
            let (a, b) = (bps[seg], bps[seg + 1]);
            let (xa, xb) = (self.x[a], self.x[b]);
            let start = if seg == 0 { a } else { a + 1 };
            for k in start..=b {
                let t = (self.x[k] - xa) / (xb - xa);
                let wk = self.w[k];
                diag[seg] += wk * (1.0 - t) * (1.0 - t);
                off[seg] += wk * t * (1.0 - t);
                diag[seg + 1] += wk * t * t;
                rhs[seg] += wk * (1.0 - t) * self.v[k];
                rhs[seg + 1] += wk * t * self.v[k];
            }
        }
        let mut lower = off.clone();
        let mut upper = off;
        if let Some(p) = self.pin_left {
            diag[0] = 1.0;
            upper[0] = 0.0;
            rhs[0] = p;
        }
        if let Some(p) = self.pin_right {
            diag[m - 1] = 1.0;
            lower[m - 2] = 0.0;
            rhs[m - 1] = p;
        }
        let nodes = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let mut z = vec![0.0; n];
        for seg in 0..m - 1 {
            let (a, b) = (bps[seg], bps[seg + 1]);
            let (xa, xb) = (self.x[a], self.x[b]);
            for k in a..=b {
                let t = (self.x[k] - xa) / (xb - xa);
                z[k] = (1.0 - t) * nodes[seg] + t * nodes[seg + 1];
            }
        }
        z
    }
}

/// Slope decrease at each kink; nonnegative for a concave spline.
fn kink_coefficients(x: &[f64], z: &[f64], kinks: &[usize]) -> Vec<f64> {
    let n = x.len();
    let mut bps = Vec::with_capacity(kinks.len() + 2);
    bps.push(0);
    bps.extend_from_slice(kinks);
    bps.push(n - 1);
    bps.windows(3)
        .map(|w| {
            let left = (z[w[1]] - z[w[0]]) / (x[w[1]] - x[w[0]]);
            let right = (z[w[2]] - z[w[1]]) / (x[w[2]] - x[w[1]]);
            left - right
        })
        .collect()
}

fn insert_sorted(v: &mut Vec<usize>, j: usize) {
    let pos = v.partition_point(|&k| k < j);
    v.insert(pos, j);
}

/// Tridiagonal solve (Thomas algorithm). `lower[i]` couples row `i + 1` to
/// column `i`, `upper[i]` couples row `i` to column `i + 1`.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut denom = diag[0];
    if m > 1 {
        c[0] = upper[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..m {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if i < m - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut out = vec![0.0; m];
    out[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
    out
}
