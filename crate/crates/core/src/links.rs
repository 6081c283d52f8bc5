//! Link functions, s-concave transforms and virtual valuations.
//!
//! A link `psi` maps a demand index `u` to expected demand. It is positive and
//! increasing on its domain and carries a declared concavity index `s`: the
//! link is s-concave when `d_s(psi)` is concave. The virtual valuation
//! `phi(u) = u + psi(u) / psi'(u)` is increasing for s-concave links with
//! `s > -1`, and its inverse gives the closed-form best response.

use std::path::Path;

use crate::error::{Error, Result};
use crate::interval::Interval;

/// Number of grid points used to validate a link and to seed root finding.
pub const VALIDATION_GRID: usize = 1025;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// The transform `d_s`: `log y` for `s = 0`, `-y^s` for `s < 0`, `y^s` for
/// `s > 0` (the identity when `s = 1`).
pub fn d_transform(s: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::domain(format!("d_s requires y > 0, got {y}")));
    }
    Ok(d_value(s, y))
}

/// The inverse transform `h_s = d_s^{-1}`.
pub fn h_transform(s: f64, x: f64) -> Result<f64> {
    let ok = if s == 0.0 {
        x.is_finite()
    } else if s < 0.0 {
        x < 0.0
    } else {
        x > 0.0
    };
    if !ok || x.is_nan() {
        return Err(Error::domain(format!(
            "h_s with s = {s} is undefined at x = {x}"
        )));
    }
    Ok(h_value(s, x))
}

pub(crate) fn d_value(s: f64, y: f64) -> f64 {
    if s == 1.0 {
        y
    } else if s == 0.0 {
        y.ln()
    } else if s < 0.0 {
        -y.powf(s)
    } else {
        y.powf(s)
    }
}

pub(crate) fn h_value(s: f64, x: f64) -> f64 {
    if s == 1.0 {
        x
    } else if s == 0.0 {
        x.exp()
    } else if s < 0.0 {
        (-x).powf(1.0 / s)
    } else {
        x.powf(1.0 / s)
    }
}

/// Derivative of `h_s` at `x` (inside the branch domain).
pub(crate) fn h_derivative(s: f64, x: f64) -> f64 {
    if s == 1.0 {
        1.0
    } else if s == 0.0 {
        x.exp()
    } else if s < 0.0 {
        -(1.0 / s) * (-x).powf(1.0 / s - 1.0)
    } else {
        (1.0 / s) * x.powf(1.0 / s - 1.0)
    }
}

/// Samples of a link on a sorted grid, interpolated linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    grid: Vec<f64>,
    values: Vec<f64>,
    step: f64,
}

impl Table {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::domain("table grid and values differ in length"));
        }
        if grid.len() < 3 {
            return Err(Error::domain("a tabulated link needs at least 3 points"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::domain("table grid must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::domain("table values must be positive"));
        }
        let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
        Ok(Self { grid, values, step })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean grid spacing, used as the finite-difference step.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn span(&self) -> Interval {
        Interval {
            lo: self.grid[0],
            hi: self.grid[self.grid.len() - 1],
        }
    }

    /// Piecewise-linear interpolation with linear extension past both ends.
    pub fn interpolate(&self, u: f64) -> f64 {
        let n = self.grid.len();
        let j = match self.grid.partition_point(|&g| g <= u) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (x0, x1) = (self.grid[j], self.grid[j + 1]);
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        y0 + (y1 - y0) * (u - x0) / (x1 - x0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LinkFamily {
    /// `psi(u) = Phi(u - shift)`.
    ProbitShift { shift: f64 },
    /// `psi(u) = e^u`.
    Exponential,
    /// `psi(u) = u + intercept`.
    LinearAffine { intercept: f64 },
    Tabulated(Table),
}

/// Result of inverting the virtual valuation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inversion {
    pub u: f64,
    /// The target lay outside `phi(domain)` and the nearest endpoint was
    /// returned.
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeReport {
    pub s: f64,
    /// Differential criterion: `max psi psi'' + (s - 1) psi'^2 <= tol`.
    pub s_concave_ok: bool,
    /// Virtual-valuation criterion: `min phi' >= s + 1 - tol_phi`.
    pub phi_prime_ok: bool,
    pub min_phi_prime: f64,
    pub differential_slack: f64,
    pub tolerance: f64,
    pub phi_tolerance: f64,
    pub grid_size: usize,
}

impl ShapeReport {
    /// Whether the two characterisations of s-concavity give the same verdict.
    pub fn criteria_agree(&self) -> bool {
        self.s_concave_ok == self.phi_prime_ok
    }
}

/// A positive increasing link with its declared concavity index and domain.
///
/// Immutable after construction. Construction validates positivity and a
/// positive derivative on the domain and precomputes a table of the virtual
/// valuation that seeds root finding.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    family: LinkFamily,
    s: f64,
    domain: Interval,
    psi_lower: f64,
    psi_upper: f64,
    deriv_floor: f64,
    phi_grid: Vec<f64>,
    phi_values: Vec<f64>,
    phi_monotone: bool,
}

impl LinkSpec {
    pub fn new(family: LinkFamily, s: f64, domain: Interval) -> Result<Self> {
        if !(s > -1.0) || !s.is_finite() {
            return Err(Error::domain(format!("concavity index must exceed -1, got {s}")));
        }
        if !(domain.width() > 0.0) {
            return Err(Error::domain("link domain must have positive width"));
        }
        let mut link = Self {
            family,
            s,
            domain,
            psi_lower: 0.0,
            psi_upper: 0.0,
            deriv_floor: 0.0,
            phi_grid: Vec::new(),
            phi_values: Vec::new(),
            phi_monotone: false,
        };
        let grid = domain.linspace(VALIDATION_GRID);
        let mut lower = f64::INFINITY;
        let mut upper = f64::NEG_INFINITY;
        let mut floor = f64::INFINITY;
        for &u in &grid {
            let p = link.psi(u);
            let d = link.psi_prime(u);
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::domain(format!("psi({u}) = {p} is not positive")));
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::domain(format!("psi'({u}) = {d} is not positive")));
            }
            lower = lower.min(p);
            upper = upper.max(p);
            floor = floor.min(d);
        }
        link.psi_lower = lower;
        link.psi_upper = upper;
        link.deriv_floor = floor;
        link.phi_values = grid
            .iter()
            .map(|&u| u + link.psi(u) / link.psi_prime(u))
            .collect();
        link.phi_monotone = link.phi_values.windows(2).all(|w| w[1] > w[0]);
        link.phi_grid = grid;
        Ok(link)
    }

    pub fn probit_shift(shift: f64, domain: Interval) -> Result<Self> {
        Self::new(LinkFamily::ProbitShift { shift }, 0.0, domain)
    }

    pub fn exponential(domain: Interval) -> Result<Self> {
        Self::new(LinkFamily::Exponential, 0.0, domain)
    }

    pub fn linear_affine(intercept: f64, domain: Interval) -> Result<Self> {
        Self::new(LinkFamily::LinearAffine { intercept }, 1.0, domain)
    }

    /// Tabulated link on the table's own span.
    pub fn tabulated(table: Table, s: f64) -> Result<Self> {
        let span = table.span();
        Self::new(LinkFamily::Tabulated(table), s, span)
    }

    /// Tabulates `f` on `n` equispaced points of `domain`.
    pub fn tabulate(f: impl Fn(f64) -> f64, domain: Interval, n: usize, s: f64) -> Result<Self> {
        let grid = domain.linspace(n);
        let values = grid.iter().map(|&u| f(u)).collect();
        Self::tabulated(Table::new(grid, values)?, s)
    }

    /// Loads a two-column CSV `(u, psi(u))`. A non-numeric first row is
    /// treated as a header.
    pub fn from_csv(path: impl AsRef<Path>, s: f64) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::format(path, format!("row {row}: expected 2 columns")));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(u), Ok(v)) => {
                    grid.push(u);
                    values.push(v);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::format(path, format!("row {row}: not numeric"))),
            }
        }
        let table = Table::new(grid, values).map_err(|e| Error::format(path, e.to_string()))?;
        Self::tabulated(table, s)
    }

    /// Same family and index on a different domain.
    pub fn with_domain(&self, domain: Interval) -> Result<Self> {
        Self::new(self.family.clone(), self.s, domain)
    }

    /// Same family on the same domain with a different declared index.
    pub fn with_s(&self, s: f64) -> Result<Self> {
        Self::new(self.family.clone(), s, self.domain)
    }

    pub fn family(&self) -> &LinkFamily {
        &self.family
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// Smallest value of `psi` on the domain grid.
    pub fn psi_lower(&self) -> f64 {
        self.psi_lower
    }

    /// Largest value of `psi` on the domain grid.
    pub fn psi_upper(&self) -> f64 {
        self.psi_upper
    }

    /// Smallest value of `psi'` on the domain grid.
    pub fn deriv_floor(&self) -> f64 {
        self.deriv_floor
    }

    fn fd_step(&self) -> f64 {
        match &self.family {
            LinkFamily::Tabulated(t) => t.step(),
            _ => 1e-5 * self.domain.width().max(1.0),
        }
    }

    pub fn psi(&self, u: f64) -> f64 {
        match &self.family {
            LinkFamily::ProbitShift { shift } => normal_cdf(u - shift),
            LinkFamily::Exponential => u.exp(),
            LinkFamily::LinearAffine { intercept } => u + intercept,
            LinkFamily::Tabulated(t) => t.interpolate(u),
        }
    }

    pub fn psi_prime(&self, u: f64) -> f64 {
        match &self.family {
            LinkFamily::ProbitShift { shift } => normal_pdf(u - shift),
            LinkFamily::Exponential => u.exp(),
            LinkFamily::LinearAffine { .. } => 1.0,
            LinkFamily::Tabulated(t) => {
                let h = t.step();
                (t.interpolate(u + h) - t.interpolate(u - h)) / (2.0 * h)
            }
        }
    }

    pub fn psi_second(&self, u: f64) -> f64 {
        match &self.family {
            LinkFamily::ProbitShift { shift } => -(u - shift) * normal_pdf(u - shift),
            LinkFamily::Exponential => u.exp(),
            LinkFamily::LinearAffine { .. } => 0.0,
            LinkFamily::Tabulated(t) => {
                let h = t.step();
                (t.interpolate(u + h) - 2.0 * t.interpolate(u) + t.interpolate(u - h)) / (h * h)
            }
        }
    }

    /// `psi` evaluated at `u` clamped into the domain.
    pub fn psi_clamped(&self, u: f64) -> f64 {
        self.psi(self.domain.clamp(u))
    }

    fn phi_raw(&self, u: f64) -> f64 {
        u + self.psi(u) / self.psi_prime(u)
    }

    /// Virtual valuation `u + psi(u) / psi'(u)`.
    pub fn virtual_valuation(&self, u: f64) -> Result<f64> {
        let d = self.psi_prime(u);
        if !(d >= self.deriv_floor * 1e-6) {
            return Err(Error::DegenerateDerivative { u, derivative: d });
        }
        Ok(u + self.psi(u) / d)
    }

    /// `phi(domain)` as seen on the validation grid.
    pub fn phi_range(&self) -> Interval {
        Interval {
            lo: self.phi_values[0],
            hi: self.phi_values[self.phi_values.len() - 1],
        }
    }

    /// Solves `phi(u) = v` on the domain by bisection. Targets outside
    /// `phi(domain)` return the matching endpoint with `clamped = true`.
    pub fn invert_virtual_valuation(&self, v: f64) -> Result<Inversion> {
        if !self.phi_monotone {
            return Err(Error::ShapeViolation(
                "virtual valuation is not increasing on the domain".into(),
            ));
        }
        if v.is_nan() {
            return Err(Error::domain("cannot invert at NaN"));
        }
        let n = self.phi_values.len();
        if v <= self.phi_values[0] {
            return Ok(Inversion {
                u: self.domain.lo,
                clamped: v < self.phi_values[0],
            });
        }
        if v >= self.phi_values[n - 1] {
            return Ok(Inversion {
                u: self.domain.hi,
                clamped: v > self.phi_values[n - 1],
            });
        }
        // phi_values[k - 1] < v <= phi_values[k]
        let k = self.phi_values.partition_point(|&p| p < v);
        let (mut lo, mut hi) = (self.phi_grid[k - 1], self.phi_grid[k]);
        let target_tol = 1e-10 * (1.0 + v.abs());
        let mut best = (hi, (self.phi_values[k] - v).abs());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f = self.phi_raw(mid) - v;
            if f.abs() < best.1 {
                best = (mid, f.abs());
            }
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 && best.1 <= target_tol {
                break;
            }
        }
        Ok(Inversion {
            u: best.0,
            clamped: false,
        })
    }

    /// `g(u) = u - phi^{-1}(u)`; the unclamped best response is `g(u) / beta`.
    pub fn g_map(&self, u: f64) -> Result<f64> {
        Ok(u - self.invert_virtual_valuation(u)?.u)
    }

    /// `g'(u) = 1 - 1 / phi'(phi^{-1}(u))`, equal to 1 where the inversion
    /// clamps.
    pub fn g_prime(&self, u: f64) -> Result<f64> {
        let inv = self.invert_virtual_valuation(u)?;
        if inv.clamped {
            return Ok(1.0);
        }
        let h = self.fd_step();
        let dphi = (self.phi_raw(inv.u + h) - self.phi_raw(inv.u - h)) / (2.0 * h);
        Ok(1.0 - 1.0 / dphi)
    }

    /// Compares the two characterisations of s-concavity on a grid of the
    /// domain: the minimum slope of the virtual valuation against `s + 1`,
    /// and the differential inequality `psi psi'' + (s - 1) psi'^2 <= 0`.
    pub fn check_shape(&self, grid_size: usize) -> Result<ShapeReport> {
        if grid_size < 3 {
            return Err(Error::precondition("check_shape needs grid_size >= 3"));
        }
        let h = self.fd_step();
        let mut min_phi_prime = f64::INFINITY;
        let mut slack = f64::NEG_INFINITY;
        let mut max_psi = 0.0f64;
        for u in self.domain.linspace(grid_size) {
            let p = self.psi(u);
            let d1 = self.psi_prime(u);
            let d2 = self.psi_second(u);
            max_psi = max_psi.max(p.abs());
            slack = slack.max(p * d2 + (self.s - 1.0) * d1 * d1);
            let dphi = (self.phi_raw(u + h) - self.phi_raw(u - h)) / (2.0 * h);
            min_phi_prime = min_phi_prime.min(dphi);
        }
        let tolerance = 1e-8 * (1.0 + max_psi * max_psi);
        let phi_tolerance = 1e-6 * (self.s + 1.0).max(1.0);
        Ok(ShapeReport {
            s: self.s,
            s_concave_ok: slack <= tolerance,
            phi_prime_ok: min_phi_prime >= self.s + 1.0 - phi_tolerance,
            min_phi_prime,
            differential_slack: slack,
            tolerance,
            phi_tolerance,
            grid_size,
        })
    }
}
