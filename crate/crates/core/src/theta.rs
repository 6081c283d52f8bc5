//! Estimation of the index vector and Monte-Carlo oracles for the surrogate
//! link.
//!
//! Under Gaussian exploration prices the centered least-squares coefficient is
//! proportional to the true index vector, so its normalisation is a consistent
//! estimate of `theta`. When the index is misspecified, the conditional mean
//! `E[y | theta . p = u]` is a smoothed version of the true link: the
//! surrogate link.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::equilibrium::others;
use crate::error::{Error, Result};
use crate::links::LinkSpec;

/// Condition number above which the centered design is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Gaussian exploration distribution with location `m` and scale `Lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationDistribution {
    mean: DVector<f64>,
    scale: DMatrix<f64>,
    factor: DMatrix<f64>,
    eigen_bounds: (f64, f64),
}

impl ExplorationDistribution {
    /// Validates that `scale` is symmetric with eigenvalues in
    /// `[c_min, c_max]`.
    pub fn new(mean: Vec<f64>, scale: DMatrix<f64>, c_min: f64, c_max: f64) -> Result<Self> {
        let n = mean.len();
        if n == 0 || scale.nrows() != n || scale.ncols() != n {
            return Err(Error::domain("scale matrix must be N x N"));
        }
        if !(0.0 < c_min && c_min <= c_max) {
            return Err(Error::domain("need 0 < c_min <= c_max"));
        }
        let asym = (&scale - scale.transpose()).abs().max();
        if asym > 1e-12 * scale.abs().max().max(1.0) {
            return Err(Error::domain("scale matrix must be symmetric"));
        }
        let eig = SymmetricEigen::new(scale.clone());
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        if lo < c_min * (1.0 - 1e-12) || hi > c_max * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "scale eigenvalues [{lo}, {hi}] outside [{c_min}, {c_max}]"
            )));
        }
        let factor = scale
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain("scale matrix is not positive definite"))?
            .l();
        Ok(Self {
            mean: DVector::from_vec(mean),
            scale,
            factor,
            eigen_bounds: (lo, hi),
        })
    }

    /// Independent coordinates: `Lambda = diag(variances)`.
    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("variances must be positive"));
        }
        let lo = variances.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = variances.iter().copied().fold(0.0, f64::max);
        Self::new(mean, DMatrix::from_diagonal(&DVector::from_row_slice(variances)), lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// Lower Cholesky factor `A` with `A A^T = Lambda`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Smallest and largest eigenvalue of the scale matrix.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        self.eigen_bounds
    }

    /// Gaussian density generator `g(x) = exp(-x / 2)`.
    pub fn generator(x: f64) -> f64 {
        (-0.5 * x).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.factor * z).iter().copied().collect()
    }
}

/// Normalised least-squares estimate of one seller's index vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub theta_hat: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    pub sample_count: usize,
    pub seller: usize,
    /// The raw estimate implied a non-positive own-price sensitivity and both
    /// vectors were negated.
    pub sign_flipped: bool,
}

impl ThetaEstimate {
    /// `-theta_tilde[i]`.
    pub fn beta(&self) -> f64 {
        -self.theta_tilde[self.seller]
    }

    pub fn gamma(&self) -> Vec<f64> {
        others(&self.theta_tilde, self.seller)
    }

    pub fn is_valid(&self) -> bool {
        self.beta() > 0.0 && self.theta_tilde.iter().all(|t| t.is_finite())
    }

    pub fn error(&self, theta: &[f64]) -> f64 {
        self.theta_tilde
            .iter()
            .zip(theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Centered least squares `min sum_t (y_t - theta . (p_t - p_bar))^2`,
/// normalised to the unit sphere with the sign fixed so that the own-price
/// entry `seller` is negative.
pub fn fit_linear_theta(prices: &[Vec<f64>], demands: &[f64], seller: usize) -> Result<ThetaEstimate> {
    let n = prices.len();
    if n != demands.len() {
        return Err(Error::precondition("prices and demands differ in length"));
    }
    let dim = prices.first().map_or(0, Vec::len);
    if dim == 0 || prices.iter().any(|p| p.len() != dim) {
        return Err(Error::precondition("price rows must share a positive dimension"));
    }
    if n <= dim {
        return Err(Error::precondition(format!(
            "need more than {dim} observations, got {n}"
        )));
    }
    if seller >= dim {
        return Err(Error::precondition("seller index out of range"));
    }
    let mut p_bar = vec![0.0; dim];
    for row in prices {
        for (m, x) in p_bar.iter_mut().zip(row) {
            *m += x;
        }
    }
    p_bar.iter_mut().for_each(|m| *m /= n as f64);
    let y_bar = demands.iter().sum::<f64>() / n as f64;

    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (row, &y) in prices.iter().zip(demands) {
        let x = DVector::from_iterator(dim, row.iter().zip(&p_bar).map(|(a, b)| a - b));
        gram.ger(1.0, &x, &x, 1.0);
        rhs.axpy(y - y_bar, &x, 1.0);
    }
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::SingularDesign(format!(
            "centered design has condition estimate {:e}",
            hi / lo
        )));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("normal equations not positive definite".into()))?;
    let theta_hat: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    let norm = theta_hat.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidEstimate("least-squares coefficient is zero".into()));
    }
    let mut theta_tilde: Vec<f64> = theta_hat.iter().map(|t| t / norm).collect();
    let sign_flipped = theta_tilde[seller] >= 0.0;
    if sign_flipped {
        theta_tilde.iter_mut().for_each(|t| *t = -*t);
    }
    Ok(ThetaEstimate {
        theta_hat,
        theta_tilde,
        sample_count: n,
        seller,
        sign_flipped,
    })
}

/// Monte-Carlo estimate of `cov(psi(theta . x), theta . x) / var(theta . x)`
/// for `x` drawn from `dist`: the factor by which the least-squares
/// coefficient scales the true index vector.
pub fn population_scaling<R: Rng + ?Sized>(
    link: &LinkSpec,
    theta: &[f64],
    dist: &ExplorationDistribution,
    mc_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if mc_samples < 1000 {
        return Err(Error::precondition("population_scaling needs at least 1000 samples"));
    }
    if theta.len() != dist.dim() {
        return Err(Error::precondition("theta and distribution dimensions differ"));
    }
    let mut zs = Vec::with_capacity(mc_samples);
    let mut ys = Vec::with_capacity(mc_samples);
    for _ in 0..mc_samples {
        let x = dist.sample(rng);
        let z: f64 = theta.iter().zip(&x).map(|(a, b)| a * b).sum();
        zs.push(z);
        ys.push(link.psi(z));
    }
    let n = mc_samples as f64;
    let mz = zs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (z, y) in zs.iter().zip(&ys) {
        cov += (y - my) * (z - mz);
        var += (z - mz) * (z - mz);
    }
    Ok(cov / var)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Monte-Carlo evaluator of the surrogate link `u -> E[psi(theta_true . p) |
/// theta . p = u]` under Gaussian exploration.
///
/// The conditional law of `p` given `theta . p = u` is `m_u + A alpha` with
/// `m_u = m + Lambda theta (u - theta . m) / (theta' Lambda theta)` and
/// `alpha` standard Gaussian in the complement of `A' theta`. The draws of
/// `alpha` are fixed at construction, so evaluations at different `u` share
/// common random numbers.
#[derive(Clone, Debug)]
pub struct SurrogateLink {
    link: LinkSpec,
    /// `theta_true . m_u = offset + slope * u`.
    offset: f64,
    slope: f64,
    /// `theta_true . A alpha` per draw.
    spread: Vec<f64>,
}

impl SurrogateLink {
    pub fn new<R: Rng + ?Sized>(
        link: &LinkSpec,
        theta: &[f64],
        theta_true: &[f64],
        dist: &ExplorationDistribution,
        mc_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = dist.dim();
        if theta.len() != n || theta_true.len() != n {
            return Err(Error::precondition("index vectors must match the distribution"));
        }
        if mc_samples < 2 {
            return Err(Error::precondition("need at least 2 Monte-Carlo samples"));
        }
        let theta = DVector::from_row_slice(theta);
        let theta_true = DVector::from_row_slice(theta_true);
        let lambda_theta = dist.scale() * &theta;
        let quad = theta.dot(&lambda_theta);
        if !(quad > 0.0) {
            return Err(Error::domain("theta' Lambda theta must be positive"));
        }
        let slope = theta_true.dot(&lambda_theta) / quad;
        let offset = theta_true.dot(dist.mean()) - slope * theta.dot(dist.mean());
        let a = dist.factor();
        let v = a.transpose() * &theta;
        let vv = v.dot(&v);
        let w = a.transpose() * &theta_true;
        let spread = (0..mc_samples)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let alpha = &z - &v * (v.dot(&z) / vv);
                w.dot(&alpha)
            })
            .collect();
        Ok(Self {
            link: link.clone(),
            offset,
            slope,
            spread,
        })
    }

    /// `d/du theta_true . m_u`.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn eval(&self, u: f64) -> McEstimate {
        let centre = self.offset + self.slope * u;
        let n = self.spread.len() as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for e in &self.spread {
            let y = self.link.psi(centre + e);
            sum += y;
            sum_sq += y * y;
        }
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        McEstimate {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Single-point surrogate link estimate.
pub fn surrogate_link<R: Rng + ?Sized>(
    link: &LinkSpec,
    theta: &[f64],
    theta_true: &[f64],
    dist: &ExplorationDistribution,
    u: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    Ok(SurrogateLink::new(link, theta, theta_true, dist, mc_samples, rng)?.eval(u))
}
