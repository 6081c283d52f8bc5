//! Best responses and the Nash equilibrium of the pricing game.
//!
//! Seller `i` earns `rev_i(p | p_-i) = p * psi_i(-beta_i p + gamma_i . p_-i)`.
//! Its best response has the closed form `g_i(gamma_i . p_-i) / beta_i`
//! (clamped to the price box), and the equilibrium is the fixed point of the
//! joint best-response map, found by Picard iteration when that map is a
//! contraction.

use std::io::Write;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::links::LinkSpec;

/// Grid used to estimate `sup |g'|` over the competitor-index range.
pub const G_PRIME_GRID: usize = 10_000;

/// One seller's true demand model.
#[derive(Clone, Debug, PartialEq)]
pub struct SellerModel {
    index: usize,
    beta: f64,
    gamma: Vec<f64>,
    theta: Vec<f64>,
    price_box: Interval,
    link: LinkSpec,
}

impl SellerModel {
    /// `index` is zero-based; `gamma` lists the competitor sensitivities in
    /// seller order, skipping `index`.
    pub fn new(
        index: usize,
        beta: f64,
        gamma: Vec<f64>,
        price_box: Interval,
        link: LinkSpec,
    ) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::domain(format!("beta must be positive, got {beta}")));
        }
        if index > gamma.len() {
            return Err(Error::domain("seller index exceeds number of sellers"));
        }
        if !(price_box.width() > 0.0) || price_box.lo < 0.0 {
            return Err(Error::domain(format!(
                "price box {price_box} must satisfy 0 <= lo < hi"
            )));
        }
        let mut theta = Vec::with_capacity(gamma.len() + 1);
        theta.extend_from_slice(&gamma[..index]);
        theta.push(-beta);
        theta.extend_from_slice(&gamma[index..]);
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("theta must have unit norm, got {norm}")));
        }
        Ok(Self {
            index,
            beta,
            gamma,
            theta,
            price_box,
            link,
        })
    }

    /// Builds a seller from its full index vector; `theta[index]` is `-beta`.
    pub fn from_theta(index: usize, theta: &[f64], price_box: Interval, link: LinkSpec) -> Result<Self> {
        if index >= theta.len() {
            return Err(Error::domain("seller index out of range"));
        }
        let gamma = others(theta, index);
        Self::new(index, -theta[index], gamma, price_box, link)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn price_box(&self) -> Interval {
        self.price_box
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    pub fn n_sellers(&self) -> usize {
        self.theta.len()
    }

    /// `gamma . p_-i`.
    pub fn competitor_index(&self, competitor_prices: &[f64]) -> f64 {
        dot(&self.gamma, competitor_prices)
    }

    /// `theta . p` for a full price vector.
    pub fn demand_index(&self, prices: &[f64]) -> f64 {
        dot(&self.theta, prices)
    }

    /// Expected demand at a full price vector, index clamped to the link
    /// domain.
    pub fn expected_demand(&self, prices: &[f64]) -> f64 {
        self.link.psi_clamped(self.demand_index(prices))
    }

    /// `p * psi(-beta p + gamma . p_-i)` with the index clamped to the link
    /// domain.
    pub fn revenue(&self, price: f64, competitor_prices: &[f64]) -> f64 {
        let u = -self.beta * price + self.competitor_index(competitor_prices);
        price * self.link.psi_clamped(u)
    }

    /// Closed-form best response, clamped to the price box.
    pub fn best_response(&self, competitor_prices: &[f64]) -> Result<f64> {
        self.check_competitors(competitor_prices)?;
        let g = self.link.g_map(self.competitor_index(competitor_prices))?;
        Ok(self.price_box.clamp(g / self.beta))
    }

    /// Grid argmax of the revenue over the price box, ties to the lowest
    /// price. Oracle for [`SellerModel::best_response`].
    pub fn best_response_grid(&self, competitor_prices: &[f64], grid_size: usize) -> Result<f64> {
        self.check_competitors(competitor_prices)?;
        if grid_size < 2 {
            return Err(Error::precondition("grid_size must be at least 2"));
        }
        let mut best = (self.price_box.lo, f64::NEG_INFINITY);
        for p in self.price_box.linspace(grid_size) {
            let r = self.revenue(p, competitor_prices);
            if r > best.1 {
                best = (p, r);
            }
        }
        Ok(best.0)
    }

    fn check_competitors(&self, competitor_prices: &[f64]) -> Result<()> {
        if competitor_prices.len() != self.gamma.len() {
            return Err(Error::precondition(format!(
                "expected {} competitor prices, got {}",
                self.gamma.len(),
                competitor_prices.len()
            )));
        }
        Ok(())
    }

    /// Range of `gamma . p_-i` as competitors range over their boxes.
    pub fn competitor_index_range(&self, boxes: &[Interval]) -> Interval {
        let others = others(boxes, self.index);
        let (mut lo, mut hi) = (0.0, 0.0);
        for (g, b) in self.gamma.iter().zip(&others) {
            let (a, c) = (g * b.lo, g * b.hi);
            lo += a.min(c);
            hi += a.max(c);
        }
        Interval { lo, hi }
    }
}

/// `v` with entry `skip` removed.
pub fn others<T: Copy>(v: &[T], skip: usize) -> Vec<T> {
    v.iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, x)| *x)
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_market(sellers: &[SellerModel]) -> Result<()> {
    let n = sellers.len();
    if n == 0 {
        return Err(Error::precondition("market has no sellers"));
    }
    for (k, s) in sellers.iter().enumerate() {
        if s.index != k || s.n_sellers() != n {
            return Err(Error::precondition(format!(
                "seller {k} is inconsistent with a market of {n} sellers"
            )));
        }
    }
    Ok(())
}

/// The joint best-response map.
pub fn best_response_map(sellers: &[SellerModel], prices: &[f64]) -> Result<Vec<f64>> {
    sellers
        .iter()
        .map(|s| s.best_response(&others(prices, s.index)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SellerCertificate {
    /// `sup |g'|` over the seller's competitor-index range.
    pub g_prime_sup: f64,
    pub gamma_l1: f64,
    pub beta: f64,
    /// `sup |g'| * ||gamma||_1 / beta`.
    pub ratio: f64,
    /// `||gamma||_1 < 1/sqrt(2)`, reported when `s > -1/2`.
    pub sufficient_condition: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    /// Certified Lipschitz modulus of the best-response map in the sup norm.
    pub l_gamma: f64,
    pub passes: bool,
    pub per_seller: Vec<SellerCertificate>,
}

/// Estimates the contraction modulus `sup_i ||g_i'|| ||gamma_i||_1 / beta_i`.
///
/// `||g_i'||` is maximised over a grid of the competitor-index range
/// `{gamma_i . p_-i : p in price boxes}`, the only arguments at which the
/// best-response map evaluates `g_i`.
pub fn check_uniqueness(sellers: &[SellerModel]) -> Result<Certificate> {
    check_market(sellers)?;
    let boxes: Vec<Interval> = sellers.iter().map(|s| s.price_box).collect();
    let mut per_seller = Vec::with_capacity(sellers.len());
    for seller in sellers {
        let range = seller.competitor_index_range(&boxes);
        let grid = if range.width() > 0.0 {
            range.linspace(G_PRIME_GRID)
        } else {
            vec![range.lo]
        };
        let mut sup = 0.0f64;
        for u in grid {
            sup = sup.max(seller.link.g_prime(u)?.abs());
        }
        let gamma_l1: f64 = seller.gamma.iter().map(|g| g.abs()).sum();
        let ratio = sup * gamma_l1 / seller.beta;
        let sufficient_condition =
            (seller.link.s() > -0.5).then_some(gamma_l1 < std::f64::consts::FRAC_1_SQRT_2);
        per_seller.push(SellerCertificate {
            g_prime_sup: sup,
            gamma_l1,
            beta: seller.beta,
            ratio,
            sufficient_condition,
        });
    }
    let l_gamma = per_seller.iter().map(|c| c.ratio).fold(0.0, f64::max);
    Ok(Certificate {
        l_gamma,
        passes: l_gamma < 1.0,
        per_seller,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Refuse to iterate when the uniqueness certificate fails.
    pub require_certificate: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            require_certificate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumResult {
    pub p_star: Vec<f64>,
    /// `||Gamma(p*) - p*||_inf`.
    pub residual: f64,
    /// `||Gamma(p*) - p*||_2`.
    pub residual_l2: f64,
    /// Number of Picard updates performed.
    pub iterations: usize,
    /// Certified modulus from [`check_uniqueness`].
    pub contraction_modulus: f64,
    pub interior: Vec<bool>,
    /// `||p_{k+1} - p_k||_inf` for every update.
    pub trace: Vec<f64>,
}

impl EquilibriumResult {
    /// Geometric-mean ratio of successive step sizes, ignoring steps at
    /// round-off level. `None` when fewer than two usable steps exist.
    pub fn empirical_ratio(&self) -> Option<f64> {
        let usable: Vec<f64> = self.trace.iter().copied().filter(|r| *r > 1e-13).collect();
        if usable.len() < 2 {
            return None;
        }
        let k = (usable.len() - 1) as f64;
        Some((usable[usable.len() - 1] / usable[0]).powf(1.0 / k))
    }

    /// Largest ratio of successive step sizes above round-off level.
    pub fn max_step_ratio(&self) -> Option<f64> {
        self.trace
            .windows(2)
            .filter(|w| w[1] > 1e-13)
            .map(|w| w[1] / w[0])
            .reduce(f64::max)
    }

    pub fn csv_header(n: usize) -> String {
        let mut cols: Vec<String> = (1..=n).map(|i| format!("p_star_{i}")).collect();
        cols.extend(["residual", "iterations", "l_gamma"].map(String::from));
        cols.join(",")
    }

    /// `p*_1..p*_N,residual,iterations,L_gamma`.
    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.p_star.iter().map(|p| p.to_string()).collect();
        cols.push(self.residual.to_string());
        cols.push(self.iterations.to_string());
        cols.push(self.contraction_modulus.to_string());
        cols.join(",")
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::csv_header(self.p_star.len()))?;
        writeln!(out, "{}", self.csv_row())
    }
}

/// Midpoints of every seller's price box.
pub fn box_midpoints(sellers: &[SellerModel]) -> Vec<f64> {
    sellers.iter().map(|s| s.price_box.midpoint()).collect()
}

/// Iterates `p <- Gamma(p)` from `p0` until successive iterates differ by at
/// most `tol` in the sup norm.
pub fn picard_solve(sellers: &[SellerModel], p0: &[f64], opts: &PicardOptions) -> Result<EquilibriumResult> {
    check_market(sellers)?;
    if p0.len() != sellers.len() {
        return Err(Error::precondition("start point has the wrong dimension"));
    }
    let cert = check_uniqueness(sellers)?;
    if opts.require_certificate && !cert.passes {
        return Err(Error::config(format!(
            "uniqueness certificate fails: L_gamma = {}",
            cert.l_gamma
        )));
    }
    let finish = |p: Vec<f64>, iterations: usize, trace: Vec<f64>| -> Result<EquilibriumResult> {
        let next = best_response_map(sellers, &p)?;
        let diff: Vec<f64> = next.iter().zip(&p).map(|(a, b)| a - b).collect();
        let interior = sellers
            .iter()
            .zip(&p)
            .map(|(s, x)| s.price_box.contains_strictly(*x))
            .collect();
        Ok(EquilibriumResult {
            residual: diff.iter().fold(0.0, |m, d| m.max(d.abs())),
            residual_l2: diff.iter().map(|d| d * d).sum::<f64>().sqrt(),
            p_star: p,
            iterations,
            contraction_modulus: cert.l_gamma,
            interior,
            trace,
        })
    };
    if !opts.tol.is_finite() {
        return finish(p0.to_vec(), 0, Vec::new());
    }
    let mut p = p0.to_vec();
    let mut trace = Vec::new();
    for k in 1..=opts.max_iter {
        let next = best_response_map(sellers, &p)?;
        let step = next
            .iter()
            .zip(&p)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        trace.push(step);
        p = next;
        if step <= opts.tol {
            return finish(p, k, trace);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: trace.last().copied().unwrap_or(f64::NAN),
    })
}

/// Minimum of `-d^2 rev / dp^2` over competitor profiles and prices, by
/// central differences. A positive value certifies strong concavity of the
/// revenue in own price.
pub fn check_revenue_curvature(
    seller: &SellerModel,
    competitor_grid: &[Vec<f64>],
    price_grid: &[f64],
) -> Result<f64> {
    if competitor_grid.is_empty() || price_grid.is_empty() {
        return Err(Error::precondition("curvature grids must be nonempty"));
    }
    let h = 1e-4 * seller.price_box.width().max(1.0);
    let mut min_curv = f64::INFINITY;
    for comp in competitor_grid {
        seller.check_competitors(comp)?;
        let c = seller.competitor_index(comp);
        let rev = |p: f64| p * seller.link.psi(-seller.beta * p + c);
        for &p in price_grid {
            let curv = -(rev(p + h) - 2.0 * rev(p) + rev(p - h)) / (h * h);
            min_curv = min_curv.min(curv);
        }
    }
    Ok(min_curv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn exp_seller(index: usize, beta: f64) -> SellerModel {
        let link = LinkSpec::exponential(iv(-6.0, 6.0)).unwrap();
        let g = (1.0 - beta * beta).sqrt();
        SellerModel::new(index, beta, vec![g], iv(0.0, 3.0), link).unwrap()
    }

    #[test]
    fn theta_layout_and_norm() {
        let s = exp_seller(1, 0.8);
        assert!((s.theta()[0] - 0.6).abs() < 1e-15 && s.theta()[1] == -0.8);
        let link = LinkSpec::exponential(iv(-6.0, 6.0)).unwrap();
        assert!(SellerModel::new(0, 0.8, vec![0.5], iv(0.0, 3.0), link.clone()).is_err());
        assert!(SellerModel::new(0, -0.8, vec![0.6], iv(0.0, 3.0), link.clone()).is_err());
        assert!(SellerModel::new(0, 0.8, vec![0.6], iv(1.0, 1.0), link).is_err());
    }

    #[test]
    fn exponential_best_response_is_constant() {
        let s = exp_seller(0, 0.8);
        for p in [0.0, 1.0, 2.5] {
            assert!((s.best_response(&[p]).unwrap() - 1.25).abs() < 1e-9);
        }
    }

    #[test]
    fn best_response_clamps_to_box() {
        // g = 1, beta = 0.25 -> closed form 4.0, box [0, 3]
        let link = LinkSpec::exponential(iv(-6.0, 6.0)).unwrap();
        let b = 0.25;
        let s = SellerModel::new(0, b, vec![(1.0f64 - b * b).sqrt()], iv(0.0, 3.0), link).unwrap();
        assert_eq!(s.best_response(&[1.0]).unwrap(), 3.0);
        assert_eq!(s.best_response_grid(&[1.0], 1001).unwrap(), 3.0);
    }

    #[test]
    fn wrong_competitor_count_is_rejected() {
        let s = exp_seller(0, 0.8);
        assert!(s.best_response(&[1.0, 2.0]).is_err());
        assert!(s.best_response_grid(&[1.0], 1).is_err());
    }

    #[test]
    fn picard_two_exponential_sellers() {
        let sellers = vec![exp_seller(0, 0.8), exp_seller(1, 0.8)];
        let res = picard_solve(&sellers, &box_midpoints(&sellers), &PicardOptions::default()).unwrap();
        assert_eq!(res.iterations, 2);
        assert!((res.p_star[0] - 1.25).abs() < 1e-9);
        assert!((res.p_star[1] - 1.25).abs() < 1e-9);
        assert!(res.residual < 1e-10);
        assert!(res.interior.iter().all(|&b| b));
    }

    #[test]
    fn picard_infinite_tolerance_returns_start() {
        let sellers = vec![exp_seller(0, 0.8), exp_seller(1, 0.8)];
        let opts = PicardOptions {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let res = picard_solve(&sellers, &[0.3, 2.0], &opts).unwrap();
        assert_eq!(res.p_star, vec![0.3, 2.0]);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn picard_reports_non_convergence() {
        let link = LinkSpec::probit_shift(0.0, iv(-5.0, 5.0)).unwrap();
        let b = 0.71f64;
        let g = (1.0 - b * b).sqrt();
        let sellers = vec![
            SellerModel::new(0, b, vec![g], iv(0.0, 3.0), link.clone()).unwrap(),
            SellerModel::new(1, b, vec![g], iv(0.0, 3.0), link).unwrap(),
        ];
        let opts = PicardOptions {
            tol: 1e-14,
            max_iter: 3,
            require_certificate: false,
        };
        let err = picard_solve(&sellers, &[0.0, 3.0], &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, .. }));
    }

    #[test]
    fn exponential_certificate_is_zero() {
        let sellers = vec![exp_seller(0, 0.8), exp_seller(1, 0.8)];
        let cert = check_uniqueness(&sellers).unwrap();
        assert!(cert.l_gamma < 1e-6);
        assert!(cert.passes);
    }

    #[test]
    fn sufficient_condition_fails_for_large_gamma() {
        // ||gamma||_1 = 0.9 spread over two competitors, s = 0
        let link = LinkSpec::probit_shift(0.0, iv(-6.0, 6.0)).unwrap();
        let g = vec![0.45, 0.45];
        let beta = (1.0 - 2.0 * 0.45f64 * 0.45).sqrt();
        let boxes = iv(0.0, 3.0);
        let sellers = vec![
            SellerModel::new(0, beta, g.clone(), boxes, link.clone()).unwrap(),
            SellerModel::new(1, beta, g.clone(), boxes, link.clone()).unwrap(),
            SellerModel::new(2, beta, g, boxes, link).unwrap(),
        ];
        let cert = check_uniqueness(&sellers).unwrap();
        for c in &cert.per_seller {
            assert!((c.gamma_l1 - 0.9).abs() < 1e-12);
            assert_eq!(c.sufficient_condition, Some(false));
        }
    }

    #[test]
    fn linear_affine_curvature_is_two_beta() {
        let link = LinkSpec::linear_affine(5.0, iv(-4.0, 4.0)).unwrap();
        let b = 0.6;
        let s = SellerModel::new(0, b, vec![0.8], iv(0.0, 3.0), link).unwrap();
        let comps: Vec<Vec<f64>> = [0.0, 1.5, 3.0].iter().map(|c| vec![*c]).collect();
        let prices = iv(0.1, 2.9).linspace(15);
        let c = check_revenue_curvature(&s, &comps, &prices).unwrap();
        assert!((c - 2.0 * b).abs() < 1e-5, "{c}");
    }

    #[test]
    fn csv_row_layout() {
        let r = EquilibriumResult {
            p_star: vec![1.0, 2.0],
            residual: 0.0,
            residual_l2: 0.0,
            iterations: 4,
            contraction_modulus: 0.5,
            interior: vec![true, true],
            trace: vec![],
        };
        assert_eq!(EquilibriumResult::csv_header(2), "p_star_1,p_star_2,residual,iterations,l_gamma");
        assert_eq!(r.csv_row(), "1,2,0,4,0.5");
    }
}
