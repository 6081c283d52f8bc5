//! The explore-then-best-respond market simulator.
//!
//! For `t <= tau` every seller posts a price drawn from the exploration
//! distribution and observes only its own demand. At `t = tau` seller `i`
//! estimates its index vector on the first `floor(kappa_i tau)` periods and
//! its link on the rest, then best-responds to the previous period's
//! competitor prices under the estimated model. Regret is measured against the
//! true model's best response to the simultaneous competitor prices.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::equilibrium::{
    Certificate, EquilibriumResult, PicardOptions, SellerModel, box_midpoints, check_uniqueness, dot,
    others, picard_solve,
};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rng::{Purpose, stream};
use crate::shape::{ConcaveFit, fit_transformed_concave};
use crate::theta::{ExplorationDistribution, ThetaEstimate, fit_linear_theta};

/// Demand noise law for one seller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    None,
    Uniform { half_width: f64 },
    Gaussian { sigma: f64 },
}

impl Noise {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Noise::None => 0.0,
            Noise::Uniform { half_width } if half_width > 0.0 => {
                Uniform::new_inclusive(-half_width, half_width).sample(rng)
            }
            Noise::Uniform { .. } => 0.0,
            Noise::Gaussian { sigma } if sigma > 0.0 => Normal::new(0.0, sigma).expect("positive sigma").sample(rng),
            Noise::Gaussian { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Noise::Uniform { half_width: v } | Noise::Gaussian { sigma: v } if !(v >= 0.0 && v.is_finite()) => {
                Err(Error::config(format!("noise scale must be nonnegative, got {v}")))
            }
            _ => Ok(()),
        }
    }
}

/// How prices are posted after exploration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Estimate, then best-respond under the estimated model.
    SpeBr,
    /// Explore as usual, then best-respond to the lagged prices under the
    /// true model.
    TrueModel,
    /// Post the equilibrium price in every period, which is the true best
    /// response to the other posted prices.
    Equilibrium,
}

/// Best response used for the regret benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Benchmark {
    Closed,
    Grid(usize),
}

#[derive(Clone, Debug)]
pub struct MarketConfig {
    pub sellers: Vec<SellerModel>,
    pub horizon: usize,
    pub xi: f64,
    pub c_tau: f64,
    pub split: Vec<f64>,
    pub noise: Vec<Noise>,
    pub exploration: ExplorationDistribution,
    pub seed: u64,
    pub replication: u64,
    pub policy: Policy,
    pub benchmark: Benchmark,
    /// Reject markets whose uniqueness certificate fails.
    pub require_uniqueness: bool,
}

impl MarketConfig {
    /// Defaults: `xi = 5/7`, `c_tau = 1`, `kappa = 1/2`, no noise, exploration
    /// centred on the box midpoints with scale `(width / 6)^2`.
    pub fn new(sellers: Vec<SellerModel>, horizon: usize, seed: u64) -> Result<Self> {
        let n = sellers.len();
        let exploration = default_exploration(&sellers)?;
        Ok(Self {
            sellers,
            horizon,
            xi: 5.0 / 7.0,
            c_tau: 1.0,
            split: vec![0.5; n],
            noise: vec![Noise::None; n],
            exploration,
            seed,
            replication: 0,
            policy: Policy::SpeBr,
            benchmark: Benchmark::Closed,
            require_uniqueness: true,
        })
    }

    pub fn n_sellers(&self) -> usize {
        self.sellers.len()
    }

    /// `tau = ceil(c_tau T^xi)`.
    pub fn tau(&self) -> usize {
        let raw = self.c_tau * (self.horizon as f64).powf(self.xi);
        (raw - 1e-9).ceil().max(0.0) as usize
    }

    /// `(floor(kappa_i tau), tau - floor(kappa_i tau))`.
    pub fn split_sizes(&self, seller: usize) -> (usize, usize) {
        let tau = self.tau();
        let n1 = (self.split[seller] * tau as f64 + 1e-9).floor() as usize;
        (n1, tau - n1)
    }

    /// `[-p_max, p_max]` with `p_max` the norm of the upper price corners.
    pub fn index_domain(&self) -> Interval {
        let p_max = self
            .sellers
            .iter()
            .map(|s| s.price_box().hi.powi(2))
            .sum::<f64>()
            .sqrt();
        Interval {
            lo: -p_max,
            hi: p_max,
        }
    }

    /// Checks the configuration invariants and returns the uniqueness
    /// certificate.
    pub fn validate(&self) -> Result<Certificate> {
        let n = self.n_sellers();
        if n < 2 {
            return Err(Error::config("a market needs at least two sellers"));
        }
        if self.split.len() != n || self.noise.len() != n {
            return Err(Error::config("split and noise must list one entry per seller"));
        }
        if self.exploration.dim() != n {
            return Err(Error::config("exploration distribution has the wrong dimension"));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::config(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        if !(self.c_tau > 0.0 && self.c_tau.is_finite()) {
            return Err(Error::config("c_tau must be positive"));
        }
        for noise in &self.noise {
            noise.validate()?;
        }
        let tau = self.tau();
        if tau >= self.horizon {
            return Err(Error::config(format!(
                "exploration length {tau} must be below the horizon {}",
                self.horizon
            )));
        }
        for (i, &kappa) in self.split.iter().enumerate() {
            if !(kappa > 0.0 && kappa < 1.0) {
                return Err(Error::config(format!("split for seller {i} must lie in (0, 1)")));
            }
            let (n1, n2) = self.split_sizes(i);
            if n1 < n + 1 {
                return Err(Error::config(format!(
                    "seller {i}: phase-1 sample {n1} is below {} (raise T or c_tau)",
                    n + 1
                )));
            }
            if n2 < 2 {
                return Err(Error::config(format!("seller {i}: phase-2 sample {n2} is below 2")));
            }
        }
        let cert = check_uniqueness(&self.sellers)?;
        if self.require_uniqueness && !cert.passes {
            return Err(Error::config(format!(
                "uniqueness certificate fails: L_gamma = {}",
                cert.l_gamma
            )));
        }
        Ok(cert)
    }
}

/// Gaussian exploration at the box midpoints with scale `(width / 6)^2 I`.
pub fn default_exploration(sellers: &[SellerModel]) -> Result<ExplorationDistribution> {
    let mean = box_midpoints(sellers);
    let variances: Vec<f64> = sellers.iter().map(|s| (s.price_box().width() / 6.0).powi(2)).collect();
    ExplorationDistribution::diagonal(mean, &variances)
}

/// One draw from the exploration distribution.
pub fn sample_exploration_prices<R: Rng + ?Sized>(dist: &ExplorationDistribution, rng: &mut R) -> Vec<f64> {
    dist.sample(rng)
}

/// Realized demands and the number of indices clamped into `index_domain`.
pub fn realize_demand(
    sellers: &[SellerModel],
    prices: &[f64],
    noise: &[Noise],
    rngs: &mut [ChaCha8Rng],
    index_domain: Interval,
) -> (Vec<f64>, usize) {
    let mut clamps = 0;
    let demands = sellers
        .iter()
        .zip(noise)
        .zip(rngs.iter_mut())
        .map(|((s, nz), rng)| {
            let u = s.demand_index(prices);
            if !index_domain.contains(u) {
                clamps += 1;
            }
            s.link().psi_clamped(index_domain.clamp(u)) + nz.draw(rng)
        })
        .collect();
    (demands, clamps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExploitChoice {
    pub price: f64,
    pub estimated_revenue: f64,
    /// The price box was narrower than the search resolution and its
    /// midpoint was returned.
    pub degenerate_box: bool,
}

/// Maximises `p * psi_hat(-beta_hat p + gamma_hat . p_-i)` over the price box.
///
/// The estimated revenue is smooth between the prices where the index crosses
/// a knot of the fit or an end of `index_domain`; each such segment is
/// searched by golden section and the best candidate wins, ties to the lowest
/// price.
pub fn exploit_price(
    estimate: &ThetaEstimate,
    fit: &ConcaveFit,
    competitor_prices: &[f64],
    price_box: Interval,
    index_domain: Interval,
) -> Result<ExploitChoice> {
    let beta = estimate.beta();
    if !(beta > 0.0) || !estimate.is_valid() {
        return Err(Error::InvalidEstimate(format!(
            "seller {}: estimated own-price sensitivity {beta} is not positive",
            estimate.seller
        )));
    }
    let gamma = estimate.gamma();
    if gamma.len() != competitor_prices.len() {
        return Err(Error::precondition("competitor prices have the wrong dimension"));
    }
    let c = dot(&gamma, competitor_prices);
    let revenue = |p: f64| p * fit.eval(index_domain.clamp(c - beta * p));
    let width = price_box.width();
    if width < 1e-9 {
        let p = price_box.midpoint();
        return Ok(ExploitChoice {
            price: p,
            estimated_revenue: revenue(p),
            degenerate_box: true,
        });
    }

    let mut breaks: Vec<f64> = fit
        .knots
        .iter()
        .chain([index_domain.lo, index_domain.hi].iter())
        .map(|&u| (c - u) / beta)
        .filter(|&p| price_box.contains_strictly(p))
        .collect();
    breaks.push(price_box.lo);
    breaks.push(price_box.hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut candidates: Vec<f64> = breaks.clone();
    for seg in breaks.windows(2) {
        candidates.push(golden_max(&revenue, seg[0], seg[1]));
    }
    candidates.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for p in candidates {
        let r = revenue(p);
        if r.is_finite() && best.is_none_or(|(_, b)| r > b) {
            best = Some((p, r));
        }
    }
    let (price, estimated_revenue) = match best {
        Some(b) => b,
        None => {
            let mut fallback = (price_box.lo, f64::NEG_INFINITY);
            for p in price_box.linspace(100_001) {
                let r = revenue(p);
                if r > fallback.1 {
                    fallback = (p, r);
                }
            }
            if !fallback.1.is_finite() {
                return Err(Error::InvalidEstimate("estimated revenue is not finite".into()));
            }
            fallback
        }
    };
    Ok(ExploitChoice {
        price,
        estimated_revenue,
        degenerate_box: false,
    })
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Exploit,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodRow {
    /// One-based period.
    pub t: usize,
    pub phase: Phase,
    pub prices: Vec<f64>,
    pub demands: Vec<f64>,
    pub regret_inc: Vec<f64>,
    pub ne_dist_sq: f64,
}

/// A seller's fitted model.
#[derive(Clone, Debug, PartialEq)]
pub struct SellerEstimate {
    pub theta: ThetaEstimate,
    pub fit: ConcaveFit,
    /// Phase-2 indices clamped into the index domain before fitting.
    pub clamped_indices: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EpisodeStatus {
    Completed,
    Aborted { t: usize, seller: usize, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub horizon: usize,
    pub tau: usize,
    pub equilibrium: EquilibriumResult,
    pub rows: Vec<PeriodRow>,
    pub estimates: Vec<Option<SellerEstimate>>,
    pub cum_regret: Vec<f64>,
    pub ne_dist_sq_final: f64,
    /// Demand indices clamped into the index domain while realizing demand.
    pub demand_clamps: usize,
    pub status: EpisodeStatus,
}

impl EpisodeLog {
    pub fn completed(&self) -> bool {
        self.status == EpisodeStatus::Completed
    }

    /// `||theta_tilde - theta||_2` per seller, NaN when not estimated.
    pub fn theta_errors(&self, sellers: &[SellerModel]) -> Vec<f64> {
        self.estimates
            .iter()
            .zip(sellers)
            .map(|(e, s)| e.as_ref().map_or(f64::NAN, |e| e.theta.error(s.theta())))
            .collect()
    }

    /// `t,phase,seller,price,demand,regret_inc,ne_dist_sq`, sellers
    /// one-based.
    pub fn write_period_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,phase,seller,price,demand,regret_inc,ne_dist_sq")?;
        for row in &self.rows {
            for i in 0..row.prices.len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    row.t,
                    row.phase.tag(),
                    i + 1,
                    row.prices[i],
                    row.demands[i],
                    row.regret_inc[i],
                    row.ne_dist_sq
                )?;
            }
        }
        Ok(())
    }

    pub fn save_period_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_period_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Runs one episode. Configuration errors are returned; estimation failures
/// abort the episode and are recorded in the log's status.
pub fn run_episode(market: &MarketConfig) -> Result<EpisodeLog> {
    market.validate()?;
    let n = market.n_sellers();
    let sellers = &market.sellers;
    let opts = PicardOptions {
        require_certificate: market.require_uniqueness,
        ..PicardOptions::default()
    };
    let equilibrium = picard_solve(sellers, &box_midpoints(sellers), &opts)?;
    let p_star = equilibrium.p_star.clone();
    let tau = market.tau();
    let domain = market.index_domain();

    let (seed, rep) = (market.seed, market.replication);
    let mut explore_rng = stream(seed, rep, 0, Purpose::Exploration);
    let mut noise_rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream(seed, rep, i as u64, Purpose::Noise)).collect();

    let mut log = EpisodeLog {
        horizon: market.horizon,
        tau,
        equilibrium,
        rows: Vec::with_capacity(market.horizon),
        estimates: vec![None; n],
        cum_regret: vec![0.0; n],
        ne_dist_sq_final: f64::NAN,
        demand_clamps: 0,
        status: EpisodeStatus::Completed,
    };
    let mut previous: Vec<f64> = Vec::new();

    for t in 1..=market.horizon {
        let phase = if t <= tau { Phase::Explore } else { Phase::Exploit };
        let prices = match (market.policy, phase) {
            (Policy::Equilibrium, _) => p_star.clone(),
            (_, Phase::Explore) => sample_exploration_prices(&market.exploration, &mut explore_rng),
            (Policy::TrueModel, Phase::Exploit) => {
                let mut p = Vec::with_capacity(n);
                for s in sellers {
                    p.push(s.best_response(&others(&previous, s.index()))?);
                }
                p
            }
            (Policy::SpeBr, Phase::Exploit) => {
                let mut p = Vec::with_capacity(n);
                for (i, s) in sellers.iter().enumerate() {
                    let est = log.estimates[i].as_ref().expect("estimates exist after exploration");
                    match exploit_price(&est.theta, &est.fit, &others(&previous, i), s.price_box(), domain) {
                        Ok(choice) => p.push(choice.price),
                        Err(e) => {
                            log.status = EpisodeStatus::Aborted {
                                t,
                                seller: i,
                                message: e.to_string(),
                            };
                            return Ok(finish(log));
                        }
                    }
                }
                p
            }
        };
        let (demands, clamps) = realize_demand(sellers, &prices, &market.noise, &mut noise_rngs, domain);
        log.demand_clamps += clamps;
        let mut regret_inc = Vec::with_capacity(n);
        for (i, s) in sellers.iter().enumerate() {
            let comp = others(&prices, i);
            let best = match market.benchmark {
                Benchmark::Closed => s.best_response(&comp)?,
                Benchmark::Grid(k) => s.best_response_grid(&comp, k)?,
            };
            let inc = s.revenue(best, &comp) - s.revenue(prices[i], &comp);
            log.cum_regret[i] += inc;
            regret_inc.push(inc);
        }
        let ne_dist_sq = prices.iter().zip(&p_star).map(|(a, b)| (a - b) * (a - b)).sum();
        log.rows.push(PeriodRow {
            t,
            phase,
            prices: prices.clone(),
            demands,
            regret_inc,
            ne_dist_sq,
        });
        previous = prices;

        if t == tau && market.policy == Policy::SpeBr {
            for (i, s) in sellers.iter().enumerate() {
                match estimate_seller(market, &log.rows, i, s, domain) {
                    Ok(est) => log.estimates[i] = Some(est),
                    Err(e) => {
                        log.status = EpisodeStatus::Aborted {
                            t,
                            seller: i,
                            message: e.to_string(),
                        };
                        return Ok(finish(log));
                    }
                }
            }
        }
    }
    Ok(finish(log))
}

fn finish(mut log: EpisodeLog) -> EpisodeLog {
    log.ne_dist_sq_final = log.rows.last().map_or(f64::NAN, |r| r.ne_dist_sq);
    log
}

/// Phase-1 index estimate on the first `n1` exploration periods, then the
/// link fit on the remaining ones.
fn estimate_seller(
    market: &MarketConfig,
    rows: &[PeriodRow],
    i: usize,
    seller: &SellerModel,
    domain: Interval,
) -> Result<SellerEstimate> {
    let (n1, _) = market.split_sizes(i);
    let tau = market.tau();
    let prices: Vec<Vec<f64>> = rows[..n1].iter().map(|r| r.prices.clone()).collect();
    let demands: Vec<f64> = rows[..n1].iter().map(|r| r.demands[i]).collect();
    let theta = fit_linear_theta(&prices, &demands, i)?;
    let mut clamped_indices = 0;
    let mut w = Vec::with_capacity(tau - n1);
    let mut y = Vec::with_capacity(tau - n1);
    for r in &rows[n1..tau] {
        let u = dot(&theta.theta_tilde, &r.prices);
        if !domain.contains(u) {
            clamped_indices += 1;
        }
        w.push(domain.clamp(u));
        y.push(r.demands[i]);
    }
    let fit = fit_transformed_concave(&w, &y, seller.link().s(), None)?;
    Ok(SellerEstimate {
        theta,
        fit,
        clamped_indices,
    })
}
