//! Experiment orchestration: the reference market, replication grids, and
//! scaling-law fits over their summaries.

mod config;
mod plot;
mod scaling;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::ExperimentConfig;
pub use plot::emit_plots;
pub use scaling::{Metric, ScalingReport, SeriesSlope, SummaryRow, fit_scaling_slope, read_summary};

use crate::engine::{EpisodeLog, EpisodeStatus, MarketConfig, Noise, run_episode};
use crate::equilibrium::SellerModel;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::links::LinkSpec;
use crate::rng::derive_seed;

/// Own-price sensitivities of the reference market, cycled for more than
/// three sellers.
pub const REFERENCE_BETAS: [f64; 3] = [0.71, 0.915, 0.97];
pub const DEFAULT_T_LIST: [usize; 5] = [100, 200, 400, 800, 1600];
pub const DEFAULT_NOISE_HALF_WIDTH: f64 = 0.03;

/// The reference market with `n` sellers: links `Phi(u - i + 1)` for
/// one-based `i`, `gamma_ij = sqrt((1 - beta_i^2) / (n - 1))`, price boxes
/// `[0, 3]` and uniform demand noise.
pub fn build_reference_market(n: usize, horizon: usize, noise_half_width: f64, seed: u64) -> Result<MarketConfig> {
    let sellers = reference_sellers(n)?;
    let mut market = MarketConfig::new(sellers, horizon, seed)?;
    market.noise = vec![Noise::Uniform { half_width: noise_half_width }; n];
    let cert = crate::equilibrium::check_uniqueness(&market.sellers)?;
    if !cert.passes {
        return Err(Error::config(format!(
            "reference market with {n} sellers fails the uniqueness certificate (L_gamma = {:.4})",
            cert.l_gamma
        )));
    }
    Ok(market)
}

/// Sellers of the reference market, without the certificate check.
pub fn reference_sellers(n: usize) -> Result<Vec<SellerModel>> {
    if !(2..=8).contains(&n) {
        return Err(Error::precondition(format!("reference market needs 2..=8 sellers, got {n}")));
    }
    let price_box = Interval::new(0.0, 3.0)?;
    let p_max = 3.0 * (n as f64).sqrt();
    let domain = Interval::symmetric(p_max)?;
    (0..n)
        .map(|i| {
            let beta = REFERENCE_BETAS[i % REFERENCE_BETAS.len()];
            let g = ((1.0 - beta * beta) / (n - 1) as f64).sqrt();
            let link = LinkSpec::probit_shift(i as f64, domain)?;
            SellerModel::new(i, beta, vec![g; n - 1], price_box, link)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub n_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub noise_half_width: f64,
    pub xi: f64,
    pub c_tau: f64,
    pub kappa: f64,
    /// Write one per-period CSV per replication.
    pub write_periods: bool,
    pub require_uniqueness: bool,
}

impl ExperimentPlan {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            n_list: vec![2],
            t_list: DEFAULT_T_LIST.to_vec(),
            replications: 10,
            seed: 2024,
            out_dir: out_dir.into(),
            noise_half_width: DEFAULT_NOISE_HALF_WIDTH,
            xi: 5.0 / 7.0,
            c_tau: 1.0,
            kappa: 0.5,
            write_periods: true,
            require_uniqueness: true,
        }
    }

    /// The market for one `(n, T)` cell.
    pub fn market(&self, n: usize, horizon: usize) -> Result<MarketConfig> {
        let seed = derive_seed(&[self.seed, n as u64, horizon as u64]);
        let mut market = if self.require_uniqueness {
            build_reference_market(n, horizon, self.noise_half_width, seed)?
        } else {
            let mut m = MarketConfig::new(reference_sellers(n)?, horizon, seed)?;
            m.noise = vec![Noise::Uniform { half_width: self.noise_half_width }; n];
            m
        };
        market.xi = self.xi;
        market.c_tau = self.c_tau;
        market.split = vec![self.kappa; n];
        market.require_uniqueness = self.require_uniqueness;
        Ok(market)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::config("at least one replication is required"));
        }
        if self.n_list.is_empty() {
            return Err(Error::config("the seller-count list is empty"));
        }
        if self.t_list.is_empty() {
            return Err(Error::config("the horizon list is empty"));
        }
        if self.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("horizons must be strictly increasing"));
        }
        for &n in &self.n_list {
            for &t in &self.t_list {
                self.market(n, t)?.validate()?;
            }
        }
        Ok(())
    }
}

/// A replication that did not complete.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub n: usize,
    pub horizon: usize,
    pub rep: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    /// `(n, path to summary.csv)` per seller count.
    pub summaries: Vec<(usize, PathBuf)>,
    pub failures: Vec<Failure>,
}

/// Runs every `(n, T, rep)` cell of the plan. Replications run in parallel;
/// files are written in a fixed order, so the output tree is a function of
/// the plan alone.
///
/// Layout: `out/N{n}/summary.csv`, `out/N{n}/failures.csv` and, when enabled,
/// `out/N{n}/T{T}/rep{r}.csv`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for &n in &plan.n_list {
        let dir = plan.out_dir.join(format!("N{n}"));
        fs::create_dir_all(&dir)?;
        let mut rows: Vec<SummaryRow> = Vec::new();
        let mut cell_failures: Vec<Failure> = Vec::new();
        for &horizon in &plan.t_list {
            let template = plan.market(n, horizon)?;
            let results: Vec<(usize, Result<EpisodeLog>)> = (0..plan.replications)
                .into_par_iter()
                .map(|rep| {
                    let mut market = template.clone();
                    market.replication = rep as u64;
                    (rep, run_episode(&market))
                })
                .collect();
            if plan.write_periods {
                fs::create_dir_all(dir.join(format!("T{horizon}")))?;
            }
            for (rep, result) in results {
                let log = match result {
                    Ok(log) => log,
                    Err(e) => {
                        cell_failures.push(Failure {
                            n,
                            horizon,
                            rep,
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                if plan.write_periods {
                    log.save_period_csv(dir.join(format!("T{horizon}")).join(format!("rep{rep}.csv")))?;
                }
                if let EpisodeStatus::Aborted { t, seller, message } = &log.status {
                    cell_failures.push(Failure {
                        n,
                        horizon,
                        rep,
                        message: format!("aborted at t = {t}, seller {}: {message}", seller + 1),
                    });
                    continue;
                }
                let errs = log.theta_errors(&template.sellers);
                for i in 0..n {
                    rows.push(SummaryRow {
                        horizon,
                        rep,
                        seller: i + 1,
                        cum_regret: log.cum_regret[i],
                        ne_dist_sq_final: log.ne_dist_sq_final,
                        theta_err: errs[i],
                    });
                }
            }
        }
        let summary = dir.join("summary.csv");
        scaling::write_summary(&summary, &rows)?;
        write_failures(&dir.join("failures.csv"), &cell_failures)?;
        summaries.push((n, summary));
        failures.extend(cell_failures);
    }
    Ok(ExperimentOutput { summaries, failures })
}

fn write_failures(path: &Path, failures: &[Failure]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "N,T,rep,message")?;
    for f in failures {
        writeln!(out, "{},{},{},\"{}\"", f.n, f.horizon, f.rep, f.message.replace('"', "'"))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_market_two_sellers() {
        let m = build_reference_market(2, 100, 0.03, 1).unwrap();
        for s in &m.sellers {
            let norm: f64 = s.theta().iter().map(|t| t * t).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            let l1: f64 = s.gamma().iter().map(|g| g.abs()).sum();
            assert!(l1 < 1.0 / 2f64.sqrt());
        }
        assert!((m.sellers[0].gamma()[0] - 0.704_202).abs() < 1e-6);
        assert!(build_reference_market(1, 100, 0.03, 1).is_err());
        assert!(build_reference_market(9, 100, 0.03, 1).is_err());
    }

    #[test]
    fn plan_validation() {
        let mut plan = ExperimentPlan::new("unused");
        plan.t_list.clear();
        assert!(matches!(plan.validate(), Err(Error::Config(_))));
        let mut plan = ExperimentPlan::new("unused");
        plan.t_list = vec![200, 100];
        assert!(plan.validate().is_err());
        let mut plan = ExperimentPlan::new("unused");
        plan.replications = 0;
        assert!(plan.validate().is_err());
    }
}
