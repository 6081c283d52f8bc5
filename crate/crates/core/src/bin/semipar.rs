use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semipar_pricing::engine::run_episode;
use semipar_pricing::equilibrium::{PicardOptions, box_midpoints, picard_solve};
use semipar_pricing::harness::{
    ExperimentConfig, Metric, ScalingReport, emit_plots, fit_scaling_slope, reference_sellers, read_summary, run_experiment,
};
use semipar_pricing::shape::fit_transformed_concave;
use semipar_pricing::{Error, Result};

#[derive(Parser)]
#[command(name = "semipar", version, about = "Semi-parametric competitive pricing experiments")]
struct Cli {
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Run markets whose uniqueness certificate fails.
    #[arg(long, global = true)]
    force_uniqueness_off: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode of the reference market and write its per-period CSV.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        rep: u64,
    },
    /// Run the full replication grid, then fit slopes and draw plots.
    ReproducePaper,
    /// Solve the reference market's equilibrium by Picard iteration.
    NeSolve {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit an s-concave link to a CSV with columns `w,y`.
    FitShape {
        input: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        s: f64,
    },
    /// Log-log slope of a summary column against T.
    Scaling {
        summary: PathBuf,
        #[arg(long, default_value = "regret")]
        metric: String,
    },
    /// Render regret and equilibrium-distance SVGs from a summary.
    Plot { summary: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(reps) = cli.reps {
        cfg.reps = reps;
    }
    if cli.force_uniqueness_off {
        cfg.require_uniqueness = false;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Simulate { n, horizon, rep } => {
            cfg.n = n.unwrap_or(cfg.n);
            cfg.horizon = horizon.unwrap_or(cfg.horizon);
            let mut market = cfg.plan().market(cfg.n, cfg.horizon)?;
            market.replication = rep;
            let log = run_episode(&market)?;
            std::fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join(format!("episode_N{}_T{}_rep{rep}.csv", cfg.n, cfg.horizon));
            log.save_period_csv(&path)?;
            println!("tau = {}, status = {:?}", log.tau, log.status);
            for (i, r) in log.cum_regret.iter().enumerate() {
                println!("seller {}: cumulative regret {r:.6}", i + 1);
            }
            println!("final squared distance to equilibrium {:.6e}", log.ne_dist_sq_final);
            println!("wrote {}", path.display());
        }
        Command::ReproducePaper => {
            let plan = cfg.plan();
            let output = run_experiment(&plan)?;
            for (n, summary) in &output.summaries {
                let dir = summary.parent().unwrap_or(Path::new("."));
                emit_plots(summary, dir)?;
                let rows = read_summary(summary)?;
                for metric in [Metric::Regret, Metric::NeDist] {
                    match fit_scaling_slope(&rows, metric) {
                        Ok(report) => print_report(&format!("N = {n}"), &report),
                        Err(e) => println!("N = {n}, {}: {e}", metric.column()),
                    }
                }
            }
            for f in &output.failures {
                eprintln!("failed: N = {}, T = {}, rep {}: {}", f.n, f.horizon, f.rep, f.message);
            }
            println!("wrote {}", plan.out_dir.display());
        }
        Command::NeSolve { n } => {
            let n = n.unwrap_or(cfg.n);
            let sellers = reference_sellers(n)?;
            let opts = PicardOptions {
                require_certificate: cfg.require_uniqueness,
                ..PicardOptions::default()
            };
            let result = picard_solve(&sellers, &box_midpoints(&sellers), &opts)?;
            let mut text = Vec::new();
            result.write_csv(&mut text)?;
            print!("{}", String::from_utf8_lossy(&text));
            if cli.out.is_some() {
                std::fs::create_dir_all(&cfg.out)?;
                let path = cfg.out.join(format!("ne_N{n}.csv"));
                std::fs::write(&path, text)?;
                println!("wrote {}", path.display());
            }
        }
        Command::FitShape { input, s } => {
            let (w, y) = read_pairs(&input)?;
            let fit = fit_transformed_concave(&w, &y, s, None)?;
            println!(
                "{} knots, converged = {}, iterations = {}, objective = {:.6e}",
                fit.knots.len(),
                fit.converged,
                fit.iterations,
                fit.objective
            );
            let path = match &cli.out {
                Some(out) => out.clone(),
                None => input.with_extension("fit.csv"),
            };
            fit.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Scaling { summary, metric } => {
            let metric: Metric = metric.parse()?;
            let report = fit_scaling_slope(&read_summary(&summary)?, metric)?;
            print_report(&summary.display().to_string(), &report);
        }
        Command::Plot { summary } => {
            let dir = match &cli.out {
                Some(out) => out.clone(),
                None => summary.parent().unwrap_or(Path::new(".")).to_path_buf(),
            };
            for path in emit_plots(&summary, &dir)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn print_report(label: &str, report: &ScalingReport) {
    for s in &report.series {
        let who = s.seller.map_or("episode".to_string(), |i| format!("seller {i}"));
        let hw = s.half_width.map_or("n/a".to_string(), |h| format!("{h:.3}"));
        println!(
            "{label}, {}, {who}: slope {:.4} (+/- {hw}), intercept {:.4}",
            report.metric.column(),
            s.slope,
            s.intercept
        );
    }
    if report.excluded > 0 {
        println!("{label}: {} nonpositive values excluded", report.excluded);
    }
}

fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("missing column {name}"),
            })
    };
    let (iw, iy) = (col("w")?, col("y")?);
    let (mut w, mut y) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let parse = |k: usize| -> Result<f64> {
            record.get(k).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("bad number in row {:?}", record.position().map(|p| p.line())),
            })
        };
        w.push(parse(iw)?);
        y.push(parse(iy)?);
    }
    Ok((w, y))
}
