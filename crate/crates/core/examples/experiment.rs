//! A small replication grid with slope fits and plots.

use semipar_pricing::harness::{ExperimentPlan, Metric, emit_plots, fit_scaling_slope, read_summary, run_experiment};

fn main() -> semipar_pricing::Result<()> {
    let out = std::env::temp_dir().join("semipar-experiment");
    let mut plan = ExperimentPlan::new(&out);
    plan.t_list = vec![100, 200, 400];
    plan.replications = 4;
    plan.write_periods = false;
    let output = run_experiment(&plan)?;
    for (n, summary) in &output.summaries {
        let rows = read_summary(summary)?;
        for metric in [Metric::Regret, Metric::NeDist] {
            for s in fit_scaling_slope(&rows, metric)?.series {
                println!("N = {n}, {}, {:?}: slope {:.3}", metric.column(), s.seller, s.slope);
            }
        }
        emit_plots(summary, summary.parent().unwrap())?;
    }
    println!("{} failures, output in {}", output.failures.len(), out.display());
    Ok(())
}
