use std::path::Path;

use semipar_pricing::Error;
use semipar_pricing::harness::{
    ExperimentConfig, ExperimentPlan, Metric, SummaryRow, build_reference_market, emit_plots, fit_scaling_slope,
    read_summary, run_experiment,
};

fn small_plan(out: &Path) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(out);
    plan.t_list = vec![100, 200, 400];
    plan.replications = 2;
    plan
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn write_rows(path: &Path, rows: &[SummaryRow]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    for r in rows {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn identical_plans_give_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out_a = run_experiment(&small_plan(&a)).unwrap();
    run_experiment(&small_plan(&b)).unwrap();
    assert_eq!(tree(&a), tree(&b));
    assert!(out_a.failures.is_empty());

    let rows = read_summary(&out_a.summaries[0].1).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    for t in [100, 200, 400] {
        for seller in 1..=2 {
            assert_eq!(rows.iter().filter(|r| r.horizon == t && r.seller == seller).count(), 2);
        }
    }
    assert!(a.join("N2/T400/rep1.csv").exists());
    assert!(a.join("N2/failures.csv").exists());
}

#[test]
fn invalid_plans_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = small_plan(dir.path());
    plan.t_list.clear();
    assert!(matches!(run_experiment(&plan), Err(Error::Config(_))));
    let mut plan = small_plan(dir.path());
    plan.n_list = vec![3];
    assert!(run_experiment(&plan).unwrap_err().is_validation());
    plan.require_uniqueness = false;
    plan.validate().unwrap();
}

#[test]
fn reference_market_constants() {
    let m = build_reference_market(2, 100, 0.03, 0).unwrap();
    let g = (1.0f64 - 0.71 * 0.71).sqrt();
    assert!((m.sellers[0].gamma()[0] - g).abs() < 1e-15);
    assert!(g < std::f64::consts::FRAC_1_SQRT_2);
    assert_eq!(m.sellers[1].beta(), 0.915);
    assert!(matches!(build_reference_market(1, 100, 0.03, 0), Err(Error::Precondition(_))));
}

#[test]
fn plots_are_well_formed_svg() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for t in [100usize, 200, 400, 800] {
        for rep in 0..3 {
            for seller in 1..=2 {
                rows.push(SummaryRow {
                    horizon: t,
                    rep,
                    seller,
                    cum_regret: (t as f64).powf(5.0 / 7.0) * (1.0 + 0.05 * rep as f64),
                    ne_dist_sq_final: (t as f64).powf(-2.0 / 7.0),
                    theta_err: 0.1,
                });
            }
        }
    }
    let summary = dir.path().join("summary.csv");
    write_rows(&summary, &rows);
    let files = emit_plots(&summary, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(text.contains("slope"));
    }
    let report = fit_scaling_slope(&read_summary(&summary).unwrap(), Metric::NeDist).unwrap();
    assert!((report.series[0].slope + 2.0 / 7.0).abs() < 1e-9);
}

#[test]
fn single_horizon_and_flat_plots() {
    let dir = tempfile::tempdir().unwrap();
    let row = |t: usize, rep: usize, v: f64| SummaryRow {
        horizon: t,
        rep,
        seller: 1,
        cum_regret: v,
        ne_dist_sq_final: v,
        theta_err: 0.0,
    };
    let single = dir.path().join("single.csv");
    write_rows(&single, &[row(100, 0, 2.0), row(100, 1, 3.0)]);
    let out = dir.path().join("single");
    for f in emit_plots(&single, &out).unwrap() {
        let text = std::fs::read_to_string(f).unwrap();
        roxmltree::Document::parse(&text).unwrap();
        assert!(!text.contains("slope"));
        assert!(text.contains("<circle"));
    }

    let flat = dir.path().join("flat.csv");
    write_rows(&flat, &[row(100, 0, 1.0), row(200, 0, 1.0), row(400, 0, 1.0)]);
    let out = dir.path().join("flat");
    for f in emit_plots(&flat, &out).unwrap() {
        let text = std::fs::read_to_string(f).unwrap();
        roxmltree::Document::parse(&text).unwrap();
        assert!(text.contains("<polyline"));
    }
}

#[test]
fn missing_columns_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "T,rep,seller,cum_regret\n100,0,1,2.0\n").unwrap();
    assert!(matches!(emit_plots(&path, dir.path()), Err(Error::Format { .. })));
    assert!(matches!(read_summary(&path), Err(Error::Format { .. })));
}

#[test]
fn config_file_drives_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "t_list = [100, 200, 400]\nreps = 3\nseed = 7\nnoise_half_width = 0.3\n").unwrap();
    let plan = ExperimentConfig::load(&path).unwrap().plan();
    assert_eq!(plan.replications, 3);
    assert_eq!(plan.seed, 7);
    assert_eq!(plan.noise_half_width, 0.3);
    assert_eq!(plan.n_list, vec![2]);
    std::fs::write(&path, "reps = \"many\"\n").unwrap();
    assert!(matches!(ExperimentConfig::load(&path), Err(Error::Format { .. })));
}
