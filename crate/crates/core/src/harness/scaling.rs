use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub rep: usize,
    /// One-based.
    pub seller: usize,
    pub cum_regret: f64,
    pub ne_dist_sq_final: f64,
    pub theta_err: f64,
}

pub(crate) const SUMMARY_COLUMNS: [&str; 6] = ["T", "rep", "seller", "cum_regret", "ne_dist_sq_final", "theta_err"];

pub(crate) fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(SUMMARY_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a summary CSV, reporting missing columns as a format error.
pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    for col in SUMMARY_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::format(path, format!("missing column {col}")));
        }
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Cumulative regret, one series per seller.
    Regret,
    /// Final squared distance to the equilibrium, one series per episode.
    NeDist,
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::Regret => "cum_regret",
            Metric::NeDist => "ne_dist_sq_final",
        }
    }

    fn value(self, row: &SummaryRow) -> f64 {
        match self {
            Metric::Regret => row.cum_regret,
            Metric::NeDist => row.ne_dist_sq_final,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regret" | "cum_regret" => Ok(Metric::Regret),
            "ne_dist" | "ne-dist" | "ne_dist_sq_final" => Ok(Metric::NeDist),
            other => Err(Error::config(format!("unknown metric {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSlope {
    /// One-based seller, `None` for episode-level metrics.
    pub seller: Option<usize>,
    pub slope: f64,
    pub intercept: f64,
    /// `1.96 sd / sqrt(R)` of per-replication slopes; `None` with fewer than
    /// two usable replications.
    pub half_width: Option<f64>,
    /// `(T, mean over replications)`.
    pub points: Vec<(usize, f64)>,
    /// `(T, standard error of the mean)`.
    pub std_errors: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub metric: Metric,
    pub series: Vec<SeriesSlope>,
    /// Nonpositive values left out of the log-log fit.
    pub excluded: usize,
}

/// Least-squares fit of `log(mean metric)` against `log T`.
pub fn fit_scaling_slope(rows: &[SummaryRow], metric: Metric) -> Result<ScalingReport> {
    let mut by_series: BTreeMap<Option<usize>, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        let key = match metric {
            Metric::Regret => Some(r.seller),
            Metric::NeDist => None,
        };
        if metric == Metric::NeDist && r.seller != 1 {
            continue;
        }
        by_series.entry(key).or_default().push(r);
    }
    let mut excluded = 0;
    let mut series = Vec::new();
    for (seller, rows) in by_series {
        let mut cells: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for r in rows {
            let v = metric.value(r);
            if v > 0.0 && v.is_finite() {
                cells.entry(r.horizon).or_default().push((r.rep, v));
            } else {
                excluded += 1;
            }
        }
        if cells.len() < 3 {
            return Err(Error::precondition(format!(
                "scaling fit needs at least 3 distinct T values, got {}",
                cells.len()
            )));
        }
        let points: Vec<(usize, f64)> = cells
            .iter()
            .map(|(&t, v)| (t, v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64))
            .collect();
        let std_errors = cells
            .iter()
            .map(|(&t, v)| {
                let k = v.len() as f64;
                let mean = v.iter().map(|x| x.1).sum::<f64>() / k;
                let var = if v.len() > 1 {
                    v.iter().map(|x| (x.1 - mean).powi(2)).sum::<f64>() / (k - 1.0)
                } else {
                    0.0
                };
                (t, (var / k).sqrt())
            })
            .collect();
        let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
        let (slope, intercept) = ols(&xs, &ys);

        let mut per_rep: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
        for (&t, v) in &cells {
            for &(rep, x) in v {
                per_rep.entry(rep).or_default().push(((t as f64).ln(), x.ln()));
            }
        }
        let rep_slopes: Vec<f64> = per_rep
            .values()
            .filter(|pts| pts.len() >= 2)
            .map(|pts| {
                let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
                ols(&x, &y).0
            })
            .collect();
        let half_width = (rep_slopes.len() >= 2).then(|| {
            let k = rep_slopes.len() as f64;
            let m = rep_slopes.iter().sum::<f64>() / k;
            let sd = (rep_slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            1.96 * sd / k.sqrt()
        });
        series.push(SeriesSlope {
            seller,
            slope,
            intercept,
            half_width,
            points,
            std_errors,
        });
    }
    if series.is_empty() {
        return Err(Error::precondition("summary has no rows"));
    }
    Ok(ScalingReport {
        metric,
        series,
        excluded,
    })
}

/// `(slope, intercept)` of the least-squares line through `(x, y)`.
pub(crate) fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(f: impl Fn(f64) -> f64, ts: &[usize]) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for &t in ts {
            for rep in 0..3 {
                for seller in 1..=2 {
                    let v = f(t as f64);
                    out.push(SummaryRow {
                        horizon: t,
                        rep,
                        seller,
                        cum_regret: v,
                        ne_dist_sq_final: v,
                        theta_err: 0.1,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn exact_power_laws() {
        let ts = [100, 200, 400, 800, 1600];
        let r = fit_scaling_slope(&rows(|t| t.powf(5.0 / 7.0), &ts), Metric::Regret).unwrap();
        assert_eq!(r.series.len(), 2);
        for s in &r.series {
            assert!((s.slope - 5.0 / 7.0).abs() < 1e-9);
        }
        let r = fit_scaling_slope(&rows(|t| t.powf(-2.0 / 7.0), &ts), Metric::NeDist).unwrap();
        assert_eq!(r.series.len(), 1);
        assert!((r.series[0].slope + 2.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn needs_three_horizons() {
        assert!(matches!(
            fit_scaling_slope(&rows(|t| t, &[100, 200]), Metric::Regret),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn nonpositive_values_are_counted() {
        let mut data = rows(|t| t, &[100, 200, 400]);
        data[0].cum_regret = -1.0;
        let r = fit_scaling_slope(&data, Metric::Regret).unwrap();
        assert_eq!(r.excluded, 1);
    }
}
