//! Log-concave link regression and its interior uniform error.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use semipar_pricing::Interval;
use semipar_pricing::links::normal_cdf;
use semipar_pricing::rng::{Purpose, stream};
use semipar_pricing::shape::{fit_transformed_concave, uniform_error};

fn main() -> semipar_pricing::Result<()> {
    let window = Interval::new(-2.0, 2.0)?;
    let noise = Normal::new(0.0, 0.1).unwrap();
    for m in [100, 1000, 10_000] {
        let mut rng = stream(11, m as u64, 0, Purpose::Design);
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = w.iter().map(|&u| normal_cdf(u) + noise.sample(&mut rng)).collect();
        let fit = fit_transformed_concave(&w, &y, 0.0, None)?;
        let report = uniform_error(&fit, normal_cdf, m, window, 0.5);
        println!(
            "m = {m:>5}: {} iterations, converged = {}, sup error on [{:.3}, {:.3}] = {:.4}",
            fit.iterations, fit.converged, report.interior_window.lo, report.interior_window.hi, report.sup_error
        );
    }
    Ok(())
}
