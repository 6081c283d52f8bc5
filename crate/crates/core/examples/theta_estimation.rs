//! Linear index estimation under Gaussian exploration.

use semipar_pricing::harness::reference_sellers;
use semipar_pricing::rng::{Purpose, stream};
use semipar_pricing::theta::{ExplorationDistribution, SurrogateLink, fit_linear_theta, population_scaling};

fn main() -> semipar_pricing::Result<()> {
    let seller = reference_sellers(2)?.remove(0);
    let dist = ExplorationDistribution::diagonal(vec![1.5, 1.5], &[0.25, 0.25])?;
    let lambda = population_scaling(seller.link(), seller.theta(), &dist, 100_000, &mut stream(7, 0, 0, Purpose::MonteCarlo))?;
    println!("theta = {:?}, population scaling = {lambda:.4}", seller.theta());

    for n in [100, 1000, 10_000, 100_000] {
        let mut rng = stream(7, n as u64, 0, Purpose::Design);
        let prices: Vec<Vec<f64>> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let demands: Vec<f64> = prices.iter().map(|p| seller.expected_demand(p)).collect();
        let est = fit_linear_theta(&prices, &demands, 0)?;
        println!("n = {n:>6}: theta~ = {:?}, error = {:.2e}", est.theta_tilde, est.error(seller.theta()));
    }

    let tilted = [-0.75, (1.0f64 - 0.75 * 0.75).sqrt()];
    let surrogate = SurrogateLink::new(seller.link(), &tilted, seller.theta(), &dist, 20_000, &mut stream(7, 0, 0, Purpose::MonteCarlo))?;
    for u in [-1.0, 0.0, 1.0] {
        let est = surrogate.eval(u);
        println!("u = {u:>4}: psi = {:.4}, surrogate = {:.4} +/- {:.4}", seller.link().psi(u), est.value, est.std_error);
    }
    Ok(())
}
