//! One explore-then-best-respond episode in the reference market.

use semipar_pricing::engine::{Phase, run_episode};
use semipar_pricing::harness::build_reference_market;

fn main() -> semipar_pricing::Result<()> {
    let market = build_reference_market(2, 800, 0.03, 42)?;
    let log = run_episode(&market)?;
    println!("tau = {}, split = {:?}", log.tau, market.split_sizes(0));
    println!("equilibrium {:?}", log.equilibrium.p_star);
    for (i, est) in log.estimates.iter().enumerate() {
        let Some(est) = est else { continue };
        println!(
            "seller {}: theta~ = {:?}, {} knots, regret {:.4}",
            i + 1,
            est.theta.theta_tilde,
            est.fit.knots.len(),
            log.cum_regret[i]
        );
    }
    let last = log.rows.iter().rev().find(|r| r.phase == Phase::Exploit);
    if let Some(row) = last {
        println!("last prices {:?}, squared distance {:.2e}", row.prices, row.ne_dist_sq);
    }
    Ok(())
}
