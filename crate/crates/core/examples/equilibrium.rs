//! Equilibrium of the two-seller reference market.

use semipar_pricing::equilibrium::{
    PicardOptions, box_midpoints, check_revenue_curvature, check_uniqueness, others, picard_solve,
};
use semipar_pricing::harness::reference_sellers;

fn main() -> semipar_pricing::Result<()> {
    let sellers = reference_sellers(2)?;
    let cert = check_uniqueness(&sellers)?;
    println!("L_gamma = {:.4}, passes = {}", cert.l_gamma, cert.passes);
    for (i, c) in cert.per_seller.iter().enumerate() {
        println!(
            "  seller {}: sup|g'| = {:.4}, |gamma|_1 = {:.4}, beta = {}",
            i + 1,
            c.g_prime_sup,
            c.gamma_l1,
            c.beta
        );
    }

    let eq = picard_solve(&sellers, &box_midpoints(&sellers), &PicardOptions::default())?;
    println!(
        "p* = {:?}, residual = {:.1e}, {} iterations, ratio = {:.4}",
        eq.p_star,
        eq.residual,
        eq.iterations,
        eq.empirical_ratio().unwrap_or(f64::NAN)
    );
    for (i, s) in sellers.iter().enumerate() {
        let comp = others(&eq.p_star, i);
        let grid = s.best_response_grid(&comp, 100_001)?;
        let prices: Vec<f64> = s.price_box().linspace(31);
        let curv = check_revenue_curvature(s, &[comp.clone()], &prices)?;
        println!(
            "seller {}: closed form {:.6}, grid {:.6}, min curvature {:.4}",
            i + 1,
            s.best_response(&comp)?,
            grid,
            curv
        );
    }
    Ok(())
}
