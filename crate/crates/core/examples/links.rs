//! Link transforms, virtual valuations and the two s-concavity criteria.

use semipar_pricing::links::{d_transform, h_transform};
use semipar_pricing::{Interval, LinkSpec};

fn main() -> semipar_pricing::Result<()> {
    for &(s, y) in &[(1.0, 2.0), (0.0, 1.0), (-1.0, 0.5), (0.5, 9.0)] {
        let x = d_transform(s, y)?;
        println!("s = {s:>4}: d({y}) = {x:>8.4}, h(d(y)) = {}", h_transform(s, x)?);
    }

    let domain = Interval::symmetric(3.0)?;
    let links = [
        ("probit", LinkSpec::probit_shift(0.0, domain)?),
        ("exponential", LinkSpec::exponential(domain)?),
        ("linear", LinkSpec::linear_affine(4.0, domain)?),
    ];
    for (name, link) in &links {
        let phi = link.virtual_valuation(0.0)?;
        let back = link.invert_virtual_valuation(phi)?;
        let report = link.check_shape(201)?;
        println!(
            "{name:>11}: phi(0) = {phi:.4}, phi^-1(phi(0)) = {:.2e}, g(0.5) = {:.4}, s-concave = {}, min phi' = {:.4}",
            back.u,
            link.g_map(0.5)?,
            report.s_concave_ok,
            report.min_phi_prime
        );
    }
    Ok(())
}
