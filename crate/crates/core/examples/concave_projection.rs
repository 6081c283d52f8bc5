//! Least-squares projection onto concave sequences.

use semipar_pricing::shape::{max_slope_increase, project_concave, project_concave_weighted};

fn main() -> semipar_pricing::Result<()> {
    let v = [0.0, 2.0, 1.0, 3.0, 0.5, -1.0];
    let z = project_concave(&v);
    println!("input      {v:?}");
    println!("projection {z:?}");
    let x: Vec<f64> = (0..v.len()).map(|k| k as f64).collect();
    println!("max slope increase {:.2e}", max_slope_increase(&x, &z));

    let x = [0.0, 0.1, 0.5, 2.0, 2.2, 4.0];
    let w = [1.0, 5.0, 1.0, 0.5, 2.0, 1.0];
    let z = project_concave_weighted(&x, &v, &w)?;
    println!("weighted on uneven knots {z:?}");
    Ok(())
}
