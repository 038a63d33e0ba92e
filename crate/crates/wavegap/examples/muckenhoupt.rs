//! Muckenhoupt constants against the direct Poincaré constant on densities
//! with known answers.

use wavegap::discretize::Grid;
use wavegap::gap::{muckenhoupt, poincare_direct};

fn report(name: &str, grid: &Grid, mu: &[f64], exact: Option<f64>) -> wavegap::Result<()> {
    let b = muckenhoupt(&grid.x, mu, grid.h)?;
    let k0 = poincare_direct(mu, grid.h)?;
    let (lo, hi) = b.bracket();
    print!("{name:<18} B₁ {:.5}  B₂ {:.5}  κ₀ {:.5} in [{lo:.5}, {hi:.5}]", b.b1, b.b2, k0);
    match exact {
        Some(e) => println!("  (B exact {e:.5})"),
        None => println!(),
    }
    Ok(())
}

fn main() -> wavegap::Result<()> {
    let grid = Grid::new(20.0, 4001)?;
    for alpha in [0.5, 1.0, 2.0] {
        let mu: Vec<f64> = grid.x.iter().map(|x| 0.5 * alpha * (-alpha * x.abs()).exp()).collect();
        report(&format!("Laplace α={alpha}"), &grid, &mu, Some(1.0 / (alpha * alpha)))?;
    }
    let mu: Vec<f64> = grid.x.iter().map(|x| (-0.5 * x * x).exp()).collect();
    report("Gaussian", &grid, &mu, None)?;
    let mu: Vec<f64> = grid.x.iter().map(|x| 1.0 / x.cosh().powi(2)).collect();
    report("sech²", &grid, &mu, None)?;
    Ok(())
}
