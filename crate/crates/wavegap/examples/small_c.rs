//! κ(c) on |c| < c* and the 𝔪-weighted gap for a slow and a symmetric wave.

use wavegap::discretize::Grid;
use wavegap::gap::contractivity_m;
use wavegap::smallc::certify_small_c;
use wavegap::spectral::{analyze, SpectralOptions};
use wavegap::wave::{neural_field, solve_wave, WaveOptions};

fn main() -> wavegap::Result<()> {
    for (beta, theta) in [(8.0, 0.5), (12.0, 0.45), (20.0, 0.4)] {
        let sys = neural_field(beta, theta, 1.0)?;
        let sol = solve_wave(&sys, &Grid::new(20.0, 1024)?, None, &WaveOptions::default())?;
        let (op, data) = analyze(&sol, &SpectralOptions::default())?;
        let m = contractivity_m(&op, &data, &sys.kernel)?;
        let cert = certify_small_c(&op, &data, &sol.grid, &sys.kernel, m, true)?;
        println!("β={beta} θ={theta}: c = {:+.5}, c* = {:.5}, κ₀ = {:.5}", cert.c_solver, cert.c_star, cert.kappa0);
        for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let c = f * cert.c_star;
            println!("   κ({c:.4}) = {:+.6}", cert.kappa.eval(c));
        }
        if let Some(n) = cert.nfe_condition {
            println!("   neural-field condition holds {} (margin {:+.4})", n.holds, n.margin);
        }
        println!("   𝔪-gap λ = {:+.5} (tol {:.1e}), Z = {:.4}, holds {}", cert.m_gap.lambda, cert.m_gap.tol, cert.z, cert.holds);
    }
    Ok(())
}
