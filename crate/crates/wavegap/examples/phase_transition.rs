//! Front of the phase-transition model with diffusion and its certificate.

use wavegap::discretize::Grid;
use wavegap::gap::{certify, GapOptions};
use wavegap::model::{BistableSystem, Kernel, Nonlinearity};
use wavegap::spectral::{analyze, SpectralOptions};
use wavegap::wave::{solve_wave, WaveOptions};

fn main() -> wavegap::Result<()> {
    let sys = BistableSystem::new(Kernel::exponential(1.0)?, Nonlinearity::PhaseTransition { lambda: 1.0, k: 2.0, a: 0.35 }, 0.25)?;
    let sol = solve_wave(&sys, &Grid::new(20.0, 1024)?, None, &WaveOptions::default())?;
    println!("c = {:+.8}, residual {:.1e}", sol.c, sol.residual);
    let (op, data) = analyze(&sol, &SpectralOptions::default())?;
    let cert = certify(&sol, &op, &data, &GapOptions { n_samples: 200, seed: 3 })?;
    println!("κ = {:.5}, λ_gap = {:.5}, certified {}", cert.kappa, cert.lambda_gap, cert.certified);
    Ok(())
}
