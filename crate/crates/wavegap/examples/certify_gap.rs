//! Full spectral-gap certificate for one wave with every hypothesis listed.
//!
//! ```bash
//! cargo run --release --example certify_gap -- 8 0.5
//! ```

use wavegap::discretize::Grid;
use wavegap::gap::{certify, GapOptions};
use wavegap::spectral::{analyze, SpectralOptions};
use wavegap::wave::{neural_field, solve_wave, WaveOptions};

fn main() -> wavegap::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (beta, theta) = match args[..] {
        [b, t, ..] => (b, t),
        _ => (20.0, 0.4),
    };
    let sys = neural_field(beta, theta, 1.0)?;
    let sol = solve_wave(&sys, &Grid::new(20.0, 1024)?, None, &WaveOptions::default())?;
    let (op, data) = analyze(&sol, &SpectralOptions::default())?;
    let cert = certify(&sol, &op, &data, &GapOptions { n_samples: 300, seed: 0 })?;
    for h in &cert.hypotheses {
        println!("[{}] {}: {}", if h.passed { "x" } else { " " }, h.name, h.detail);
    }
    println!("κ₀ = {:.5} in [{:.5}, {:.5}], M = {:.4}, γ = {:.4}", cert.kappa0_direct, cert.kappa0_bracket.0, cert.kappa0_bracket.1, cert.m, cert.gamma);
    println!("κ = {:.5} (conservative {:.5})", cert.kappa, cert.kappa_conservative);
    println!("λ_gap = {:.5} ± {:.1e}, certified {}", cert.lambda_gap, cert.gap_tol, cert.certified);
    Ok(())
}
