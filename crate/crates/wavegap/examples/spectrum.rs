//! Null vectors of the frozen operator, the weights μ and μ*, and a few
//! evaluations of the energy identity.
//!
//! ```bash
//! cargo run --release --example spectrum
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavegap::discretize::Grid;
use wavegap::spectral::{analyze, energy_identity_residual, windowed_test_function, SpectralOptions};
use wavegap::wave::{neural_field, solve_wave, WaveOptions};

fn main() -> wavegap::Result<()> {
    let sys = neural_field(20.0, 0.4, 1.0)?;
    let sol = solve_wave(&sys, &Grid::new(20.0, 2048)?, None, &WaveOptions::default())?;
    let (op, data) = analyze(&sol, &SpectralOptions::default())?;
    println!("‖L# û_x‖  = {:.2e}", data.ux_residual);
    println!("‖L#* ψ‖   = {:.2e}", data.psi_residual);
    println!("Z_μ = {:.6}  Z_μ* = {:.6}", data.z_mu, data.z_mu_adjoint);
    println!("ρ decay rates {:?}", data.rho_rates);
    println!("trusted nodes {} of {}", data.trusted_indices().count(), data.n());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let h = windowed_test_function(&data.x, 10.0, &mut rng);
        let e = energy_identity_residual(&op, &data, &h, 20.0)?;
        println!(
            "lhs {:+.6e}  rhs {:+.6e}  residual {:.1e} (discrete {:.1e})",
            e.lhs, e.rhs, e.residual, e.discrete_residual
        );
    }
    Ok(())
}
