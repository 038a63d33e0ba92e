//! A short Monte-Carlo run of the noisy neural field around its standing
//! wave: exit frequency from the ball of radius b* and the decay of the
//! mean squared deviation.
//!
//! ```bash
//! cargo run --release --example sde_ensemble
//! ```

use wavegap::discretize::Grid;
use wavegap::gap::contractivity_m;
use wavegap::smallc::certify_small_c;
use wavegap::spectral::{analyze, SpectralOptions};
use wavegap::stochastic::{even_bump, run_ensemble, stability_constants, supermartingale_diagnostic, EnsembleConfig, NoiseModel, Simulator};
use wavegap::wave::{neural_field, solve_wave, WaveOptions};

fn main() -> wavegap::Result<()> {
    let sys = neural_field(8.0, 0.5, 1.0)?;
    let sol = solve_wave(&sys, &Grid::new(20.0, 256)?, None, &WaveOptions::default())?;
    let (op, data) = analyze(&sol, &SpectralOptions::default())?;
    let m = contractivity_m(&op, &data, &sys.kernel)?;
    let cert = certify_small_c(&op, &data, &sol.grid, &sys.kernel, m, true)?;
    let consts = stability_constants(&sol, cert.kappa_of_c, cert.z, 2.0 * cert.z, 0.05)?;
    println!(
        "κ {:.4}  Z {:.4}  b* {:.3e}  κ̃ {:.4}  in hypothesis {}",
        consts.kappa, consts.z, consts.b_star, consts.kappa_tilde, consts.in_hypothesis
    );

    let noise = NoiseModel::bumps(&sol.grid.x, 32, 0.05)?;
    let sim = Simulator::new(&sol, noise, consts.m, 0.01)?;
    let v0 = even_bump(&sol, 0.25 * consts.b_star)?;
    let cfg = EnsembleConfig { n_traj: 32, t_max: 10.0 / consts.kappa_tilde, checkpoints: 10, seed: 1 };
    let stats = run_ensemble(&sim, &consts, &v0, &cfg)?;
    println!(
        "{} / {} escapes, Wilson 95% CI [{:.3}, {:.3}], bound {:.4}",
        stats.escapes, stats.n_traj, stats.wilson_ci.0, stats.wilson_ci.1, stats.bound
    );
    let sm = supermartingale_diagnostic(&stats, consts.kappa_tilde);
    for p in &sm.curve {
        println!("  t={:>7.2}  E e^(κ̃t)‖v‖² = {:.4e} ± {:.1e}", p.t, p.mean, p.standard_error);
    }
    Ok(())
}
