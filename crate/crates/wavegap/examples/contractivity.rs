//! Sampled check of `Var_μ(P₀h) ≤ γ Var_μ*(h)` on random windowed tests.

use wavegap::discretize::Grid;
use wavegap::gap::{contractivity_m, contractivity_sample, gamma, poincare_direct};
use wavegap::spectral::{analyze, SpectralOptions};
use wavegap::wave::{neural_field, solve_wave, WaveOptions};

fn main() -> wavegap::Result<()> {
    let sys = neural_field(20.0, 0.4, 1.0)?;
    let sol = solve_wave(&sys, &Grid::new(20.0, 1024)?, None, &WaveOptions::default())?;
    let (op, data) = analyze(&sol, &SpectralOptions::default())?;
    let m = contractivity_m(&op, &data, &sys.kernel)?;
    let idx: Vec<usize> = data.trusted_indices().collect();
    let k0 = poincare_direct(&data.mu[idx[0]..=idx[idx.len() - 1]], data.h)?;
    let g = gamma(k0, m);
    for n in [10, 100, 1000] {
        let s = contractivity_sample(&op, &data, g, n, 10.0, 42);
        println!(
            "n={n:<5} evaluated {:<5} skipped {:<3} worst {:.4} / γ {:.4}  violations {}",
            s.evaluated, s.skipped, s.worst_ratio, g, s.violations
        );
    }
    Ok(())
}
