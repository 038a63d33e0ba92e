//! Three estimates of the wave speed: the Newton solve, the closed-form
//! neural-field expression and direct time integration.
//!
//! ```bash
//! cargo run --release --example speed_triangulation
//! ```

use wavegap::discretize::Grid;
use wavegap::wave::{measure_speed_by_evolution, neural_field, solve_wave, wave_speed_formula, WaveOptions};

fn main() -> wavegap::Result<()> {
    let sys = neural_field(20.0, 0.4, 1.0)?;
    let sol = solve_wave(&sys, &Grid::new(20.0, 2048)?, None, &WaveOptions::default())?;
    let formula = wave_speed_formula(&sol)?;
    let evo = measure_speed_by_evolution(&sys, &Grid::new(20.0, 1024)?, 30.0)?;
    println!("Newton      c = {:+.8}", sol.c);
    println!("formula     c = {:+.8}  (diff {:.1e})", formula, (formula - sol.c).abs());
    println!("evolution   c = {:+.8}  (diff {:.1e}, dt {})", evo.c, (evo.c - sol.c).abs(), evo.dt);
    let step = (evo.times.len() / 6).max(1);
    for (t, p) in evo.times.iter().zip(&evo.positions).step_by(step) {
        println!("  t={t:>6.2}  front at {p:+.5}");
    }
    Ok(())
}
