//! Rigorous lower/upper speed bounds against the computed speed over a
//! small (β, θ) sweep with an exponential kernel.
//!
//! ```bash
//! cargo run --release --example speed_bounds_sweep
//! ```

use wavegap::discretize::Grid;
use wavegap::wave::{neural_field, solve_wave, speed_bounds, WaveOptions};

fn main() -> wavegap::Result<()> {
    println!("{:>5} {:>5} {:>10} {:>10} {:>10}  ok", "β", "θ", "lower", "c", "upper");
    for (beta, theta) in [(8.0, 0.45), (12.0, 0.35), (20.0, 0.4), (8.0, 0.6), (20.0, 0.65), (8.0, 0.5)] {
        let sys = neural_field(beta, theta, 1.0)?;
        let sol = solve_wave(&sys, &Grid::new(20.0, 1024)?, None, &WaveOptions::default())?;
        let b = speed_bounds(sol.gain()?, &sys.kernel, &sol.fixed)?;
        let ok = if b.degenerate { sol.c.abs() < 1e-6 } else { b.lower <= sol.c && sol.c <= b.upper };
        println!("{beta:>5} {theta:>5} {:>10.5} {:>10.5} {:>10.5}  {ok}", b.lower, sol.c, b.upper);
    }
    Ok(())
}
