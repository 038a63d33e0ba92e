//! Newton solve for the front `(û, c)` and a coarse printout of the profile.
//!
//! ```bash
//! cargo run --release --example solve_wave
//! ```

use wavegap::discretize::Grid;
use wavegap::wave::{neural_field, solve_wave, WaveOptions};

fn main() -> wavegap::Result<()> {
    let sys = neural_field(20.0, 0.4, 1.0)?;
    let grid = Grid::new(20.0, 2048)?;
    let sol = solve_wave(&sys, &grid, None, &WaveOptions::default())?;
    println!("c = {:.10}  residual {:.2e}  iterations {}", sol.c, sol.residual, sol.iterations);
    println!("{:>8} {:>12} {:>12}", "x", "u", "u_x");
    for x in [-10.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 10.0] {
        let i = grid.nearest(x);
        println!("{:>8.3} {:>12.8} {:>12.3e}", grid.x[i], sol.u[i], sol.ux[i]);
    }
    Ok(())
}
