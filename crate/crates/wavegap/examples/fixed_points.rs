//! Constant states of the neural field and the phase-transition model.
//!
//! ```bash
//! cargo run --example fixed_points
//! ```

use wavegap::model::{BistableSystem, Kernel, Nonlinearity};
use wavegap::wave::neural_field;

fn main() -> wavegap::Result<()> {
    for (beta, theta) in [(20.0, 0.4), (8.0, 0.5), (12.0, 0.45), (6.0, 0.3)] {
        let sys = neural_field(beta, theta, 1.0)?;
        match sys.find_fixed_points(-0.5, 1.5) {
            Ok(p) => println!(
                "β={beta:<4} θ={theta:<4}  a₁={:.6}  a={:.6}  a₂={:.6}  slopes {:+.3} {:+.3} {:+.3}",
                p.a1,
                p.a,
                p.a2,
                sys.balance_slope(p.a1),
                sys.balance_slope(p.a),
                sys.balance_slope(p.a2)
            ),
            Err(e) => println!("β={beta:<4} θ={theta:<4}  not bistable: {e}"),
        }
    }

    let pt = BistableSystem::new(Kernel::exponential(1.0)?, Nonlinearity::PhaseTransition { lambda: 1.0, k: 2.0, a: 0.35 }, 0.25)?;
    let p = pt.find_fixed_points(-0.5, 1.5)?;
    println!("phase transition  a₁={:.6}  a={:.6}  a₂={:.6}", p.a1, p.a, p.a2);
    Ok(())
}
