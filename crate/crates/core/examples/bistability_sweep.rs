//! Up- and down-sweeps of the driven-mode shift across the bistable window,
//! written as CSV for plotting.
//!
//! ```text
//! cargo run --example bistability_sweep > loop.csv
//! ```

use magnon_kerr::steady_state::{
    bistability_threshold, bistability_window, hysteresis_loop, linear_grid, solve_shift_cubic,
};

fn main() -> magnon_kerr::Result<()> {
    // Kittel linewidth and the drive product fitted to a 60 MHz peak shift.
    let (gamma, cp) = (11.6, -2018.4);

    eprintln!("threshold |cP| = {:.1} MHz^3", bistability_threshold(gamma));
    let (lo, hi) = bistability_window(gamma, cp).expect("drive is above threshold");
    eprintln!("three roots for detuning in [{lo:.2}, {hi:.2}] MHz");
    let mid = solve_shift_cubic(0.5 * (lo + hi), gamma, cp)?;
    eprintln!("at {:.2} MHz: roots {:?}, stable {:?}", mid.detuning, mid.roots, mid.stable);

    let grid = linear_grid(-120.0, 120.0, 961);
    let lp = hysteresis_loop(gamma, cp, &grid)?;
    for (name, sweep) in [("up", &lp.up), ("down", &lp.down)] {
        for j in &sweep.jumps {
            eprintln!("{name}: jump at {:.2} MHz, {:.2} -> {:.2} MHz", j.detuning, j.from_shift, j.to_shift);
        }
    }
    eprintln!("loop area {:.1} MHz^2", lp.area);

    let mut down = lp.down.shifts();
    down.reverse();
    println!("delta_MHz,up_MHz,down_MHz");
    for ((d, u), w) in grid.iter().zip(lp.up.shifts()).zip(down) {
        println!("{d},{u},{w}");
    }
    Ok(())
}
