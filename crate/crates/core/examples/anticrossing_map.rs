//! Undriven transmission map across both magnon–cavity anticrossings, and
//! the doublet splittings at resonance.
//!
//! ```text
//! cargo run --release --example anticrossing_map -- out/undriven
//! ```

use std::path::PathBuf;

use magnon_kerr::io;
use magnon_kerr::model::{ModeLabel, SystemConfig};
use magnon_kerr::scenarios;
use magnon_kerr::spectrum::anticrossing;

fn main() -> magnon_kerr::Result<()> {
    let cfg = SystemConfig::default();
    for mode in [ModeLabel::Kittel, ModeLabel::Hms] {
        let a = anticrossing(&cfg, mode)?;
        println!(
            "{mode}: balanced doublet at {:.4} A, {:.2} / {:.2} MHz, splitting {:.3} MHz",
            a.current,
            a.lower.frequency,
            a.upper.frequency,
            a.separation()
        );
    }

    let scenario = scenarios::undriven(cfg);
    let map = scenario.synthesize()?;
    println!("map: {} currents x {} probe points", map.n_controls(), map.n_probe());
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir).map_err(|e| magnon_kerr::Error::io(&dir, e))?;
        io::write_map_csv(&dir.join("map.csv"), &map, None)?;
        io::write_map_binary(&dir.join("map.bin"), &map, None)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
