//! Kerr coefficients, the Kittel–HMS coupling and the dispersive check from
//! material constants, with optional `key=value` overrides.
//!
//! ```text
//! cargo run --example derive_coefficients
//! cargo run --example derive_coefficients -- material.overlap_coefficient=0
//! cargo run --example derive_coefficients -- configs/calibrated.toml material.sphere_volume=1e-9
//! ```

use std::path::PathBuf;

use magnon_kerr::config::{self, Override};
use magnon_kerr::model::{cross_kerr_from_overlap, dispersive_check, kerr_set_from_material};

fn main() -> magnon_kerr::Result<()> {
    let mut file = None;
    let mut overrides = Vec::new();
    for arg in std::env::args().skip(1) {
        if arg.contains('=') {
            overrides.push(arg.parse::<Override>()?);
        } else {
            file = Some(PathBuf::from(arg));
        }
    }
    let cfg = config::load(file.as_deref(), &overrides)?;
    let material = cfg.system.material.expect("default configuration carries material constants");

    let kerr = kerr_set_from_material(&material)?;
    let cross = cross_kerr_from_overlap(&material)?;
    println!("self-Kerr, Kittel   {:+.4e} MHz", kerr.k_self_kittel);
    println!("self-Kerr, HMS      {:+.4e} MHz", kerr.k_self_hms);
    println!("cross-Kerr          {:+.4e} MHz", kerr.k_cross);
    println!("Kittel–HMS coupling {:+.4} MHz", cross.g_kh);
    if kerr.k_self_kittel != 0.0 && kerr.k_self_hms != 0.0 {
        println!("cross/self Kittel   {:.4}", kerr.k_cross / kerr.k_self_kittel);
        println!("cross/self HMS      {:.4}", kerr.k_cross / kerr.k_self_hms);
        println!("HMS/Kittel self     {:.4}", kerr.k_self_hms / kerr.k_self_kittel);
    }

    let report = dispersive_check(&cfg.system);
    for (name, pair) in [("cavity–Kittel", report.cavity_kittel), ("HMS–Kittel", report.hms_kittel)] {
        println!(
            "{name:<14} detuning {:8.2} MHz, detuning/g {:7.2}, pull {:+.4} MHz{}",
            pair.detuning,
            pair.ratio,
            pair.shift,
            if pair.dispersive { "" } else { " (not dispersive)" }
        );
    }
    Ok(())
}
