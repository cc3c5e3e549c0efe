//! HMS mode driven at 10.1 GHz and 25 dBm, recovering `K_cross/K_hs`, then
//! combining it with the Kittel-drive ratio into `K_hs/K_ks`.
//!
//! ```text
//! cargo run --release --example hms_drive
//! ```

use magnon_kerr::fit::derived_self_kerr_ratio;
use magnon_kerr::model::SystemConfig;
use magnon_kerr::pipeline::AnalyzeOptions;
use magnon_kerr::scenarios;

fn main() -> magnon_kerr::Result<()> {
    let cfg = SystemConfig::default();
    let opts = AnalyzeOptions::default();

    let hms = scenarios::hms_drive(cfg.clone())?;
    let hms_fit = hms.analyze(&hms.synthesize()?, &opts)?.fit;
    let kittel = scenarios::kittel_drive(cfg.clone())?;
    let kittel_fit = kittel.analyze(&kittel.synthesize()?, &opts)?.fit;

    let (rk, rh) = match (kittel_fit.ratio, hms_fit.ratio) {
        (Some(k), Some(h)) => (k, h),
        _ => return Err(magnon_kerr::Error::InsufficientData("a ratio fit was refused".into())),
    };
    println!("HMS drive:    cP = {:.2} MHz^3, K_cross/K_hs = {rh:.4}", hms_fit.cp_estimate);
    println!("Kittel drive: cP = {:.2} MHz^3, K_cross/K_ks = {rk:.4}", kittel_fit.cp_estimate);
    println!(
        "K_hs/K_ks = {:.3} (synthesized with {:.3})",
        derived_self_kerr_ratio(rk, rh)?,
        cfg.kerr.k_self_hms / cfg.kerr.k_self_kittel
    );
    Ok(())
}
