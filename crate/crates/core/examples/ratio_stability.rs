//! Cross-to-self ratios fitted at five drive frequencies per mode; a family
//! is stable when its relative spread stays below the threshold.
//!
//! ```text
//! cargo run --release --example ratio_stability
//! ```

use magnon_kerr::pipeline::AnalyzeOptions;
use magnon_kerr::scenarios;

fn main() -> magnon_kerr::Result<()> {
    let cfg = scenarios::stability_config();
    let series = scenarios::stability_series(&cfg)?;
    let (analyses, report) = scenarios::run_stability_study(&series, &AnalyzeOptions::default(), 0.05)?;
    for a in &analyses {
        if let Some(why) = &a.ratio_refused {
            println!("{} MHz: {why}", a.drive.drive_frequency);
        }
    }
    print!("{}", report.table());
    Ok(())
}
