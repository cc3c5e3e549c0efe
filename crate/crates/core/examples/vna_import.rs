//! Analysis of VNA exports: one `frequency_Hz,s21_db` CSV per coil current,
//! the current taken from the file name. Synthetic traces stand in for
//! measured ones here; pass a directory to keep them.
//!
//! ```text
//! cargo run --release --example vna_import -- out/vna
//! ```

use std::path::PathBuf;

use magnon_kerr::io;
use magnon_kerr::model::SystemConfig;
use magnon_kerr::pipeline::{analyze_map, AnalyzeOptions};
use magnon_kerr::scenarios;
use regex::Regex;

fn main() -> magnon_kerr::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("magkerr-vna"));
    std::fs::create_dir_all(&dir).map_err(|e| magnon_kerr::Error::io(&dir, e))?;

    let scenario = scenarios::kittel_drive(SystemConfig::default())?;
    let mut map = scenario.synthesize()?;
    map.add_db_noise(0.02, 1)?;
    let mut files = Vec::new();
    for trace in map.traces() {
        let rows: Vec<Vec<String>> = trace
            .probe_frequencies
            .iter()
            .zip(trace.s21_sq)
            .map(|(f, s)| vec![format!("{}", f * 1e6), format!("{:.4}", 10.0 * s.log10())])
            .collect();
        let path = dir.join(format!("coil_{:.5}A.csv", trace.control));
        io::write_csv(&path, &["frequency_Hz", "s21_db"], &rows, None)?;
        files.push(path);
    }
    println!("wrote {} traces to {}", files.len(), dir.display());

    let pattern = Regex::new(r"coil_(?<control>[-+]?\d+\.\d+)A").expect("static pattern");
    let imported = io::read_vna_traces(&files, &pattern)?;
    let drive = scenario.drive.expect("driven scenario");
    let analysis = analyze_map(&imported, &scenario.config, &drive, &AnalyzeOptions::default())?;
    println!("cP = {:.1} MHz^3", analysis.fit.cp_estimate);
    if let Some(r) = analysis.fit.ratio {
        println!("K_cross/K_ks = {r:.4}");
    }
    Ok(())
}
