//! Command-line front end: `derive`, `simulate`, `analyze` and `report`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 I/O failure. The worker pool size comes from `--workers` or
//! `MAGKERR_WORKERS` and defaults to the machine's parallelism.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::{self, DriveSpec, Override, RunConfig};
use crate::error::{Error, Result};
use crate::extract::{AssignStats, ShiftCurve};
use crate::fit::{model_shifts, ratio_stability_report, FitResult, RatioEntry, RatioReport};
use crate::io;
use crate::manifest::{InputDigest, RunManifest};
use crate::model::{
    cross_kerr_from_overlap, dispersive_check, kerr_self_from_material, kerr_self_hms_from_material,
    DispersiveReport, DriveConfig, ModeLabel,
};
use crate::pipeline::{analyze_map, fit_curves};
use crate::spectrum::{driven_sweep, synthesize_map};
use crate::steady_state::SweepDirection;

#[derive(Debug, Parser)]
#[command(name = "magkerr", version, about = "Kerr bistability in a cavity with two magnon modes")]
pub struct Cli {
    /// Worker threads for synthesis and fits (default: all cores).
    #[arg(long, global = true, env = "MAGKERR_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set couplings.g_k=40.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<Override>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kerr and coupling coefficients from material constants.
    Derive {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write `derive.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a transmission map.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `none` or `mode:frequency[:power]`, e.g. `kittel:9800MHz:25dBm`.
        #[arg(long, default_value = "none")]
        drive: DriveSpec,
        /// Noise seed (same as `--set sweep.seed=N`).
        #[arg(long)]
        seed: Option<u64>,
        /// Gaussian noise in dB (same as `--set sweep.noise_db=X`).
        #[arg(long)]
        noise_db: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract shift curves and fit the drive product and Kerr ratio.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Drive under which the data were taken.
        #[arg(long)]
        drive: DriveSpec,
        /// Map file (CSV or binary).
        #[arg(long, group = "input")]
        map: Option<PathBuf>,
        /// VNA trace CSVs, one per control value.
        #[arg(long, group = "input", num_args = 1..)]
        vna: Vec<PathBuf>,
        /// Shift-curve CSV; skips extraction.
        #[arg(long, group = "input")]
        curves: Option<PathBuf>,
        /// Regex locating the control value in VNA file names.
        #[arg(long, default_value = io::DEFAULT_CONTROL_PATTERN)]
        control_pattern: String,
        /// Sweep direction in detuning, for `--curves` input.
        #[arg(long, value_enum, default_value = "up")]
        direction: Direction,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ratio-stability report over several analyses.
    Report {
        /// `fit.json` files or analysis directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Largest std/mean counted as stable.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        3
    } else if e.is_numerical() {
        2
    } else {
        1
    }
}

/// Parses `args`, runs the command in a sized worker pool and returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers.filter(|n| *n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Derive { cfg, out } => cmd_derive(cfg, out.as_deref(), cli.workers),
        Command::Simulate { cfg, drive, seed, noise_db, out } => {
            let mut cfg = cfg.clone();
            if let Some(s) = seed {
                cfg.set.push(Override { path: "sweep.seed".into(), value: s.to_string() });
            }
            if let Some(n) = noise_db {
                cfg.set.push(Override { path: "sweep.noise_db".into(), value: n.to_string() });
            }
            cmd_simulate(&cfg, drive, out, cli.workers)
        }
        Command::Analyze { cfg, drive, map, vna, curves, control_pattern, direction, out } => {
            let input = match (map, vna.is_empty(), curves) {
                (Some(m), true, None) => AnalyzeInput::Map(m.clone()),
                (None, false, None) => AnalyzeInput::Vna {
                    files: vna.clone(),
                    pattern: Regex::new(control_pattern)
                        .map_err(|e| Error::Input(format!("--control-pattern: {e}")))?,
                },
                (None, true, Some(c)) => AnalyzeInput::Curves {
                    path: c.clone(),
                    direction: match direction {
                        Direction::Up => SweepDirection::Up,
                        Direction::Down => SweepDirection::Down,
                    },
                },
                _ => return Err(Error::Input("give exactly one of --map, --vna, --curves".into())),
            };
            cmd_analyze(cfg, drive, &input, out, cli.workers)
        }
        Command::Report { inputs, threshold, out } => cmd_report(inputs, *threshold, out.as_deref(), cli.workers),
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    config::load(args.config.as_deref(), &args.set)
}

fn overrides(args: &ConfigArgs) -> Vec<String> {
    args.set.iter().map(Override::to_string).collect()
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn finish(mut manifest: RunManifest, dir: &Path, outputs: Vec<&str>, workers: Option<usize>) -> Result<()> {
    manifest.output_dir = Some(dir.display().to_string());
    manifest.outputs = outputs.into_iter().map(String::from).collect();
    manifest.workers = workers;
    manifest.write(dir)?;
    Ok(())
}

/// Coefficients derived from material constants.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedCoefficients {
    /// MHz.
    pub k_self_kittel: f64,
    pub k_self_hms: f64,
    pub k_cross: f64,
    pub g_kh: f64,
    /// Static frequency pulls from the cross-Kerr term, MHz.
    pub shift_kittel: f64,
    pub shift_hms: f64,
    pub renormalized_kittel: f64,
    pub renormalized_hms: f64,
    pub cross_over_kittel: Option<f64>,
    pub cross_over_hms: Option<f64>,
    pub hms_over_kittel: Option<f64>,
    pub dispersive: DispersiveReport,
}

pub fn derive_coefficients(cfg: &RunConfig) -> Result<DerivedCoefficients> {
    let m = cfg.system.material.as_ref().ok_or_else(|| {
        let keys = config::missing_material_keys(&toml::Value::Table(toml::Table::new()));
        Error::Config(format!("no material section; needed: {}", keys.join(", ")))
    })?;
    let ks = kerr_self_from_material(m)?;
    let hs = kerr_self_hms_from_material(m)?;
    let cross = cross_kerr_from_overlap(m)?;
    let ratio = |a: f64, b: f64| (b != 0.0).then(|| a / b);
    Ok(DerivedCoefficients {
        k_self_kittel: ks,
        k_self_hms: hs,
        k_cross: cross.k_cross,
        g_kh: cross.g_kh,
        shift_kittel: cross.shift_kittel,
        shift_hms: cross.shift_hms,
        renormalized_kittel: cfg.system.kittel().bare_frequency + cross.shift_kittel,
        renormalized_hms: cfg.system.hms().bare_frequency + cross.shift_hms,
        cross_over_kittel: ratio(cross.k_cross, ks),
        cross_over_hms: ratio(cross.k_cross, hs),
        hms_over_kittel: ratio(hs, ks),
        dispersive: dispersive_check(&cfg.system),
    })
}

fn derive_text(d: &DerivedCoefficients) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"));
    let pair = |name: &str, p: &crate::model::DispersivePair| {
        format!(
            "{name:<14} detuning {:>9.3} MHz  |detuning|/g {:>9.3}  pull {:>9.4} MHz{}\n",
            p.detuning,
            p.ratio,
            p.shift,
            if p.dispersive { "" } else { "  NOT DISPERSIVE" }
        )
    };
    let mut s = String::new();
    s.push_str(&format!("K_ks            {:.6e} MHz\n", d.k_self_kittel));
    s.push_str(&format!("K_hs            {:.6e} MHz\n", d.k_self_hms));
    s.push_str(&format!("K_cross         {:.6e} MHz\n", d.k_cross));
    s.push_str(&format!("g_kh            {:.6} MHz\n", d.g_kh));
    s.push_str(&format!("kittel pull     {:.6} MHz -> {:.3} MHz\n", d.shift_kittel, d.renormalized_kittel));
    s.push_str(&format!("hms pull        {:.6} MHz -> {:.3} MHz\n", d.shift_hms, d.renormalized_hms));
    s.push_str(&format!("K_cross/K_ks    {}\n", opt(d.cross_over_kittel)));
    s.push_str(&format!("K_cross/K_hs    {}\n", opt(d.cross_over_hms)));
    s.push_str(&format!("K_hs/K_ks       {}\n", opt(d.hms_over_kittel)));
    s.push_str(&pair("cavity-kittel", &d.dispersive.cavity_kittel));
    s.push_str(&pair("hms-kittel", &d.dispersive.hms_kittel));
    s
}

pub fn cmd_derive(args: &ConfigArgs, out: Option<&Path>, workers: Option<usize>) -> Result<()> {
    let cfg = load_config(args)?;
    let derived = derive_coefficients(&cfg)?;
    if let Some(dir) = out {
        let manifest = RunManifest::new("derive", args.config.as_deref(), overrides(args), 0, &cfg, vec![])?;
        prepare_dir(dir)?;
        io::write_json(&dir.join("derive.json"), &derived, Some(&manifest.sha256))?;
        finish(manifest, dir, vec!["derive.json"], workers)?;
    }
    print!("{}", derive_text(&derived));
    Ok(())
}

#[derive(Serialize)]
struct SimulateParams<'a> {
    config: &'a RunConfig,
    drive: Option<DriveConfig>,
    n_currents: usize,
    n_probe: usize,
}

pub fn cmd_simulate(args: &ConfigArgs, drive: &DriveSpec, out: &Path, workers: Option<usize>) -> Result<()> {
    let cfg = load_config(args)?;
    let drive = drive.resolve(&cfg.system);
    let currents = cfg.sweep.currents(&cfg.system, drive.as_ref())?;
    let probe = cfg.sweep.probe_grid()?;
    let mut map = synthesize_map(&cfg.system, &currents, &probe, drive.as_ref())?;
    if cfg.sweep.noise_db > 0.0 {
        map.add_db_noise(cfg.sweep.noise_db, cfg.sweep.seed)?;
    }
    let sweep = drive.as_ref().map(|d| driven_sweep(&cfg.system, &currents, d)).transpose()?;
    let params = SimulateParams { config: &cfg, drive, n_currents: currents.len(), n_probe: probe.len() };
    let manifest = RunManifest::new("simulate", args.config.as_deref(), overrides(args), cfg.sweep.seed, &params, vec![])?;
    let stamp = Some(manifest.sha256.as_str());

    prepare_dir(out)?;
    let mut outputs = vec!["map.csv", "map.bin", "truth.csv"];
    io::write_map_csv(&out.join("map.csv"), &map, stamp)?;
    io::write_map_binary(&out.join("map.bin"), &map, stamp)?;
    let truth = map.truth.as_deref().unwrap_or_default();
    let rows: Vec<Vec<String>> = truth
        .iter()
        .map(|t| {
            [t.control, t.detuning, t.kittel_bare, t.hms_bare, t.kittel_shift, t.hms_shift]
                .iter()
                .map(|v| format!("{v}"))
                .collect()
        })
        .collect();
    io::write_csv(
        &out.join("truth.csv"),
        &["current", "delta_MHz", "kittel_bare_MHz", "hms_bare_MHz", "kittel_shift_MHz", "hms_shift_MHz"],
        &rows,
        stamp,
    )?;
    if let Some(s) = &sweep {
        io::write_sweep_csv(&out.join("sweep.csv"), s, stamp)?;
        outputs.push("sweep.csv");
    }
    finish(manifest, out, outputs, workers)?;
    eprintln!(
        "simulated {} currents x {} probe points into {}",
        map.n_controls(),
        map.n_probe(),
        out.display()
    );
    Ok(())
}

/// What `analyze` reads.
#[derive(Debug, Clone)]
pub enum AnalyzeInput {
    Map(PathBuf),
    Vna { files: Vec<PathBuf>, pattern: Regex },
    Curves { path: PathBuf, direction: SweepDirection },
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub drive: DriveConfig,
    pub fit: FitResult,
    pub ratio_refused: Option<String>,
    pub warnings: Vec<String>,
    pub assignment: Option<AssignStats>,
}

#[derive(Serialize)]
struct AnalyzeParams<'a> {
    config: &'a RunConfig,
    drive: DriveConfig,
    direction: Option<SweepDirection>,
    control_pattern: Option<&'a str>,
}

fn overlay_rows(
    driven: &ShiftCurve,
    undriven: &ShiftCurve,
    gamma: f64,
    fit: &FitResult,
    direction: SweepDirection,
) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (curve, scale) in [(driven, Some(1.0)), (undriven, fit.ratio)] {
        if curve.is_empty() {
            continue;
        }
        let model = model_shifts(&curve.deltas(), gamma, fit.cp_estimate, direction)?;
        for (p, m) in curve.points.iter().zip(&model) {
            rows.push(vec![
                format!("{}", p.delta),
                curve.mode.to_string(),
                format!("{}", p.shift),
                scale.map(|s| format!("{}", s * m)).unwrap_or_default(),
            ]);
        }
    }
    Ok(rows)
}

pub fn cmd_analyze(
    args: &ConfigArgs,
    drive: &DriveSpec,
    input: &AnalyzeInput,
    out: &Path,
    workers: Option<usize>,
) -> Result<()> {
    let cfg = load_config(args)?;
    let drive = drive
        .resolve(&cfg.system)
        .ok_or_else(|| Error::Input("analyze needs the drive the data were taken with, not `none`".into()))?;
    let target = drive.target.mode();
    let other = drive.target.other();
    let (paths, direction, pattern): (Vec<PathBuf>, Option<SweepDirection>, Option<&str>) = match input {
        AnalyzeInput::Map(p) => (vec![p.clone()], None, None),
        AnalyzeInput::Vna { files, pattern } => (files.clone(), None, Some(pattern.as_str())),
        AnalyzeInput::Curves { path, direction } => (vec![path.clone()], Some(*direction), None),
    };
    let inputs = paths.iter().map(|p| InputDigest::of(p)).collect::<Result<Vec<_>>>()?;

    let (kittel, hms, record, fit_direction) = match input {
        AnalyzeInput::Curves { path, direction } => {
            let curves = io::read_shift_curves(path)?.value;
            let find = |m: ModeLabel| {
                curves
                    .iter()
                    .find(|c| c.mode == m)
                    .cloned()
                    .unwrap_or(ShiftCurve { mode: m, points: vec![] })
            };
            let (k, h) = (find(ModeLabel::Kittel), find(ModeLabel::Hms));
            let (driven, undriven) = if target == ModeLabel::Hms { (&h, &k) } else { (&k, &h) };
            let fitted = fit_curves(driven, undriven, &cfg.system, &drive, *direction, &cfg.analysis)?;
            let record = AnalysisRecord {
                drive,
                fit: fitted.fit,
                ratio_refused: fitted.ratio_refused,
                warnings: vec![],
                assignment: None,
            };
            (k, h, record, *direction)
        }
        AnalyzeInput::Map(_) | AnalyzeInput::Vna { .. } => {
            let map = match input {
                AnalyzeInput::Map(p) => io::read_map(p)?.value,
                AnalyzeInput::Vna { files, pattern } => io::read_vna_traces(files, pattern)?,
                AnalyzeInput::Curves { .. } => unreachable!(),
            };
            let a = analyze_map(&map, &cfg.system, &drive, &cfg.analysis)?;
            let up = (crate::spectrum::control_direction(&map.controls)? == SweepDirection::Up)
                == (cfg.system.calibration.tuning_rate() > 0.0);
            let record = AnalysisRecord {
                drive,
                fit: a.fit,
                ratio_refused: a.ratio_refused,
                warnings: a.warnings,
                assignment: Some(a.extraction.stats),
            };
            (
                a.extraction.kittel,
                a.extraction.hms,
                record,
                if up { SweepDirection::Up } else { SweepDirection::Down },
            )
        }
    };
    let (driven, undriven) = if target == ModeLabel::Hms { (&hms, &kittel) } else { (&kittel, &hms) };
    let plot = overlay_rows(driven, undriven, cfg.system.linewidth(target), &record.fit, fit_direction)?;
    debug_assert_eq!(undriven.mode, other);

    let params = AnalyzeParams { config: &cfg, drive, direction, control_pattern: pattern };
    let manifest = RunManifest::new("analyze", args.config.as_deref(), overrides(args), 0, &params, inputs)?;
    let stamp = Some(manifest.sha256.as_str());
    prepare_dir(out)?;
    io::write_shift_curves(&out.join("curves.csv"), &[&kittel, &hms], stamp)?;
    io::write_json(&out.join("fit.json"), &record, stamp)?;
    io::write_csv(
        &out.join("plot.csv"),
        &["delta_MHz", "mode", "shift_MHz", "model_MHz"],
        &plot,
        stamp,
    )?;
    finish(manifest, out, vec!["curves.csv", "fit.json", "plot.csv"], workers)?;

    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    println!("cP        {:.4} MHz^3", record.fit.cp_estimate);
    println!("rms       {:.4} MHz over {} points", record.fit.residual_rms, record.fit.n_points);
    match (record.fit.ratio, &record.ratio_refused) {
        (Some(r), _) => println!("K_cross/K_{}s = {r:.4}", if target == ModeLabel::Hms { "h" } else { "k" }),
        (None, Some(why)) => println!("ratio not fitted: {why}"),
        (None, None) => {}
    }
    Ok(())
}

fn fit_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("fit.json")
    } else {
        p.to_path_buf()
    }
}

pub fn cmd_report(inputs: &[PathBuf], threshold: f64, out: Option<&Path>, workers: Option<usize>) -> Result<()> {
    if !(threshold > 0.0) {
        return Err(Error::Input(format!("--threshold must be positive, got {threshold}")));
    }
    let files: Vec<PathBuf> = inputs.iter().map(|p| fit_file(p)).collect();
    let mut entries = Vec::new();
    for f in &files {
        let rec: AnalysisRecord = io::read_json(f)?.value;
        match rec.fit.ratio {
            Some(ratio) => entries.push(RatioEntry {
                drive_frequency: rec.drive.drive_frequency,
                target: rec.drive.target,
                ratio,
            }),
            None => eprintln!("warning: {} has no ratio, skipped", f.display()),
        }
    }
    entries.sort_by(|a, b| {
        (a.target as u8, a.drive_frequency)
            .partial_cmp(&(b.target as u8, b.drive_frequency))
            .expect("finite frequencies")
    });
    let report: RatioReport = ratio_stability_report(&entries, threshold);
    if let Some(dir) = out {
        let digests = files.iter().map(|f| InputDigest::of(f)).collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest::new("report", None, vec![], 0, &threshold, digests)?;
        let stamp = Some(manifest.sha256.as_str());
        prepare_dir(dir)?;
        io::write_json(&dir.join("report.json"), &report, stamp)?;
        let rows: Vec<Vec<String>> = report
            .entries
            .iter()
            .map(|e| vec![format!("{}", e.drive_frequency), e.target.mode().to_string(), format!("{}", e.ratio)])
            .collect();
        io::write_csv(&dir.join("report.csv"), &["drive_MHz", "target", "ratio"], &rows, stamp)?;
        finish(manifest, dir, vec!["report.json", "report.csv"], workers)?;
    }
    print!("{}", report.table());
    Ok(())
}
