//! Ready-made simulation set-ups at the operating points of the reference
//! measurements: Kittel drive at 9.8 GHz, HMS drive at 10.1 GHz, and the
//! drive-frequency series used for the ratio-stability study.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{ratio_stability_report, RatioEntry, RatioReport};
use crate::model::{DriveConfig, DriveTarget, KerrSet, SystemConfig};
use crate::pipeline::{analyze_map, AnalyzeOptions, Analysis};
use crate::spectrum::{stepped_grid, synthesize_map, SpectrumMap};
use crate::steady_state::linear_grid;

/// Default probe grid: 9.5–10.5 GHz in 0.25 MHz steps.
pub fn default_probe() -> Vec<f64> {
    stepped_grid(9_500.0, 10_499.75, 0.25).expect("static grid")
}

/// Currents placing the driven mode at detunings `delta_lo..=delta_hi` (MHz)
/// from `drive_frequency`, in increasing order.
pub fn currents_for_detuning(
    cfg: &SystemConfig,
    target: DriveTarget,
    drive_frequency: f64,
    delta_lo: f64,
    delta_hi: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let cal = &cfg.calibration;
    let at = |delta: f64| {
        cal.current_for_frequency(target.mode(), drive_frequency + delta)
            .ok_or_else(|| Error::Domain("calibration does not tune the magnon modes".into()))
    };
    let (a, b) = (at(delta_lo)?, at(delta_hi)?);
    Ok(linear_grid(a.min(b), a.max(b), n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub config: SystemConfig,
    pub drive: Option<DriveConfig>,
    pub currents: Vec<f64>,
    pub probe: Vec<f64>,
}

impl Scenario {
    pub fn synthesize(&self) -> Result<SpectrumMap> {
        synthesize_map(&self.config, &self.currents, &self.probe, self.drive.as_ref())
    }

    pub fn analyze(&self, map: &SpectrumMap, opts: &AnalyzeOptions) -> Result<Analysis> {
        let drive = self
            .drive
            .as_ref()
            .ok_or_else(|| Error::Input(format!("scenario `{}` has no drive", self.name)))?;
        analyze_map(map, &self.config, drive, opts)
    }

    /// Driven scenario sweeping the target mode across `delta_lo..=delta_hi`.
    pub fn driven(
        name: impl Into<String>,
        config: SystemConfig,
        target: DriveTarget,
        drive_frequency: f64,
        delta_lo: f64,
        delta_hi: f64,
    ) -> Result<Self> {
        let currents = currents_for_detuning(&config, target, drive_frequency, delta_lo, delta_hi, 241)?;
        let drive = config.drive_on(target, drive_frequency);
        Ok(Scenario {
            name: name.into(),
            config,
            drive: Some(drive),
            currents,
            probe: default_probe(),
        })
    }
}

/// Kittel drive at 9.8 GHz, 25 dBm, sweeping `δ_k` over ±120 MHz.
pub fn kittel_drive(config: SystemConfig) -> Result<Scenario> {
    kittel_drive_at(config, 9_800.0)
}

pub fn kittel_drive_at(config: SystemConfig, drive_frequency: f64) -> Result<Scenario> {
    Scenario::driven(
        format!("kittel-{drive_frequency}"),
        config,
        DriveTarget::Kittel,
        drive_frequency,
        -120.0,
        120.0,
    )
}

/// HMS drive at 10.1 GHz, 25 dBm, sweeping `δ_h` from −10 to 70 MHz (the
/// lower end keeps the HMS line clear of the cavity).
pub fn hms_drive(config: SystemConfig) -> Result<Scenario> {
    hms_drive_at(config, 10_100.0)
}

pub fn hms_drive_at(config: SystemConfig, drive_frequency: f64) -> Result<Scenario> {
    Scenario::driven(
        format!("hms-{drive_frequency}"),
        config,
        DriveTarget::Hms,
        drive_frequency,
        -10.0,
        70.0,
    )
}

/// Undriven map across both anticrossings.
pub fn undriven(config: SystemConfig) -> Scenario {
    let cal = &config.calibration;
    let wc = config.cavity().bare_frequency;
    let lo = cal
        .current_for_frequency(crate::model::ModeLabel::Kittel, wc - 150.0)
        .unwrap_or(0.0);
    let hi = cal
        .current_for_frequency(crate::model::ModeLabel::Hms, wc + 150.0)
        .unwrap_or(1.0);
    Scenario {
        name: "undriven".into(),
        currents: linear_grid(lo.min(hi), lo.max(hi), 401),
        config,
        drive: None,
        probe: default_probe(),
    }
}

/// Configuration for the drive-frequency series: the stability study's mean
/// ratios `K_cross/K_ks = 2.49` and `K_cross/K_hs = 0.53` taken as ground truth.
pub fn stability_config() -> SystemConfig {
    let mut cfg = SystemConfig::default();
    cfg.kerr = KerrSet::from_ratios(cfg.kerr.k_self_kittel, 2.49, 0.53);
    cfg
}

pub const KITTEL_SERIES: [f64; 5] = [9_700.0, 9_750.0, 9_800.0, 9_850.0, 9_900.0];
pub const HMS_SERIES: [f64; 5] = [10_100.0, 10_120.0, 10_140.0, 10_160.0, 10_180.0];

/// One scenario per drive frequency of both series.
pub fn stability_series(config: &SystemConfig) -> Result<Vec<Scenario>> {
    KITTEL_SERIES
        .iter()
        .map(|f| kittel_drive_at(config.clone(), *f))
        .chain(HMS_SERIES.iter().map(|f| hms_drive_at(config.clone(), *f)))
        .collect()
}

/// Synthesizes and analyzes every scenario, then summarizes the ratios.
pub fn run_stability_study(
    scenarios: &[Scenario],
    opts: &AnalyzeOptions,
    stability_threshold: f64,
) -> Result<(Vec<Analysis>, RatioReport)> {
    let analyses: Vec<Analysis> = scenarios
        .par_iter()
        .map(|s| {
            let map = s.synthesize()?;
            s.analyze(&map, opts)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<RatioEntry> = analyses
        .iter()
        .filter_map(|a| {
            a.fit.ratio.map(|ratio| RatioEntry {
                drive_frequency: a.drive.drive_frequency,
                target: a.drive.target,
                ratio,
            })
        })
        .collect();
    Ok((analyses, ratio_stability_report(&entries, stability_threshold)))
}
