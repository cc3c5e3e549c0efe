//! Map → shift curves → drive-product and ratio fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract_shift_curves, ExtractOptions, Extraction, ShiftCurve};
use crate::fit::{fit_driven_curve, fit_ratio, FitOptions, FitResult};
use crate::model::{DriveConfig, SystemConfig};
use crate::spectrum::{control_direction, SpectrumMap};
use crate::steady_state::SweepDirection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeOptions {
    pub extract: ExtractOptions,
    pub fit: FitOptions,
    /// Peak driven-mode shift (MHz) below which no ratio is fitted.
    pub min_driven_signal: f64,
    /// Fraction of branch points without a dip above which a warning is raised.
    pub missing_warning_fraction: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            extract: ExtractOptions::default(),
            fit: FitOptions::default(),
            min_driven_signal: 1.0,
            missing_warning_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub drive: DriveConfig,
    pub extraction: Extraction,
    pub fit: FitResult,
    /// Why the ratio was not fitted, if it was not.
    pub ratio_refused: Option<String>,
    pub warnings: Vec<String>,
}

/// Runs extraction and both fits for a map acquired under `drive`. The model
/// branch follows the map's own acquisition direction.
pub fn analyze_map(
    map: &SpectrumMap,
    cfg: &SystemConfig,
    drive: &DriveConfig,
    opts: &AnalyzeOptions,
) -> Result<Analysis> {
    let target = drive.target.mode();
    let other = drive.target.other();
    let extraction = extract_shift_curves(
        map,
        &cfg.calibration,
        cfg.cavity().bare_frequency,
        drive.drive_frequency,
        target,
        &opts.extract,
    )?;
    let mut warnings = Vec::new();
    let stats = extraction.stats;
    let branch_points = 2 * stats.traces;
    if branch_points > 0 && stats.missing as f64 > opts.missing_warning_fraction * branch_points as f64 {
        warnings.push(format!(
            "{} of {} branch points had no assignable dip",
            stats.missing, branch_points
        ));
    }
    if stats.ambiguous > 0 {
        warnings.push(format!("{} ambiguous assignments left out", stats.ambiguous));
    }

    let increasing_controls = control_direction(&map.controls)? == SweepDirection::Up;
    let increasing_delta = increasing_controls == (cfg.calibration.tuning_rate() > 0.0);
    let direction = if increasing_delta { SweepDirection::Up } else { SweepDirection::Down };
    let fitted = fit_curves(
        extraction.curve(target),
        extraction.curve(other),
        cfg,
        drive,
        direction,
        opts,
    )?;
    Ok(Analysis {
        drive: *drive,
        extraction,
        fit: fitted.fit,
        ratio_refused: fitted.ratio_refused,
        warnings,
    })
}

/// Drive-product and ratio fits for one driven/undriven curve pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveFit {
    pub fit: FitResult,
    pub ratio_refused: Option<String>,
}

/// Fits the driven curve (model branch for a sweep in `direction` of
/// detuning) and, given enough driven-mode signal, the cross-to-self ratio.
pub fn fit_curves(
    driven: &ShiftCurve,
    undriven: &ShiftCurve,
    cfg: &SystemConfig,
    drive: &DriveConfig,
    direction: SweepDirection,
    opts: &AnalyzeOptions,
) -> Result<CurveFit> {
    let target = drive.target.mode();
    let fit_opts = FitOptions { direction, ..opts.fit };
    let mut fit = fit_driven_curve(driven, cfg.linewidth(target), drive.drive_frequency, &fit_opts)?;
    let peak = driven.points.iter().map(|p| p.shift.abs()).fold(0.0, f64::max);
    let mut ratio_refused = None;
    if peak < opts.min_driven_signal {
        ratio_refused = Some(format!(
            "insufficient signal: peak {target} shift {peak:.3} MHz is below {} MHz",
            opts.min_driven_signal
        ));
    } else {
        match fit_ratio(driven, undriven) {
            Ok(r) => fit.ratio = Some(r),
            Err(Error::InsufficientData(msg)) => ratio_refused = Some(msg),
            Err(e) => return Err(e),
        }
    }
    Ok(CurveFit { fit, ratio_refused })
}
