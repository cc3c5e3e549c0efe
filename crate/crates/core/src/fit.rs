//! Drive-product and Kerr-ratio estimation from shift curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::ShiftCurve;
use crate::model::DriveTarget;
use crate::steady_state::{hysteresis_sweep, SweepDirection};

/// Largest detuning step (MHz) used when following the model branch.
const MODEL_STEP: f64 = 0.25;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Acquisition direction of the data; the model follows the same branch.
    pub direction: SweepDirection,
    /// Coarse scan points across the drive-product bracket.
    pub scan_points: usize,
    /// Golden-section iterations.
    pub max_iterations: usize,
    /// Relative bracket width at which the search stops.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            direction: SweepDirection::Up,
            scan_points: 120,
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Drive product `cP`, MHz³.
    pub cp_estimate: f64,
    /// Cross-to-self Kerr ratio, when a ratio fit was made.
    pub ratio: Option<f64>,
    /// MHz.
    pub residual_rms: f64,
    pub n_points: usize,
    /// MHz.
    pub drive_frequency: f64,
}

/// Sweep-selected model shifts at the (ascending) `deltas`, following the
/// branch a sweep in `direction` would occupy. Sub-steps are inserted so
/// branch continuity holds across gaps in the data.
pub fn model_shifts(
    deltas: &[f64],
    gamma: f64,
    cp: f64,
    direction: SweepDirection,
) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Ok(Vec::new());
    }
    let mut grid = Vec::with_capacity(deltas.len() * 4);
    let mut data_index = Vec::with_capacity(deltas.len());
    grid.push(deltas[0]);
    data_index.push(0);
    for w in deltas.windows(2) {
        let gap = w[1] - w[0];
        let sub = (gap / MODEL_STEP).ceil().max(1.0) as usize;
        for s in 1..sub {
            grid.push(w[0] + gap * s as f64 / sub as f64);
        }
        grid.push(w[1]);
        data_index.push(grid.len() - 1);
    }
    let shifts = match direction {
        SweepDirection::Up => hysteresis_sweep(gamma, cp, &grid, direction)?.shifts(),
        SweepDirection::Down => {
            grid.reverse();
            let mut s = hysteresis_sweep(gamma, cp, &grid, direction)?.shifts();
            s.reverse();
            s
        }
    };
    Ok(data_index.into_iter().map(|i| shifts[i]).collect())
}

fn sse(deltas: &[f64], shifts: &[f64], gamma: f64, cp: f64, dir: SweepDirection) -> Result<f64> {
    let model = model_shifts(deltas, gamma, cp, dir)?;
    Ok(model.iter().zip(shifts).map(|(m, d)| (m - d).powi(2)).sum())
}

/// Least-squares drive product `cP` for a driven-mode shift curve at fixed
/// linewidth `gamma`: coarse scan, golden-section search on the best
/// bracket, then one parabolic step.
pub fn fit_driven_curve(
    curve: &ShiftCurve,
    gamma: f64,
    drive_frequency: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = curve.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "drive fit needs at least 5 points, got {n}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("linewidth must be positive, got {gamma}")));
    }
    let deltas = curve.deltas();
    let shifts = curve.shifts();
    let dir = opts.direction;
    let result = |cp: f64, sse: f64| FitResult {
        cp_estimate: cp,
        ratio: None,
        residual_rms: (sse / n as f64).sqrt(),
        n_points: n,
        drive_frequency,
    };
    if shifts.iter().all(|s| *s == 0.0) {
        return Ok(result(0.0, 0.0));
    }
    let sign = shifts.iter().sum::<f64>().signum();
    let b2 = 0.25 * gamma * gamma;
    // Each point implies a drive product through the steady-state equation.
    let implied = deltas
        .iter()
        .zip(&shifts)
        .map(|(d, s)| (s * ((d + s).powi(2) + b2)).abs())
        .fold(0.0, f64::max);
    let objective = |mag: f64| sse(&deltas, &shifts, gamma, sign * mag, dir);

    let scan = opts.scan_points.max(8);
    let mut upper = 2.0 * implied;
    let mut best = (0.0, objective(0.0)?);
    let mut bracket = (0.0, 0.0);
    for _ in 0..8 {
        let values: Vec<(f64, f64)> = (0..=scan)
            .map(|i| {
                let m = upper * i as f64 / scan as f64;
                objective(m).map(|v| (m, v))
            })
            .collect::<Result<_>>()?;
        let (i, &(m, v)) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("non-empty scan");
        best = (m, v);
        bracket = (values[i.saturating_sub(1)].0, values[(i + 1).min(scan)].0);
        if i < scan {
            break;
        }
        upper *= 4.0;
    }
    if !best.1.is_finite() || bracket.1 >= upper {
        return Err(Error::FitNotConverged {
            message: "minimum stays at the edge of the drive-product bracket".into(),
            best_cp: sign * best.0,
            residual_rms: (best.1 / n as f64).sqrt(),
        });
    }

    let (mut a, mut b) = bracket;
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        if (b - a) <= opts.tolerance * b.abs().max(1e-12) {
            converged = true;
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = objective(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = objective(x2)?;
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f < best.1 {
            best = (x, f);
        }
    }
    if !converged {
        return Err(Error::FitNotConverged {
            message: format!("bracket still {:.3e} wide after {} iterations", b - a, opts.max_iterations),
            best_cp: sign * best.0,
            residual_rms: (best.1 / n as f64).sqrt(),
        });
    }
    // Parabolic step through the final triple, kept only if it improves.
    let (xa, xm, xb) = (a, 0.5 * (a + b), b);
    let (fa, fm, fb) = (objective(xa)?, objective(xm)?, objective(xb)?);
    let den = (xm - xa) * (fm - fb) - (xm - xb) * (fm - fa);
    if den != 0.0 {
        let num = (xm - xa).powi(2) * (fm - fb) - (xm - xb).powi(2) * (fm - fa);
        let xp = xm - 0.5 * num / den;
        if xp.is_finite() && xp >= 0.0 {
            let fp = objective(xp)?;
            if fp < best.1 {
                best = (xp, fp);
            }
        }
    }
    for (x, f) in [(xa, fa), (xm, fm), (xb, fb)] {
        if f < best.1 {
            best = (x, f);
        }
    }
    Ok(result(sign * best.0, best.1))
}

/// Undriven-curve values at the driven detunings: exact matches, or linear
/// interpolation between neighbours no further apart than twice the typical
/// spacing (so jumps and excluded stretches are not bridged).
fn paired_shifts(driven: &ShiftCurve, undriven: &ShiftCurve) -> Vec<(f64, f64)> {
    let ud = undriven.deltas();
    let us = undriven.shifts();
    if ud.is_empty() {
        return Vec::new();
    }
    let mut gaps: Vec<f64> = ud.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let typical = gaps.get(gaps.len() / 2).copied().unwrap_or(0.0);
    let match_tol = 1e-9 * (1.0 + typical);
    driven
        .points
        .iter()
        .filter_map(|p| {
            let j = ud.partition_point(|d| *d < p.delta - match_tol);
            if j < ud.len() && (ud[j] - p.delta).abs() <= match_tol {
                return Some((p.shift, us[j]));
            }
            if j == 0 || j >= ud.len() {
                return None;
            }
            let (d0, d1) = (ud[j - 1], ud[j]);
            if d1 - d0 > 2.0 * typical {
                return None;
            }
            let t = (p.delta - d0) / (d1 - d0);
            Some((p.shift, us[j - 1] + t * (us[j] - us[j - 1])))
        })
        .collect()
}

/// Residuals (MHz) below which a pair is never rejected as an outlier.
const RATIO_OUTLIER_FLOOR: f64 = 0.5;

fn slope_through_origin(pairs: &[(f64, f64)]) -> Option<f64> {
    let sxx: f64 = pairs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pairs.iter().map(|(x, y)| x * y).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Least-squares slope through the origin of undriven versus driven shift,
/// refitted without pairs further than four robust standard deviations from
/// it, so occasional misassigned dips do not bias it.
pub fn fit_ratio(driven: &ShiftCurve, undriven: &ShiftCurve) -> Result<f64> {
    let pairs = paired_shifts(driven, undriven);
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "ratio fit needs at least 3 overlapping points, got {}",
            pairs.len()
        )));
    }
    let mut slope = slope_through_origin(&pairs)
        .ok_or_else(|| Error::InsufficientData("driven shifts are all zero".into()))?;
    let mut kept = pairs.len();
    for _ in 0..5 {
        let resid = |&(x, y): &(f64, f64)| (y - slope * x).abs();
        let mut r: Vec<f64> = pairs.iter().map(resid).collect();
        r.sort_by(f64::total_cmp);
        let cut = (4.0 * 1.4826 * r[r.len() / 2]).max(RATIO_OUTLIER_FLOOR);
        let inliers: Vec<(f64, f64)> = pairs.iter().copied().filter(|p| resid(p) <= cut).collect();
        if inliers.len() == kept || inliers.len() < 3 {
            break;
        }
        match slope_through_origin(&inliers) {
            Some(s) => slope = s,
            None => break,
        }
        kept = inliers.len();
    }
    Ok(slope)
}

/// `K_hs/K_ks` from the two cross-to-self ratios.
pub fn derived_self_kerr_ratio(ratio_kittel: f64, ratio_hms: f64) -> Result<f64> {
    if ratio_hms == 0.0 {
        return Err(Error::Domain("HMS cross-to-self ratio is zero".into()));
    }
    Ok(ratio_kittel / ratio_hms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    /// MHz.
    pub drive_frequency: f64,
    pub target: DriveTarget,
    /// `K_cross/K_self` of the driven mode.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two entries.
    pub std: Option<f64>,
    pub relative_spread: Option<f64>,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub entries: Vec<RatioEntry>,
    pub kittel: Option<FamilyStats>,
    pub hms: Option<FamilyStats>,
    /// `std/mean` below which a family counts as stable.
    pub stability_threshold: f64,
}

impl RatioReport {
    pub fn family(&self, target: DriveTarget) -> Option<&FamilyStats> {
        match target {
            DriveTarget::Kittel => self.kittel.as_ref(),
            DriveTarget::Hms => self.hms.as_ref(),
        }
    }

    /// `K_hs/K_ks` from the two family means.
    pub fn self_kerr_ratio(&self) -> Option<f64> {
        let k = self.kittel?.mean;
        let h = self.hms?.mean;
        derived_self_kerr_ratio(k, h).ok()
    }

    /// Plain-text table of the entries and family statistics.
    pub fn table(&self) -> String {
        let mut out = String::from("drive_MHz   target  ratio\n");
        for e in &self.entries {
            out.push_str(&format!("{:<11} {:<7} {:.4}\n", e.drive_frequency, e.target.mode().as_str(), e.ratio));
        }
        out.push_str("\nfamily  n  mean     std      std/mean  stable\n");
        for (name, fam) in [("kittel", &self.kittel), ("hms", &self.hms)] {
            match fam {
                Some(f) => {
                    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
                    out.push_str(&format!(
                        "{name:<7} {:<2} {:<8.4} {:<8} {:<9} {}\n",
                        f.n,
                        f.mean,
                        opt(f.std),
                        opt(f.relative_spread),
                        if f.stable { "yes" } else { "no" }
                    ));
                }
                None => out.push_str(&format!("{name:<7} 0\n")),
            }
        }
        if let Some(r) = self.self_kerr_ratio() {
            out.push_str(&format!("\nK_hs/K_ks = {r:.4}\n"));
        }
        out
    }
}

fn family_stats(values: &[f64], threshold: f64) -> Option<FamilyStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    let relative_spread = std.map(|s| if mean == 0.0 { f64::INFINITY } else { s / mean.abs() });
    Some(FamilyStats {
        n,
        mean,
        std,
        relative_spread,
        stable: relative_spread.is_some_and(|r| r < threshold),
    })
}

/// Per-family mean and spread of ratios measured at several drive frequencies.
pub fn ratio_stability_report(entries: &[RatioEntry], stability_threshold: f64) -> RatioReport {
    let values = |t: DriveTarget| -> Vec<f64> {
        entries.iter().filter(|e| e.target == t).map(|e| e.ratio).collect()
    };
    RatioReport {
        entries: entries.to_vec(),
        kittel: family_stats(&values(DriveTarget::Kittel), stability_threshold),
        hms: family_stats(&values(DriveTarget::Hms), stability_threshold),
        stability_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::ShiftPoint;
    use crate::model::ModeLabel;
    use crate::steady_state::linear_grid;
    use proptest::prelude::*;

    fn synthetic(gamma: f64, cp: f64, lo: f64, hi: f64, n: usize) -> ShiftCurve {
        let deltas = linear_grid(lo, hi, n);
        let shifts = model_shifts(&deltas, gamma, cp, SweepDirection::Up).unwrap();
        let points = deltas.iter().zip(&shifts).map(|(d, s)| ShiftPoint { delta: *d, shift: *s }).collect();
        ShiftCurve::new(ModeLabel::Kittel, points).unwrap()
    }

    fn curve(mode: ModeLabel, pts: &[(f64, f64)]) -> ShiftCurve {
        ShiftCurve::new(mode, pts.iter().map(|(d, s)| ShiftPoint { delta: *d, shift: *s }).collect()).unwrap()
    }

    #[test]
    fn noiseless_curve_recovers_drive_product() {
        let cp = -2018.4;
        let c = synthetic(11.6, cp, -120.0, 120.0, 241);
        let fit = fit_driven_curve(&c, 11.6, 9800.0, &FitOptions::default()).unwrap();
        assert!(((fit.cp_estimate - cp) / cp).abs() < 1e-3, "{}", fit.cp_estimate);
        assert!(fit.residual_rms < 2.0);
        assert_eq!(fit.n_points, 241);
    }

    #[test]
    fn zero_curve_gives_zero_drive() {
        let c = curve(ModeLabel::Kittel, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)]);
        let fit = fit_driven_curve(&c, 5.0, 1.0, &FitOptions::default()).unwrap();
        assert_eq!(fit.cp_estimate, 0.0);
        assert_eq!(fit.residual_rms, 0.0);
    }

    #[test]
    fn short_curves_are_rejected() {
        let c = curve(ModeLabel::Kittel, &[(0.0, -1.0), (1.0, -2.0)]);
        assert!(matches!(
            fit_driven_curve(&c, 5.0, 1.0, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bounded_iterations_report_best_estimate() {
        let c = synthetic(11.6, -2018.4, -120.0, 120.0, 121);
        let opts = FitOptions { max_iterations: 3, ..FitOptions::default() };
        match fit_driven_curve(&c, 11.6, 9800.0, &opts) {
            Err(Error::FitNotConverged { best_cp, residual_rms, .. }) => {
                assert!(best_cp < 0.0);
                assert!(residual_rms.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn down_sweep_data_needs_down_model() {
        let cp = -2018.4;
        let deltas = linear_grid(-120.0, 120.0, 241);
        let shifts = model_shifts(&deltas, 11.6, cp, SweepDirection::Down).unwrap();
        let c = curve(ModeLabel::Kittel, &deltas.iter().copied().zip(shifts).collect::<Vec<_>>());
        let opts = FitOptions { direction: SweepDirection::Down, ..FitOptions::default() };
        let fit = fit_driven_curve(&c, 11.6, 9800.0, &opts).unwrap();
        assert!(((fit.cp_estimate - cp) / cp).abs() < 1e-3);
    }

    #[test]
    fn ratio_reference_cases() {
        let d = synthetic(11.6, -2018.4, -120.0, 120.0, 241);
        let u = curve(ModeLabel::Hms, &d.points.iter().map(|p| (p.delta, 2.5 * p.shift)).collect::<Vec<_>>());
        assert!((fit_ratio(&d, &u).unwrap() - 2.5).abs() < 0.05);
        let zero = curve(ModeLabel::Hms, &d.points.iter().map(|p| (p.delta, 0.0)).collect::<Vec<_>>());
        assert_eq!(fit_ratio(&d, &zero).unwrap(), 0.0);
        let short = curve(ModeLabel::Hms, &[(0.0, 1.0), (1.0, 1.0)]);
        assert!(fit_ratio(&d, &short).is_err());
    }

    #[test]
    fn ratio_interpolates_but_does_not_bridge_gaps() {
        let d = curve(ModeLabel::Kittel, &[(0.5, -1.0), (1.5, -2.0), (2.5, -3.0), (10.5, -4.0)]);
        let u = curve(ModeLabel::Hms, &[(0.0, -0.5), (1.0, -1.5), (2.0, -2.5), (3.0, -3.5), (12.0, 0.0)]);
        let pairs = paired_shifts(&d, &u);
        assert_eq!(pairs.len(), 3);
        assert!((pairs[0].1 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_kerr_ratio_arithmetic() {
        assert!((derived_self_kerr_ratio(2.5, 0.5).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(derived_self_kerr_ratio(0.7, 0.7).unwrap(), 1.0);
        assert!((derived_self_kerr_ratio(2.49, 0.53).unwrap() - 4.698_113).abs() < 1e-6);
        assert!(derived_self_kerr_ratio(1.0, 0.0).is_err());
    }

    #[test]
    fn report_statistics() {
        let entries: Vec<RatioEntry> = [9700.0, 9750.0, 9800.0]
            .iter()
            .map(|f| RatioEntry { drive_frequency: *f, target: DriveTarget::Kittel, ratio: 2.5 })
            .chain([RatioEntry { drive_frequency: 10100.0, target: DriveTarget::Hms, ratio: 0.5 }])
            .collect();
        let r = ratio_stability_report(&entries, 0.1);
        let k = r.kittel.unwrap();
        assert_eq!(k.mean, 2.5);
        assert_eq!(k.std, Some(0.0));
        assert!(k.stable);
        let h = r.hms.unwrap();
        assert_eq!(h.std, None);
        assert!(!h.stable);
        assert!((r.self_kerr_ratio().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn report_uses_sample_deviation() {
        let entries: Vec<RatioEntry> = [2.4, 2.5, 2.6]
            .iter()
            .map(|r| RatioEntry { drive_frequency: 0.0, target: DriveTarget::Kittel, ratio: *r })
            .collect();
        let k = ratio_stability_report(&entries, 0.1).kittel.unwrap();
        assert!((k.std.unwrap() - 0.1).abs() < 1e-12);
        assert!((k.relative_spread.unwrap() - 0.04).abs() < 1e-12);
    }

    #[test]
    fn drive_product_scales_with_cubic_homogeneity() {
        // Δ → λΔ, δ → λδ, γ → λγ maps cP → λ³cP.
        let base = synthetic(5.0, -400.0, -40.0, 40.0, 161);
        let lambda: f64 = 2.0;
        let scaled = curve(
            ModeLabel::Kittel,
            &base.points.iter().map(|p| (lambda * p.delta, lambda * p.shift)).collect::<Vec<_>>(),
        );
        let a = fit_driven_curve(&base, 5.0, 0.0, &FitOptions::default()).unwrap();
        let b = fit_driven_curve(&scaled, lambda * 5.0, 0.0, &FitOptions::default()).unwrap();
        assert!((b.cp_estimate / a.cp_estimate - lambda.powi(3)).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn ratio_is_exact_on_proportional_curves(
            k in -10.0f64..10.0,
            shifts in proptest::collection::vec(-100.0f64..100.0, 3..60),
        ) {
            prop_assume!(shifts.iter().any(|s| s.abs() > 1e-3));
            let d = curve(ModeLabel::Kittel, &shifts.iter().enumerate().map(|(i, s)| (i as f64, *s)).collect::<Vec<_>>());
            let u = curve(ModeLabel::Hms, &shifts.iter().enumerate().map(|(i, s)| (i as f64, k * s)).collect::<Vec<_>>());
            prop_assert!((fit_ratio(&d, &u).unwrap() - k).abs() < 1e-9);
        }

        #[test]
        fn ratio_is_symmetric_under_sign_flip(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60),
        ) {
            prop_assume!(pairs.iter().any(|p| p.0.abs() > 1e-3));
            let mk = |sign: f64| {
                let d = curve(ModeLabel::Kittel, &pairs.iter().enumerate().map(|(i, p)| (i as f64, sign * p.0)).collect::<Vec<_>>());
                let u = curve(ModeLabel::Hms, &pairs.iter().enumerate().map(|(i, p)| (i as f64, sign * p.1)).collect::<Vec<_>>());
                fit_ratio(&d, &u).unwrap()
            };
            prop_assert_eq!(mk(1.0), mk(-1.0));
        }
    }
}
