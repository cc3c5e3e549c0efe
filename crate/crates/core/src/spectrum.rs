//! Probe transmission of the cavity dressed by the two magnon modes.
//!
//! The drive enters only through the steady-state Kerr shifts of the magnon
//! frequencies; the probe response itself is linear.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{mode_frequencies_at_current, DriveConfig, ModeLabel, SystemConfig};
use crate::steady_state::{hysteresis_sweep, SweepDirection, SweepResult};

/// Linear-response constants extracted once from a [`SystemConfig`].
#[derive(Debug, Clone, Copy)]
pub struct Response {
    cavity: f64,
    half_kappa: f64,
    kappa_ext: f64,
    gk2: f64,
    gh2: f64,
    half_gamma_k: f64,
    half_gamma_h: f64,
}

impl Response {
    pub fn new(cfg: &SystemConfig) -> Self {
        Response {
            cavity: cfg.cavity().bare_frequency,
            half_kappa: 0.5 * cfg.cavity().linewidth,
            kappa_ext: cfg.kappa_ext(),
            gk2: cfg.couplings.g_k.powi(2),
            gh2: cfg.couplings.g_h.powi(2),
            half_gamma_k: 0.5 * cfg.kittel().linewidth,
            half_gamma_h: 0.5 * cfg.hms().linewidth,
        }
    }

    pub fn s21(&self, omega: f64, kittel: f64, hms: f64) -> Complex64 {
        let pole = |detuning: f64, half_width: f64| Complex64::new(-half_width, detuning);
        let denom = pole(omega - self.cavity, self.half_kappa)
            + self.gk2 / pole(omega - kittel, self.half_gamma_k)
            + self.gh2 / pole(omega - hms, self.half_gamma_h);
        Complex64::new(self.kappa_ext, 0.0) / denom
    }

    pub fn s21_sq(&self, omega: f64, kittel: f64, hms: f64) -> f64 {
        self.s21(omega, kittel, hms).norm_sqr()
    }

    /// Peak transmission of the bare cavity, `(2κ_ext/κ)²`.
    pub fn transmission_bound(&self) -> f64 {
        (self.kappa_ext / self.half_kappa).powi(2)
    }
}

/// Complex transmission `S21(ω)` with the magnons at `kittel_eff` and `hms_eff` (MHz).
pub fn s21_linear(omega: f64, cfg: &SystemConfig, kittel_eff: f64, hms_eff: f64) -> Complex64 {
    Response::new(cfg).s21(omega, kittel_eff, hms_eff)
}

/// One row of a map, borrowed.
#[derive(Debug, Clone, Copy)]
pub struct ProbeTrace<'a> {
    /// Coil current, A.
    pub control: f64,
    pub probe_frequencies: &'a [f64],
    pub s21_sq: &'a [f64],
}

/// Mode frequencies and shifts used to synthesize one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AppliedShift {
    pub control: f64,
    pub kittel_bare: f64,
    pub hms_bare: f64,
    /// Detuning of the driven mode from the drive, MHz (0 when undriven).
    pub detuning: f64,
    pub kittel_shift: f64,
    pub hms_shift: f64,
}

impl AppliedShift {
    pub fn frequency(&self, mode: ModeLabel) -> Option<f64> {
        match mode {
            ModeLabel::Kittel => Some(self.kittel_bare + self.kittel_shift),
            ModeLabel::Hms => Some(self.hms_bare + self.hms_shift),
            ModeLabel::Cavity => None,
        }
    }

    pub fn shift(&self, mode: ModeLabel) -> f64 {
        match mode {
            ModeLabel::Kittel => self.kittel_shift,
            ModeLabel::Hms => self.hms_shift,
            ModeLabel::Cavity => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMap {
    /// Coil currents in acquisition order, A.
    pub controls: Vec<f64>,
    /// Strictly increasing, MHz.
    pub probe: Vec<f64>,
    /// Row-major `controls × probe`.
    pub s21_sq: Vec<f64>,
    pub drive: Option<DriveConfig>,
    /// Ground truth, present for synthesized maps only.
    pub truth: Option<Vec<AppliedShift>>,
}

impl SpectrumMap {
    pub fn new(controls: Vec<f64>, probe: Vec<f64>, s21_sq: Vec<f64>) -> Result<Self> {
        if controls.is_empty() || probe.is_empty() {
            return Err(Error::Input("map needs at least one control and one probe point".into()));
        }
        if s21_sq.len() != controls.len() * probe.len() {
            return Err(Error::Input(format!(
                "map data has {} values, expected {}×{}",
                s21_sq.len(),
                controls.len(),
                probe.len()
            )));
        }
        check_increasing(&probe, "probe grid")?;
        Ok(SpectrumMap {
            controls,
            probe,
            s21_sq,
            drive: None,
            truth: None,
        })
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn n_probe(&self) -> usize {
        self.probe.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.probe.len();
        &self.s21_sq[i * n..(i + 1) * n]
    }

    pub fn trace(&self, i: usize) -> ProbeTrace<'_> {
        ProbeTrace {
            control: self.controls[i],
            probe_frequencies: &self.probe,
            s21_sq: self.row(i),
        }
    }

    pub fn traces(&self) -> impl Iterator<Item = ProbeTrace<'_>> + '_ {
        (0..self.n_controls()).map(|i| self.trace(i))
    }

    /// Multiplicative noise of `sigma_db` dB, reproducible per `(seed, row)`
    /// regardless of thread scheduling.
    pub fn add_db_noise(&mut self, sigma_db: f64, seed: u64) -> Result<()> {
        if sigma_db == 0.0 {
            return Ok(());
        }
        let normal = Normal::new(0.0, sigma_db)
            .map_err(|e| Error::Input(format!("noise level {sigma_db} dB: {e}")))?;
        let n = self.probe.len();
        self.s21_sq
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                for v in row.iter_mut() {
                    *v *= 10f64.powf(normal.sample(&mut rng) / 10.0);
                }
            });
        Ok(())
    }
}

pub(crate) fn check_increasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("{what} contains non-finite values")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

/// Sweep direction implied by the order of a control grid.
pub fn control_direction(controls: &[f64]) -> Result<SweepDirection> {
    if controls.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("control grid contains non-finite values".into()));
    }
    if controls.windows(2).all(|w| w[1] > w[0]) {
        Ok(SweepDirection::Up)
    } else if controls.windows(2).all(|w| w[1] < w[0]) {
        Ok(SweepDirection::Down)
    } else {
        Err(Error::Input("control grid must be strictly monotone".into()))
    }
}

/// Mode frequencies and Kerr shifts along a current sweep. The driven mode
/// follows the sweep-selected steady-state branch; the other mode moves by
/// the cross-to-self ratio times that shift.
pub fn applied_shifts(
    cfg: &SystemConfig,
    currents: &[f64],
    drive: Option<&DriveConfig>,
) -> Result<Vec<AppliedShift>> {
    control_direction(currents)?;
    let bare: Vec<(f64, f64)> = currents
        .iter()
        .map(|i| mode_frequencies_at_current(&cfg.calibration, *i))
        .collect();
    let Some(drive) = drive else {
        return Ok(currents
            .iter()
            .zip(&bare)
            .map(|(c, (k, h))| AppliedShift {
                control: *c,
                kittel_bare: *k,
                hms_bare: *h,
                detuning: 0.0,
                kittel_shift: 0.0,
                hms_shift: 0.0,
            })
            .collect());
    };
    let target = drive.target.mode();
    let sweep = driven_sweep(cfg, currents, drive)?;
    Ok(sweep
        .points
        .iter()
        .zip(&bare)
        .map(|(p, (k, h))| {
            let (own, other) = (p.shift(), p.cross_shift);
            let (kittel_shift, hms_shift) = match target {
                ModeLabel::Hms => (other, own),
                _ => (own, other),
            };
            AppliedShift {
                control: p.control,
                kittel_bare: *k,
                hms_bare: *h,
                detuning: p.solution.detuning,
                kittel_shift,
                hms_shift,
            }
        })
        .collect())
}

/// Steady state of the driven mode along a current sweep, with the currents
/// as controls, the undriven mode's shift as `cross_shift`, and excitation
/// numbers from the self-Kerr coefficient.
pub fn driven_sweep(cfg: &SystemConfig, currents: &[f64], drive: &DriveConfig) -> Result<SweepResult> {
    let direction = control_direction(currents)?;
    let target = drive.target.mode();
    let k_self = cfg.kerr.self_kerr(target);
    // Without a self-Kerr term the drive produces no shift whatever c says.
    let cp = if k_self == 0.0 { 0.0 } else { drive.drive_product() };
    let detunings: Vec<f64> = currents
        .iter()
        .map(|i| {
            let (k, h) = mode_frequencies_at_current(&cfg.calibration, *i);
            match target {
                ModeLabel::Hms => h - drive.drive_frequency,
                _ => k - drive.drive_frequency,
            }
        })
        .collect();
    let sweep = hysteresis_sweep(cfg.linewidth(target), cp, &detunings, direction).map_err(|e| match e {
        Error::Domain(_) => Error::AtControl {
            control: currents[0],
            source: Box::new(e),
        },
        other => other,
    })?;
    sweep
        .with_controls(currents)?
        .with_kerr(cfg.kerr.cross_ratio(target), k_self)
}

/// Synthesizes `|S21|²` over `currents × probe`. Rows are computed in
/// parallel and assembled in grid order.
pub fn synthesize_map(
    cfg: &SystemConfig,
    currents: &[f64],
    probe: &[f64],
    drive: Option<&DriveConfig>,
) -> Result<SpectrumMap> {
    if currents.is_empty() || probe.is_empty() {
        return Err(Error::Input("current and probe grids must be non-empty".into()));
    }
    check_increasing(probe, "probe grid")?;
    let truth = applied_shifts(cfg, currents, drive)?;
    let response = Response::new(cfg);
    let rows: Vec<Vec<f64>> = truth
        .par_iter()
        .map(|t| {
            let k = t.kittel_bare + t.kittel_shift;
            let h = t.hms_bare + t.hms_shift;
            probe.iter().map(|w| response.s21_sq(*w, k, h)).collect()
        })
        .collect();
    Ok(SpectrumMap {
        controls: currents.to_vec(),
        probe: probe.to_vec(),
        s21_sq: rows.concat(),
        drive: drive.copied(),
        truth: Some(truth),
    })
}

/// Vertex of the parabola through three equally spaced samples, as an offset
/// in grid steps from the middle sample (clamped to ±½).
pub(crate) fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

/// Transmission maximum with sub-grid refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub frequency: f64,
    pub height: f64,
}

fn refined_extremum(freqs: &[f64], values: &[f64], k: usize) -> Peak {
    if k == 0 || k + 1 >= values.len() {
        return Peak {
            frequency: freqs[k],
            height: values[k],
        };
    }
    let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
    let off = parabolic_offset(a, b, c);
    let step = if off >= 0.0 { freqs[k + 1] - freqs[k] } else { freqs[k] - freqs[k - 1] };
    Peak {
        frequency: freqs[k] + off * step,
        height: b - 0.25 * (a - c) * off,
    }
}

/// Splitting of the transmission doublet where a magnon branch crosses the
/// cavity, measured at the current where both peaks are equally high.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anticrossing {
    pub mode: ModeLabel,
    pub current: f64,
    pub lower: Peak,
    pub upper: Peak,
}

impl Anticrossing {
    pub fn separation(&self) -> f64 {
        self.upper.frequency - self.lower.frequency
    }
}

/// Locates the balanced doublet for `mode` in the undriven system.
pub fn anticrossing(cfg: &SystemConfig, mode: ModeLabel) -> Result<Anticrossing> {
    let g = match mode {
        ModeLabel::Kittel => cfg.couplings.g_k,
        ModeLabel::Hms => cfg.couplings.g_h,
        ModeLabel::Cavity => {
            return Err(Error::Input("anticrossing needs a magnon mode".into()));
        }
    };
    let cal = &cfg.calibration;
    let wc = cfg.cavity().bare_frequency;
    let center = cal
        .current_for_frequency(mode, wc)
        .ok_or_else(|| Error::Domain("calibration does not tune the magnon modes".into()))?;
    let half_window = 2.0 * g + 2.0 * cfg.cavity().linewidth + cfg.linewidth(mode) + 10.0;
    let step = (half_window / 4000.0).min(0.01);
    let n = (2.0 * half_window / step) as usize + 1;
    let probe: Vec<f64> = (0..n).map(|i| wc - half_window + step * i as f64).collect();
    let response = Response::new(cfg);

    let doublet = |current: f64| -> Option<(Peak, Peak)> {
        let (k, h) = mode_frequencies_at_current(cal, current);
        let magnon = if mode == ModeLabel::Kittel { k } else { h };
        let t: Vec<f64> = probe.iter().map(|w| response.s21_sq(*w, k, h)).collect();
        // Split at the anti-resonance nearest the magnon frequency.
        let split = (1..n - 1)
            .filter(|&i| t[i] < t[i - 1] && t[i] <= t[i + 1])
            .min_by(|&a, &b| (probe[a] - magnon).abs().total_cmp(&(probe[b] - magnon).abs()))?;
        let argmax = |r: std::ops::Range<usize>| {
            r.max_by(|&a, &b| t[a].total_cmp(&t[b]))
                .map(|k| refined_extremum(&probe, &t, k))
        };
        Some((argmax(0..split)?, argmax(split + 1..n)?))
    };
    let imbalance = |current: f64| doublet(current).map(|(lo, hi)| lo.height - hi.height);

    // The doublet is only resolved close to balance, so scan for a sign
    // change of the imbalance before bisecting.
    let span = half_window / cal.tuning_rate().abs();
    let scan = 480;
    let samples: Vec<(f64, Option<f64>)> = (0..=scan)
        .map(|i| {
            let c = center - span + 2.0 * span * i as f64 / scan as f64;
            (c, imbalance(c))
        })
        .collect();
    let bracket = samples.windows(2).find_map(|w| match (w[0], w[1]) {
        ((a, Some(fa)), (b, Some(fb))) if fa * fb <= 0.0 => Some((a, fa, b)),
        _ => None,
    });
    let Some((mut a, mut fa, mut b)) = bracket else {
        return Err(Error::Domain(format!("no balanced {mode} doublet near the cavity")));
    };
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let Some(fm) = imbalance(m) else { break };
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let current = 0.5 * (a + b);
    let (lower, upper) = doublet(current)
        .ok_or_else(|| Error::Domain(format!("{mode} doublet lost at balance")))?;
    Ok(Anticrossing {
        mode,
        current,
        lower,
        upper,
    })
}

/// Uniform grid `start, start+step, …` up to and including `end` (within ½ step).
pub fn stepped_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end >= start) {
        return Err(Error::Input(format!(
            "grid {start}..{end} with step {step} is empty or ill-formed"
        )));
    }
    let n = ((end - start) / step + 0.5).floor() as usize + 1;
    Ok((0..n).map(|i| start + step * i as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriveTarget, KerrSet};

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    #[test]
    fn uncoupled_cavity_is_lorentzian() {
        let mut c = cfg();
        c.couplings.g_k = 0.0;
        c.couplings.g_h = 0.0;
        let r = Response::new(&c);
        let wc = c.cavity().bare_frequency;
        let kappa = c.cavity().linewidth;
        let peak = r.s21_sq(wc, 9000.0, 9000.0);
        assert!((peak - r.transmission_bound()).abs() < 1e-15);
        let half = r.s21_sq(wc + 0.5 * kappa, 9000.0, 9000.0);
        assert!((half / peak - 0.5).abs() < 1e-12);
        let probe = stepped_grid(wc - 20.0, wc + 20.0, 0.01).unwrap();
        let best = probe
            .iter()
            .max_by(|a, b| r.s21_sq(**a, 0.0, 0.0).total_cmp(&r.s21_sq(**b, 0.0, 0.0)))
            .unwrap();
        assert!((best - wc).abs() < 0.006);
    }

    #[test]
    fn zero_external_coupling_blocks_transmission() {
        let mut c = cfg();
        c.kappa_ext = Some(0.0);
        let probe = stepped_grid(9900.0, 10200.0, 1.0).unwrap();
        let map = synthesize_map(&c, &[4.0, 4.5, 5.0], &probe, None).unwrap();
        assert!(map.s21_sq.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kittel_splitting_is_twice_the_coupling() {
        let a = anticrossing(&cfg(), ModeLabel::Kittel).unwrap();
        assert!((a.separation() - 81.0).abs() / 81.0 < 1e-2, "{}", a.separation());
        let mut strong = cfg();
        strong.couplings.g_k = 300.0;
        strong.couplings.g_h = 0.0;
        let a = anticrossing(&strong, ModeLabel::Kittel).unwrap();
        assert!((a.separation() - 600.0).abs() / 600.0 < 1e-3, "{}", a.separation());
    }

    #[test]
    fn hms_splitting_is_twice_the_coupling() {
        let a = anticrossing(&cfg(), ModeLabel::Hms).unwrap();
        assert!((a.separation() - 4.0).abs() / 4.0 < 0.05, "{}", a.separation());
    }

    #[test]
    fn energy_bound_holds_on_maps() {
        let c = cfg();
        let probe = stepped_grid(9500.0, 10500.0, 0.5).unwrap();
        let currents = crate::steady_state::linear_grid(4.0, 5.5, 31);
        let drive = c.drive_on(DriveTarget::Kittel, 9800.0);
        let map = synthesize_map(&c, &currents, &probe, Some(&drive)).unwrap();
        let bound = Response::new(&c).transmission_bound();
        assert!(bound <= 1.0);
        assert!(map.s21_sq.iter().all(|v| *v <= bound * (1.0 + 1e-12)));
    }

    #[test]
    fn zero_kerr_drive_equals_undriven_map() {
        let mut c = cfg();
        c.kerr = KerrSet { k_self_kittel: 0.0, k_self_hms: 0.0, k_cross: 0.0 };
        let probe = stepped_grid(9700.0, 10200.0, 0.5).unwrap();
        let currents = crate::steady_state::linear_grid(4.2, 4.9, 41);
        let drive = c.drive_on(DriveTarget::Kittel, 9800.0);
        let driven = synthesize_map(&c, &currents, &probe, Some(&drive)).unwrap();
        let plain = synthesize_map(&c, &currents, &probe, None).unwrap();
        assert_eq!(driven.s21_sq, plain.s21_sq);
    }

    #[test]
    fn doubling_cross_ratio_doubles_displacement() {
        let c = cfg();
        let mut doubled = c.clone();
        doubled.kerr.k_cross *= 2.0;
        let currents = crate::steady_state::linear_grid(4.1, 4.7, 121);
        let drive = c.drive_on(DriveTarget::Kittel, 9800.0);
        let a = applied_shifts(&c, &currents, Some(&drive)).unwrap();
        let b = applied_shifts(&doubled, &currents, Some(&drive)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(y.hms_shift, 2.0 * x.hms_shift);
            assert_eq!(y.kittel_shift, x.kittel_shift);
        }
    }

    #[test]
    fn kittel_drive_moves_hms_branch_by_150() {
        let c = cfg();
        let drive = c.drive_on(DriveTarget::Kittel, 9800.0);
        let rate = c.calibration.tuning_rate();
        let i0 = c.calibration.current_for_frequency(ModeLabel::Kittel, 9800.0).unwrap();
        let currents = crate::steady_state::linear_grid(i0 - 120.0 / rate, i0 + 120.0 / rate, 241);
        let truth = applied_shifts(&c, &currents, Some(&drive)).unwrap();
        let max_k = truth.iter().map(|t| t.kittel_shift.abs()).fold(0.0, f64::max);
        let max_h = truth.iter().map(|t| t.hms_shift.abs()).fold(0.0, f64::max);
        assert!((max_k - 60.0).abs() < 1e-6, "{max_k}");
        assert!((max_h - 150.0).abs() < 1e-5, "{max_h}");
    }

    #[test]
    fn map_rejects_bad_grids() {
        let c = cfg();
        assert!(synthesize_map(&c, &[], &[1.0], None).is_err());
        assert!(synthesize_map(&c, &[1.0], &[2.0, 1.0], None).is_err());
        assert!(synthesize_map(&c, &[1.0, 3.0, 2.0], &[1.0], None).is_err());
    }

    #[test]
    fn noise_is_reproducible_and_seeded() {
        let c = cfg();
        let probe = stepped_grid(9900.0, 10200.0, 1.0).unwrap();
        let base = synthesize_map(&c, &[4.5, 4.6], &probe, None).unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        let mut d = base.clone();
        a.add_db_noise(0.05, 3).unwrap();
        b.add_db_noise(0.05, 3).unwrap();
        d.add_db_noise(0.05, 4).unwrap();
        assert_eq!(a.s21_sq, b.s21_sq);
        assert_ne!(a.s21_sq, d.s21_sq);
        assert_ne!(a.s21_sq, base.s21_sq);
    }
}
