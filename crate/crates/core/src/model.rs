//! Parameter model of the driven cavity–Kittel–HMS system.
//!
//! Frequencies, linewidths (FWHM), couplings, Kerr coefficients and detunings
//! are all linear frequencies in MHz (`ω/2π`). Material constants are SI.
//! The closed-form coefficient formulas return angular rates internally and
//! convert once, at the boundary, through [`rad_per_s_to_mhz`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permeability, T·m/A.
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Electron gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const GAMMA_E: f64 = 1.760_859_630_23e11;

/// Angular rate (rad/s) to linear frequency in MHz.
pub fn rad_per_s_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI) / 1e6
}

/// Drive power conversion, `P[mW] = 10^(dBm/10)`.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    Cavity,
    Kittel,
    Hms,
}

impl ModeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::Cavity => "cavity",
            ModeLabel::Kittel => "kittel",
            ModeLabel::Hms => "hms",
        }
    }
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cavity" => Ok(ModeLabel::Cavity),
            "kittel" => Ok(ModeLabel::Kittel),
            "hms" => Ok(ModeLabel::Hms),
            other => Err(Error::Input(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeParams {
    pub label: ModeLabel,
    /// MHz.
    pub bare_frequency: f64,
    /// FWHM, MHz.
    pub linewidth: f64,
}

/// Coherent coupling strengths, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSet {
    pub g_k: f64,
    pub g_h: f64,
    pub g_kh: f64,
}

/// Signed Kerr coefficients, MHz per excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KerrSet {
    pub k_self_kittel: f64,
    pub k_self_hms: f64,
    pub k_cross: f64,
}

impl KerrSet {
    /// Builds a set from the Kittel self-Kerr coefficient and the two
    /// cross-to-self ratios.
    pub fn from_ratios(k_self_kittel: f64, cross_over_kittel: f64, cross_over_hms: f64) -> Self {
        let k_cross = cross_over_kittel * k_self_kittel;
        KerrSet {
            k_self_kittel,
            k_self_hms: k_cross / cross_over_hms,
            k_cross,
        }
    }

    pub fn self_kerr(&self, mode: ModeLabel) -> f64 {
        match mode {
            ModeLabel::Kittel => self.k_self_kittel,
            ModeLabel::Hms => self.k_self_hms,
            ModeLabel::Cavity => 0.0,
        }
    }

    /// `K_cross / K_self` of the driven mode; zero when the self term vanishes.
    pub fn cross_ratio(&self, driven: ModeLabel) -> f64 {
        let k_self = self.self_kerr(driven);
        if k_self == 0.0 {
            0.0
        } else {
            self.k_cross / k_self
        }
    }
}

/// Material constants entering the anisotropy and mode-overlap derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// First-order magnetocrystalline anisotropy constant, J/m³.
    pub anisotropy_constant: f64,
    /// rad·s⁻¹·T⁻¹.
    pub gyromagnetic_ratio: f64,
    /// Kittel-mode (saturation) magnetization, A/m.
    pub saturation_magnetization: f64,
    /// HMS sub-magnetization, A/m.
    pub hms_magnetization: f64,
    /// m³.
    pub sphere_volume: f64,
    /// Kittel–HMS mode overlap β, T·m/A.
    pub overlap_coefficient: f64,
    pub total_spin_kittel: f64,
    pub total_spin_hms: f64,
    pub vacuum_permeability: f64,
    pub hbar: f64,
}

impl MaterialParams {
    /// A 1 mm YIG sphere biased along `[110]`, with the mode-overlap and HMS
    /// sub-magnetization chosen so that `K_cross/K_ks = 2.5`,
    /// `K_hs/K_ks = 5` and `|g_kh| = 2 MHz`.
    pub fn yig_sphere() -> Self {
        let radius: f64 = 0.5e-3;
        let volume = 4.0 / 3.0 * PI * radius.powi(3);
        let magnetization = 1.4e5;
        let anisotropy = -610.0;
        let total_spin_kittel = magnetization * volume / (HBAR * GAMMA_E);
        let overlap = 2.5 * 13.0 * anisotropy / (16.0 * magnetization * magnetization);
        let k_cross = rad_per_s_to_mhz(overlap * HBAR * GAMMA_E * GAMMA_E / volume).abs();
        let spin_product = (2.0 / k_cross).powi(2);
        MaterialParams {
            anisotropy_constant: anisotropy,
            gyromagnetic_ratio: GAMMA_E,
            saturation_magnetization: magnetization,
            hms_magnetization: magnetization / 5f64.sqrt(),
            sphere_volume: volume,
            overlap_coefficient: overlap,
            total_spin_kittel,
            total_spin_hms: spin_product / total_spin_kittel,
            vacuum_permeability: MU0,
            hbar: HBAR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sphere_volume > 0.0) {
            return Err(Error::Domain("sphere volume must be positive".into()));
        }
        if !(self.total_spin_kittel > self.total_spin_hms && self.total_spin_hms > 0.0) {
            return Err(Error::Domain(
                "total spins must satisfy S_K > S_H > 0".into(),
            ));
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::yig_sphere()
    }
}

fn anisotropy_self_kerr(m: &MaterialParams, magnetization: f64) -> Result<f64> {
    if !(m.sphere_volume > 0.0) {
        return Err(Error::Domain("sphere volume must be positive".into()));
    }
    if !(magnetization > 0.0) {
        return Err(Error::Domain("magnetization must be positive".into()));
    }
    let gamma = m.gyromagnetic_ratio;
    let omega = 13.0 * m.hbar * m.anisotropy_constant * gamma * gamma
        / (16.0 * magnetization * magnetization * m.sphere_volume);
    Ok(rad_per_s_to_mhz(omega))
}

/// Kittel self-Kerr coefficient `13ħK_an γ²/(16 M² V)`, MHz per excitation.
pub fn kerr_self_from_material(m: &MaterialParams) -> Result<f64> {
    anisotropy_self_kerr(m, m.saturation_magnetization)
}

/// HMS self-Kerr coefficient: same closed form with the HMS sub-magnetization.
pub fn kerr_self_hms_from_material(m: &MaterialParams) -> Result<f64> {
    anisotropy_self_kerr(m, m.hms_magnetization)
}

/// Cross-Kerr coefficient, Kittel–HMS coupling and the static frequency
/// renormalizations produced by the overlap term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossKerr {
    pub k_cross: f64,
    pub g_kh: f64,
    pub shift_kittel: f64,
    pub shift_hms: f64,
}

pub fn cross_kerr_from_overlap(m: &MaterialParams) -> Result<CrossKerr> {
    if !(m.sphere_volume > 0.0) {
        return Err(Error::Domain("sphere volume must be positive".into()));
    }
    if m.total_spin_kittel < 0.0 || m.total_spin_hms < 0.0 {
        return Err(Error::Domain("total spin numbers must be non-negative".into()));
    }
    let gamma = m.gyromagnetic_ratio;
    let k_cross = rad_per_s_to_mhz(m.overlap_coefficient * m.hbar * gamma * gamma / m.sphere_volume);
    Ok(CrossKerr {
        k_cross,
        g_kh: k_cross * (m.total_spin_kittel * m.total_spin_hms).sqrt(),
        shift_kittel: -k_cross * m.total_spin_hms,
        shift_hms: -k_cross * m.total_spin_kittel,
    })
}

/// Full Kerr set derived from material constants.
pub fn kerr_set_from_material(m: &MaterialParams) -> Result<KerrSet> {
    Ok(KerrSet {
        k_self_kittel: kerr_self_from_material(m)?,
        k_self_hms: kerr_self_hms_from_material(m)?,
        k_cross: cross_kerr_from_overlap(m)?.k_cross,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveTarget {
    Kittel,
    Hms,
}

impl DriveTarget {
    pub fn mode(self) -> ModeLabel {
        match self {
            DriveTarget::Kittel => ModeLabel::Kittel,
            DriveTarget::Hms => ModeLabel::Hms,
        }
    }

    /// The magnon mode that is not driven.
    pub fn other(self) -> ModeLabel {
        match self {
            DriveTarget::Kittel => ModeLabel::Hms,
            DriveTarget::Hms => ModeLabel::Kittel,
        }
    }
}

impl std::fmt::Display for DriveTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.mode().as_str())
    }
}

/// Drive-efficiency coefficients, MHz³/mW. They carry the Kerr sign so the
/// steady-state shift has the sign of the Kerr coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveEfficiency {
    pub efficiency_kittel: f64,
    pub efficiency_hms: f64,
    #[serde(default = "default_power_dbm")]
    pub power_dbm: f64,
}

fn default_power_dbm() -> f64 {
    25.0
}

impl DriveEfficiency {
    /// Efficiency giving a peak self-shift `max_shift` (signed, MHz) for a mode
    /// of FWHM `linewidth` at `power_dbm`: the peak of the steady-state
    /// response is `cP/(γ/2)²`.
    pub fn for_peak_shift(max_shift: f64, linewidth: f64, power_dbm: f64) -> f64 {
        max_shift * (linewidth / 2.0).powi(2) / dbm_to_mw(power_dbm)
    }
}

/// One monochromatic drive applied to a single magnon mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    /// MHz.
    pub drive_frequency: f64,
    pub drive_power_dbm: f64,
    /// MHz³/mW.
    pub efficiency_kittel: f64,
    /// MHz³/mW.
    pub efficiency_hms: f64,
    pub target: DriveTarget,
}

impl DriveConfig {
    pub fn power_mw(&self) -> f64 {
        dbm_to_mw(self.drive_power_dbm)
    }

    pub fn efficiency(&self) -> f64 {
        match self.target {
            DriveTarget::Kittel => self.efficiency_kittel,
            DriveTarget::Hms => self.efficiency_hms,
        }
    }

    /// The forcing term `c·P_d` of the steady-state cubic, MHz³.
    pub fn drive_product(&self) -> f64 {
        self.efficiency() * self.power_mw()
    }
}

/// Linear coil-current → bias-field → magnon-frequency mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldCalibration {
    /// T/A.
    pub current_to_field_slope: f64,
    /// T.
    pub field_offset: f64,
    /// MHz/T.
    pub kittel_slope: f64,
    /// `ω_h − ω_k`, MHz.
    pub hms_offset_from_kittel: f64,
}

impl FieldCalibration {
    /// Calibration passing through `kittel_at_anchor` (MHz) at `anchor_current`
    /// (A) with a tuning rate of `mhz_per_amp`.
    pub fn from_anchor(
        kittel_slope: f64,
        mhz_per_amp: f64,
        anchor_current: f64,
        kittel_at_anchor: f64,
        hms_offset_from_kittel: f64,
    ) -> Self {
        let current_to_field_slope = mhz_per_amp / kittel_slope;
        let field_offset = kittel_at_anchor / kittel_slope - current_to_field_slope * anchor_current;
        FieldCalibration {
            current_to_field_slope,
            field_offset,
            kittel_slope,
            hms_offset_from_kittel,
        }
    }

    pub fn field_at_current(&self, current: f64) -> f64 {
        self.current_to_field_slope * current + self.field_offset
    }

    pub fn frequency(&self, mode: ModeLabel, current: f64) -> Option<f64> {
        let (kittel, hms) = mode_frequencies_at_current(self, current);
        match mode {
            ModeLabel::Kittel => Some(kittel),
            ModeLabel::Hms => Some(hms),
            ModeLabel::Cavity => None,
        }
    }

    /// Inverse of [`mode_frequencies_at_current`] for one magnon branch.
    /// `None` for the cavity or a current-independent calibration.
    pub fn current_for_frequency(&self, mode: ModeLabel, frequency: f64) -> Option<f64> {
        let kittel = match mode {
            ModeLabel::Kittel => frequency,
            ModeLabel::Hms => frequency - self.hms_offset_from_kittel,
            ModeLabel::Cavity => return None,
        };
        let rate = self.kittel_slope * self.current_to_field_slope;
        if rate == 0.0 {
            return None;
        }
        Some((kittel / self.kittel_slope - self.field_offset) / self.current_to_field_slope)
    }

    /// MHz of Kittel tuning per ampere.
    pub fn tuning_rate(&self) -> f64 {
        self.kittel_slope * self.current_to_field_slope
    }
}

impl Default for FieldCalibration {
    /// HMS crosses a 10.07 GHz cavity at 4.75 A; 600 MHz/A tuning.
    fn default() -> Self {
        FieldCalibration::from_anchor(
            rad_per_s_to_mhz(GAMMA_E),
            600.0,
            4.75,
            10_070.0 - 301.0,
            301.0,
        )
    }
}

/// `(ω_k, ω_h)` in MHz at coil current `current` (A).
pub fn mode_frequencies_at_current(cal: &FieldCalibration, current: f64) -> (f64, f64) {
    let kittel = cal.kittel_slope * cal.field_at_current(current);
    (kittel, kittel + cal.hms_offset_from_kittel)
}

/// Full parameterization of the three-mode system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub modes: Vec<ModeParams>,
    pub couplings: CouplingSet,
    pub kerr: KerrSet,
    pub calibration: FieldCalibration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialParams>,
    /// Cavity coupling rate to each probe port, MHz; defaults to `κ_tot/3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_ext: Option<f64>,
    pub drive: DriveEfficiency,
    /// Minimum `|Λ|/g` for a pair of modes to count as dispersive.
    #[serde(default = "default_dispersive_threshold")]
    pub dispersive_threshold: f64,
}

fn default_dispersive_threshold() -> f64 {
    10.0
}

impl Default for SystemConfig {
    fn default() -> Self {
        let material = MaterialParams::yig_sphere();
        let kerr = kerr_set_from_material(&material).expect("default material is valid");
        SystemConfig {
            modes: vec![
                ModeParams {
                    label: ModeLabel::Cavity,
                    bare_frequency: 10_070.0,
                    linewidth: 4.0,
                },
                ModeParams {
                    label: ModeLabel::Kittel,
                    bare_frequency: 9_800.0,
                    linewidth: 11.6,
                },
                ModeParams {
                    label: ModeLabel::Hms,
                    bare_frequency: 10_101.0,
                    linewidth: 5.0,
                },
            ],
            couplings: CouplingSet {
                g_k: 40.5,
                g_h: 2.0,
                g_kh: 2.0,
            },
            kerr,
            calibration: FieldCalibration::default(),
            material: Some(material),
            kappa_ext: None,
            drive: DriveEfficiency {
                efficiency_kittel: DriveEfficiency::for_peak_shift(-60.0, 11.6, 25.0),
                efficiency_hms: DriveEfficiency::for_peak_shift(-20.0, 5.0, 25.0),
                power_dbm: 25.0,
            },
            dispersive_threshold: default_dispersive_threshold(),
        }
    }
}

impl SystemConfig {
    pub fn mode(&self, label: ModeLabel) -> &ModeParams {
        self.modes
            .iter()
            .find(|m| m.label == label)
            .expect("validated config holds every mode")
    }

    pub fn mode_mut(&mut self, label: ModeLabel) -> &mut ModeParams {
        self.modes
            .iter_mut()
            .find(|m| m.label == label)
            .expect("validated config holds every mode")
    }

    pub fn cavity(&self) -> &ModeParams {
        self.mode(ModeLabel::Cavity)
    }

    pub fn kittel(&self) -> &ModeParams {
        self.mode(ModeLabel::Kittel)
    }

    pub fn hms(&self) -> &ModeParams {
        self.mode(ModeLabel::Hms)
    }

    pub fn kappa_ext(&self) -> f64 {
        self.kappa_ext.unwrap_or(self.cavity().linewidth / 3.0)
    }

    pub fn linewidth(&self, label: ModeLabel) -> f64 {
        self.mode(label).linewidth
    }

    /// A drive on `target` at `frequency` MHz using this config's efficiencies.
    pub fn drive_on(&self, target: DriveTarget, frequency: f64) -> DriveConfig {
        DriveConfig {
            drive_frequency: frequency,
            drive_power_dbm: self.drive.power_dbm,
            efficiency_kittel: self.drive.efficiency_kittel,
            efficiency_hms: self.drive.efficiency_hms,
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.len() != 3 {
            return Err(Error::Config(format!(
                "expected 3 modes (cavity, kittel, hms), found {}",
                self.modes.len()
            )));
        }
        for label in [ModeLabel::Cavity, ModeLabel::Kittel, ModeLabel::Hms] {
            let count = self.modes.iter().filter(|m| m.label == label).count();
            if count != 1 {
                return Err(Error::Config(format!(
                    "mode `{label}` must appear exactly once, found {count}"
                )));
            }
        }
        for m in &self.modes {
            if !(m.bare_frequency > 0.0) || !(m.linewidth > 0.0) {
                return Err(Error::Config(format!(
                    "mode `{}` needs positive frequency and linewidth",
                    m.label
                )));
            }
        }
        let c = &self.couplings;
        if !(c.g_k >= 0.0 && c.g_h >= 0.0 && c.g_kh >= 0.0) {
            return Err(Error::Config("couplings must be non-negative".into()));
        }
        let k = &self.kerr;
        let signs = [k.k_self_kittel, k.k_self_hms, k.k_cross]
            .iter()
            .filter(|v| **v != 0.0)
            .map(|v| v.signum())
            .collect::<Vec<_>>();
        if signs.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Config(
                "self- and cross-Kerr coefficients must share one sign".into(),
            ));
        }
        for (name, eff, kerr) in [
            ("efficiency_kittel", self.drive.efficiency_kittel, k.k_self_kittel),
            ("efficiency_hms", self.drive.efficiency_hms, k.k_self_hms),
        ] {
            if !eff.is_finite() || eff * kerr < 0.0 {
                return Err(Error::Config(format!(
                    "drive.{name} must be finite and share the sign of its self-Kerr coefficient"
                )));
            }
        }
        if !(self.calibration.kittel_slope > 0.0) {
            return Err(Error::Config("calibration.kittel_slope must be positive".into()));
        }
        let kappa = self.cavity().linewidth;
        let ext = self.kappa_ext();
        if !(ext >= 0.0) || ext > kappa / 2.0 {
            return Err(Error::Config(format!(
                "kappa_ext = {ext} MHz must lie in [0, kappa_tot/2 = {}]",
                kappa / 2.0
            )));
        }
        if !(self.dispersive_threshold > 0.0) {
            return Err(Error::Config("dispersive_threshold must be positive".into()));
        }
        if let Some(m) = &self.material {
            m.validate()?;
        }
        Ok(())
    }
}

/// Detuning, coupling ratio and second-order frequency pull for one mode pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersivePair {
    /// `Λ`, MHz.
    pub detuning: f64,
    /// `|Λ|/g`; infinite when `g = 0`.
    pub ratio: f64,
    /// `g²/Λ`, MHz; infinite when the pair is resonant.
    pub shift: f64,
    pub resonant: bool,
    pub dispersive: bool,
}

impl DispersivePair {
    fn new(detuning: f64, coupling: f64, threshold: f64) -> Self {
        let resonant = detuning == 0.0 && coupling != 0.0;
        let shift = if coupling == 0.0 {
            0.0
        } else if resonant {
            f64::INFINITY
        } else {
            coupling * coupling / detuning
        };
        let ratio = if coupling == 0.0 {
            f64::INFINITY
        } else {
            detuning.abs() / coupling
        };
        DispersivePair {
            detuning,
            ratio,
            shift,
            resonant,
            dispersive: ratio >= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersiveReport {
    /// Cavity–Kittel, `Λ_ck = ω_c − ω_k`.
    pub cavity_kittel: DispersivePair,
    /// HMS–Kittel, `Λ_hk = ω_h − ω_k`.
    pub hms_kittel: DispersivePair,
    pub threshold: f64,
}

impl DispersiveReport {
    pub fn dispersive(&self) -> bool {
        self.cavity_kittel.dispersive && self.hms_kittel.dispersive
    }
}

/// Evaluates the double-dispersive condition at the configured bare frequencies.
pub fn dispersive_check(cfg: &SystemConfig) -> DispersiveReport {
    let kittel = cfg.kittel().bare_frequency;
    let threshold = cfg.dispersive_threshold;
    DispersiveReport {
        cavity_kittel: DispersivePair::new(
            cfg.cavity().bare_frequency - kittel,
            cfg.couplings.g_k,
            threshold,
        ),
        hms_kittel: DispersivePair::new(
            cfg.hms().bare_frequency - kittel,
            cfg.couplings.g_kh,
            threshold,
        ),
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn material() -> MaterialParams {
        MaterialParams::yig_sphere()
    }

    /// The same closed form evaluated in CGS units (erg, G, emu/cm³, cm³).
    fn self_kerr_cgs(m: &MaterialParams) -> f64 {
        let hbar_cgs = m.hbar * 1e7;
        let k_an_cgs = m.anisotropy_constant * 10.0;
        let gamma_cgs = m.gyromagnetic_ratio * 1e-4;
        let magnetization_cgs = m.saturation_magnetization * 1e-3;
        let volume_cgs = m.sphere_volume * 1e6;
        let omega = 13.0 * hbar_cgs * k_an_cgs * gamma_cgs * gamma_cgs
            / (16.0 * magnetization_cgs * magnetization_cgs * volume_cgs);
        omega / (2.0 * PI) / 1e6
    }

    #[test]
    fn self_kerr_vanishes_without_anisotropy() {
        let mut m = material();
        m.anisotropy_constant = 0.0;
        assert_eq!(kerr_self_from_material(&m).unwrap(), 0.0);
    }

    #[test]
    fn self_kerr_scaling_in_volume_and_magnetization() {
        let m = material();
        let base = kerr_self_from_material(&m).unwrap();
        let mut doubled_v = m;
        doubled_v.sphere_volume *= 2.0;
        let mut doubled_m = m;
        doubled_m.saturation_magnetization *= 2.0;
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(kerr_self_from_material(&doubled_v).unwrap(), base / 2.0) < 1e-14);
        assert!(rel(kerr_self_from_material(&doubled_m).unwrap(), base / 4.0) < 1e-14);
    }

    #[test]
    fn self_kerr_yig_anchor_matches_cgs_route() {
        let m = MaterialParams {
            anisotropy_constant: -610.0,
            gyromagnetic_ratio: 1.76e11,
            saturation_magnetization: 1.4e5,
            sphere_volume: 4.0 / 3.0 * PI * 0.5e-3f64.powi(3),
            ..material()
        };
        let si = kerr_self_from_material(&m).unwrap();
        let cgs = self_kerr_cgs(&m);
        assert!(((si - cgs) / cgs).abs() < 1e-12, "si {si} cgs {cgs}");
        // Hand evaluation: 13·1.054571817e-34·610·(1.76e11)² / (16·(1.4e5)²·5.235988e-10)
        // ≈ 1.5776e-10 rad/s → 2.5108e-17 MHz.
        assert!(si < 0.0);
        assert!((si + 2.5108e-17).abs() < 1e-20, "{si}");
    }

    #[test]
    fn self_kerr_rejects_degenerate_geometry() {
        let mut m = material();
        m.sphere_volume = 0.0;
        assert!(matches!(kerr_self_from_material(&m), Err(Error::Domain(_))));
        let mut m = material();
        m.saturation_magnetization = 0.0;
        assert!(kerr_self_from_material(&m).is_err());
    }

    #[test]
    fn cross_kerr_without_overlap_is_zero() {
        let mut m = material();
        m.overlap_coefficient = 0.0;
        let c = cross_kerr_from_overlap(&m).unwrap();
        assert_eq!(c.k_cross, 0.0);
        assert_eq!(c.g_kh, 0.0);
        assert_eq!(c.shift_kittel, 0.0);
        assert_eq!(c.shift_hms, 0.0);
    }

    #[test]
    fn cross_kerr_coupling_identity() {
        let m = material();
        let c = cross_kerr_from_overlap(&m).unwrap();
        let expected = (m.total_spin_kittel * m.total_spin_hms).sqrt();
        assert!((c.g_kh / c.k_cross - expected).abs() / expected < 1e-14);
        assert!((c.shift_kittel + c.k_cross * m.total_spin_hms).abs() < 1e-12);
    }

    #[test]
    fn cross_kerr_product_against_compensated_multiply() {
        // k_cross = 10 nHz = 1e-14 MHz with S_K = S_H = 1e18 → g_kh = 1e4 MHz.
        let mut m = material();
        m.total_spin_kittel = 1e18;
        m.total_spin_hms = 1e18;
        let target = 1e-14;
        let per_beta = rad_per_s_to_mhz(m.hbar * m.gyromagnetic_ratio.powi(2) / m.sphere_volume);
        m.overlap_coefficient = target / per_beta;
        let c = cross_kerr_from_overlap(&m).unwrap();
        let product = c.k_cross * 1e18;
        let error = c.k_cross.mul_add(1e18, -product);
        let exact = product + error;
        assert!((c.g_kh - exact).abs() <= exact * f64::EPSILON);
        assert!((c.g_kh - 1e4).abs() < 1e-6, "{}", c.g_kh);
    }

    #[test]
    fn cross_kerr_rejects_negative_spin() {
        let mut m = material();
        m.total_spin_hms = -1.0;
        assert!(cross_kerr_from_overlap(&m).is_err());
    }

    #[test]
    fn default_material_hits_calibration_targets() {
        let m = material();
        let k = kerr_set_from_material(&m).unwrap();
        assert!((k.k_cross / k.k_self_kittel - 2.5).abs() < 1e-12);
        assert!((k.k_self_hms / k.k_self_kittel - 5.0).abs() < 1e-12);
        let c = cross_kerr_from_overlap(&m).unwrap();
        assert!((c.g_kh.abs() - 2.0).abs() < 1e-9);
        assert!(k.k_self_kittel < 0.0 && k.k_cross < 0.0);
        m.validate().unwrap();
    }

    #[test]
    fn dispersive_shift_kittel_cavity() {
        let mut cfg = SystemConfig::default();
        cfg.mode_mut(ModeLabel::Cavity).bare_frequency = 10_070.0;
        cfg.mode_mut(ModeLabel::Kittel).bare_frequency = 9_800.0;
        let r = dispersive_check(&cfg);
        let expected = 40.5 * 40.5 / 270.0;
        assert!((r.cavity_kittel.shift - expected).abs() / expected < 1e-12);
        assert!((r.cavity_kittel.shift - 6.075).abs() < 1e-9);
    }

    #[test]
    fn dispersive_hms_kittel_ratio() {
        let mut cfg = SystemConfig::default();
        cfg.mode_mut(ModeLabel::Kittel).bare_frequency = 9_800.0;
        cfg.mode_mut(ModeLabel::Hms).bare_frequency = 10_101.0;
        cfg.couplings.g_kh = 2.0;
        let r = dispersive_check(&cfg);
        assert!((r.hms_kittel.ratio - 150.5).abs() < 1e-12);
        assert!(r.hms_kittel.dispersive);
        cfg.couplings.g_kh = 0.0;
        assert_eq!(dispersive_check(&cfg).hms_kittel.shift, 0.0);
    }

    #[test]
    fn dispersive_resonance_is_flagged_not_divided() {
        let mut cfg = SystemConfig::default();
        cfg.mode_mut(ModeLabel::Kittel).bare_frequency = 10_070.0;
        let r = dispersive_check(&cfg);
        assert!(r.cavity_kittel.resonant);
        assert!(r.cavity_kittel.shift.is_infinite());
        assert!(!r.dispersive());
    }

    #[test]
    fn calibration_anchor_and_inverse() {
        let cal = FieldCalibration::default();
        let (k, h) = mode_frequencies_at_current(&cal, 4.75);
        assert!((h - 10_070.0).abs() < 1e-9);
        assert!((h - k - 301.0).abs() < 1e-12);
        for current in [3.0, 4.75, 5.3, 7.1] {
            let (k, _) = mode_frequencies_at_current(&cal, current);
            let back = cal.current_for_frequency(ModeLabel::Kittel, k).unwrap();
            assert!((back - current).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_calibration_gives_constant_frequencies() {
        let mut cal = FieldCalibration::default();
        cal.current_to_field_slope = 0.0;
        let a = mode_frequencies_at_current(&cal, 1.0);
        let b = mode_frequencies_at_current(&cal, 9.0);
        assert_eq!(a, b);
        assert!(cal.current_for_frequency(ModeLabel::Kittel, a.0).is_none());
    }

    #[test]
    fn default_config_validates() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn drive_power_conversion() {
        assert!((dbm_to_mw(0.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_mw(25.0) - 316.227_766_016_837_9).abs() < 1e-9);
        let cfg = SystemConfig::default();
        let drive = cfg.drive_on(DriveTarget::Kittel, 9_800.0);
        assert!((drive.drive_product() + 60.0 * 5.8 * 5.8).abs() < 1e-9);
    }
}
