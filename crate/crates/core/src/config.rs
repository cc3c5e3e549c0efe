//! Run configuration: a TOML file whose top level mirrors [`SystemConfig`],
//! plus optional `[sweep]` and `[analysis]` tables, with `key=value`
//! overrides on dotted paths applied before validation.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{DriveConfig, DriveTarget, MaterialParams, ModeLabel, SystemConfig};
use crate::pipeline::AnalyzeOptions;
use crate::spectrum::stepped_grid;
use crate::steady_state::linear_grid;

/// Current and probe grids plus optional measurement noise for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Explicit current range, A. When unset the range follows the drive
    /// detuning window, or both anticrossings for an undriven map.
    pub current_start: Option<f64>,
    pub current_stop: Option<f64>,
    pub current_points: usize,
    /// Driven-mode detuning window, MHz; defaults depend on the driven mode.
    pub delta_start: Option<f64>,
    pub delta_stop: Option<f64>,
    pub probe_start: f64,
    pub probe_stop: f64,
    pub probe_step: f64,
    /// Gaussian noise added to every sample, dB.
    pub noise_db: f64,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            current_start: None,
            current_stop: None,
            current_points: 241,
            delta_start: None,
            delta_stop: None,
            probe_start: 9_500.0,
            probe_stop: 10_499.75,
            probe_step: 0.25,
            noise_db: 0.0,
            seed: 0,
        }
    }
}

impl SweepSpec {
    pub fn probe_grid(&self) -> Result<Vec<f64>> {
        stepped_grid(self.probe_start, self.probe_stop, self.probe_step)
    }

    /// Detuning window used when no explicit currents are configured.
    pub fn delta_window(&self, target: DriveTarget) -> (f64, f64) {
        let (lo, hi) = match target {
            DriveTarget::Kittel => (-120.0, 120.0),
            DriveTarget::Hms => (-10.0, 70.0),
        };
        (self.delta_start.unwrap_or(lo), self.delta_stop.unwrap_or(hi))
    }

    pub fn currents(&self, cfg: &SystemConfig, drive: Option<&DriveConfig>) -> Result<Vec<f64>> {
        let n = self.current_points;
        if n < 2 {
            return Err(Error::Input(format!("sweep.current_points must be at least 2, got {n}")));
        }
        let grid = match (self.current_start, self.current_stop, drive) {
            (Some(a), Some(b), _) => {
                if !(a.is_finite() && b.is_finite()) || a == b {
                    return Err(Error::Input(format!("empty current range {a}..{b}")));
                }
                linear_grid(a, b, n)
            }
            (None, None, Some(d)) => {
                let (lo, hi) = self.delta_window(d.target);
                if !(lo < hi) {
                    return Err(Error::Input(format!("empty detuning window {lo}..{hi}")));
                }
                crate::scenarios::currents_for_detuning(cfg, d.target, d.drive_frequency, lo, hi, n)?
            }
            (None, None, None) => {
                let mut undriven = crate::scenarios::undriven(cfg.clone());
                let (lo, hi) = (undriven.currents[0], undriven.currents[undriven.currents.len() - 1]);
                undriven.currents = linear_grid(lo, hi, n);
                undriven.currents
            }
            _ => {
                return Err(Error::Input(
                    "set both sweep.current_start and sweep.current_stop, or neither".into(),
                ))
            }
        };
        Ok(grid)
    }
}

/// Everything a command needs besides its file arguments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub sweep: SweepSpec,
    pub analysis: AnalyzeOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: SystemConfig::default(),
            sweep: SweepSpec::default(),
            analysis: AnalyzeOptions::default(),
        }
    }
}

/// The default configuration as a TOML table.
pub fn default_table() -> Table {
    let mut t = Table::try_from(SystemConfig::default()).expect("default config serializes");
    t.insert("sweep".into(), Value::try_from(SweepSpec::default()).expect("serializes"));
    t.insert("analysis".into(), Value::try_from(AnalyzeOptions::default()).expect("serializes"));
    t
}

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Config(e.to_string()))
}

pub fn load_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// A `key=value` override on a dotted path. Array elements are addressed by
/// index or, for tables with a `label` field, by label (`modes.kittel.linewidth`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub path: String,
    pub value: String,
}

impl FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("override `{s}` is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.split('.').any(str::is_empty) {
            return Err(Error::Input(format!("override `{s}` has an empty key segment")));
        }
        Ok(Override { path: k.into(), value: v.into() })
    }
}

impl std::fmt::Display for Override {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.path, self.value)
    }
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn child<'a>(node: &'a mut Value, key: &str, full: &str) -> Result<&'a mut Value> {
    match node {
        Value::Table(t) => Ok(t.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()))),
        Value::Array(items) => {
            let at = match key.parse::<usize>() {
                Ok(i) => Some(i),
                Err(_) => items
                    .iter()
                    .position(|v| v.get("label").and_then(Value::as_str) == Some(key)),
            };
            let len = items.len();
            at.and_then(|i| items.get_mut(i)).ok_or_else(|| {
                Error::Config(format!("`{full}`: no element `{key}` among {len} entries"))
            })
        }
        _ => Err(Error::Config(format!("`{full}`: `{key}` is below a scalar"))),
    }
}

/// Applies one override to `table`. Unknown keys and mistyped values are
/// caught when the table is resolved, since every section rejects unknown
/// fields.
pub fn apply_override(table: &mut Table, ov: &Override) -> Result<()> {
    let segments: Vec<&str> = ov.path.split('.').collect();
    let (last, parents) = segments.split_last().expect("non-empty path");
    let mut node = Value::Table(std::mem::take(table));
    let result = (|| -> Result<()> {
        let mut cur = &mut node;
        for seg in parents {
            cur = child(cur, seg, &ov.path)?;
        }
        let value = parse_value(&ov.value);
        match cur {
            Value::Table(t) => {
                t.insert((*last).to_string(), value);
                Ok(())
            }
            Value::Array(_) => {
                *child(cur, last, &ov.path)? = value;
                Ok(())
            }
            _ => Err(Error::Config(format!("`{}` is below a scalar", ov.path))),
        }
    })();
    if let Value::Table(t) = node {
        *table = t;
    }
    result
}

/// Deserializes and validates a full run configuration.
pub fn resolve(mut table: Table) -> Result<RunConfig> {
    let section = |t: &mut Table, name: &str| t.remove(name).unwrap_or_else(|| Value::Table(Table::new()));
    let sweep: SweepSpec = section(&mut table, "sweep")
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[sweep]: {}", e.message())))?;
    let analysis: AnalyzeOptions = section(&mut table, "analysis")
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[analysis]: {}", e.message())))?;
    if let Some(m) = table.get("material") {
        let missing = missing_material_keys(m);
        if !missing.is_empty() {
            return Err(Error::Config(format!("material section is missing: {}", missing.join(", "))));
        }
    }
    let system: SystemConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    system.validate()?;
    Ok(RunConfig { system, sweep, analysis })
}

/// Loads `path` (or the defaults), applies overrides and validates.
pub fn load(path: Option<&Path>, overrides: &[Override]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => load_table(p)?,
        None => default_table(),
    };
    for ov in overrides {
        apply_override(&mut table, ov)?;
    }
    resolve(table)
}

/// Material keys absent from a `[material]` table, in schema order.
pub fn missing_material_keys(material: &Value) -> Vec<String> {
    let schema = Table::try_from(MaterialParams::yig_sphere()).expect("serializes");
    let present = material.as_table();
    schema
        .keys()
        .filter(|k| present.is_none_or(|t| !t.contains_key(*k)))
        .map(|k| format!("material.{k}"))
        .collect()
}

/// Drive given on the command line: `none`, or `mode:frequency[:power]`
/// with frequency in Hz/kHz/MHz/GHz (default MHz) and power in dBm or mW
/// (default dBm), e.g. `kittel:9800MHz:25dBm`, `hms:10.1GHz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriveSpec {
    None,
    On {
        target: DriveTarget,
        /// MHz.
        frequency: f64,
        /// dBm; the configured drive power when absent.
        power_dbm: Option<f64>,
    },
}

fn split_unit<'a>(s: &'a str, units: &[&'a str]) -> (&'a str, Option<&'a str>) {
    let lower = s.to_ascii_lowercase();
    for u in units {
        if lower.ends_with(&u.to_ascii_lowercase()) {
            return (s[..s.len() - u.len()].trim(), Some(u));
        }
    }
    (s.trim(), None)
}

impl FromStr for DriveSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Input(format!("drive `{s}`: {why}"));
        if s.trim().eq_ignore_ascii_case("none") {
            return Ok(DriveSpec::None);
        }
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(bad("expected `none` or mode:frequency[:power]"));
        }
        let target = match parts[0].parse::<ModeLabel>() {
            Ok(ModeLabel::Kittel) => DriveTarget::Kittel,
            Ok(ModeLabel::Hms) => DriveTarget::Hms,
            _ => return Err(bad("the driven mode must be kittel or hms")),
        };
        let (num, unit) = split_unit(parts[1], &["GHz", "MHz", "kHz", "Hz"]);
        let scale = match unit {
            Some("GHz") => 1e3,
            Some("kHz") => 1e-3,
            Some("Hz") => 1e-6,
            _ => 1.0,
        };
        let frequency = num.parse::<f64>().map_err(|_| bad("unreadable frequency"))? * scale;
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(bad("frequency must be positive"));
        }
        let power_dbm = match parts.get(2) {
            None => None,
            Some(p) => {
                let (num, unit) = split_unit(p, &["dBm", "mW"]);
                let v = num.parse::<f64>().map_err(|_| bad("unreadable power"))?;
                let dbm = if unit == Some("mW") {
                    if v <= 0.0 {
                        return Err(bad("power in mW must be positive"));
                    }
                    10.0 * v.log10()
                } else {
                    v
                };
                if !dbm.is_finite() {
                    return Err(bad("power must be finite"));
                }
                Some(dbm)
            }
        };
        Ok(DriveSpec::On { target, frequency, power_dbm })
    }
}

impl DriveSpec {
    pub fn resolve(&self, cfg: &SystemConfig) -> Option<DriveConfig> {
        match *self {
            DriveSpec::None => None,
            DriveSpec::On { target, frequency, power_dbm } => {
                let mut d = cfg.drive_on(target, frequency);
                if let Some(p) = power_dbm {
                    d.drive_power_dbm = p;
                }
                Some(d)
            }
        }
    }
}

impl std::fmt::Display for DriveSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriveSpec::None => write!(f, "none"),
            DriveSpec::On { target, frequency, power_dbm } => {
                write!(f, "{}:{frequency}MHz", target.mode())?;
                if let Some(p) = power_dbm {
                    write!(f, ":{p}dBm")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = toml::to_string(&default_table()).unwrap();
        let cfg = resolve(parse_table(&text).unwrap()).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/calibrated.toml");
        assert_eq!(load(Some(&path), &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let ovs: Vec<Override> = [
            "couplings.g_k=30",
            "modes.kittel.linewidth=12.5",
            "modes.0.bare_frequency=10071",
            "sweep.current_points=11",
            "analysis.extract.assign.cavity_exclusion=12",
            "kappa_ext=1",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
        let cfg = load(None, &ovs).unwrap();
        assert_eq!(cfg.system.couplings.g_k, 30.0);
        assert_eq!(cfg.system.kittel().linewidth, 12.5);
        assert_eq!(cfg.system.cavity().bare_frequency, 10071.0);
        assert_eq!(cfg.sweep.current_points, 11);
        assert_eq!(cfg.analysis.extract.assign.cavity_exclusion, 12.0);
        assert_eq!(cfg.system.kappa_ext, Some(1.0));
    }

    #[test]
    fn bad_overrides_are_rejected() {
        for s in ["couplings.g_x=1", "nonsense=1", "modes.yig.linewidth=1", "couplings.g_k=fast", "couplings.g_k.x=1"] {
            let ov: Override = s.parse().unwrap();
            assert!(matches!(load(None, &[ov]), Err(Error::Config(_))), "{s}");
        }
        assert!("novalue".parse::<Override>().is_err());
        assert!("a..b=1".parse::<Override>().is_err());
        // Physically invalid values fail validation.
        let ov: Override = "couplings.g_k=-1".parse().unwrap();
        assert!(load(None, &[ov]).is_err());
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let mut t = default_table();
        t.insert("colour".into(), Value::from("red"));
        assert!(resolve(t).is_err());
        let mut t = default_table();
        t.get_mut("sweep").unwrap().as_table_mut().unwrap().insert("pionts".into(), Value::from(3));
        assert!(resolve(t).is_err());
    }

    #[test]
    fn missing_material_keys_are_listed() {
        let mut t = default_table();
        let m = t.get_mut("material").unwrap().as_table_mut().unwrap();
        m.remove("sphere_volume");
        m.remove("overlap_coefficient");
        let err = resolve(t).unwrap_err().to_string();
        assert!(err.contains("material.sphere_volume") && err.contains("material.overlap_coefficient"), "{err}");
    }

    #[test]
    fn drive_specs_parse() {
        let d: DriveSpec = "kittel:9800MHz:25dBm".parse().unwrap();
        assert_eq!(d, DriveSpec::On { target: DriveTarget::Kittel, frequency: 9800.0, power_dbm: Some(25.0) });
        let d: DriveSpec = "HMS:10.1GHz".parse().unwrap();
        match d {
            DriveSpec::On { target, frequency, power_dbm } => {
                assert_eq!(target, DriveTarget::Hms);
                assert!((frequency - 10_100.0).abs() < 1e-9);
                assert_eq!(power_dbm, None);
            }
            DriveSpec::None => panic!(),
        }
        let d: DriveSpec = "kittel:9.8e9Hz:1000mW".parse().unwrap();
        assert!(matches!(d, DriveSpec::On { power_dbm: Some(p), .. } if (p - 30.0).abs() < 1e-12));
        assert_eq!("none".parse::<DriveSpec>().unwrap(), DriveSpec::None);
        for bad in ["cavity:10GHz", "kittel", "kittel:-5", "kittel:9800:0mW", "kittel:abc", "a:b:c:d"] {
            assert!(bad.parse::<DriveSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn drive_power_defaults_to_config() {
        let cfg = SystemConfig::default();
        let d = "kittel:9800".parse::<DriveSpec>().unwrap().resolve(&cfg).unwrap();
        assert_eq!(d.drive_power_dbm, cfg.drive.power_dbm);
        assert!((d.drive_product() - (-60.0 * 5.8 * 5.8)).abs() < 1e-9);
        assert!(DriveSpec::None.resolve(&cfg).is_none());
    }

    #[test]
    fn sweep_grids() {
        let cfg = SystemConfig::default();
        let spec = SweepSpec::default();
        let d = cfg.drive_on(DriveTarget::Kittel, 9800.0);
        let c = spec.currents(&cfg, Some(&d)).unwrap();
        assert_eq!(c.len(), 241);
        let lo = cfg.calibration.frequency(ModeLabel::Kittel, c[0]).unwrap() - 9800.0;
        assert!((lo + 120.0).abs() < 1e-9);
        let zero = SweepSpec { current_points: 0, ..spec };
        assert!(zero.currents(&cfg, None).is_err());
        let half = SweepSpec { current_start: Some(4.0), ..spec };
        assert!(half.currents(&cfg, None).is_err());
        assert_eq!(spec.probe_grid().unwrap().len(), 4000);
    }
}
