//! File formats.
//!
//! * spectrum map, long CSV: `current,probe_MHz,s21_sq`
//! * spectrum map, binary grid: 32-byte header, then controls, probe grid and
//!   row-major data as little-endian `f64`
//! * VNA trace CSV: `frequency_Hz,s21_db`, one file per control value, the
//!   control read from the file name
//! * shift curves: `delta_MHz,shift_MHz,mode`
//! * sweeps: `control,delta,root1..root3,stable1..stable3,selected,cross_shift,excitations`
//! * fit results and reports: JSON objects
//!
//! Every writer takes the manifest hash of the producing run. CSV files carry
//! it on a leading `# manifest_sha256=` comment line, JSON files as a
//! `manifest_sha256` field, binary grids as a 32-byte trailer. Files are
//! written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{ShiftCurve, ShiftPoint};
use crate::model::ModeLabel;
use crate::spectrum::SpectrumMap;
use crate::steady_state::SweepResult;

pub const MAP_MAGIC: [u8; 4] = *b"MKMP";
pub const MAP_VERSION: u16 = 1;
pub const MAP_HEADER_LEN: usize = 32;
/// Header flag: a 32-byte manifest hash follows the data.
const FLAG_MANIFEST: u16 = 1;

const STAMP_PREFIX: &str = "# manifest_sha256=";

/// A value read from a file together with the manifest hash it carried.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamped<T> {
    pub value: T,
    pub manifest_sha256: Option<String>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.partial", e.to_string_lossy()),
        None => "partial".into(),
    });
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn check_stamp(hash: &str) -> Result<[u8; 32]> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(hash, &mut out)
        .map_err(|e| Error::Input(format!("manifest hash `{hash}` is not 64 hex digits: {e}")))?;
    Ok(out)
}

/// Writes a CSV table: optional stamp line, header, rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>], stamp: Option<&str>) -> Result<()> {
    let mut out = String::new();
    if let Some(h) = stamp {
        check_stamp(h)?;
        out.push_str(STAMP_PREFIX);
        out.push_str(h);
        out.push('\n');
    }
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let werr = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(header).map_err(werr)?;
    for row in rows {
        w.write_record(row).map_err(werr)?;
    }
    let body = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("csv writer emits utf-8"));
    write_atomic(path, out.as_bytes())
}

/// Header and rows of a CSV file; `#` lines are comments, the first one may be
/// a manifest stamp.
pub fn read_csv(path: &Path) -> Result<Stamped<(Vec<String>, Vec<Vec<String>>)>> {
    let text = read_text(path)?;
    let manifest_sha256 = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(STAMP_PREFIX))
        .map(|h| h.trim().to_string());
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| Error::format(path, e.to_string()))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(Stamped {
        value: (header, rows),
        manifest_sha256,
    })
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::format(path, format!("missing column `{name}`")))
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::format(path, format!("row {line}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::format(path, format!("row {line}: non-finite value `{field}`")));
    }
    Ok(v)
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_map_csv(path: &Path, map: &SpectrumMap, stamp: Option<&str>) -> Result<()> {
    let mut rows = Vec::with_capacity(map.s21_sq.len());
    for (i, c) in map.controls.iter().enumerate() {
        for (f, v) in map.probe.iter().zip(map.row(i)) {
            rows.push(vec![num(*c), num(*f), num(*v)]);
        }
    }
    write_csv(path, &["current", "probe_MHz", "s21_sq"], &rows, stamp)
}

/// Reads a long-form map. Rows of one current must be contiguous and every
/// current must share the same probe grid.
pub fn read_map_csv(path: &Path) -> Result<Stamped<SpectrumMap>> {
    let Stamped { value: (header, rows), manifest_sha256 } = read_csv(path)?;
    let (ic, ip, iv) = (
        column(path, &header, "current")?,
        column(path, &header, "probe_MHz")?,
        column(path, &header, "s21_sq")?,
    );
    let mut controls: Vec<f64> = Vec::new();
    let mut probe: Vec<f64> = Vec::new();
    let mut data = Vec::with_capacity(rows.len());
    let mut column_in_row = 0usize;
    for (n, row) in rows.iter().enumerate() {
        let line = n + 1;
        let field = |i: usize| -> Result<f64> {
            parse_f64(path, line, row.get(i).map(String::as_str).unwrap_or(""))
        };
        let (c, f, v) = (field(ic)?, field(ip)?, field(iv)?);
        if controls.last() != Some(&c) {
            if controls.contains(&c) {
                return Err(Error::format(path, format!("row {line}: current {c} is not contiguous")));
            }
            if controls.len() == 1 {
                probe.truncate(column_in_row);
            }
            if !controls.is_empty() && column_in_row != probe.len() {
                return Err(Error::format(path, format!("row {line}: previous current has a short probe grid")));
            }
            controls.push(c);
            column_in_row = 0;
        }
        if controls.len() == 1 {
            probe.push(f);
        } else if probe.get(column_in_row) != Some(&f) {
            return Err(Error::format(path, format!("row {line}: probe grid differs between currents")));
        }
        column_in_row += 1;
        data.push(v);
    }
    if !controls.is_empty() && column_in_row != probe.len() {
        return Err(Error::format(path, "last current has a short probe grid"));
    }
    let map = SpectrumMap::new(controls, probe, data).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(Stamped { value: map, manifest_sha256 })
}

pub fn encode_map_binary(map: &SpectrumMap, stamp: Option<&str>) -> Result<Vec<u8>> {
    let hash = stamp.map(check_stamp).transpose()?;
    let n = map.controls.len() + map.probe.len() + map.s21_sq.len();
    let mut out = Vec::with_capacity(MAP_HEADER_LEN + 8 * n + 32);
    out.extend_from_slice(&MAP_MAGIC);
    out.extend_from_slice(&MAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(if hash.is_some() { FLAG_MANIFEST } else { 0 }).to_le_bytes());
    let dim = |k: usize| {
        u32::try_from(k).map_err(|_| Error::Input(format!("map dimension {k} exceeds the binary format")))
    };
    out.extend_from_slice(&dim(map.controls.len())?.to_le_bytes());
    out.extend_from_slice(&dim(map.probe.len())?.to_le_bytes());
    out.extend_from_slice(&map.probe[0].to_le_bytes());
    out.extend_from_slice(&map.probe[map.probe.len() - 1].to_le_bytes());
    for v in map.controls.iter().chain(&map.probe).chain(&map.s21_sq) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(h) = hash {
        out.extend_from_slice(&h);
    }
    Ok(out)
}

pub fn decode_map_binary(path: &Path, bytes: &[u8]) -> Result<Stamped<SpectrumMap>> {
    let bad = |m: String| Error::format(path, m);
    if bytes.len() < MAP_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[0..4] != MAP_MAGIC {
        return Err(bad("not a spectrum map (bad magic)".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u16_at(4);
    if version != MAP_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let flags = u16_at(6);
    if flags & !FLAG_MANIFEST != 0 {
        return Err(bad(format!("unknown flags {flags:#06x}")));
    }
    let (nc, np) = (u32_at(8), u32_at(12));
    let (lo, hi) = (f64_at(16), f64_at(24));
    let values = nc
        .checked_mul(np)
        .and_then(|d| d.checked_add(nc + np))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let trailer = if flags & FLAG_MANIFEST != 0 { 32 } else { 0 };
    let expected = MAP_HEADER_LEN + 8 * values + trailer;
    if bytes.len() != expected {
        return Err(bad(format!("{} bytes, header implies {expected}", bytes.len())));
    }
    let floats: Vec<f64> = (0..values).map(|k| f64_at(MAP_HEADER_LEN + 8 * k)).collect();
    let controls = floats[..nc].to_vec();
    let probe = floats[nc..nc + np].to_vec();
    let data = floats[nc + np..].to_vec();
    if probe.first() != Some(&lo) || probe.last() != Some(&hi) {
        return Err(bad("probe bounds in the header disagree with the grid".into()));
    }
    let manifest_sha256 = (trailer > 0).then(|| hex::encode(&bytes[bytes.len() - 32..]));
    let map = SpectrumMap::new(controls, probe, data).map_err(|e| bad(e.to_string()))?;
    Ok(Stamped { value: map, manifest_sha256 })
}

pub fn write_map_binary(path: &Path, map: &SpectrumMap, stamp: Option<&str>) -> Result<()> {
    write_atomic(path, &encode_map_binary(map, stamp)?)
}

pub fn read_map_binary(path: &Path) -> Result<Stamped<SpectrumMap>> {
    decode_map_binary(path, &read_bytes(path)?)
}

/// Reads a map from either format, chosen by the leading magic bytes.
pub fn read_map(path: &Path) -> Result<Stamped<SpectrumMap>> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(&MAP_MAGIC) {
        decode_map_binary(path, &bytes)
    } else {
        read_map_csv(path)
    }
}

/// Default control pattern: the last decimal number in the file stem, as in
/// `sweep_4.750A.csv`.
pub const DEFAULT_CONTROL_PATTERN: &str = r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?";

/// Control value encoded in `path`'s file stem. Uses the named group
/// `control` if the pattern has one, else the whole match; the last match wins.
pub fn control_from_filename(path: &Path, pattern: &Regex) -> Result<f64> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let found = pattern
        .captures_iter(&stem)
        .last()
        .and_then(|c| c.name("control").or_else(|| c.get(0)))
        .ok_or_else(|| Error::format(path, format!("file name does not match `{pattern}`")))?;
    found
        .as_str()
        .parse::<f64>()
        .map_err(|_| Error::format(path, format!("`{}` is not a control value", found.as_str())))
}

/// One VNA trace: probe frequencies in MHz and linear `|S21|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct VnaTrace {
    pub control: f64,
    pub probe: Vec<f64>,
    pub s21_sq: Vec<f64>,
}

pub fn read_vna_trace(path: &Path, pattern: &Regex) -> Result<VnaTrace> {
    let control = control_from_filename(path, pattern)?;
    let Stamped { value: (header, rows), .. } = read_csv(path)?;
    let (jf, js) = (column(path, &header, "frequency_Hz")?, column(path, &header, "s21_db")?);
    let mut probe = Vec::with_capacity(rows.len());
    let mut s21_sq = Vec::with_capacity(rows.len());
    for (n, row) in rows.iter().enumerate() {
        let get = |j: usize| parse_f64(path, n + 1, row.get(j).map(String::as_str).unwrap_or(""));
        probe.push(get(jf)? * 1e-6);
        s21_sq.push(10f64.powf(get(js)? / 10.0));
    }
    if probe.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    if probe.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::format(path, "frequencies are not strictly increasing"));
    }
    Ok(VnaTrace { control, probe, s21_sq })
}

/// Assembles VNA traces into a map ordered by increasing control. All files
/// must share one frequency grid.
pub fn read_vna_traces(paths: &[PathBuf], pattern: &Regex) -> Result<SpectrumMap> {
    let mut traces = paths
        .iter()
        .map(|p| read_vna_trace(p, pattern).map(|t| (p.clone(), t)))
        .collect::<Result<Vec<_>>>()?;
    let Some((first_path, first)) = traces.first().cloned() else {
        return Err(Error::Input("no VNA files given".into()));
    };
    traces.sort_by(|a, b| a.1.control.total_cmp(&b.1.control));
    for w in traces.windows(2) {
        if w[0].1.control == w[1].1.control {
            return Err(Error::format(&w[1].0, format!("control {} appears twice", w[1].1.control)));
        }
    }
    let mut data = Vec::with_capacity(traces.len() * first.probe.len());
    for (p, t) in &traces {
        if t.probe != first.probe {
            return Err(Error::format(
                p,
                format!("frequency grid differs from {}", first_path.display()),
            ));
        }
        data.extend_from_slice(&t.s21_sq);
    }
    SpectrumMap::new(traces.iter().map(|t| t.1.control).collect(), first.probe, data)
}

pub fn write_shift_curves(path: &Path, curves: &[&ShiftCurve], stamp: Option<&str>) -> Result<()> {
    let rows: Vec<Vec<String>> = curves
        .iter()
        .flat_map(|c| {
            c.points
                .iter()
                .map(move |p| vec![num(p.delta), num(p.shift), c.mode.to_string()])
        })
        .collect();
    write_csv(path, &["delta_MHz", "shift_MHz", "mode"], &rows, stamp)
}

/// Curves in order of first appearance of their mode.
pub fn read_shift_curves(path: &Path) -> Result<Stamped<Vec<ShiftCurve>>> {
    let Stamped { value: (header, rows), manifest_sha256 } = read_csv(path)?;
    let (jd, js, jm) = (
        column(path, &header, "delta_MHz")?,
        column(path, &header, "shift_MHz")?,
        column(path, &header, "mode")?,
    );
    let mut groups: Vec<(ModeLabel, Vec<ShiftPoint>)> = Vec::new();
    for (n, row) in rows.iter().enumerate() {
        let get = |j: usize| row.get(j).map(String::as_str).unwrap_or("");
        let mode: ModeLabel = get(jm)
            .parse()
            .map_err(|e: Error| Error::format(path, format!("row {}: {e}", n + 1)))?;
        let point = ShiftPoint {
            delta: parse_f64(path, n + 1, get(jd))?,
            shift: parse_f64(path, n + 1, get(js))?,
        };
        match groups.iter_mut().find(|g| g.0 == mode) {
            Some(g) => g.1.push(point),
            None => groups.push((mode, vec![point])),
        }
    }
    let curves = groups
        .into_iter()
        .map(|(m, pts)| ShiftCurve::new(m, pts).map_err(|e| Error::format(path, e.to_string())))
        .collect::<Result<_>>()?;
    Ok(Stamped { value: curves, manifest_sha256 })
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepResult, stamp: Option<&str>) -> Result<()> {
    let header = [
        "control", "delta", "root1", "root2", "root3", "stable1", "stable2", "stable3", "selected",
        "cross_shift", "excitations",
    ];
    let rows: Vec<Vec<String>> = sweep
        .points
        .iter()
        .map(|p| {
            let s = &p.solution;
            let mut row = vec![num(p.control), num(s.detuning)];
            row.extend((0..3).map(|k| s.roots.get(k).map(|v| num(*v)).unwrap_or_default()));
            row.extend((0..3).map(|k| s.stable.get(k).map(|b| u8::from(*b).to_string()).unwrap_or_default()));
            row.push(s.selected.map(|k| (k + 1).to_string()).unwrap_or_default());
            row.push(num(p.cross_shift));
            row.push(num(p.excitations));
            row
        })
        .collect();
    write_csv(path, &header, &rows, stamp)
}

#[derive(Serialize)]
struct StampedRecord<'a, T: Serialize> {
    manifest_sha256: Option<&'a str>,
    #[serde(flatten)]
    record: &'a T,
}

/// Writes `record` (which must serialize as a JSON object) with the stamp
/// merged in as a top-level field.
pub fn write_json<T: Serialize>(path: &Path, record: &T, stamp: Option<&str>) -> Result<()> {
    if let Some(h) = stamp {
        check_stamp(h)?;
    }
    let mut text = serde_json::to_string_pretty(&StampedRecord { manifest_sha256: stamp, record })
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Deserialize)]
struct StampedOwned<T> {
    manifest_sha256: Option<String>,
    #[serde(flatten)]
    record: T,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>> {
    let text = read_text(path)?;
    let s: StampedOwned<T> = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(Stamped {
        value: s.record,
        manifest_sha256: s.manifest_sha256,
    })
}
