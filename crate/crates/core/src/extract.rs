//! Mode extraction from transmission traces.
//!
//! Each trace is converted to dB and flattened by subtracting a boxcar
//! baseline, so weak dispersive features on the cavity tail become local
//! minima. Noisy traces are smoothed before minima are detected, and only
//! minima well above the estimated noise are kept. Minima are assigned to
//! the magnon branches nearest their bare predictions, the linear
//! field-tuning trend is removed, and the residual shifts are re-indexed by
//! drive detuning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mode_frequencies_at_current, FieldCalibration, ModeLabel};
use crate::spectrum::{parabolic_offset, ProbeTrace, SpectrumMap};

/// Floor applied before taking logarithms, so zero transmission stays finite.
const POWER_FLOOR: f64 = 1e-30;
/// Inverse of the rounding step (dB) applied to flattened traces.
const FLAT_RESOLUTION: f64 = 1e9;
/// Smallest prominence (dB) accepted as a dip.
const MIN_PROMINENCE: f64 = 1e-3;
/// Fraction of a dip's width, each side of its minimum, fitted to locate it.
const FIT_CORE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DipLabel {
    Kittel,
    Hms,
    Cavity,
    Unassigned,
}

impl From<ModeLabel> for DipLabel {
    fn from(m: ModeLabel) -> Self {
        match m {
            ModeLabel::Kittel => DipLabel::Kittel,
            ModeLabel::Hms => DipLabel::Hms,
            ModeLabel::Cavity => DipLabel::Cavity,
        }
    }
}

/// Why a dip was left out of the shift curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipFlag {
    /// Inside the exclusion band around the cavity.
    NearCavity,
    /// Two candidates were equally close to a branch prediction.
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dip {
    /// MHz.
    pub frequency: f64,
    /// Prominence in the flattened trace, dB.
    pub depth: f64,
    /// Full width at half prominence, MHz.
    pub width: f64,
    pub label: DipLabel,
    pub flag: Option<DipFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DipSet {
    pub control: f64,
    pub dips: Vec<Dip>,
}

impl DipSet {
    pub fn labeled(&self, label: DipLabel) -> impl Iterator<Item = &Dip> + '_ {
        self.dips.iter().filter(move |d| d.label == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipOptions {
    /// Boxcar baseline width, MHz.
    pub baseline_window: f64,
    /// Boxcar smoothing applied to the flattened trace, MHz; 0 disables it.
    pub smoothing_window: f64,
    /// Minimum prominence, in units of the smoothed trace's noise level,
    /// when `min_prominence` is unset.
    pub significance: f64,
    /// Minimum prominence in dB; `None` derives it from the trace's noise.
    pub min_prominence: Option<f64>,
}

impl Default for DipOptions {
    fn default() -> Self {
        DipOptions {
            baseline_window: 10.0,
            smoothing_window: 3.0,
            significance: 5.0,
            min_prominence: None,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Centered moving average of `2·half + 1` points with edge values repeated.
fn boxcar(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let width = (2 * half + 1) as f64;
    (0..n)
        .map(|i| {
            let lo = i as isize - half as isize;
            let hi = i + half;
            let left_pad = (-lo).max(0) as f64;
            let right_pad = hi.saturating_sub(n - 1) as f64;
            let a = lo.max(0) as usize;
            let b = hi.min(n - 1);
            let inner = prefix[b + 1] - prefix[a];
            (inner + left_pad * values[0] + right_pad * values[n - 1]) / width
        })
        .collect()
}

/// The dB trace minus its boxcar baseline.
pub fn flatten_trace(probe: &[f64], s21_sq: &[f64], baseline_window: f64) -> Vec<f64> {
    let db: Vec<f64> = s21_sq
        .iter()
        .map(|v| 10.0 * v.max(POWER_FLOOR).log10())
        .collect();
    if probe.len() < 2 {
        return vec![0.0; db.len()];
    }
    let mut steps: Vec<f64> = probe.windows(2).map(|w| w[1] - w[0]).collect();
    let step = median(&mut steps);
    let half = ((0.5 * baseline_window / step).round() as usize).max(1);
    // Centering keeps the running sums small; rounding to 1 ndB makes flat
    // stretches exactly flat, so an overall gain cannot move a minimum.
    let reference = median(&mut db.clone());
    let centered: Vec<f64> = db.iter().map(|d| d - reference).collect();
    let base = boxcar(&centered, half);
    centered
        .iter()
        .zip(&base)
        .map(|(d, b)| ((d - b) * FLAT_RESOLUTION).round() / FLAT_RESOLUTION)
        .collect()
}

/// Per-point noise level of a trace from the median absolute second
/// difference, which line shapes spanning many samples barely affect.
pub fn noise_level(values: &[f64]) -> f64 {
    let mut d2: Vec<f64> = values
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
        .collect();
    // White noise of σ gives second differences of σ√6; MAD → σ via 1.4826.
    1.4826 * median(&mut d2) / 6f64.sqrt()
}

/// Noise-derived prominence threshold for a flattened trace smoothed by a
/// `2·half + 1`-point boxcar.
fn noise_threshold(flat: &[f64], half: usize, significance: f64) -> f64 {
    significance * noise_level(flat) / ((2 * half + 1) as f64).sqrt()
}

fn smoothing_half_width(probe: &[f64], window: f64) -> usize {
    if probe.len() < 2 || !(window > 0.0) {
        return 0;
    }
    let mut steps: Vec<f64> = probe.windows(2).map(|w| w[1] - w[0]).collect();
    (0.5 * window / median(&mut steps)).round() as usize
}

/// Vertex of the least-squares parabola through `v[k - half ..= k + half]`:
/// offset in samples from `k`, clamped to that span, and value there.
fn fitted_vertex(v: &[f64], k: usize, half: usize) -> (f64, f64) {
    let lo = k.saturating_sub(half);
    let hi = (k + half).min(v.len() - 1);
    let (mut s, mut sx, mut sx2, mut sx3, mut sx4, mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for j in lo..=hi {
        let x = j as f64 - k as f64;
        let y = v[j] - v[k];
        s += 1.0;
        sx += x;
        sx2 += x * x;
        sx3 += x * x * x;
        sx4 += x * x * x * x;
        sy += y;
        sxy += x * y;
        sx2y += x * x * y;
    }
    // Normal equations for y = a + b·x + c·x², solved by Cramer's rule.
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det([[s, sx, sx2], [sx, sx2, sx3], [sx2, sx3, sx4]]);
    let a = det([[sy, sx, sx2], [sxy, sx2, sx3], [sx2y, sx3, sx4]]) / d;
    let b = det([[s, sy, sx2], [sx, sxy, sx3], [sx2, sx2y, sx4]]) / d;
    let c = det([[s, sx, sy], [sx, sx2, sxy], [sx2, sx3, sx2y]]) / d;
    if !(c > 0.0) || !(a.is_finite() && b.is_finite()) {
        return (0.0, v[k]);
    }
    let x = (-b / (2.0 * c)).clamp(lo as f64 - k as f64, hi as f64 - k as f64);
    (x, v[k] + a + b * x + c * x * x)
}

fn prominence(v: &[f64], k: usize) -> f64 {
    let mut left = v[k];
    let mut j = k;
    while j > 0 && v[j - 1] >= v[k] {
        j -= 1;
        left = left.max(v[j]);
    }
    let mut right = v[k];
    let mut j = k;
    while j + 1 < v.len() && v[j + 1] >= v[k] {
        j += 1;
        right = right.max(v[j]);
    }
    left.min(right) - v[k]
}

fn half_prominence_width(freqs: &[f64], v: &[f64], k: usize, prom: f64) -> f64 {
    let level = v[k] + 0.5 * prom;
    let cross = |range: &mut dyn Iterator<Item = usize>, toward: isize| -> f64 {
        for j in range {
            if v[j] >= level {
                let i = (j as isize - toward) as usize;
                let (f0, f1, v0, v1) = (freqs[i], freqs[j], v[i], v[j]);
                return f0 + (level - v0) / (v1 - v0) * (f1 - f0);
            }
        }
        if toward < 0 { freqs[0] } else { freqs[freqs.len() - 1] }
    };
    let left = cross(&mut (0..k).rev(), -1);
    let right = cross(&mut (k + 1..v.len()), 1);
    right - left
}

/// Local minima of the flattened trace with prominence at least the threshold,
/// refined by a parabola through the three samples around each minimum.
pub fn find_dips(trace: &ProbeTrace<'_>, opts: &DipOptions) -> Result<DipSet> {
    let freqs = trace.probe_frequencies;
    if freqs.is_empty() || trace.s21_sq.len() != freqs.len() {
        return Err(Error::Input(format!(
            "trace at control {} is empty or mismatched",
            trace.control
        )));
    }
    let raw = flatten_trace(freqs, trace.s21_sq, opts.baseline_window);
    // Smoothing only when noise, not the 1 mdB floor, would set the threshold.
    let mut half = 0;
    let mut threshold = noise_threshold(&raw, 0, opts.significance);
    if threshold > MIN_PROMINENCE {
        half = smoothing_half_width(freqs, opts.smoothing_window);
        threshold = noise_threshold(&raw, half, opts.significance);
    }
    let threshold = opts.min_prominence.unwrap_or(threshold.max(MIN_PROMINENCE));
    let flat = if half == 0 { raw.clone() } else { boxcar(&raw, half) };
    let mut dips = Vec::new();
    for k in 1..flat.len().saturating_sub(1) {
        if !(flat[k] < flat[k - 1] && flat[k] <= flat[k + 1]) {
            continue;
        }
        let prom = prominence(&flat, k);
        if prom < threshold {
            continue;
        }
        let width = half_prominence_width(freqs, &flat, k, prom);
        let (off, depth) = if half == 0 {
            (parabolic_offset(flat[k - 1], flat[k], flat[k + 1]), prom)
        } else {
            // Fit the unsmoothed trace over the dip's core, never wider than
            // the smoothing span: smoothing would drag an asymmetric line and
            // flatten a narrow one more than a broad one.
            let step = freqs[k + 1] - freqs[k];
            let core = ((FIT_CORE * width / step).round() as usize).clamp(1, half);
            let (off, bottom) = fitted_vertex(&raw, k, core);
            (off, prom + (flat[k] - bottom).max(0.0))
        };
        let frequency = if off.abs() <= 1.0 {
            let step = if off >= 0.0 { freqs[k + 1] - freqs[k] } else { freqs[k] - freqs[k - 1] };
            freqs[k] + off * step
        } else {
            let i = (k as f64 + off).clamp(0.0, (freqs.len() - 1) as f64);
            let j = (i.floor() as usize).min(freqs.len() - 2);
            freqs[j] + (i - j as f64) * (freqs[j + 1] - freqs[j])
        };
        dips.push(Dip {
            frequency,
            depth,
            width,
            label: DipLabel::Unassigned,
            flag: None,
        });
    }
    Ok(DipSet {
        control: trace.control,
        dips,
    })
}

/// Dips of every trace in a map, computed in parallel, in map order.
pub fn find_map_dips(map: &SpectrumMap, opts: &DipOptions) -> Result<Vec<DipSet>> {
    (0..map.n_controls())
        .into_par_iter()
        .map(|i| find_dips(&map.trace(i), opts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssignOptions {
    /// Half-width (MHz) of the search window around each bare branch prediction.
    pub tolerance: f64,
    /// Candidates whose distances agree to this relative margin are ambiguous.
    pub ambiguity_margin: f64,
    /// Dips this close (MHz) to the bare cavity are labeled cavity and excluded,
    /// together with comparably deep dips within `lobe_spacing` of them.
    pub cavity_exclusion: f64,
    /// A dip within `lobe_spacing` of one at least `1/lobe_ratio` times deeper
    /// is treated as a detrending side lobe and used only as a last resort.
    pub lobe_ratio: f64,
    /// MHz.
    pub lobe_spacing: f64,
    /// Candidates shallower than this fraction of the deepest candidate are dropped.
    pub min_relative_depth: f64,
}

impl Default for AssignOptions {
    fn default() -> Self {
        AssignOptions {
            tolerance: 160.0,
            ambiguity_margin: 0.05,
            cavity_exclusion: 15.0,
            lobe_ratio: 0.2,
            lobe_spacing: 25.0,
            min_relative_depth: 0.5,
        }
    }
}

/// Counts from one assignment pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignStats {
    pub traces: usize,
    pub assigned: usize,
    /// Branches hidden in the cavity feature.
    pub near_cavity: usize,
    pub ambiguous: usize,
    /// Traces in which a magnon branch found no dip.
    pub missing: usize,
}

enum Pick {
    None,
    One(usize),
    Ambiguous(Vec<usize>),
}

/// Nearest candidate to `target` among those at least `min_relative_depth`
/// as deep as the deepest one.
fn nearest_strong(dips: &[Dip], candidates: &[usize], target: f64, opts: &AssignOptions) -> Pick {
    let max_depth = candidates.iter().map(|&i| dips[i].depth).fold(0.0, f64::max);
    let dist = |i: usize| (dips[i].frequency - target).abs();
    let mut strong: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| dips[i].depth >= opts.min_relative_depth * max_depth)
        .collect();
    strong.sort_by(|a, b| dist(*a).total_cmp(&dist(*b)));
    match strong.as_slice() {
        [] => Pick::None,
        [i] => Pick::One(*i),
        [a, b, ..] => {
            let (da, db) = (dist(*a), dist(*b));
            if db - da <= opts.ambiguity_margin * db.max(1.0) {
                Pick::Ambiguous(vec![*a, *b])
            } else {
                Pick::One(*a)
            }
        }
    }
}

/// True when a deeper cavity-labeled dip is closer to the branch prediction
/// than `pick` and either sits next to it or the prediction itself lies in
/// the cavity band: the line has merged into the cavity feature and `pick`
/// is one of its lobes or an unrelated feature further out.
fn hidden_in_cavity(dips: &[Dip], pick: usize, target: f64, cavity: f64, opts: &AssignOptions) -> bool {
    let p = dips[pick];
    let masked = (target - cavity).abs() < opts.cavity_exclusion;
    dips.iter().any(|c| {
        c.label == DipLabel::Cavity
            && c.depth > p.depth
            && (masked || (c.frequency - p.frequency).abs() < opts.lobe_spacing)
            && (c.frequency - target).abs() < (p.frequency - target).abs()
    })
}

/// Labels the dips of each trace. Dips at the cavity (and its comparably deep
/// flanks) are set aside; each magnon branch then takes the dip nearest its
/// bare prediction among the strong candidates within `tolerance`, with side
/// lobes of deeper dips used only when nothing else is available. Fold jumps
/// can move a line tens of MHz between neighboring traces, so no
/// trace-to-trace tracking is attempted. The Kittel branch is picked first and
/// the HMS dip must lie at least `lobe_spacing` above it.
pub fn assign_modes(
    dipsets: &mut [DipSet],
    cal: &FieldCalibration,
    cavity: f64,
    opts: &AssignOptions,
) -> AssignStats {
    let mut stats = AssignStats {
        traces: dipsets.len(),
        ..Default::default()
    };
    let modes = [ModeLabel::Kittel, ModeLabel::Hms];
    for set in dipsets.iter_mut() {
        let (k, h) = mode_frequencies_at_current(cal, set.control);
        let bare = [k, h];
        for d in set.dips.iter_mut() {
            d.label = DipLabel::Unassigned;
            d.flag = None;
            if (d.frequency - cavity).abs() < opts.cavity_exclusion {
                d.label = DipLabel::Cavity;
                d.flag = Some(DipFlag::NearCavity);
            }
        }
        let flanks: Vec<usize> = (0..set.dips.len())
            .filter(|&i| {
                let d = set.dips[i];
                d.label == DipLabel::Unassigned
                    && set.dips.iter().any(|c| {
                        c.label == DipLabel::Cavity
                            && (c.frequency - d.frequency).abs() < opts.lobe_spacing
                            && d.depth >= opts.min_relative_depth * c.depth
                    })
            })
            .collect();
        for i in flanks {
            set.dips[i].label = DipLabel::Cavity;
            set.dips[i].flag = Some(DipFlag::NearCavity);
        }
        let dips = &set.dips;
        let lobe: Vec<bool> = dips
            .iter()
            .map(|d| {
                dips.iter().any(|o| {
                    o.label != DipLabel::Cavity
                        && (o.frequency - d.frequency).abs() < opts.lobe_spacing
                        && d.depth <= opts.lobe_ratio * o.depth
                })
            })
            .collect();
        let mut free: Vec<bool> = dips.iter().map(|d| d.label == DipLabel::Unassigned).collect();
        let mut chosen: [Option<usize>; 2] = [None, None];
        for m in 0..2 {
            let floor = match (m, chosen[0]) {
                (1, Some(i)) => set.dips[i].frequency + opts.lobe_spacing,
                _ => f64::NEG_INFINITY,
            };
            let window: Vec<usize> = (0..set.dips.len())
                .filter(|&i| free[i])
                .filter(|&i| {
                    let f = set.dips[i].frequency;
                    (f - bare[m]).abs() <= opts.tolerance && f > floor
                })
                .collect();
            let strong: Vec<usize> = window.iter().copied().filter(|&i| !lobe[i]).collect();
            let candidates = if strong.is_empty() { &window } else { &strong };
            match nearest_strong(&set.dips, candidates, bare[m], opts) {
                Pick::One(i) if hidden_in_cavity(&set.dips, i, bare[m], cavity, opts) => {
                    stats.near_cavity += 1;
                }
                Pick::One(i) => {
                    free[i] = false;
                    chosen[m] = Some(i);
                }
                Pick::Ambiguous(rivals) => {
                    stats.ambiguous += 1;
                    for i in rivals {
                        set.dips[i].flag = Some(DipFlag::Ambiguous);
                    }
                }
                Pick::None if (bare[m] - cavity).abs() < opts.cavity_exclusion => {
                    stats.near_cavity += 1;
                }
                Pick::None => stats.missing += 1,
            }
        }
        for m in 0..2 {
            if let Some(i) = chosen[m] {
                set.dips[i].label = modes[m].into();
                stats.assigned += 1;
            }
        }
    }
    stats
}

/// `(control, frequency)` of the dip assigned to `mode` in each trace.
pub fn branch_points(dipsets: &[DipSet], mode: ModeLabel) -> Vec<(f64, f64)> {
    let label = DipLabel::from(mode);
    dipsets
        .iter()
        .filter_map(|s| s.labeled(label).next().map(|d| (s.control, d.frequency)))
        .collect()
}

/// Controls delimiting the reference segment of a linear background fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum ReferenceSegment {
    /// The first and last fraction of the control range.
    Edges(f64),
    /// An explicit control interval.
    Range(f64, f64),
}

impl Default for ReferenceSegment {
    fn default() -> Self {
        ReferenceSegment::Edges(0.1)
    }
}

impl ReferenceSegment {
    fn contains(&self, control: f64, lo: f64, hi: f64) -> bool {
        match *self {
            ReferenceSegment::Edges(f) => {
                let span = (hi - lo) * f;
                control <= lo + span || control >= hi - span
            }
            ReferenceSegment::Range(a, b) => control >= a.min(b) && control <= a.max(b),
        }
    }
}

/// Least-squares line `a·x + b`.
pub(crate) fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

/// Residuals (MHz) below which a reference point is never rejected.
const OUTLIER_FLOOR: f64 = 3.0;

/// Least-squares line refitted without points further than four robust
/// standard deviations (and `OUTLIER_FLOOR`) from it, so that occasional
/// misassigned dips cannot tilt it.
fn fit_line_robust(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let mut kept = points.to_vec();
    let mut line = fit_line(&kept)?;
    for _ in 0..5 {
        let resid = |p: &(f64, f64)| (p.1 - (line.0 * p.0 + line.1)).abs();
        let mut r: Vec<f64> = kept.iter().map(resid).collect();
        let cut = (4.0 * 1.4826 * median(&mut r)).max(OUTLIER_FLOOR);
        let next: Vec<(f64, f64)> = points.iter().copied().filter(|p| resid(p) <= cut).collect();
        if next.len() == kept.len() || next.len() < 3 {
            break;
        }
        kept = next;
        line = fit_line(&kept)?;
    }
    Some(line)
}

/// Fits `frequency = a·control + b` on the reference segment and returns
/// `frequency − (a·control + b)` for every point.
pub fn subtract_linear_background(
    points: &[(f64, f64)],
    reference: ReferenceSegment,
) -> Result<Vec<f64>> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "background fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let reference_points: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|p| reference.contains(p.0, lo, hi))
        .collect();
    if reference_points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "reference segment holds {} points, need at least 3",
            reference_points.len()
        )));
    }
    let (a, b) = fit_line_robust(&reference_points).ok_or_else(|| {
        Error::InsufficientData("reference segment spans a single control value".into())
    })?;
    Ok(points.iter().map(|(x, y)| y - (a * x + b)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    /// Drive detuning, MHz.
    pub delta: f64,
    /// MHz.
    pub shift: f64,
}

/// Frequency shift of one mode versus drive detuning, ascending in detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftCurve {
    pub mode: ModeLabel,
    pub points: Vec<ShiftPoint>,
}

impl ShiftCurve {
    pub fn new(mode: ModeLabel, mut points: Vec<ShiftPoint>) -> Result<Self> {
        points.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        if points.windows(2).any(|w| w[1].delta <= w[0].delta) {
            return Err(Error::Input(format!("{mode} shift curve has repeated detunings")));
        }
        Ok(ShiftCurve { mode, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn shifts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.shift).collect()
    }
}

/// Re-indexes `(control, shift)` by `δ = ω_axis(control) − ω_d`, using the
/// bare (unshifted) frequency of the `axis` mode. `label` names the mode
/// whose shift the points describe.
pub fn to_detuning_axis(
    points: &[(f64, f64)],
    cal: &FieldCalibration,
    drive_frequency: f64,
    axis: ModeLabel,
    label: ModeLabel,
) -> Result<ShiftCurve> {
    if axis == ModeLabel::Cavity {
        return Err(Error::Input("detuning axis needs a magnon mode".into()));
    }
    if cal.tuning_rate() == 0.0 {
        return Err(Error::Domain("calibration does not tune the magnon modes".into()));
    }
    let curve = points
        .iter()
        .map(|(c, s)| ShiftPoint {
            delta: cal.frequency(axis, *c).expect("magnon mode") - drive_frequency,
            shift: *s,
        })
        .collect();
    ShiftCurve::new(label, curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractOptions {
    pub dips: DipOptions,
    pub assign: AssignOptions,
    pub reference: ReferenceSegment,
}

/// Everything produced by one pass over a map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub dipsets: Vec<DipSet>,
    pub stats: AssignStats,
    pub kittel: ShiftCurve,
    pub hms: ShiftCurve,
}

impl Extraction {
    pub fn curve(&self, mode: ModeLabel) -> &ShiftCurve {
        match mode {
            ModeLabel::Hms => &self.hms,
            _ => &self.kittel,
        }
    }
}

/// Dips → labels → background-free shifts → detuning axis of `axis_mode`.
pub fn extract_shift_curves(
    map: &SpectrumMap,
    cal: &FieldCalibration,
    cavity: f64,
    drive_frequency: f64,
    axis_mode: ModeLabel,
    opts: &ExtractOptions,
) -> Result<Extraction> {
    let mut dipsets = find_map_dips(map, &opts.dips)?;
    let stats = assign_modes(&mut dipsets, cal, cavity, &opts.assign);
    let curve = |mode: ModeLabel| -> Result<ShiftCurve> {
        let pts = branch_points(&dipsets, mode);
        let residual = subtract_linear_background(&pts, opts.reference)
            .map_err(|e| Error::InsufficientData(format!("{mode} branch: {e}")))?;
        let shifted: Vec<(f64, f64)> = pts.iter().zip(&residual).map(|(p, r)| (p.0, *r)).collect();
        to_detuning_axis(&shifted, cal, drive_frequency, axis_mode, mode)
    };
    let kittel = curve(ModeLabel::Kittel)?;
    let hms = curve(ModeLabel::Hms)?;
    Ok(Extraction {
        dipsets,
        stats,
        kittel,
        hms,
    })
}
