//! Mean-field steady state of a driven Kerr mode.
//!
//! The self-shift `Δ` of a mode with FWHM `γ`, detuned by `δ` from the drive,
//! solves `((Δ+δ)² + (γ/2)²)·Δ = cP`, where `cP` is the signed drive product
//! (MHz³). The cross-shift on the undriven mode is proportional to `Δ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized discriminant magnitude below which near-coincident roots merge.
const MERGE_DISCRIMINANT: f64 = 1e-9;
/// Roots closer than this (MHz) merge near the discriminant boundary.
const MERGE_DISTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftSolution {
    /// δ, MHz.
    pub detuning: f64,
    /// Real shifts Δ, ascending, MHz.
    pub roots: Vec<f64>,
    pub stable: Vec<bool>,
    /// Branch chosen by a sweep; `None` for a bare solve.
    pub selected: Option<usize>,
    /// Set when two roots were merged at a fold.
    pub marginal: bool,
    /// Index of the merged (double) root, if any.
    pub double_root: Option<usize>,
}

impl ShiftSolution {
    pub fn selected_shift(&self) -> Option<f64> {
        self.selected.map(|i| self.roots[i])
    }

    /// Stable roots as `(index, value)`.
    pub fn stable_roots(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.roots
            .iter()
            .zip(&self.stable)
            .enumerate()
            .filter(|(_, (_, s))| **s)
            .map(|(i, (r, _))| (i, *r))
    }

    pub fn is_bistable(&self) -> bool {
        self.stable.iter().filter(|s| **s).count() >= 2
    }
}

/// Left-hand side minus right-hand side of the shift equation, MHz³.
pub fn cubic_residual(delta: f64, gamma: f64, cp: f64, shift: f64) -> f64 {
    let b2 = 0.25 * gamma * gamma;
    ((shift + 2.0 * delta) * shift + delta * delta + b2) * shift - cp
}

fn cubic_slope(delta: f64, gamma: f64, shift: f64) -> f64 {
    let b2 = 0.25 * gamma * gamma;
    (3.0 * shift + 4.0 * delta) * shift + delta * delta + b2
}

/// Newton steps accepted only while they reduce the residual.
fn polish(delta: f64, gamma: f64, cp: f64, mut x: f64) -> f64 {
    let mut r = cubic_residual(delta, gamma, cp, x).abs();
    for _ in 0..4 {
        if r == 0.0 {
            break;
        }
        let d = cubic_slope(delta, gamma, x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let candidate = x - cubic_residual(delta, gamma, cp, x) / d;
        let rc = cubic_residual(delta, gamma, cp, candidate).abs();
        if rc < r {
            x = candidate;
            r = rc;
        } else {
            break;
        }
    }
    x
}

/// All real roots of `Δ³ + 2δΔ² + (δ² + (γ/2)²)Δ − cP = 0`, with stability flags.
pub fn solve_shift_cubic(delta: f64, gamma: f64, cp: f64) -> Result<ShiftSolution> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("linewidth must be positive, got {gamma}")));
    }
    if !delta.is_finite() || !cp.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite detuning {delta} or drive product {cp}"
        )));
    }
    let half = 0.5 * gamma;
    let scale = delta.abs().max(half).max(cp.abs().cbrt());
    let a = 2.0 * delta / scale;
    let b = (delta / scale).powi(2) + (half / scale).powi(2);
    let c = -cp / scale.powi(3);
    let p = b - a * a / 3.0;
    let q = 2.0 * a.powi(3) / 27.0 - a * b / 3.0 + c;
    let disc = (0.5 * q).powi(2) + (p / 3.0).powi(3);

    let mut ts: Vec<f64> = if disc > 0.0 {
        let sq = disc.sqrt();
        let u = (-0.5 * q - q.signum() * sq).cbrt();
        let t = if u == 0.0 { 0.0 } else { u - p / (3.0 * u) };
        vec![t]
    } else if p == 0.0 {
        vec![0.0]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3).map(|k| m * (phi - 2.0 * PI * k as f64 / 3.0).cos()).collect()
    };
    for t in ts.iter_mut() {
        *t = polish(delta, gamma, cp, scale * (*t - a / 3.0));
    }
    ts.sort_by(f64::total_cmp);

    let mut marginal = false;
    let mut double_root = None;
    if ts.len() == 3 && disc.abs() < MERGE_DISCRIMINANT {
        let mut merged: Vec<f64> = Vec::with_capacity(3);
        for &r in &ts {
            let n = merged.len();
            match merged.last_mut() {
                Some(last) if (r - *last).abs() < MERGE_DISTANCE => {
                    marginal = true;
                    double_root = Some(n - 1);
                    if cubic_residual(delta, gamma, cp, r).abs()
                        < cubic_residual(delta, gamma, cp, *last).abs()
                    {
                        *last = r;
                    }
                }
                _ => merged.push(r),
            }
        }
        ts = merged;
    }
    let mut sol = ShiftSolution {
        detuning: delta,
        roots: ts,
        stable: Vec::new(),
        selected: None,
        marginal,
        double_root,
    };
    classify_stability(&mut sol);
    Ok(sol)
}

/// Flags roots on the S-curve: outer branches stable, middle branch unstable.
/// After a fold merge the double root is marginal and reported unstable.
pub fn classify_stability(sol: &mut ShiftSolution) {
    sol.stable = match sol.roots.len() {
        3 => vec![true, false, true],
        2 => {
            let double = sol.double_root.unwrap_or(1);
            (0..2).map(|i| i != double).collect()
        }
        n => vec![true; n],
    };
}

/// Undriven-mode shift induced through the cross-Kerr term: `ratio·Δ`.
pub fn cross_shift(driven_shift: f64, ratio: f64) -> f64 {
    ratio * driven_shift
}

/// Mean excitation number behind a self-shift, `Δ/(2K)`.
pub fn excitation_number(shift: f64, kerr: f64) -> Result<f64> {
    if kerr == 0.0 {
        return Err(Error::Domain("Kerr coefficient is zero".into()));
    }
    if shift * kerr < 0.0 {
        return Err(Error::Domain(format!(
            "shift {shift} MHz and Kerr coefficient {kerr} MHz have opposite signs"
        )));
    }
    Ok(shift / (2.0 * kerr))
}

/// Smallest `|cP|` (MHz³) for which a bistable window exists: `8√3/9·(γ/2)³`.
pub fn bistability_threshold(gamma: f64) -> f64 {
    8.0 * 3f64.sqrt() / 9.0 * (0.5 * gamma).powi(3)
}

/// Detuning interval `(lo, hi)` with three real roots, from the fold points of
/// the parametrization `δ(x) = x − cP/(x² + (γ/2)²)`, `x = Δ + δ`.
pub fn bistability_window(gamma: f64, cp: f64) -> Option<(f64, f64)> {
    if !(gamma > 0.0) || cp == 0.0 || !cp.is_finite() {
        return None;
    }
    if cp > 0.0 {
        return bistability_window(gamma, -cp).map(|(lo, hi)| (-hi, -lo));
    }
    let b2 = 0.25 * gamma * gamma;
    let mag = -cp;
    // Folds: h(x) = (x² + b²)² − 2|cP|x = 0 for x > 0; h' is increasing.
    let h = |x: f64| (x * x + b2).powi(2) - 2.0 * mag * x;
    let dh = |x: f64| 4.0 * x * (x * x + b2) - 2.0 * mag;
    let mut hi_x = mag.cbrt().max(1.0);
    while dh(hi_x) < 0.0 {
        hi_x *= 2.0;
    }
    let x_min = bisect(dh, 0.0, hi_x);
    if h(x_min) >= 0.0 {
        return None;
    }
    let mut far = x_min.max(1.0) * 2.0;
    while h(far) < 0.0 {
        far *= 2.0;
    }
    let xa = bisect(h, 0.0, x_min);
    let xb = bisect(h, x_min, far);
    let delta_of = |x: f64| x + mag / (x * x + b2);
    Some((delta_of(xb), delta_of(xa)))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SweepDirection {
    #[default]
    Up,
    Down,
}

impl std::str::FromStr for SweepDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(SweepDirection::Up),
            "down" => Ok(SweepDirection::Down),
            other => Err(Error::Input(format!("unknown sweep direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Control value (current in A for field sweeps, else the detuning).
    pub control: f64,
    pub solution: ShiftSolution,
    /// Shift of the undriven mode, MHz.
    pub cross_shift: f64,
    /// Mean excitation number of the driven mode (0 when the Kerr scale is unset).
    pub excitations: f64,
}

impl SweepPoint {
    pub fn shift(&self) -> f64 {
        self.solution
            .selected_shift()
            .expect("sweep points always carry a selection")
    }
}

/// A branch change between consecutive sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    /// Index of the first point on the new branch.
    pub index: usize,
    /// Midpoint between the two detunings straddling the jump, MHz.
    pub detuning: f64,
    pub from_shift: f64,
    pub to_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub direction: SweepDirection,
    pub points: Vec<SweepPoint>,
    pub jumps: Vec<Jump>,
}

impl SweepResult {
    pub fn shifts(&self) -> Vec<f64> {
        self.points.iter().map(SweepPoint::shift).collect()
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.solution.detuning).collect()
    }

    /// Replaces the control column (e.g. with coil currents).
    pub fn with_controls(mut self, controls: &[f64]) -> Result<Self> {
        if controls.len() != self.points.len() {
            return Err(Error::Input(format!(
                "{} controls for {} sweep points",
                controls.len(),
                self.points.len()
            )));
        }
        for (p, c) in self.points.iter_mut().zip(controls) {
            p.control = *c;
        }
        Ok(self)
    }

    /// Fills cross-shifts and excitation numbers from the cross-to-self
    /// ratio and the driven mode's self-Kerr coefficient (MHz per excitation).
    pub fn with_kerr(mut self, ratio: f64, k_self: f64) -> Result<Self> {
        for p in &mut self.points {
            let shift = p.shift();
            p.cross_shift = cross_shift(shift, ratio);
            p.excitations = if k_self == 0.0 {
                0.0
            } else {
                excitation_number(shift, k_self)
                    .map_err(|e| Error::AtControl { control: p.control, source: Box::new(e) })?
            };
        }
        Ok(self)
    }
}

/// Follows the steady state along `grid` (ordered in the sweep direction),
/// starting on the smallest-|Δ| stable root and staying on the same stable
/// branch until it disappears at a fold.
pub fn hysteresis_sweep(
    gamma: f64,
    cp: f64,
    grid: &[f64],
    direction: SweepDirection,
) -> Result<SweepResult> {
    let ordered = grid.windows(2).all(|w| match direction {
        SweepDirection::Up => w[1] > w[0],
        SweepDirection::Down => w[1] < w[0],
    });
    if !ordered {
        return Err(Error::Input(format!(
            "detuning grid is not strictly monotone in the {direction:?} direction"
        )));
    }
    let mut points: Vec<SweepPoint> = Vec::with_capacity(grid.len());
    let mut jumps = Vec::new();
    for (i, &delta) in grid.iter().enumerate() {
        let mut sol = solve_shift_cubic(delta, gamma, cp)?;
        let pick = match points.last() {
            None => sol
                .stable_roots()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i),
            Some(prev) => {
                let prev_sol = &prev.solution;
                let prev_idx = prev_sol.selected.expect("selected");
                let prev_val = prev_sol.roots[prev_idx];
                let same_branch = prev_sol.roots.len() == 3 && sol.roots.len() == 3;
                if same_branch {
                    Some(prev_idx)
                } else {
                    sol.stable_roots()
                        .min_by(|a, b| (a.1 - prev_val).abs().total_cmp(&(b.1 - prev_val).abs()))
                        .map(|(i, _)| i)
                }
            }
        };
        let pick = pick.expect("at least one stable root");
        sol.selected = Some(pick);
        let value = sol.roots[pick];
        if let Some(prev) = points.last() {
            let prev_sol = &prev.solution;
            if prev_sol.is_bistable() {
                let prev_val = prev.shift();
                let nearest = prev_sol
                    .stable_roots()
                    .min_by(|a, b| (a.1 - value).abs().total_cmp(&(b.1 - value).abs()))
                    .map(|(_, v)| v)
                    .unwrap_or(prev_val);
                if nearest != prev_val {
                    jumps.push(Jump {
                        index: i,
                        detuning: 0.5 * (delta + prev_sol.detuning),
                        from_shift: prev_val,
                        to_shift: value,
                    });
                }
            }
        }
        points.push(SweepPoint {
            control: delta,
            solution: sol,
            cross_shift: 0.0,
            excitations: 0.0,
        });
    }
    Ok(SweepResult {
        direction,
        points,
        jumps,
    })
}

/// Up- and down-sweeps over one ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HysteresisLoop {
    pub up: SweepResult,
    pub down: SweepResult,
    /// `Σ |Δ_up − Δ_down|·|dδ|`, MHz².
    pub area: f64,
}

impl HysteresisLoop {
    /// Distance between the up- and down-sweep jump detunings, if both jumped.
    pub fn jump_gap(&self) -> Option<f64> {
        let up = self.up.jumps.first()?;
        let down = self.down.jumps.first()?;
        Some((up.detuning - down.detuning).abs())
    }
}

pub fn hysteresis_loop(gamma: f64, cp: f64, ascending: &[f64]) -> Result<HysteresisLoop> {
    let up = hysteresis_sweep(gamma, cp, ascending, SweepDirection::Up)?;
    let descending: Vec<f64> = ascending.iter().rev().copied().collect();
    let down = hysteresis_sweep(gamma, cp, &descending, SweepDirection::Down)?;
    let up_shifts = up.shifts();
    let mut down_shifts = down.shifts();
    down_shifts.reverse();
    let n = ascending.len();
    let mut area = 0.0;
    for i in 0..n {
        let lo = if i == 0 { ascending[0] } else { 0.5 * (ascending[i - 1] + ascending[i]) };
        let hi = if i + 1 == n { ascending[n - 1] } else { 0.5 * (ascending[i] + ascending[i + 1]) };
        area += (up_shifts[i] - down_shifts[i]).abs() * (hi - lo);
    }
    Ok(HysteresisLoop { up, down, area })
}

/// Evenly spaced grid from `start` to `end` inclusive (either order).
pub fn linear_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Real roots by a dense sign-change scan plus bisection.
    fn scan_roots(delta: f64, gamma: f64, cp: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let f = |x: f64| cubic_residual(delta, gamma, cp, x);
        let step = (hi - lo) / n as f64;
        let mut out = Vec::new();
        for i in 0..n {
            let a = lo + step * i as f64;
            let b = a + step;
            if f(a) == 0.0 {
                out.push(a);
            } else if f(a) * f(b) < 0.0 {
                out.push(bisect(f, a, b));
            }
        }
        out
    }

    #[test]
    fn undriven_has_single_zero_root() {
        for delta in [-50.0, 0.0, 13.0] {
            let sol = solve_shift_cubic(delta, 11.6, 0.0).unwrap();
            assert_eq!(sol.roots.len(), 1);
            assert!(sol.roots[0].abs() < 1e-12);
            assert_eq!(sol.stable, vec![true]);
        }
    }

    #[test]
    fn resonant_drive_matches_scan_oracle() {
        let sol = solve_shift_cubic(0.0, 11.6, -100.0).unwrap();
        let oracle = scan_roots(0.0, 11.6, -100.0, -50.0, 0.0, 500_000);
        assert_eq!(oracle.len(), 1);
        assert_eq!(sol.roots.len(), 1);
        assert!((sol.roots[0] - oracle[0]).abs() < 1e-6, "{:?} {:?}", sol.roots, oracle);
        // Δ(Δ² + 33.64) = −100
        let x = sol.roots[0];
        assert!((x * (x * x + 33.64) + 100.0).abs() < 1e-9);
    }

    #[test]
    fn three_root_window_matches_scan() {
        let gamma = 11.6;
        let cp = -60.0 * 5.8 * 5.8;
        let (lo, hi) = bistability_window(gamma, cp).unwrap();
        let mut first = None;
        let mut last = None;
        let mut d = 10.0;
        while d <= 90.0 {
            let n = scan_roots(d, gamma, cp, -70.0, 1.0, 20_000).len();
            if n == 3 {
                first.get_or_insert(d);
                last = Some(d);
            }
            d += 0.01;
        }
        let (first, last) = (first.unwrap(), last.unwrap());
        assert!((first - lo).abs() < 0.011, "{first} vs {lo}");
        assert!((last - hi).abs() < 0.011, "{last} vs {hi}");
        for d in [first + 0.005, 0.5 * (first + last), last - 0.005] {
            assert_eq!(solve_shift_cubic(d, gamma, cp).unwrap().roots.len(), 3);
        }
    }

    #[test]
    fn window_threshold() {
        let gamma = 11.6;
        let t = bistability_threshold(gamma);
        assert!((t - 300.4).abs() < 0.1, "{t}");
        assert!(bistability_window(gamma, -0.99 * t).is_none());
        assert!(bistability_window(gamma, -1.01 * t).is_some());
        let (lo, hi) = bistability_window(gamma, 1.5 * t).unwrap();
        let (nlo, nhi) = bistability_window(gamma, -1.5 * t).unwrap();
        assert!((lo + nhi).abs() < 1e-9 && (hi + nlo).abs() < 1e-9);
    }

    #[test]
    fn random_draws_match_oracle_and_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let delta = rng.random_range(-200.0..200.0);
            let gamma = rng.random_range(1.0..20.0);
            let cp = rng.random_range(-1e6..1e6);
            let sol = solve_shift_cubic(delta, gamma, cp).unwrap();
            for r in &sol.roots {
                assert!(cubic_residual(delta, gamma, cp, *r).abs() < 1e-6);
            }
            let bound = (delta.abs() + cp.abs().cbrt()).min(cp.abs() / (0.25 * gamma * gamma));
            let (lo, hi) = if cp < 0.0 { (-bound - 1.0, 0.0) } else { (0.0, bound + 1.0) };
            let oracle = scan_roots(delta, gamma, cp, lo, hi, 30_000);
            if oracle.len() == sol.roots.len() {
                for (a, b) in sol.roots.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-6, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn middle_root_is_unstable() {
        let sol = solve_shift_cubic(60.0, 11.6, -2018.4).unwrap();
        assert_eq!(sol.roots.len(), 3);
        assert_eq!(sol.stable, vec![true, false, true]);
    }

    /// Forward-Euler relaxation of `dβ/dt = −(i(δ + 2K|β|²) + γ/2)β − iΩ`,
    /// started slightly off the steady state for root `shift`.
    fn relaxes(delta: f64, gamma: f64, cp: f64, shift: f64) -> bool {
        use num_complex::Complex64;
        let b = 0.5 * gamma;
        let k = cp.signum();
        let omega = (cp / (2.0 * k)).sqrt();
        let i = Complex64::i();
        let steady = -i * omega / (i * (delta + shift) + b);
        let mut beta = steady * (1.0 + 1e-3) + Complex64::new(1e-3, -1e-3) * steady.norm();
        let rate = b + delta.abs() + shift.abs() + 1.0;
        let dt = 0.002 / rate;
        let steps = (60.0 / b / dt) as usize;
        for _ in 0..steps {
            let d = -(i * (delta + 2.0 * k * beta.norm_sqr()) + b) * beta - i * omega;
            beta += d * dt;
        }
        (2.0 * k * beta.norm_sqr() - shift).abs() < 1e-2 * (1.0 + shift.abs())
    }

    #[test]
    fn stability_agrees_with_time_domain_relaxation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut three_root_cases = 0;
        let mut draws = 0;
        while draws < 20 {
            let gamma = rng.random_range(2.0..12.0);
            let b3 = (0.5f64 * gamma).powi(3);
            let cp = -rng.random_range(0.5..8.0) * b3 * 3.0;
            let delta = match bistability_window(gamma, cp) {
                Some((lo, hi)) if rng.random_bool(0.6) => rng.random_range(lo..hi),
                _ => rng.random_range(-3.0 * gamma..6.0 * gamma),
            };
            let sol = solve_shift_cubic(delta, gamma, cp).unwrap();
            if sol.marginal {
                continue;
            }
            draws += 1;
            if sol.roots.len() == 3 {
                three_root_cases += 1;
            }
            for (r, s) in sol.roots.iter().zip(&sol.stable) {
                assert_eq!(relaxes(delta, gamma, cp, *r), *s, "δ={delta} γ={gamma} cP={cp} root={r}");
            }
        }
        assert!(three_root_cases >= 5);
    }

    #[test]
    fn cross_shift_reference_values() {
        assert_eq!(cross_shift(-60.0, 2.5), -150.0);
        assert_eq!(cross_shift(-20.0, 0.5), -10.0);
        assert_eq!(cross_shift(0.0, 2.5), 0.0);
    }

    #[test]
    fn excitation_number_cases() {
        assert_eq!(excitation_number(0.0, -1e-14).unwrap(), 0.0);
        assert_eq!(excitation_number(2.0 * 3.5, 3.5).unwrap(), 1.0);
        let k = -1e-14;
        let n = excitation_number(-60.0, k).unwrap();
        assert!((n - 3e15).abs() / 3e15 < 1e-12);
        assert!((2.0 * k * n + 60.0).abs() < 1e-9);
        assert!(excitation_number(-1.0, 1.0).is_err());
        assert!(excitation_number(1.0, 0.0).is_err());
    }

    #[test]
    fn sweeps_coincide_below_threshold() {
        let gamma = 11.6;
        let cp = -0.5 * bistability_threshold(gamma);
        let grid = linear_grid(-50.0, 50.0, 2001);
        let hl = hysteresis_loop(gamma, cp, &grid).unwrap();
        let mut down = hl.down.shifts();
        down.reverse();
        assert_eq!(hl.up.shifts(), down);
        assert!(hl.up.jumps.is_empty() && hl.down.jumps.is_empty());
        assert_eq!(hl.area, 0.0);
    }

    #[test]
    fn sweeps_jump_at_window_edges_above_threshold() {
        let gamma = 11.6;
        let cp = -2018.4;
        let grid = linear_grid(-120.0, 120.0, 24_001);
        let hl = hysteresis_loop(gamma, cp, &grid).unwrap();
        let (lo, hi) = bistability_window(gamma, cp).unwrap();
        assert_eq!(hl.up.jumps.len(), 1);
        assert_eq!(hl.down.jumps.len(), 1);
        assert!((hl.up.jumps[0].detuning - hi).abs() < 0.01);
        assert!((hl.down.jumps[0].detuning - lo).abs() < 0.01);
        assert!((hl.jump_gap().unwrap() - (hi - lo)).abs() < 0.02);
        assert!(hl.area > 0.0);
        let peak = hl.up.shifts().into_iter().fold(0.0f64, |m, v| m.min(v));
        assert!((peak + 60.0).abs() < 1e-3, "{peak}");
        for p in hl.up.points.iter().chain(&hl.down.points) {
            assert!(p.solution.stable[p.solution.selected.unwrap()]);
        }
    }

    #[test]
    fn sweep_rejects_unordered_grid() {
        assert!(hysteresis_sweep(1.0, -1.0, &[0.0, 1.0, 0.5], SweepDirection::Up).is_err());
        assert!(hysteresis_sweep(1.0, -1.0, &[0.0, 1.0], SweepDirection::Down).is_err());
    }

    #[test]
    fn sweep_fills_kerr_columns() {
        let grid = linear_grid(-20.0, 20.0, 41);
        let sweep = hysteresis_sweep(5.0, -100.0, &grid, SweepDirection::Up)
            .unwrap()
            .with_kerr(0.5, -1e-16)
            .unwrap();
        for p in &sweep.points {
            assert_eq!(p.cross_shift, 0.5 * p.shift());
            assert!(p.excitations >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn roots_satisfy_residual(delta in -200.0f64..200.0, gamma in 1.0f64..20.0, cp in -1e6f64..1e6) {
            let sol = solve_shift_cubic(delta, gamma, cp).unwrap();
            prop_assert!(!sol.roots.is_empty());
            prop_assert!(sol.roots.windows(2).all(|w| w[0] <= w[1]));
            for r in &sol.roots {
                prop_assert!(cubic_residual(delta, gamma, cp, *r).abs() < 1e-6);
            }
        }

        #[test]
        fn response_grows_with_drive_outside_window(
            delta in -100.0f64..100.0, gamma in 2.0f64..20.0, cp in -2e4f64..-1.0, factor in 1.0f64..3.0
        ) {
            let in_window = |c: f64| bistability_window(gamma, c)
                .map(|(lo, hi)| delta >= lo - 1e-6 && delta <= hi + 1e-6)
                .unwrap_or(false);
            prop_assume!(!in_window(cp) && !in_window(cp * factor));
            let a = solve_shift_cubic(delta, gamma, cp).unwrap();
            let b = solve_shift_cubic(delta, gamma, cp * factor).unwrap();
            prop_assume!(a.roots.len() == 1 && b.roots.len() == 1);
            prop_assert!(b.roots[0].abs() >= a.roots[0].abs() - 1e-9);
        }

        #[test]
        fn cross_shift_is_linear(shift in -200.0f64..200.0, ratio in -5.0f64..5.0, a in -4.0f64..4.0, k in -3i32..4) {
            let lhs = cross_shift(a * shift, ratio);
            let rhs = a * cross_shift(shift, ratio);
            prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs.abs());
            let pow2 = 2f64.powi(k);
            prop_assert_eq!(cross_shift(pow2 * shift, ratio), pow2 * cross_shift(shift, ratio));
        }

        #[test]
        fn loop_area_positive_iff_window_on_grid(gamma in 2.0f64..15.0, scale in 0.2f64..6.0) {
            let cp = -scale * bistability_threshold(gamma);
            let grid = linear_grid(-8.0 * gamma, 8.0 * gamma + 10.0 * scale, 1601);
            let hl = hysteresis_loop(gamma, cp, &grid).unwrap();
            prop_assert!(hl.area >= 0.0);
            let step = grid[1] - grid[0];
            let has_window = bistability_window(gamma, cp)
                .map(|(lo, hi)| grid.iter().any(|d| *d > lo && *d < hi) && hi - lo > step)
                .unwrap_or(false);
            if has_window {
                prop_assert!(hl.area > 0.0);
            } else if bistability_window(gamma, cp).is_none() {
                prop_assert_eq!(hl.area, 0.0);
            }
        }
    }
}
