use magnon_kerr::extract::{DipLabel, ShiftCurve};
use magnon_kerr::model::{ModeLabel, SystemConfig};
use magnon_kerr::pipeline::{AnalyzeOptions, Analysis};
use magnon_kerr::scenarios::{self, Scenario};
use magnon_kerr::spectrum::{AppliedShift, SpectrumMap};

fn run(s: &Scenario) -> (SpectrumMap, Analysis) {
    let map = s.synthesize().unwrap();
    let a = s.analyze(&map, &AnalyzeOptions::default()).unwrap();
    (map, a)
}

/// Fraction of traces whose labeled dip for `mode` lies within `tol` MHz of
/// the synthesized mode frequency, over traces where the line is clear of
/// the cavity exclusion band.
fn label_agreement(a: &Analysis, truth: &[AppliedShift], mode: ModeLabel, cavity: f64, tol: f64) -> f64 {
    let (mut good, mut total) = (0usize, 0usize);
    for (set, t) in a.extraction.dipsets.iter().zip(truth) {
        let f = t.frequency(mode).unwrap();
        if (f - cavity).abs() < 20.0 {
            continue;
        }
        let labeled: Vec<_> = set.labeled(DipLabel::from(mode)).collect();
        if labeled.is_empty() && set.dips.iter().any(|d| d.flag.is_some()) {
            continue;
        }
        total += 1;
        if labeled.len() == 1 && (labeled[0].frequency - f).abs() < tol {
            good += 1;
        }
    }
    good as f64 / total as f64
}

/// RMS of extracted minus synthesized shift, matched on detuning.
fn rms_against_truth(curve: &ShiftCurve, truth: &[AppliedShift]) -> f64 {
    let mut sum = 0.0;
    for p in &curve.points {
        let t = truth
            .iter()
            .min_by(|a, b| (a.detuning - p.delta).abs().total_cmp(&(b.detuning - p.delta).abs()))
            .unwrap();
        assert!((t.detuning - p.delta).abs() < 1e-6);
        sum += (p.shift - t.shift(curve.mode)).powi(2);
    }
    (sum / curve.len() as f64).sqrt()
}

#[test]
fn kittel_drive_round_trip() {
    let s = scenarios::kittel_drive(SystemConfig::default()).unwrap();
    let (map, a) = run(&s);
    let truth = map.truth.as_ref().unwrap();
    let cavity = s.config.cavity().bare_frequency;
    assert!(label_agreement(&a, truth, ModeLabel::Kittel, cavity, 3.0) >= 0.99);
    assert!(label_agreement(&a, truth, ModeLabel::Hms, cavity, 3.0) >= 0.99);
    let rms = rms_against_truth(&a.extraction.kittel, truth);
    assert!(rms < 0.5, "kittel rms {rms}");
    let ratio = a.fit.ratio.unwrap();
    assert!((ratio / 2.5 - 1.0).abs() < 0.05, "{ratio}");
    assert!(a.ratio_refused.is_none());
}

#[test]
fn hms_drive_round_trip() {
    let s = scenarios::hms_drive(SystemConfig::default()).unwrap();
    let (map, a) = run(&s);
    let truth = map.truth.as_ref().unwrap();
    let cavity = s.config.cavity().bare_frequency;
    assert!(label_agreement(&a, truth, ModeLabel::Kittel, cavity, 3.0) >= 0.99);
    assert!(label_agreement(&a, truth, ModeLabel::Hms, cavity, 3.0) >= 0.99);
    let ratio = a.fit.ratio.unwrap();
    assert!((ratio / 0.5 - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn ratios_survive_measurement_noise() {
    for (s, truth) in [
        (scenarios::kittel_drive(SystemConfig::default()).unwrap(), 2.5),
        (scenarios::hms_drive(SystemConfig::default()).unwrap(), 0.5),
    ] {
        let clean = s.synthesize().unwrap();
        for (sigma, seed) in [(0.005, 1), (0.02, 2)] {
            let mut map = clean.clone();
            map.add_db_noise(sigma, seed).unwrap();
            let ratio = s.analyze(&map, &AnalyzeOptions::default()).unwrap().fit.ratio.unwrap();
            assert!((ratio / truth - 1.0).abs() < 0.05, "{} at {sigma} dB: {ratio}", s.name);
        }
    }
}

#[test]
fn undriven_map_has_no_shift_and_no_ratio() {
    let mut s = scenarios::kittel_drive(SystemConfig::default()).unwrap();
    let drive = s.drive.take().unwrap();
    let map = s.synthesize().unwrap();
    let a = magnon_kerr::pipeline::analyze_map(&map, &s.config, &drive, &AnalyzeOptions::default()).unwrap();
    let peak = |c: &ShiftCurve| c.points.iter().map(|p| p.shift.abs()).fold(0.0, f64::max);
    assert!(peak(&a.extraction.kittel) < 0.5);
    // A weak line on the cavity flank has its transmission minimum displaced
    // from the pole by up to half its linewidth, on opposite sides of the
    // cavity.
    let hms = peak(&a.extraction.hms);
    assert!(hms < 0.5 * s.config.linewidth(ModeLabel::Hms), "{hms}");
    assert!(a.fit.ratio.is_none());
    assert!(a.ratio_refused.unwrap().contains("insufficient signal"));
}
