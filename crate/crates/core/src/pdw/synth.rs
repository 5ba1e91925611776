//! Pulse-train synthesis, interleaving and non-ideal receiver effects.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::record::{EmitterSpec, PdwRecord, PriPattern, N_VARS};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Smallest pulse width kept after noise is added, µs.
pub const PW_FLOOR: f64 = 1e-3;

/// Signal-to-noise setting of a scenario. `Off` disables measurement noise
/// and the amplitude offset entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Off,
    Db(f64),
}

impl Snr {
    /// Multiplier applied to the 0 dB noise scales.
    pub fn noise_factor(self) -> f64 {
        match self {
            Snr::Off => 0.0,
            Snr::Db(db) => 10f64.powf(-db / 20.0),
        }
    }

    pub fn pa_offset(self) -> f64 {
        match self {
            Snr::Off => 0.0,
            Snr::Db(db) => db,
        }
    }
}

impl std::fmt::Display for Snr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Snr::Off => f.write_str("off"),
            Snr::Db(db) => write!(f, "{db}"),
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "off" | "inf" | "+inf" => Ok(Snr::Off),
            v => v
                .parse::<f64>()
                .map(Snr::Db)
                .map_err(|e| format!("bad SNR `{v}`: {e}")),
        }
    }
}

/// Measurement-noise standard deviations at the 0 dB reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScales {
    pub toa: f64,
    pub rf: f64,
    pub pw: f64,
    pub doa: f64,
}

impl Default for NoiseScales {
    fn default() -> Self {
        NoiseScales {
            toa: 0.05,
            rf: 1.0,
            pw: 0.1,
            doa: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonIdeal {
    pub drop_prob: f64,
    pub snr: Snr,
    pub noise: NoiseScales,
}

impl NonIdeal {
    pub fn clean() -> Self {
        NonIdeal {
            drop_prob: 0.0,
            snr: Snr::Off,
            noise: NoiseScales::default(),
        }
    }
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Generates `spec.pulse_count` pulses of one emitter starting at `t0`.
pub fn generate_train(spec: &EmitterSpec, t0: f64, rng_seed: u64) -> Result<Vec<PdwRecord>> {
    spec.validate()?;
    if !(t0.is_finite() && t0 >= 0.0) {
        return Err(Error::config("t0", format!("must be finite and non-negative, got {t0}")));
    }
    let mut rng = seed::rng(rng_seed);
    let mut out = Vec::with_capacity(spec.pulse_count);
    let mut toa = t0;
    for i in 0..spec.pulse_count {
        if i > 0 {
            toa += match &spec.pri_pattern {
                PriPattern::Constant => spec.pri.mid(),
                PriPattern::Jittered => uniform(&mut rng, spec.pri.lo, spec.pri.hi),
                PriPattern::Staggered(levels) => levels[(i - 1) % levels.len()],
            };
        }
        out.push(PdwRecord {
            toa,
            rf: uniform(&mut rng, spec.rf.lo, spec.rf.hi),
            pw: uniform(&mut rng, spec.pw.lo, spec.pw.hi),
            pa: uniform(&mut rng, spec.pa.lo, spec.pa.hi),
            doa: uniform(&mut rng, spec.doa.lo, spec.doa.hi),
            label: spec.id,
        });
    }
    Ok(out)
}

pub fn is_toa_sorted(stream: &[PdwRecord]) -> bool {
    stream.windows(2).all(|w| w[0].toa <= w[1].toa)
}

#[derive(PartialEq)]
struct Head {
    toa: f64,
    train: usize,
    pos: usize,
}

impl Eq for Head {}

impl Ord for Head {
    fn cmp(&self, other: &Self) -> Ordering {
        self.toa
            .total_cmp(&other.toa)
            .then(self.train.cmp(&other.train))
            .then(self.pos.cmp(&other.pos))
    }
}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Stable k-way merge of toa-sorted trains. Ties go to the earlier train.
pub fn interleave(trains: &[Vec<PdwRecord>]) -> Result<Vec<PdwRecord>> {
    if let Some(i) = trains.iter().position(|t| !is_toa_sorted(t)) {
        return Err(Error::Precondition(format!("train {i} is not sorted by toa")));
    }
    let total = trains.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap: BinaryHeap<Reverse<Head>> = trains
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_empty())
        .map(|(train, t)| Reverse(Head { toa: t[0].toa, train, pos: 0 }))
        .collect();
    while let Some(Reverse(head)) = heap.pop() {
        let train = &trains[head.train];
        out.push(train[head.pos]);
        let next = head.pos + 1;
        if next < train.len() {
            heap.push(Reverse(Head {
                toa: train[next].toa,
                train: head.train,
                pos: next,
            }));
        }
    }
    Ok(out)
}

/// Sorts by toa, breaking ties by label and then by position.
pub fn sort_stream(stream: &mut [PdwRecord]) {
    stream.sort_by(|a, b| a.toa.total_cmp(&b.toa).then(a.label.cmp(&b.label)));
}

/// Pulse deletion, SNR-scaled Gaussian measurement noise on toa/rf/pw/doa,
/// and an amplitude offset equal to the SNR in dB.
pub fn apply_nonideal(stream: &[PdwRecord], effects: &NonIdeal, rng_seed: u64) -> Result<Vec<PdwRecord>> {
    if !is_toa_sorted(stream) {
        return Err(Error::Precondition("stream is not sorted by toa".into()));
    }
    if !(0.0..1.0).contains(&effects.drop_prob) {
        return Err(Error::Precondition(format!(
            "drop_prob must lie in [0, 1), got {}",
            effects.drop_prob
        )));
    }
    let factor = effects.snr.noise_factor();
    let noisy = factor > 0.0;
    let n = effects.noise;
    let mut rng = seed::rng(rng_seed);
    let mut out = Vec::with_capacity(stream.len());
    for pulse in stream {
        if effects.drop_prob > 0.0 && rng.gen::<f64>() < effects.drop_prob {
            continue;
        }
        let mut p = *pulse;
        if noisy {
            let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
            p.toa = (p.toa + n.toa * factor * gauss()).max(0.0);
            p.rf += n.rf * factor * gauss();
            p.pw = (p.pw + n.pw * factor * gauss()).max(PW_FLOOR);
            p.doa = (p.doa + n.doa * factor * gauss()).rem_euclid(360.0);
            if p.doa >= 360.0 {
                p.doa = 0.0;
            }
        }
        p.pa += effects.snr.pa_offset();
        out.push(p);
    }
    if noisy {
        sort_stream(&mut out);
    }
    Ok(out)
}

/// Training-time augmentation of single-emitter trains before they are
/// recombined into interleaved mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Interception length range, µs.
    pub span_us: (f64, f64),
    /// Per-mixture drop probability is drawn uniformly from `[0, max_drop]`.
    pub max_drop: f64,
    /// Per-mixture SNR is drawn uniformly from this range, dB.
    pub snr_db: (f64, f64),
    /// Maximum per-train offset of rf/pw/pa/doa as a fraction of the
    /// emitter's range width.
    pub affine_shift: f64,
    /// Maximum relative per-train scale deviation of rf/pw/pa/doa about the
    /// train's own mean.
    pub affine_scale: f64,
    pub noise: NoiseScales,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            span_us: (2_000.0, 8_000.0),
            max_drop: 0.2,
            snr_db: (0.0, 20.0),
            affine_shift: 0.0,
            affine_scale: 0.0,
            noise: NoiseScales::default(),
        }
    }
}

/// Random interception: the pulses of `train` inside a `span` µs window
/// starting at a uniformly chosen time, re-based to start at `offset`.
pub fn intercept(train: &[PdwRecord], span: f64, offset: f64, rng: &mut Rng) -> Vec<PdwRecord> {
    let (Some(first), Some(last)) = (train.first(), train.last()) else {
        return Vec::new();
    };
    let latest_start = (last.toa - span).max(first.toa);
    let start = uniform(rng, first.toa, latest_start);
    let lo = train.partition_point(|p| p.toa < start);
    let hi = train.partition_point(|p| p.toa < start + span);
    train[lo..hi]
        .iter()
        .map(|p| PdwRecord {
            toa: p.toa - start + offset,
            ..*p
        })
        .collect()
}

/// Per-train affine jitter of the non-time variables: shift by up to
/// `shift·width`, scale about the train mean by up to `1 ± scale`.
pub fn affine_jitter(train: &mut [PdwRecord], spec: &EmitterSpec, shift: f64, scale: f64, rng: &mut Rng) {
    if train.is_empty() || (shift <= 0.0 && scale <= 0.0) {
        return;
    }
    for var in super::record::Variable::ALL.into_iter().skip(1) {
        let width = spec.range(var).map_or(0.0, |r| r.width());
        let off = if shift > 0.0 { uniform(rng, -shift, shift) * width } else { 0.0 };
        let s = if scale > 0.0 { 1.0 + uniform(rng, -scale, scale) } else { 1.0 };
        let idx = var.index();
        let mean = train.iter().map(|p| p.values()[idx]).sum::<f64>() / train.len() as f64;
        for p in train.iter_mut() {
            let mut v = p.values();
            v[idx] = mean + (v[idx] - mean) * s + off;
            let label = p.label;
            *p = PdwRecord::from_values(v, label);
            p.pw = p.pw.max(PW_FLOOR);
            p.doa = p.doa.rem_euclid(360.0);
        }
    }
}

/// Pulse counts that make every emitter cover the same time span while the
/// total stays close to `total_pulses`.
pub fn time_balanced_counts(emitters: &[EmitterSpec], total_pulses: usize) -> Vec<usize> {
    let rate: f64 = emitters.iter().map(|e| 1.0 / e.mean_pri()).sum();
    let duration = total_pulses as f64 / rate;
    emitters
        .iter()
        .map(|e| ((duration / e.mean_pri()).round() as usize).max(1))
        .collect()
}

/// One clean train per emitter, each starting within one maximum PRI of 0.
pub fn generate_scene_trains(emitters: &[EmitterSpec], total_pulses: usize, root_seed: u64) -> Result<Vec<Vec<PdwRecord>>> {
    let counts = time_balanced_counts(emitters, total_pulses);
    let mut start_rng = seed::derived_rng(root_seed, "scene/t0");
    emitters
        .iter()
        .zip(counts)
        .map(|(e, count)| {
            let spec = EmitterSpec {
                pulse_count: count,
                ..e.clone()
            };
            let t0 = uniform(&mut start_rng, 0.0, e.pri.hi);
            generate_train(&spec, t0, seed::derive(root_seed, &format!("scene/train/{}", e.id)))
        })
        .collect()
}

/// A complete interleaved scene: clean trains, merged, with receiver effects.
pub fn generate_scene(emitters: &[EmitterSpec], total_pulses: usize, effects: &NonIdeal, root_seed: u64) -> Result<Vec<PdwRecord>> {
    let trains = generate_scene_trains(emitters, total_pulses, root_seed)?;
    let merged = interleave(&trains)?;
    apply_nonideal(&merged, effects, seed::derive(root_seed, "scene/nonideal"))
}

/// Values of a stream as rows in variable order.
pub fn stream_values(stream: &[PdwRecord]) -> Vec<[f64; N_VARS]> {
    stream.iter().map(PdwRecord::values).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdw::record::{table1_preset, Interval};

    fn spec_with(pri: Interval, pattern: PriPattern, count: usize) -> EmitterSpec {
        EmitterSpec {
            pri,
            pri_pattern: pattern,
            pulse_count: count,
            ..table1_preset(1, 0).unwrap()
        }
    }

    fn toas(s: &[PdwRecord]) -> Vec<f64> {
        s.iter().map(|p| p.toa).collect()
    }

    #[test]
    fn constant_pri_uses_degenerate_midpoint() {
        let spec = spec_with(Interval::new(10.0, 10.0), PriPattern::Constant, 4);
        assert_eq!(toas(&generate_train(&spec, 0.0, 1).unwrap()), vec![0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn staggered_pri_cycles_levels() {
        let spec = spec_with(Interval::new(10.0, 15.0), PriPattern::Staggered(vec![10.0, 15.0]), 5);
        assert_eq!(toas(&generate_train(&spec, 0.0, 1).unwrap()), vec![0.0, 10.0, 25.0, 35.0, 50.0]);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = spec_with(Interval::new(0.0, 10.0), PriPattern::Jittered, 5);
        match generate_train(&spec, 0.0, 1) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "pri_range"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interleave_example() {
        let mk = |t: &[f64], label| -> Vec<PdwRecord> {
            t.iter()
                .map(|&toa| PdwRecord::from_values([toa, 9600.0, 1.0, -50.0, 45.0], label))
                .collect()
        };
        let a = mk(&[0.0, 10.0, 20.0, 30.0], 0);
        let b = mk(&[0.0, 15.0, 30.0], 1);
        let merged = interleave(&[a.clone(), b]).unwrap();
        let seq: Vec<(f64, u16)> = merged.iter().map(|p| (p.toa, p.label)).collect();
        assert_eq!(
            seq,
            vec![(0.0, 0), (0.0, 1), (10.0, 0), (15.0, 1), (20.0, 0), (30.0, 0), (30.0, 1)]
        );
        assert_eq!(interleave(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn interleave_rejects_unsorted() {
        let mut a = generate_train(&table1_preset(1, 0).unwrap(), 0.0, 3).unwrap();
        a.swap(0, 5);
        assert!(matches!(interleave(&[a]), Err(Error::Precondition(_))));
    }

    #[test]
    fn clean_effects_are_identity() {
        let a = generate_train(&table1_preset(4, 0).unwrap(), 5.0, 3).unwrap();
        assert_eq!(apply_nonideal(&a, &NonIdeal::clean(), 9).unwrap(), a);
    }

    #[test]
    fn nonideal_keeps_invariants_at_low_snr() {
        let spec = EmitterSpec {
            pulse_count: 2000,
            ..table1_preset(11, 0).unwrap()
        };
        let a = generate_train(&spec, 0.0, 3).unwrap();
        let effects = NonIdeal {
            drop_prob: 0.1,
            snr: Snr::Db(-20.0),
            noise: NoiseScales::default(),
        };
        let out = apply_nonideal(&a, &effects, 4).unwrap();
        assert!(is_toa_sorted(&out));
        for p in &out {
            p.validate(1).unwrap();
            assert!(p.toa >= 0.0);
        }
    }

    #[test]
    fn bad_drop_prob_is_rejected() {
        let effects = NonIdeal {
            drop_prob: 1.0,
            ..NonIdeal::clean()
        };
        assert!(apply_nonideal(&[], &effects, 0).is_err());
    }

    #[test]
    fn interception_stays_within_span() {
        let spec = EmitterSpec {
            pulse_count: 500,
            ..table1_preset(3, 0).unwrap()
        };
        let train = generate_train(&spec, 0.0, 1).unwrap();
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            let cut = intercept(&train, 3000.0, 100.0, &mut rng);
            assert!(!cut.is_empty());
            assert!(cut.iter().all(|p| p.toa >= 100.0 && p.toa < 3100.0));
            assert!(is_toa_sorted(&cut));
        }
    }

    #[test]
    fn time_balanced_counts_follow_rates() {
        let emitters = crate::pdw::record::preset_emitters(&[1, 12]).unwrap();
        let counts = time_balanced_counts(&emitters, 1000);
        let ratio = counts[0] as f64 / counts[1] as f64;
        assert!((ratio - emitters[1].mean_pri() / emitters[0].mean_pri()).abs() < 0.1);
    }

    #[test]
    fn snr_parses() {
        assert_eq!("off".parse::<Snr>().unwrap(), Snr::Off);
        assert_eq!("-20".parse::<Snr>().unwrap(), Snr::Db(-20.0));
        assert!((Snr::Db(20.0).noise_factor() - 0.1).abs() < 1e-15);
    }
}
