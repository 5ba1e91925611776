//! Value-dimension masking for hard-sample mining.
//!
//! For a feature spread `m` (the max−min span of one emitter's values, in
//! transformed units) the lowest masked dimension is `d_low(m) = ⌊δ·log_k m⌋`.
//! During training each (window, variable) pair is masked with probability
//! `mask_prob`: `m` is drawn from the empirical spread distribution of that
//! variable and every feature at 1-based dimension `d ≥ d_low(m)` is replaced
//! by fresh uniform noise across the whole window.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::pdw::{PdwRecord, Variable, N_VARS};
use crate::seed::{self, Rng};
use crate::wvembs::{EmbedConfig, EmbeddedWindow, VarEmbedding};

/// Empirical per-variable spreads of single-emitter trains.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadDistribution {
    pub spreads: [Vec<f64>; N_VARS],
    pub config: EmbedConfig,
}

impl SpreadDistribution {
    pub fn sample(&self, var: usize, rng: &mut Rng) -> f64 {
        let s = &self.spreads[var];
        s[rng.gen_range(0..s.len())]
    }
}

/// Spread of every variable over every train, in transformed units.
pub fn estimate_spreads(single_class_trains: &[Vec<PdwRecord>], config: &EmbedConfig) -> Result<SpreadDistribution> {
    let trains: Vec<&Vec<PdwRecord>> = single_class_trains.iter().filter(|t| !t.is_empty()).collect();
    if trains.is_empty() {
        return Err(Error::Precondition("no non-empty single-class trains to estimate spreads from".into()));
    }
    let mut spreads: [Vec<f64>; N_VARS] = Default::default();
    for (i, train) in trains.iter().enumerate() {
        let label = train[0].label;
        if train.iter().any(|p| p.label != label) {
            return Err(Error::Precondition(format!("train {i} mixes emitter labels")));
        }
        for (n, var) in config.vars.iter().enumerate() {
            let (lo, hi) = train.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let v = p.values()[n];
                (lo.min(v), hi.max(v))
            });
            spreads[n].push(var.a * (hi - lo));
        }
    }
    Ok(SpreadDistribution {
        spreads,
        config: config.clone(),
    })
}

/// `⌊δ·log_k m⌋` clamped to `[0, D]`.
pub fn d_low(m: f64, var: &VarEmbedding) -> usize {
    if !(m > 0.0) {
        log::warn!("non-positive spread {m}; masking every dimension");
        return 0;
    }
    let raw = var.delta as f64 * m.ln() / f64::from(var.k).ln();
    // Exact powers of k must not fall one short through rounding of ln().
    let nearest = raw.round();
    let raw = if (raw - nearest).abs() < 1e-9 { nearest } else { raw.floor() };
    if raw <= 0.0 {
        0
    } else if raw >= var.dim as f64 {
        var.dim
    } else {
        raw as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskFill {
    /// `U(0, 1)`.
    Uniform01,
    /// `U(−1, 1)`, matching the range of live features.
    UniformPm1,
}

impl MaskFill {
    pub fn name(self) -> &'static str {
        match self {
            MaskFill::Uniform01 => "uniform01",
            MaskFill::UniformPm1 => "uniform_pm1",
        }
    }

    fn draw(self, rng: &mut Rng) -> f64 {
        match self {
            MaskFill::Uniform01 => rng.gen::<f64>(),
            MaskFill::UniformPm1 => rng.gen_range(-1.0..1.0),
        }
    }
}

impl std::str::FromStr for MaskFill {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "uniform01" => Ok(MaskFill::Uniform01),
            "uniform_pm1" => Ok(MaskFill::UniformPm1),
            other => Err(format!("unknown mask fill `{other}` (expected uniform01 or uniform_pm1)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub mask_prob: f64,
    pub fill: MaskFill,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            mask_prob: 0.5,
            fill: MaskFill::Uniform01,
            seed: 0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::config("mask.prob", format!("must lie in [0, 1], got {}", self.mask_prob)));
        }
        Ok(())
    }
}

/// Replaces the features of variable `n` at 1-based dimensions `d ≥ d_star`
/// with fresh draws, for every time step. `d_star = 0` masks every
/// dimension; `d_star ≥ D` (the clamp ceiling of [`d_low`]) masks none.
pub fn mask_variable(embedded: &mut EmbeddedWindow, n: usize, d_star: usize, fill: MaskFill, rng: &mut Rng) {
    let var_dim = embedded.config.vars[n].dim;
    if d_star >= var_dim {
        return;
    }
    let first = d_star.max(1) - 1;
    let dim = embedded.dim;
    for l in 0..embedded.len {
        let base = (l * N_VARS + n) * dim;
        for slot in &mut embedded.values[base + first..base + var_dim] {
            *slot = fill.draw(rng);
        }
    }
}

/// Per-variable masking decisions taken for one window, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaskRecord {
    /// `Some(d*)` for masked variables.
    pub cut: [Option<usize>; N_VARS],
}

pub fn apply_mask_recorded(
    embedded: &EmbeddedWindow,
    spreads: &SpreadDistribution,
    mask: &MaskConfig,
    rng_seed: u64,
) -> Result<(EmbeddedWindow, MaskRecord)> {
    mask.validate()?;
    if embedded.config != spreads.config {
        return Err(Error::Precondition(
            "embedding config differs from the config the spreads were estimated with".into(),
        ));
    }
    let mut out = embedded.clone();
    let mut record = MaskRecord::default();
    if mask.mask_prob == 0.0 {
        return Ok((out, record));
    }
    let mut rng = seed::rng(rng_seed);
    for n in 0..N_VARS {
        if rng.gen::<f64>() >= mask.mask_prob {
            continue;
        }
        let m = spreads.sample(n, &mut rng);
        let d_star = d_low(m, &embedded.config.vars[n]);
        record.cut[n] = Some(d_star);
        mask_variable(&mut out, n, d_star, mask.fill, &mut rng);
    }
    Ok((out, record))
}

/// Masks an embedded window; deterministic in `rng_seed`.
pub fn apply_mask(
    embedded: &EmbeddedWindow,
    spreads: &SpreadDistribution,
    mask: &MaskConfig,
    rng_seed: u64,
) -> Result<EmbeddedWindow> {
    apply_mask_recorded(embedded, spreads, mask, rng_seed).map(|(w, _)| w)
}

pub fn spread_summary(spreads: &SpreadDistribution) -> Vec<(Variable, f64, f64)> {
    Variable::ALL
        .iter()
        .map(|&v| {
            let s = &spreads.spreads[v.index()];
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (v, lo, hi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdw::record::table1_preset;
    use crate::pdw::{generate_train, EmitterSpec};
    use crate::wvembs::{encode_rows, PeriodicFn};

    fn cfg8() -> EmbedConfig {
        EmbedConfig::uniform(8, 2, 10, PeriodicFn::LinearPeriodic).unwrap()
    }

    #[test]
    fn d_low_examples() {
        let var = VarEmbedding::new(8, 2, 10);
        assert_eq!(d_low(100.0, &var), 4);
        assert_eq!(d_low(1.0, &var), 0);
        // 2·log10(50) = 3.39794…
        assert_eq!(d_low(50.0, &var), 3);
        assert_eq!(d_low(0.0, &var), 0);
        assert_eq!(d_low(-3.0, &var), 0);
        assert_eq!(d_low(0.5, &var), 0);
        assert_eq!(d_low(1e9, &var), 8);
        for e in 0..4 {
            assert_eq!(d_low(10f64.powi(e), &var), 2 * e as usize);
        }
    }

    #[test]
    fn spreads_of_constant_and_table_rows() {
        let mut c = cfg8();
        let constant: Vec<PdwRecord> = (0..10)
            .map(|i| PdwRecord::from_values([i as f64, 9600.0, 1.0, -3.0, 40.0], 0))
            .collect();
        let s = estimate_spreads(&[constant], &c).unwrap();
        assert_eq!(s.spreads[Variable::Rf.index()], vec![0.0]);

        let spec = EmitterSpec {
            pulse_count: 5000,
            ..table1_preset(1, 0).unwrap()
        };
        let train = generate_train(&spec, 0.0, 11).unwrap();
        c.vars[Variable::Rf.index()].a = 1.0;
        let s = estimate_spreads(&[train], &c).unwrap();
        let rf = s.spreads[Variable::Rf.index()][0];
        assert!(rf <= 28.0 && rf > 27.9, "{rf}");
    }

    #[test]
    fn sampling_stays_in_multiset() {
        let c = cfg8();
        let mk = |hi: f64| -> Vec<PdwRecord> {
            vec![
                PdwRecord::from_values([0.0; 5], 0),
                PdwRecord::from_values([hi; 5], 0),
            ]
        };
        let s = estimate_spreads(&[mk(10.0), mk(20.0)], &c).unwrap();
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            let m = s.sample(1, &mut rng);
            assert!(m == 10.0 || m == 20.0);
        }
    }

    #[test]
    fn empty_or_mixed_trains_error() {
        assert!(estimate_spreads(&[], &cfg8()).is_err());
        let mixed = vec![
            PdwRecord::from_values([0.0; 5], 0),
            PdwRecord::from_values([1.0; 5], 1),
        ];
        assert!(estimate_spreads(&[mixed], &cfg8()).is_err());
    }

    fn embedded(c: &EmbedConfig) -> EmbeddedWindow {
        let rows: Vec<[f64; 5]> = (0..16).map(|i| [i as f64 * 7.3; 5]).collect();
        encode_rows(&rows, c).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let c = cfg8();
        let e = embedded(&c);
        let spreads = SpreadDistribution {
            spreads: std::array::from_fn(|_| vec![100.0]),
            config: c.clone(),
        };
        let m = MaskConfig {
            mask_prob: 0.0,
            ..Default::default()
        };
        assert_eq!(apply_mask(&e, &spreads, &m, 3).unwrap(), e);
    }

    #[test]
    fn forced_cut_preserves_low_dims() {
        let c = cfg8();
        let e = embedded(&c);
        let mut masked = e.clone();
        mask_variable(&mut masked, 2, 4, MaskFill::Uniform01, &mut seed::rng(9));
        for l in 0..e.len {
            for d in 0..3 {
                assert_eq!(masked.get(l, 2, d).to_bits(), e.get(l, 2, d).to_bits());
            }
            for d in 3..8 {
                assert_ne!(masked.get(l, 2, d), e.get(l, 2, d));
                assert!((0.0..1.0).contains(&masked.get(l, 2, d)));
            }
            for n in [0, 1, 3, 4] {
                assert_eq!(masked.token(l)[n * 8..n * 8 + 8], e.token(l)[n * 8..n * 8 + 8]);
            }
        }
        let mut none = e.clone();
        mask_variable(&mut none, 2, 8, MaskFill::Uniform01, &mut seed::rng(9));
        assert_eq!(none, e);
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let c = cfg8();
        let e = embedded(&c);
        let mut other = c.clone();
        other.vars[0].a = 2.0;
        let spreads = SpreadDistribution {
            spreads: std::array::from_fn(|_| vec![100.0]),
            config: other,
        };
        assert!(apply_mask(&e, &spreads, &MaskConfig::default(), 1).is_err());
    }

    #[test]
    fn masking_is_seeded() {
        let c = cfg8();
        let e = embedded(&c);
        let spreads = SpreadDistribution {
            spreads: std::array::from_fn(|_| vec![10.0, 100.0, 1000.0]),
            config: c.clone(),
        };
        let m = MaskConfig::default();
        assert_eq!(apply_mask(&e, &spreads, &m, 5).unwrap(), apply_mask(&e, &spreads, &m, 5).unwrap());
        assert_ne!(apply_mask(&e, &spreads, &m, 5).unwrap(), apply_mask(&e, &spreads, &m, 6).unwrap());
    }
}
