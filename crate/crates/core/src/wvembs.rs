//! Wide-value embeddings.
//!
//! Each PDW variable is affinely mapped to `x = a·X + b` and expanded into `D`
//! periodic features. Features come in `D/δ` groups; group `i` sees `x` at
//! period `kⁱ` and emits `δ` phase-shifted copies:
//!
//! ```text
//! E[δ·i + j] = f(x / kⁱ + j/δ),   i ∈ 0..D/δ,  j ∈ 1..=δ
//! ```
//!
//! With `M = k^(D/δ)` and `m_max = M/k`, values in `[0, m_max)` are recovered
//! exactly from the embedding (see [`decode`]). Dimension indices in the
//! formula are 1-based; tensors and files store dimension `δ·i + j` at
//! offset `δ·i + j − 1`.

use crate::error::{Error, Result};
use crate::pdw::{Variable, Window, N_VARS};

/// Largest modulus we accept; keeps every period an exact double.
const MAX_MODULUS: u64 = 1 << 53;
/// `1 ≪ m_max` is enforced as `m_max ≥ MIN_M_MAX`.
pub const MIN_M_MAX: f64 = 100.0;
/// Fraction of `m_max` that the fitted training range occupies.
pub const HEADROOM: f64 = 0.9;
const PHASE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicFn {
    /// `f(x) = 2·(x mod 1) − 1`.
    LinearPeriodic,
    /// `f(x) = sin(2πx)`.
    Sinusoidal,
}

impl PeriodicFn {
    pub fn name(self) -> &'static str {
        match self {
            PeriodicFn::LinearPeriodic => "linear_periodic",
            PeriodicFn::Sinusoidal => "sinusoidal",
        }
    }
}

impl std::str::FromStr for PeriodicFn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "linear_periodic" | "linear" => Ok(PeriodicFn::LinearPeriodic),
            "sinusoidal" | "sin" => Ok(PeriodicFn::Sinusoidal),
            other => Err(format!("unknown f_variant `{other}` (expected linear_periodic or sinusoidal)")),
        }
    }
}

/// Fractional part in `[0, 1)` using floor semantics, so negatives wrap.
#[inline]
fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[inline]
fn phase_value(phase: f64, variant: PeriodicFn) -> f64 {
    match variant {
        PeriodicFn::LinearPeriodic => 2.0 * frac(phase) - 1.0,
        PeriodicFn::Sinusoidal => (std::f64::consts::TAU * frac(phase)).sin(),
    }
}

/// The period-1 function applied to every embedding argument.
pub fn f_periodic(x: f64, variant: PeriodicFn) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NumericDomain(format!("periodic function argument {x} is not finite")));
    }
    Ok(phase_value(x, variant))
}

/// Embedding parameters of a single variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VarEmbedding {
    pub dim: usize,
    pub delta: usize,
    pub k: u32,
    pub a: f64,
    pub b: f64,
}

impl VarEmbedding {
    pub fn new(dim: usize, delta: usize, k: u32) -> Self {
        VarEmbedding {
            dim,
            delta,
            k,
            a: 1.0,
            b: 0.0,
        }
    }

    pub fn groups(&self) -> usize {
        self.dim / self.delta
    }

    /// `kᵍ` as an exact double.
    pub fn period(&self, group: usize) -> f64 {
        (self.k as u64).pow(group as u32) as f64
    }

    /// `M = k^(D/δ)`.
    pub fn modulus(&self) -> f64 {
        self.period(self.groups())
    }

    /// `m_max = M / k`, the period of the coarsest group.
    pub fn m_max(&self) -> f64 {
        self.period(self.groups() - 1)
    }

    pub fn transform(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    pub fn untransform(&self, x: f64) -> f64 {
        (x - self.b) / self.a
    }

    pub fn validate(&self, var: &str) -> Result<()> {
        let key = |f: &str| format!("embed.{var}.{f}");
        if self.dim == 0 {
            return Err(Error::config(key("dim"), "must be positive"));
        }
        if self.delta == 0 || self.dim % self.delta != 0 {
            return Err(Error::config(
                key("delta"),
                format!("step {} must divide the dimension {}", self.delta, self.dim),
            ));
        }
        if self.k < 2 {
            return Err(Error::config(key("k"), "scaling factor must be an integer ≥ 2"));
        }
        let groups = u32::try_from(self.groups()).unwrap_or(u32::MAX);
        match (self.k as u64).checked_pow(groups) {
            Some(m) if m <= MAX_MODULUS => {}
            _ => {
                return Err(Error::config(
                    key("dim"),
                    format!("modulus {}^{} exceeds 2^53", self.k, self.groups()),
                ))
            }
        }
        if self.m_max() < MIN_M_MAX {
            return Err(Error::config(
                key("dim"),
                format!("m_max = {} is below the minimum {MIN_M_MAX}", self.m_max()),
            ));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::config(key("a"), format!("affine scale must be positive, got {}", self.a)));
        }
        if !self.b.is_finite() {
            return Err(Error::config(key("b"), "affine offset must be finite"));
        }
        Ok(())
    }
}

/// Embedding parameters for all five variables.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub vars: [VarEmbedding; N_VARS],
    pub f_variant: PeriodicFn,
}

impl Default for EmbedConfig {
    /// `D = 16, δ = 2, k = 10` for toa; `D = 8, δ = 2, k = 10` elsewhere.
    fn default() -> Self {
        let mut vars = std::array::from_fn(|_| VarEmbedding::new(8, 2, 10));
        vars[Variable::Toa.index()] = VarEmbedding::new(16, 2, 10);
        EmbedConfig {
            vars,
            f_variant: PeriodicFn::LinearPeriodic,
        }
    }
}

impl EmbedConfig {
    pub fn uniform(dim: usize, delta: usize, k: u32, f_variant: PeriodicFn) -> Result<Self> {
        let config = EmbedConfig {
            vars: std::array::from_fn(|_| VarEmbedding::new(dim, delta, k)),
            f_variant,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn var(&self, v: Variable) -> &VarEmbedding {
        &self.vars[v.index()]
    }

    /// Width of the embedding axis in tensors: the largest per-variable `D`.
    /// Variables with a smaller `D` are zero-padded.
    pub fn token_dim(&self) -> usize {
        self.vars.iter().map(|v| v.dim).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        for (v, var) in self.vars.iter().zip(Variable::ALL) {
            v.validate(var.name())?;
        }
        Ok(())
    }
}

/// `values[(l·N + n)·dim + d]`, `d` 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedWindow {
    pub len: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    pub config: EmbedConfig,
}

impl EmbeddedWindow {
    pub fn get(&self, l: usize, n: usize, d: usize) -> f64 {
        self.values[(l * N_VARS + n) * self.dim + d]
    }

    pub fn token(&self, l: usize) -> &[f64] {
        let w = N_VARS * self.dim;
        &self.values[l * w..(l + 1) * w]
    }
}

/// Fits `a_n, b_n` so the corpus range of each variable maps onto
/// `[0, HEADROOM·m_max]`.
pub fn fit_affine(corpus: &[Window], skeleton: &EmbedConfig) -> Result<EmbedConfig> {
    let mut lo = [f64::INFINITY; N_VARS];
    let mut hi = [f64::NEG_INFINITY; N_VARS];
    for row in corpus.iter().flat_map(|w| w.values.iter()) {
        for n in 0..N_VARS {
            lo[n] = lo[n].min(row[n]);
            hi[n] = hi[n].max(row[n]);
        }
    }
    if !lo[0].is_finite() {
        return Err(Error::Precondition("cannot fit the affine transform on an empty corpus".into()));
    }
    let mut config = skeleton.clone();
    for (n, var) in config.vars.iter_mut().enumerate() {
        let span = hi[n] - lo[n];
        if span > 0.0 {
            var.a = HEADROOM * var.m_max() / span;
            var.b = -var.a * lo[n];
        } else {
            var.a = 1.0;
            var.b = -lo[n];
        }
    }
    config.validate()?;
    Ok(config)
}

/// Writes the `var.dim` features of an already transformed value into `out`.
pub fn encode_scalar(x: f64, var: &VarEmbedding, variant: PeriodicFn, out: &mut [f64]) {
    let step = 1.0 / var.delta as f64;
    for g in 0..var.groups() {
        let p = var.period(g);
        // rem_euclid is exact, so shifts by multiples of p leave the phase bit-identical.
        let phase = frac(x.rem_euclid(p) / p);
        for j in 1..=var.delta {
            out[g * var.delta + j - 1] = phase_value(phase + j as f64 * step, variant);
        }
    }
}

/// Embeds `L` rows of raw PDW values (relative toa) into an `L×N×D` array.
pub fn encode_rows(rows: &[[f64; N_VARS]], config: &EmbedConfig) -> Result<EmbeddedWindow> {
    let dim = config.token_dim();
    let mut values = vec![0.0; rows.len() * N_VARS * dim];
    for (l, row) in rows.iter().enumerate() {
        for (n, var) in config.vars.iter().enumerate() {
            if !row[n].is_finite() {
                return Err(Error::NumericDomain(format!(
                    "non-finite input {} at (l={l}, n={n})",
                    row[n]
                )));
            }
            let at = (l * N_VARS + n) * dim;
            encode_scalar(var.transform(row[n]), var, config.f_variant, &mut values[at..at + var.dim]);
        }
    }
    Ok(EmbeddedWindow {
        len: rows.len(),
        dim,
        values,
        config: config.clone(),
    })
}

pub fn encode(window: &Window, config: &EmbedConfig) -> Result<EmbeddedWindow> {
    encode_rows(&window.values, config)
}

/// Result of a best-effort reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    /// Estimate of the transformed value in `[0, m_max)`.
    pub value: f64,
    /// Largest phase disagreement seen (0 for a clean embedding).
    pub inconsistency: f64,
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = frac(a - b);
    d.min(1.0 - d)
}

/// Phase of group `g` recovered from its features, plus the worst mismatch
/// between that phase and the group's other features.
fn group_phase(emb: &[f64], g: usize, var: &VarEmbedding, variant: PeriodicFn) -> Result<(f64, f64)> {
    let delta = var.delta;
    let feats = &emb[g * delta..(g + 1) * delta];
    let phase = match variant {
        // j = δ carries offset 1 ≡ 0, i.e. the bare phase.
        PeriodicFn::LinearPeriodic => frac((feats[delta - 1] + 1.0) / 2.0),
        PeriodicFn::Sinusoidal => {
            if delta % 4 != 0 {
                return Err(Error::NumericDomain(format!(
                    "sinusoidal embeddings can only be decoded when δ is a multiple of 4 (δ = {delta})"
                )));
            }
            let s = feats[delta - 1];
            let c = feats[delta / 4 - 1];
            frac(s.atan2(c) / std::f64::consts::TAU)
        }
    };
    let mut worst: f64 = 0.0;
    for j in 1..=delta {
        let expect = phase + j as f64 / delta as f64;
        let gap = match variant {
            PeriodicFn::LinearPeriodic => circular_gap((feats[j - 1] + 1.0) / 2.0, expect),
            PeriodicFn::Sinusoidal => (feats[j - 1] - phase_value(expect, variant)).abs(),
        };
        worst = worst.max(gap);
    }
    Ok((phase, worst))
}

/// Coarse-to-fine reconstruction of one variable that never fails on
/// inconsistent input: the coarsest group gives `x mod m_max`, and each finer
/// group snaps the estimate onto its residue `x mod kⁱ`.
pub fn reconstruct_scalar(emb: &[f64], var: &VarEmbedding, variant: PeriodicFn) -> Result<Reconstruction> {
    let groups = var.groups();
    let (coarse, mut worst) = group_phase(emb, groups - 1, var, variant)?;
    let mut x = coarse * var.m_max();
    for g in (0..groups - 1).rev() {
        let (phase, gap) = group_phase(emb, g, var, variant)?;
        worst = worst.max(gap);
        let p = var.period(g);
        let residue = phase * p;
        let q = (x - residue) / p;
        let whole = q.round();
        worst = worst.max((q - whole).abs());
        x = whole * p + residue;
    }
    Ok(Reconstruction {
        value: x,
        inconsistency: worst,
    })
}

/// Recovers the transformed values of one token (`N×D` features). Fails when
/// the groups disagree, which is what a masked or corrupted embedding does.
pub fn decode(token: &[f64], config: &EmbedConfig) -> Result<[f64; N_VARS]> {
    let dim = config.token_dim();
    if token.len() != N_VARS * dim {
        return Err(Error::shape(
            "decode",
            format!("token has {} features, expected {}", token.len(), N_VARS * dim),
        ));
    }
    let mut out = [0.0; N_VARS];
    for (n, var) in config.vars.iter().enumerate() {
        let r = reconstruct_scalar(&token[n * dim..n * dim + var.dim], var, config.f_variant)?;
        if r.inconsistency > PHASE_TOL {
            return Err(Error::DecodeFailure(format!(
                "variable {} has inconsistent residues (gap {:.3e})",
                Variable::ALL[n],
                r.inconsistency
            )));
        }
        out[n] = r.value;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg8() -> EmbedConfig {
        EmbedConfig::uniform(8, 2, 10, PeriodicFn::LinearPeriodic).unwrap()
    }

    fn embed_one(x: f64, config: &EmbedConfig) -> Vec<f64> {
        let var = &config.vars[1];
        let mut out = vec![0.0; var.dim];
        encode_scalar(x, var, config.f_variant, &mut out);
        out
    }

    #[test]
    fn f_examples() {
        let f = |x| f_periodic(x, PeriodicFn::LinearPeriodic).unwrap();
        assert_eq!(f(0.5), 0.0);
        assert_eq!(f(3.0), -1.0);
        assert_eq!(f(-0.25), 0.5);
        assert_eq!(f(-0.25), f(0.75));
        // 2·0.123456 − 1
        assert!((f(0.123456) - (-0.753088)).abs() < 1e-15);
        assert!(f_periodic(f64::NAN, PeriodicFn::LinearPeriodic).is_err());
        assert!(f_periodic(f64::INFINITY, PeriodicFn::Sinusoidal).is_err());
    }

    #[test]
    fn f_stays_below_one_for_tiny_negatives() {
        let v = f_periodic(-1e-20, PeriodicFn::LinearPeriodic).unwrap();
        assert!((-1.0..1.0).contains(&v));
    }

    #[test]
    fn sinusoidal_f() {
        let f = |x| f_periodic(x, PeriodicFn::Sinusoidal).unwrap();
        assert!((f(0.25) - 1.0).abs() < 1e-15);
        assert!((f(1.25) - f(0.25)).abs() < 1e-12);
    }

    #[test]
    fn encode_zero() {
        assert_eq!(embed_one(0.0, &cfg8()), vec![0.0, -1.0, 0.0, -1.0, 0.0, -1.0, 0.0, -1.0]);
    }

    #[test]
    fn encode_two_and_a_half() {
        let e = embed_one(2.5, &cfg8());
        let expect = [-1.0, 0.0, 0.5, -0.5, 0.05, -0.95, 0.005, -0.995];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn derived_moduli() {
        let c = cfg8();
        assert_eq!(c.vars[0].modulus(), 1e4);
        assert_eq!(c.vars[0].m_max(), 1e3);
        let d = EmbedConfig::default();
        assert_eq!(d.var(Variable::Toa).modulus(), 1e8);
        assert_eq!(d.var(Variable::Toa).m_max(), 1e7);
        assert_eq!(d.token_dim(), 16);
    }

    #[test]
    fn validation_errors() {
        assert!(EmbedConfig::uniform(8, 3, 10, PeriodicFn::LinearPeriodic).is_err());
        assert!(EmbedConfig::uniform(8, 2, 1, PeriodicFn::LinearPeriodic).is_err());
        // m_max = 10 < 100
        assert!(EmbedConfig::uniform(4, 2, 10, PeriodicFn::LinearPeriodic).is_err());
        assert!(EmbedConfig::uniform(64, 2, 10, PeriodicFn::LinearPeriodic).is_err());
        let mut c = cfg8();
        c.vars[2].a = 0.0;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "embed.pw.a"),
            other => panic!("{other:?}"),
        }
    }

    fn window_of(rows: Vec<[f64; 5]>) -> Window {
        let labels = vec![0; rows.len()];
        Window { values: rows, labels }
    }

    #[test]
    fn fit_affine_examples() {
        let skel = cfg8();
        let w = window_of(vec![[0.0, 2825.0, 5.0, 0.0, 0.0], [900.0, 2841.0, 5.0, 1.0, 3.0]]);
        let c = fit_affine(&[w], &skel).unwrap();
        assert_eq!(c.vars[0].a, 1.0);
        assert_eq!(c.vars[0].b, 0.0);
        assert_eq!(c.vars[1].a, 0.9 * 1000.0 / 16.0);
        assert_eq!(c.vars[1].a, 56.25);
        assert_eq!((c.vars[2].a, c.vars[2].b), (1.0, -5.0));
        assert_eq!(c.vars[2].transform(5.0), 0.0);
        assert!(fit_affine(&[], &skel).is_err());
    }

    #[test]
    fn encode_reports_position_of_bad_input() {
        let err = encode_rows(&[[0.0; 5], [0.0, 0.0, f64::NAN, 0.0, 0.0]], &cfg8()).unwrap_err();
        assert!(err.to_string().contains("l=1, n=2"), "{err}");
    }

    #[test]
    fn padding_is_zero() {
        let e = encode_rows(&[[3.0, 1.0, 2.0, 3.0, 4.0]], &EmbedConfig::default()).unwrap();
        assert_eq!(e.dim, 16);
        for n in 1..5 {
            assert!((8..16).all(|d| e.get(0, n, d) == 0.0));
        }
    }

    #[test]
    fn decode_zero_and_sinusoidal() {
        let c = cfg8();
        let e = encode_rows(&[[0.0; 5]], &c).unwrap();
        let x = decode(e.token(0), &c).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-9));

        let s = EmbedConfig::uniform(16, 4, 10, PeriodicFn::Sinusoidal).unwrap();
        let e = encode_rows(&[[12.5, 77.0, 3.25, 99.0, 0.5]], &s).unwrap();
        let x = decode(e.token(0), &s).unwrap();
        for (got, want) in x.iter().zip([12.5, 77.0, 3.25, 99.0, 0.5]) {
            assert!((got - want).abs() < 1e-6, "{x:?}");
        }
        let s2 = EmbedConfig::uniform(8, 2, 10, PeriodicFn::Sinusoidal).unwrap();
        let e = encode_rows(&[[1.0; 5]], &s2).unwrap();
        assert!(matches!(decode(e.token(0), &s2), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn corrupted_group_fails_decode() {
        let c = cfg8();
        let mut e = encode_rows(&[[123.456; 5]], &c).unwrap();
        e.values[6] = 0.3;
        assert!(matches!(decode(e.token(0), &c), Err(Error::DecodeFailure(_))));
    }

    proptest! {
        #[test]
        fn range_is_half_open(x in -1e9..1e9f64) {
            let e = embed_one(x, &cfg8());
            prop_assert!(e.iter().all(|v| (-1.0..1.0).contains(v)));
        }

        #[test]
        fn shift_by_group_period_keeps_finer_groups(n in 0u64..(1 << 30), t in -50i64..50, g in 0usize..4) {
            let c = cfg8();
            let x = n as f64 / 1024.0;
            let shifted = x + t as f64 * c.vars[1].period(g);
            let (a, b) = (embed_one(x, &c), embed_one(shifted, &c));
            for d in 0..(g + 1) * 2 {
                prop_assert!((a[d] - b[d]).abs() <= 1e-9);
            }
        }

        #[test]
        fn decode_round_trip(x in 0.0..900.0f64) {
            let c = cfg8();
            let e = encode_rows(&[[x; 5]], &c).unwrap();
            let back = decode(e.token(0), &c).unwrap();
            prop_assert!(back.iter().all(|v| (v - x).abs() <= 1e-6 * 1000.0));
        }
    }
}
