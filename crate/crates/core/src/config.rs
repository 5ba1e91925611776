//! Flat `key = value` configuration files.
//!
//! Blank lines and text after `#` are ignored. Keys carry a section prefix:
//!
//! ```text
//! seed = 7
//! scenario.preset = hard            # hard | easy | rows:1,4,9
//! scenario.snr_db = 10              # or `off`
//! emitter.0.preset = 2              # table row; fields below override it
//! emitter.0.pri_pattern = staggered:40,90,130
//! embed.toa.dim = 16
//! mask.prob = 0.5
//! model.mode = wvembs
//! train.dataset = data/hard
//! ```
//!
//! [`Config::to_kv`] writes every key explicitly; its SHA-256 is the config
//! hash recorded in manifests and checkpoints.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::masking::{MaskConfig, MaskFill};
use crate::nn::{EmbedMode, ModelConfig};
use crate::pdw::record::{preset_emitters, table1_preset, EASY_ROWS, HARD_ROWS};
use crate::pdw::{AugmentConfig, EmitterSpec, Interval, PriPattern, ScenarioConfig, Snr, Variable};
use crate::seed;
use crate::wvembs::{EmbedConfig, PeriodicFn};

/// Training-loop settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Directory written by `synth`.
    pub dataset: Option<PathBuf>,
    /// Pulses in the augmented mixture regenerated every epoch.
    pub pulses_per_epoch: usize,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-2,
            patience: 10,
            dataset: None,
            pulses_per_epoch: 20_000,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        if self.pulses_per_epoch == 0 {
            return Err(Error::config("train.pulses_per_epoch", "must be positive"));
        }
        let a = &self.augment;
        if !(a.span_us.0 > 0.0 && a.span_us.0 <= a.span_us.1) {
            return Err(Error::config("train.span_us", "need 0 < lo ≤ hi"));
        }
        if !(0.0..1.0).contains(&a.max_drop) {
            return Err(Error::config("train.max_drop", "must lie in [0, 1)"));
        }
        if a.snr_db.0 > a.snr_db.1 {
            return Err(Error::config("train.snr_db", "need lo ≤ hi"));
        }
        if a.affine_shift < 0.0 || !(0.0..1.0).contains(&a.affine_scale) {
            return Err(Error::config("train.affine_shift", "shift ≥ 0 and scale in [0, 1) required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Root of every random stream.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub embed: EmbedConfig,
    pub mask: MaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        let emitters = preset_emitters(&HARD_ROWS).expect("built-in rows are valid");
        Config::with_emitters(emitters)
    }
}

/// One parsed line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits a config file into entries; duplicate keys are rejected.
pub fn parse_kv(text: &str, path: &str) -> Result<Vec<Entry>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(Error::Parse {
                path: path.into(),
                line,
                reason: format!("expected `key = value`, got `{body}`"),
            });
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                reason: "empty key".into(),
            });
        }
        if let Some(prev) = seen.insert(key.clone(), line) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                reason: format!("duplicate key `{key}` (first set on line {prev})"),
            });
        }
        out.push(Entry {
            key,
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|p| parse(key, p.trim())).collect()
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64)> {
    match parse_list(key, value)?[..] {
        [lo, hi] => Ok((lo, hi)),
        _ => Err(Error::config(key, format!("expected `lo, hi`, got `{value}`"))),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_rows(key: &str, value: &str) -> Result<Vec<usize>> {
    match value {
        "hard" => Ok(HARD_ROWS.to_vec()),
        "easy" => Ok(EASY_ROWS.to_vec()),
        v => match v.strip_prefix("rows:") {
            Some(list) => list.split(',').map(|r| parse(key, r.trim())).collect(),
            None => Err(Error::config(key, format!("expected hard, easy or rows:<list>, got `{v}`"))),
        },
    }
}

fn set_emitter_field(e: &mut EmitterSpec, field: &str, key: &str, value: &str) -> Result<()> {
    let interval = |v: &str| parse_pair(key, v).map(|(lo, hi)| Interval::new(lo, hi));
    match field {
        "name" => e.name = value.to_string(),
        "doa" => e.doa = interval(value)?,
        "pw" => e.pw = interval(value)?,
        "rf" => e.rf = interval(value)?,
        "pri" => e.pri = interval(value)?,
        "pa" => e.pa = interval(value)?,
        "pri_pattern" => e.pri_pattern = parse::<PriPattern>(key, value)?,
        "pulse_count" => e.pulse_count = parse(key, value)?,
        _ => return Err(Error::config(key, "unknown emitter field")),
    }
    Ok(())
}

fn emitters_from(entries: &[Entry]) -> Result<Option<Vec<EmitterSpec>>> {
    let mut by_index: BTreeMap<usize, Vec<(&str, &Entry)>> = BTreeMap::new();
    for e in entries {
        if let Some(rest) = e.key.strip_prefix("emitter.") {
            let (idx, field) = rest
                .split_once('.')
                .ok_or_else(|| Error::config(&e.key, "expected emitter.<index>.<field>"))?;
            let idx: usize = parse(&e.key, idx)?;
            by_index.entry(idx).or_default().push((field, e));
        }
    }
    if by_index.is_empty() {
        return Ok(None);
    }
    let mut emitters = Vec::new();
    for (expected, (idx, fields)) in by_index.into_iter().enumerate() {
        if idx != expected {
            return Err(Error::config(format!("emitter.{expected}"), "emitter indices must be contiguous from 0"));
        }
        let label = u16::try_from(idx).map_err(|_| Error::config(format!("emitter.{idx}"), "too many emitters"))?;
        let preset = fields.iter().find(|(f, _)| *f == "preset");
        let mut spec = match preset {
            Some((_, e)) => table1_preset(parse(&e.key, &e.value)?, label)?,
            None => EmitterSpec {
                id: label,
                name: format!("emitter-{idx}"),
                doa: Interval::new(f64::NAN, f64::NAN),
                pw: Interval::new(f64::NAN, f64::NAN),
                rf: Interval::new(f64::NAN, f64::NAN),
                pri: Interval::new(f64::NAN, f64::NAN),
                pa: Interval::new(f64::NAN, f64::NAN),
                pri_pattern: PriPattern::Jittered,
                pulse_count: 1000,
            },
        };
        for (field, e) in fields.iter().filter(|(f, _)| *f != "preset") {
            set_emitter_field(&mut spec, field, &e.key, &e.value)?;
        }
        emitters.push(spec);
    }
    Ok(Some(emitters))
}

impl Config {
    pub fn with_emitters(emitters: Vec<EmitterSpec>) -> Self {
        let classes = emitters.len();
        Config {
            seed: 1,
            scenario: ScenarioConfig::new(emitters),
            embed: EmbedConfig::default(),
            mask: MaskConfig {
                seed: seed::derive(1, "mask"),
                ..MaskConfig::default()
            },
            model: ModelConfig {
                classes,
                ..ModelConfig::default()
            },
            train: TrainConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_str_at(&text, &path.display().to_string())
    }

    pub fn from_str_at(text: &str, path: &str) -> Result<Self> {
        let entries = parse_kv(text, path)?;
        Config::from_entries(&entries)
    }

    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let preset = entries.iter().find(|e| e.key == "scenario.preset");
        let emitters = match emitters_from(entries)? {
            Some(list) => {
                if let Some(p) = preset {
                    return Err(Error::config(&p.key, "cannot be combined with emitter.* entries"));
                }
                list
            }
            None => match preset {
                Some(p) => preset_emitters(&parse_rows(&p.key, &p.value)?)?,
                None => preset_emitters(&HARD_ROWS)?,
            },
        };
        let mut c = Config::with_emitters(emitters);
        let mut scenario_seed = None;
        for e in entries {
            if e.key.starts_with("emitter.") || e.key == "scenario.preset" {
                continue;
            }
            if e.key == "scenario.seed" {
                scenario_seed = Some(parse(&e.key, &e.value)?);
                continue;
            }
            c.set(&e.key, &e.value)?;
        }
        c.scenario.seed = scenario_seed.unwrap_or(c.seed);
        c.mask.seed = seed::derive(c.seed, "mask");
        c.train.augment.noise = c.scenario.noise_scales;
        c.model.classes = c.scenario.classes();
        c.validate()?;
        Ok(c)
    }

    /// Applies one key. Derived keys (`model.classes`, the mask seed) are
    /// not settable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (k, v) = (key, value);
        if let Some(rest) = key.strip_prefix("embed.") {
            return self.set_embed(key, rest, value);
        }
        match key {
            "seed" => self.seed = parse(k, v)?,
            "scenario.seed" => self.scenario.seed = parse(k, v)?,
            "scenario.drop_prob" => self.scenario.drop_prob = parse(k, v)?,
            "scenario.snr_db" => self.scenario.snr = parse::<Snr>(k, v)?,
            "scenario.sweep_db" => self.scenario.sweep_db = parse_list(k, v)?,
            "scenario.noise.toa" => self.scenario.noise_scales.toa = parse(k, v)?,
            "scenario.noise.rf" => self.scenario.noise_scales.rf = parse(k, v)?,
            "scenario.noise.pw" => self.scenario.noise_scales.pw = parse(k, v)?,
            "scenario.noise.doa" => self.scenario.noise_scales.doa = parse(k, v)?,
            "scenario.window_len" => self.scenario.window_len = parse(k, v)?,
            "scenario.window_stride" => self.scenario.window_stride = parse(k, v)?,
            "scenario.train_pulses" => self.scenario.train_pulses = parse(k, v)?,
            "scenario.val_pulses" => self.scenario.val_pulses = parse(k, v)?,
            "scenario.test_pulses" => self.scenario.test_pulses = parse(k, v)?,
            "mask.prob" => self.mask.mask_prob = parse(k, v)?,
            "mask.fill" => self.mask.fill = parse::<MaskFill>(k, v)?,
            "model.blocks" => self.model.blocks = parse(k, v)?,
            "model.kernel" => self.model.kernel = parse(k, v)?,
            "model.ffn_mult" => self.model.ffn_mult = parse(k, v)?,
            "model.dropout" => self.model.dropout = parse(k, v)?,
            "model.mode" => self.model.mode = parse::<EmbedMode>(k, v)?,
            "model.lembs_dim" => self.model.lembs_dim = parse(k, v)?,
            "model.use_batch_norm" => self.model.use_batch_norm = parse_bool(k, v)?,
            "model.use_ffn" => self.model.use_ffn = parse_bool(k, v)?,
            "train.epochs" => self.train.epochs = parse(k, v)?,
            "train.batch_size" => self.train.batch_size = parse(k, v)?,
            "train.lr" => self.train.lr = parse(k, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(k, v)?,
            "train.patience" => self.train.patience = parse(k, v)?,
            "train.dataset" => self.train.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
            "train.pulses_per_epoch" => self.train.pulses_per_epoch = parse(k, v)?,
            "train.span_us" => self.train.augment.span_us = parse_pair(k, v)?,
            "train.max_drop" => self.train.augment.max_drop = parse(k, v)?,
            "train.snr_db" => self.train.augment.snr_db = parse_pair(k, v)?,
            "train.affine_shift" => self.train.augment.affine_shift = parse(k, v)?,
            "train.affine_scale" => self.train.augment.affine_scale = parse(k, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    fn set_embed(&mut self, key: &str, rest: &str, value: &str) -> Result<()> {
        if rest == "f_variant" {
            self.embed.f_variant = parse::<PeriodicFn>(key, value)?;
            return Ok(());
        }
        let Some((var, field)) = rest.split_once('.') else {
            return Err(Error::config(key, "unknown key"));
        };
        let var = Variable::from_name(var).ok_or_else(|| Error::config(key, format!("unknown variable `{var}`")))?;
        let slot = &mut self.embed.vars[var.index()];
        match field {
            "dim" => slot.dim = parse(key, value)?,
            "delta" => slot.delta = parse(key, value)?,
            "k" => slot.k = parse(key, value)?,
            "a" => slot.a = parse(key, value)?,
            "b" => slot.b = parse(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.embed.validate()?;
        self.mask.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.classes != self.scenario.classes() {
            return Err(Error::config(
                "model.classes",
                format!("model has {} classes, scenario has {} emitters", self.model.classes, self.scenario.classes()),
            ));
        }
        Ok(())
    }

    /// Canonical text with every key; parsing it reproduces `self`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let pair = |(lo, hi): (f64, f64)| format!("{lo}, {hi}");
        let s = &self.scenario;
        put("seed", self.seed.to_string());
        put("scenario.seed", s.seed.to_string());
        put("scenario.drop_prob", s.drop_prob.to_string());
        put("scenario.snr_db", s.snr.to_string());
        put("scenario.sweep_db", s.sweep_db.iter().map(f64::to_string).collect::<Vec<_>>().join(", "));
        put("scenario.noise.toa", s.noise_scales.toa.to_string());
        put("scenario.noise.rf", s.noise_scales.rf.to_string());
        put("scenario.noise.pw", s.noise_scales.pw.to_string());
        put("scenario.noise.doa", s.noise_scales.doa.to_string());
        put("scenario.window_len", s.window_len.to_string());
        put("scenario.window_stride", s.window_stride.to_string());
        put("scenario.train_pulses", s.train_pulses.to_string());
        put("scenario.val_pulses", s.val_pulses.to_string());
        put("scenario.test_pulses", s.test_pulses.to_string());
        for (i, e) in s.emitters.iter().enumerate() {
            let p = format!("emitter.{i}");
            put(&format!("{p}.name"), e.name.clone());
            for (f, r) in [("doa", e.doa), ("pw", e.pw), ("rf", e.rf), ("pri", e.pri), ("pa", e.pa)] {
                put(&format!("{p}.{f}"), pair((r.lo, r.hi)));
            }
            put(&format!("{p}.pri_pattern"), e.pri_pattern.to_string());
            put(&format!("{p}.pulse_count"), e.pulse_count.to_string());
        }
        put("embed.f_variant", self.embed.f_variant.name().to_string());
        for (v, var) in Variable::ALL.iter().zip(&self.embed.vars) {
            let p = format!("embed.{}", v.name());
            put(&format!("{p}.dim"), var.dim.to_string());
            put(&format!("{p}.delta"), var.delta.to_string());
            put(&format!("{p}.k"), var.k.to_string());
            put(&format!("{p}.a"), var.a.to_string());
            put(&format!("{p}.b"), var.b.to_string());
        }
        put("mask.prob", self.mask.mask_prob.to_string());
        put("mask.fill", self.mask.fill.name().to_string());
        let m = &self.model;
        put("model.blocks", m.blocks.to_string());
        put("model.kernel", m.kernel.to_string());
        put("model.ffn_mult", m.ffn_mult.to_string());
        put("model.dropout", m.dropout.to_string());
        put("model.mode", m.mode.name().to_string());
        put("model.lembs_dim", m.lembs_dim.to_string());
        put("model.use_batch_norm", m.use_batch_norm.to_string());
        put("model.use_ffn", m.use_ffn.to_string());
        let t = &self.train;
        put("train.epochs", t.epochs.to_string());
        put("train.batch_size", t.batch_size.to_string());
        put("train.lr", t.lr.to_string());
        put("train.weight_decay", t.weight_decay.to_string());
        put("train.patience", t.patience.to_string());
        put("train.dataset", t.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        put("train.pulses_per_epoch", t.pulses_per_epoch.to_string());
        put("train.span_us", pair(t.augment.span_us));
        put("train.max_drop", t.augment.max_drop.to_string());
        put("train.snr_db", pair(t.augment.snr_db));
        put("train.affine_shift", t.augment.affine_shift.to_string());
        put("train.affine_scale", t.augment.affine_scale.to_string());
        out
    }

    /// Hex SHA-256 of [`Config::to_kv`].
    pub fn hash(&self) -> String {
        hash_text(&self.to_kv())
    }
}

pub fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back = Config::from_str_at(&c.to_kv(), "mem").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_kv(), c.to_kv());
    }

    #[test]
    fn comments_presets_and_overrides() {
        let text = "\
# scene
seed = 9
scenario.preset = easy   # radars 1, 11, 12
scenario.snr_db = off
embed.rf.dim = 12
model.mode = lembs
train.span_us = 100, 200
";
        let c = Config::from_str_at(text, "x.cfg").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.scenario.seed, 9);
        assert_eq!(c.scenario.emitters[1].name, "radar-11");
        assert_eq!(c.scenario.snr, Snr::Off);
        assert_eq!(c.embed.var(Variable::Rf).dim, 12);
        assert_eq!(c.model.mode, EmbedMode::Lembs);
        assert_eq!(c.model.classes, 3);
        assert_eq!(c.train.augment.span_us, (100.0, 200.0));
        assert_eq!(Config::from_str_at(&c.to_kv(), "mem").unwrap(), c);
    }

    #[test]
    fn emitter_entries_override_presets() {
        let text = "\
emitter.0.preset = 2
emitter.0.pri_pattern = staggered:40,90
emitter.1.doa = 10, 20
emitter.1.pw = 1, 2
emitter.1.rf = 3000, 3010
emitter.1.pri = 50, 60
emitter.1.pa = -80, 0
";
        let c = Config::from_str_at(text, "x").unwrap();
        assert_eq!(c.scenario.emitters.len(), 2);
        assert_eq!(c.scenario.emitters[0].pri_pattern, PriPattern::Staggered(vec![40.0, 90.0]));
        assert_eq!(c.scenario.emitters[1].rf, Interval::new(3000.0, 3010.0));
        assert_eq!(c.scenario.emitters[1].id, 1);
    }

    #[test]
    fn incomplete_emitter_names_the_field() {
        let err = Config::from_str_at("emitter.0.doa = 1, 2\n", "x").unwrap_err();
        assert!(err.to_string().contains("emitter.0."), "{err}");
    }

    #[test]
    fn errors_carry_line_or_key() {
        let err = Config::from_str_at("seed = 1\nnot a pair\n", "f.cfg").unwrap_err();
        assert!(err.to_string().starts_with("f.cfg:2:"), "{err}");
        let err = Config::from_str_at("seed = 1\nseed = 2\n", "f").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let err = Config::from_str_at("model.colour = red\n", "f").unwrap_err();
        assert!(err.to_string().contains("model.colour"), "{err}");
        let err = Config::from_str_at("model.kernel = 4\n", "f").unwrap_err();
        assert!(err.to_string().contains("model.kernel"), "{err}");
        let err = Config::from_str_at("mask.prob = 2\n", "f").unwrap_err();
        assert!(err.to_string().contains("mask.prob"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.lr = 2e-3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
