//! Pulse-descriptor-word streams: synthesis, interleaving, receiver effects,
//! windowing and file formats.

pub mod io;
pub mod record;
pub mod synth;
pub mod window;

pub use io::{read_pdw, write_pdw};
pub use record::{EmitterSpec, Interval, PdwRecord, PriPattern, Variable, N_VARS};
pub use synth::{apply_nonideal, generate_train, interleave, AugmentConfig, NoiseScales, NonIdeal, Snr};
pub use window::{windowize, Window};

use crate::error::{Error, Result};

/// Emitters, receiver effects and windowing of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub emitters: Vec<EmitterSpec>,
    pub drop_prob: f64,
    pub snr: Snr,
    /// SNR points for sweeps, dB.
    pub sweep_db: Vec<f64>,
    pub noise_scales: NoiseScales,
    pub window_len: usize,
    pub window_stride: usize,
    /// Pulses in the clean single-emitter training trains (all emitters).
    pub train_pulses: usize,
    pub val_pulses: usize,
    pub test_pulses: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(emitters: Vec<EmitterSpec>) -> Self {
        ScenarioConfig {
            emitters,
            drop_prob: 0.05,
            snr: Snr::Db(10.0),
            sweep_db: vec![-20.0, -10.0, 0.0, 10.0, 20.0],
            noise_scales: NoiseScales::default(),
            window_len: 128,
            window_stride: 64,
            train_pulses: 20_000,
            val_pulses: 2_000,
            test_pulses: 5_000,
            seed: 1,
        }
    }

    pub fn classes(&self) -> usize {
        self.emitters.len()
    }

    pub fn effects(&self) -> NonIdeal {
        self.effects_at(self.snr)
    }

    pub fn effects_at(&self, snr: Snr) -> NonIdeal {
        NonIdeal {
            drop_prob: self.drop_prob,
            snr,
            noise: self.noise_scales,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.emitters.is_empty() {
            return Err(Error::config("scenario.emitters", "at least one emitter is required"));
        }
        for (i, e) in self.emitters.iter().enumerate() {
            e.validate().map_err(|err| match err {
                Error::Config { field, reason } => Error::config(format!("emitter.{i}.{field}"), reason),
                other => other,
            })?;
            if usize::from(e.id) != i {
                return Err(Error::config(format!("emitter.{i}.id"), "emitter ids must be 0..C in order"));
            }
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::config("scenario.drop_prob", "must lie in [0, 1)"));
        }
        if self.window_len == 0 {
            return Err(Error::config("scenario.window_len", "must be positive"));
        }
        if self.window_stride == 0 || self.window_stride > self.window_len {
            return Err(Error::config("scenario.window_stride", "must lie in 1..=window_len"));
        }
        Ok(())
    }
}
