use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::masking::{apply_mask, SpreadDistribution};
use crate::nn::{Checkpoint, EmbedMode, Model, Tensor};
use crate::pdw::{PdwRecord, Window, N_VARS};
use crate::wvembs::encode;

use super::data::tiling_windows;

/// Windows scored per forward pass at inference.
const INFER_BATCH: usize = 32;

/// How a training batch is masked.
pub struct MaskPlan<'a> {
    pub spreads: &'a SpreadDistribution,
    /// One seed per window.
    pub seeds: Vec<u64>,
}

/// A model plus the configuration (with the fitted affine maps) needed to
/// turn PDW windows into its inputs.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub config: Config,
    pub model: Model,
}

impl Classifier {
    pub fn new(config: Config, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let dim = token_dim(&config);
        let model = Model::new(config.model.clone(), N_VARS, dim, init_seed)?;
        Ok(Classifier { config, model })
    }

    pub fn classes(&self) -> usize {
        self.config.model.classes
    }

    /// Input tensor for a batch of equal-length windows: `[B, L, N, D]`
    /// embeddings in wvembs mode, raw `[B, L, N]` values in lembs mode.
    /// Masking is applied only when a plan is given.
    pub fn batch_input(&self, windows: &[&Window], mask: Option<&MaskPlan>) -> Result<Tensor> {
        let len = windows.first().map(|w| w.len()).ok_or_else(|| Error::Precondition("empty batch".into()))?;
        if windows.iter().any(|w| w.len() != len) {
            return Err(Error::shape("batch", "windows of different lengths"));
        }
        match self.config.model.mode {
            EmbedMode::Lembs => {
                let data = windows.iter().flat_map(|w| w.values.iter().flatten().copied()).collect();
                Tensor::new(vec![windows.len(), len, N_VARS], data)
            }
            EmbedMode::Wvembs => {
                let dim = self.config.embed.token_dim();
                let mut data = Vec::with_capacity(windows.len() * len * N_VARS * dim);
                for (i, w) in windows.iter().enumerate() {
                    let mut e = encode(w, &self.config.embed)?;
                    if let Some(plan) = mask {
                        e = apply_mask(&e, plan.spreads, &self.config.mask, plan.seeds[i])?;
                    }
                    data.extend_from_slice(&e.values);
                }
                Tensor::new(vec![windows.len(), len, N_VARS, dim], data)
            }
        }
    }

    /// Class probabilities `[B·L, C]` in inference mode.
    pub fn predict_proba(&self, windows: &[&Window]) -> Result<Vec<f64>> {
        let input = self.batch_input(windows, None)?;
        self.model.predict_proba(&input)
    }

    /// Arg-max class of every pulse of a stream; each pulse is scored once.
    pub fn predict_stream(&self, stream: &[PdwRecord]) -> Result<Vec<u16>> {
        let len = self.config.scenario.window_len;
        let tiles = tiling_windows(stream, len)?;
        let classes = self.classes();
        let mut out = Vec::with_capacity(stream.len());
        for chunk in tiles.chunks(INFER_BATCH) {
            let windows: Vec<&Window> = chunk.iter().map(|(w, _)| w).collect();
            let probs = self.predict_proba(&windows)?;
            for (i, (_, skip)) in chunk.iter().enumerate() {
                for l in *skip..len {
                    let row = &probs[(i * len + l) * classes..][..classes];
                    out.push(argmax(row) as u16);
                }
            }
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_text: self.config.to_kv(),
            tensors: self.model.named_tensors(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = Config::from_str_at(&ck.config_text, "checkpoint config")?;
        let mut c = Classifier::new(config, 0)?;
        c.model.load_named(&ck.tensors)?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing {
                what: "checkpoint",
                name: path.display().to_string(),
            });
        }
        Classifier::from_checkpoint(&Checkpoint::read(path)?)
    }
}

pub fn token_dim(config: &Config) -> usize {
    match config.model.mode {
        EmbedMode::Wvembs => config.embed.token_dim(),
        EmbedMode::Lembs => config.model.lembs_dim,
    }
}

/// First index of the largest value.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
