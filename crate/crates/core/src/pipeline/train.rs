use rand::seq::SliceRandom;
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::masking::{estimate_spreads, SpreadDistribution};
use crate::nn::{AdamW, AdamWConfig, EmbedMode};
use crate::pdw::{windowize, Window};
use crate::seed;
use crate::wvembs::fit_affine;

use super::classifier::{Classifier, MaskPlan};
use super::data::{augmented_mixture, Dataset};
use super::eval::evaluate;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    /// Set on the last step of each epoch.
    pub val_f1: Option<f64>,
}

pub fn log_jsonl(log: &[LogRecord]) -> String {
    log.iter()
        .map(|r| serde_json::to_string(r).expect("log record serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation macro-F1.
    pub best: Classifier,
    pub best_epoch: usize,
    pub log: Vec<LogRecord>,
    /// Validation macro-F1 after every completed epoch.
    pub val_f1: Vec<f64>,
    pub spreads: Option<SpreadDistribution>,
}

/// Per-epoch random streams. Data, shuffling, initialization and dropout
/// come from the root seed; the mask stream has its own root, so runs that
/// differ only in masking see identical data.
struct Seeds {
    root: u64,
    mask: u64,
}

impl Seeds {
    fn data(&self, epoch: usize) -> u64 {
        seed::derive(self.root, &format!("train/data/{epoch}"))
    }

    fn shuffle(&self, epoch: usize) -> u64 {
        seed::derive(self.root, &format!("train/shuffle/{epoch}"))
    }

    fn mask(&self, epoch: usize, window: usize) -> u64 {
        seed::derive(self.mask, &format!("{epoch}/{window}"))
    }
}

/// Epoch-0 mixture used to fit the affine maps and the spread distribution.
fn fit_embedding(config: &mut Config, dataset: &Dataset, seeds: &Seeds) -> Result<Option<SpreadDistribution>> {
    if config.model.mode == EmbedMode::Lembs {
        return Ok(None);
    }
    let mix = augmented_mixture(&dataset.trains, &config.scenario, &config.train, seeds.data(0))?;
    let windows = windowize(&mix.stream, config.scenario.window_len, config.scenario.window_stride)?;
    config.embed = fit_affine(&windows, &config.embed)?;
    Ok(Some(estimate_spreads(&mix.pieces, &config.embed)?))
}

/// Trains one classifier. The embedding is fitted on the first epoch's
/// mixture; every epoch regenerates the mixture, shuffles its windows and
/// steps AdamW once per batch. Stops after `train.patience` epochs without a
/// validation improvement.
pub fn train(config: &Config, dataset: &Dataset) -> Result<TrainOutcome> {
    train_with(config, dataset, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(config: &Config, dataset: &Dataset, mut on_epoch: impl FnMut(&LogRecord)) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.trains.len() != config.scenario.classes() {
        return Err(Error::Precondition(format!(
            "class-count mismatch: dataset has {} trains, scenario {} emitters",
            dataset.trains.len(),
            config.scenario.classes()
        )));
    }
    let seeds = Seeds {
        root: config.seed,
        mask: config.mask.seed,
    };
    let mut config = config.clone();
    let spreads = fit_embedding(&mut config, dataset, &seeds)?;
    let mut clf = Classifier::new(config.clone(), seed::derive(seeds.root, "model/init"))?;
    let mut opt = AdamW::new(
        &clf.model.params,
        AdamWConfig {
            lr: config.train.lr,
            weight_decay: config.train.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let mut dropout_rng = seed::derived_rng(seeds.root, "train/dropout");
    let masking = config.model.mode == EmbedMode::Wvembs && config.mask.mask_prob > 0.0;
    let (len, stride, batch) = (config.scenario.window_len, config.scenario.window_stride, config.train.batch_size);

    let mut log = Vec::new();
    let mut val_history = Vec::new();
    let mut best: Option<(f64, usize, Classifier)> = None;
    let mut last_norm = f64::NAN;
    for epoch in 0..config.train.epochs {
        let mix = augmented_mixture(&dataset.trains, &config.scenario, &config.train, seeds.data(epoch))?;
        let windows: Vec<Window> = windowize(&mix.stream, len, stride)?;
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut seed::rng(seeds.shuffle(epoch)));
        for idx in order.chunks(batch) {
            let refs: Vec<&Window> = idx.iter().map(|&i| &windows[i]).collect();
            let plan = match (&spreads, masking) {
                (Some(s), true) => Some(MaskPlan {
                    spreads: s,
                    seeds: idx.iter().map(|&i| seeds.mask(epoch, i)).collect(),
                }),
                _ => None,
            };
            let input = clf.batch_input(&refs, plan.as_ref())?;
            let labels: Vec<u16> = refs.iter().flat_map(|w| w.labels.iter().copied()).collect();
            let step = log.len() + 1;
            let stats = clf.model.train_step(&input, &labels, &mut opt, &mut dropout_rng).map_err(|e| match e {
                Error::NumericDomain(detail) => Error::Divergence {
                    step,
                    detail: format!("{detail}; gradient norm at the previous step was {last_norm}"),
                },
                other => other,
            })?;
            last_norm = stats.grad_norm;
            log.push(LogRecord {
                step,
                epoch,
                loss: stats.loss,
                lr: config.train.lr,
                grad_norm: stats.grad_norm,
                val_f1: None,
            });
        }
        let report = evaluate(&clf, &dataset.val)?;
        let f1 = report.macro_f1;
        val_history.push(f1);
        if let Some(last) = log.last_mut() {
            last.val_f1 = Some(f1);
            on_epoch(last);
        }
        match &best {
            Some((b, _, _)) if f1 <= *b => {}
            _ => best = Some((f1, epoch, clf.clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        log::info!("epoch {epoch}: val macro-F1 {f1:.4} (best epoch {best_epoch})");
        if epoch - best_epoch >= config.train.patience {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        best,
        best_epoch,
        log,
        val_f1: val_history,
        spreads,
    })
}
