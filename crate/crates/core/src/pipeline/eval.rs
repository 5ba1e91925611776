use std::collections::BTreeMap;
use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::masking::MaskConfig;
use crate::nn::EmbedMode;
use crate::pdw::{PdwRecord, ScenarioConfig, Snr};

use super::classifier::Classifier;
use super::data::{test_scene, Dataset};
use super::metrics::{EvalReport, ReportMeta};
use super::train::{train, TrainOutcome};

/// Scores every pulse of a labelled stream: no masking, no dropout, running
/// batch-norm statistics.
pub fn evaluate(clf: &Classifier, stream: &[PdwRecord]) -> Result<EvalReport> {
    let classes = clf.classes();
    if let Some(p) = stream.iter().find(|p| usize::from(p.label) >= classes) {
        return Err(Error::Precondition(format!(
            "class-count mismatch: stream has label {} but the checkpoint has {classes} classes",
            p.label
        )));
    }
    let predicted = clf.predict_stream(stream)?;
    let truth: Vec<u16> = stream.iter().map(|p| p.label).collect();
    let mut report = EvalReport::from_predictions(&truth, &predicted, classes)?;
    report.meta = ReportMeta {
        config_hash: clf.config.hash(),
        seed: clf.config.seed,
        snr: clf.config.scenario.snr.to_string(),
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr: Snr,
    pub report: EvalReport,
}

/// Evaluates on the scenario's test scene regenerated at every SNR.
pub fn snr_sweep(clf: &Classifier, scenario: &ScenarioConfig, snrs: &[Snr]) -> Result<Vec<SweepPoint>> {
    if snrs.is_empty() {
        return Err(Error::Precondition("the SNR list is empty".into()));
    }
    snrs.iter()
        .map(|&snr| {
            let stream = test_scene(scenario, snr)?;
            let mut report = evaluate(clf, &stream)?;
            report.meta.snr = snr.to_string();
            Ok(SweepPoint { snr, report })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "snr_db,accuracy,macro_f1";

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.snr, p.report.accuracy, p.report.macro_f1));
    }
    out
}

/// The three compared model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Lembs,
    WvembsNoMask,
    WvembsMask,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lembs, Variant::WvembsNoMask, Variant::WvembsMask];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lembs => "lembs",
            Variant::WvembsNoMask => "wvembs_nomask",
            Variant::WvembsMask => "wvembs_mask",
        }
    }

    /// The variant's configuration: the base with mode and mask swapped.
    /// The masked variant keeps the base mask probability (or the default
    /// when the base disables masking).
    pub fn apply(self, base: &Config) -> Config {
        let mut c = base.clone();
        match self {
            Variant::Lembs => {
                c.model.mode = EmbedMode::Lembs;
                c.mask.mask_prob = 0.0;
            }
            Variant::WvembsNoMask => {
                c.model.mode = EmbedMode::Wvembs;
                c.mask.mask_prob = 0.0;
            }
            Variant::WvembsMask => {
                c.model.mode = EmbedMode::Wvembs;
                if c.mask.mask_prob == 0.0 {
                    c.mask.mask_prob = MaskConfig::default().mask_prob;
                }
            }
        }
        c
    }
}

/// One trained-and-evaluated run of the comparison.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub scenario: String,
    pub variant: Variant,
    pub seed: u64,
    pub report: EvalReport,
    pub val_f1: Vec<f64>,
}

/// Trains and tests every variant for every seed on one scenario. Seeds
/// replace the root seed, so data and initialization change with the seed
/// while variants of one seed share them.
pub fn run_ablation(name: &str, base: &Config, seeds: &[u64], mut on_run: impl FnMut(&AblationRun, &TrainOutcome)) -> Result<Vec<AblationRun>> {
    let mut runs = Vec::new();
    for &s in seeds {
        let mut seeded = base.clone();
        seeded.seed = s;
        seeded.scenario.seed = s;
        seeded.mask.seed = crate::seed::derive(s, "mask");
        let dataset = Dataset::synthesize(&seeded.scenario)?;
        for variant in Variant::ALL {
            let config = variant.apply(&seeded);
            let outcome = train(&config, &dataset)?;
            let report = evaluate(&outcome.best, &dataset.test)?;
            let run = AblationRun {
                scenario: name.to_string(),
                variant,
                seed: s,
                report,
                val_f1: outcome.val_f1.clone(),
            };
            on_run(&run, &outcome);
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Loads `<dir>/<variant>/seed<k>/checkpoint.wvck` for every variant and
/// seed and evaluates each on its own test scene.
pub fn ablation_from_checkpoints(name: &str, dir: &Path, seeds: &[u64]) -> Result<Vec<AblationRun>> {
    let mut runs = Vec::new();
    for &s in seeds {
        for variant in Variant::ALL {
            let path = dir.join(variant.name()).join(format!("seed{s}")).join("checkpoint.wvck");
            let clf = Classifier::load(&path)?;
            let stream = test_scene(&clf.config.scenario, clf.config.scenario.snr)?;
            runs.push(AblationRun {
                scenario: name.to_string(),
                variant,
                seed: s,
                report: evaluate(&clf, &stream)?,
                val_f1: Vec::new(),
            });
        }
    }
    Ok(runs)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Population variance of the last `k` values (all values when fewer).
pub fn tail_variance(values: &[f64], k: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(k)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    tail.iter().map(|v| (v - m).powi(2)).sum::<f64>() / tail.len() as f64
}

/// Median macro precision, recall and F1 over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `cells[(scenario, variant)]`.
pub fn summarize(runs: &[AblationRun]) -> BTreeMap<(String, Variant), Cell> {
    let mut groups: BTreeMap<(String, Variant), Vec<&AblationRun>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.scenario.clone(), r.variant)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| {
            let pick = |f: fn(&EvalReport) -> f64| median(&rs.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
            let cell = Cell {
                precision: pick(|r| r.macro_precision),
                recall: pick(|r| r.macro_recall),
                f1: pick(|r| r.macro_f1),
            };
            (k, cell)
        })
        .collect()
}

/// One row per scenario and metric, one column per variant.
pub fn ablation_table_csv(runs: &[AblationRun]) -> String {
    let cells = summarize(runs);
    let mut scenarios: Vec<&String> = cells.keys().map(|(s, _)| s).collect();
    scenarios.dedup();
    let mut out = String::from("scenario,metric");
    for v in Variant::ALL {
        out.push_str(&format!(",{}", v.name()));
    }
    out.push('\n');
    for s in scenarios {
        for (metric, get) in [
            ("precision", (|c: &Cell| c.precision) as fn(&Cell) -> f64),
            ("recall", |c: &Cell| c.recall),
            ("f1", |c: &Cell| c.f1),
        ] {
            out.push_str(&format!("{s},{metric}"));
            for v in Variant::ALL {
                match cells.get(&(s.clone(), v)) {
                    Some(c) => out.push_str(&format!(",{:.5}", get(c))),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn ablation_raw_csv(runs: &[AblationRun]) -> String {
    let mut out = String::from("scenario,variant,seed,precision,recall,f1,accuracy\n");
    for r in runs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scenario,
            r.variant.name(),
            r.seed,
            r.report.macro_precision,
            r.report.macro_recall,
            r.report.macro_f1,
            r.report.accuracy
        ));
    }
    out
}
