//! Command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::masking::{spread_summary, MaskFill};
use crate::nn::EmbedMode;
use crate::pdw::{read_pdw, windowize, Snr, Variable, N_VARS};
use crate::pipeline::data::TEST_FILE;
use crate::pipeline::{
    ablation_from_checkpoints, ablation_raw_csv, ablation_table_csv, evaluate, log_jsonl, run_ablation, snr_sweep,
    sweep_csv, train_with, Classifier, Dataset, EvalReport, Manifest,
};
use crate::wvembs::{encode, encode_scalar, fit_affine, PeriodicFn, VarEmbedding};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "pulsesort", version, about = "Per-pulse emitter classification of interleaved PDW streams")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only print errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file (key = value lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the root seed (also reseeds the scenario).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Override the training mask probability.
    #[arg(long)]
    pub mask_prob: Option<f64>,
    /// Override the mask fill distribution (uniform01 or uniform_pm1).
    #[arg(long)]
    pub mask_fill: Option<MaskFill>,
    /// Override the embedding mode (wvembs or lembs).
    #[arg(long)]
    pub mode: Option<EmbedMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training trains and validation/test scenes.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Override the scenario SNR in dB, or `off`.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<Snr>,
    },
    /// Fit the affine maps and the spread distribution on a dataset.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Write the embeddings of every window of a PDW file as CSV.
    Embed {
        #[command(flatten)]
        common: Common,
        /// PDW file (.csv or binary).
        #[arg(long)]
        input: PathBuf,
    },
    /// Train a classifier on the dataset named by train.dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on a labelled stream.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Labelled PDW file; defaults to the checkpoint scenario's test scene.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Regenerate the test scene at this SNR (dB or `off`) instead.
        #[arg(long, conflicts_with = "input", allow_hyphen_values = true)]
        snr: Option<Snr>,
    },
    /// Train and compare lembs, wvembs without and with masking.
    Ablate {
        /// Scenario configuration; repeat for several scenarios.
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated root seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        /// Evaluate existing <dir>/<variant>/seed<k>/checkpoint.wvck files
        /// instead of training (single scenario).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Override the mask probability of the masked variant.
        #[arg(long)]
        mask_prob: Option<f64>,
    },
    /// Evaluate a checkpoint over a list of SNRs.
    Sweep {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated SNRs in dB (or `off`); defaults to scenario.sweep_db.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Vec<Snr>,
    },
    /// Print the embedding of one value.
    Inspect {
        /// Transformed value to embed.
        #[arg(long, allow_hyphen_values = true)]
        value: f64,
        /// Period base.
        #[arg(long, default_value_t = 10)]
        k: u32,
        /// Phase shifts per period.
        #[arg(long, default_value_t = 2)]
        delta: usize,
        /// Embedding width.
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Periodic function (linear_periodic or sinusoidal).
        #[arg(long, default_value = "linear_periodic")]
        f_variant: PeriodicFn,
    },
}

/// Parses `argv` and runs the command, returning the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    init_logging(&cli);
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn header(cli: &Cli, command: &str, config: &Config) {
    if !cli.quiet {
        eprintln!(
            "pulsesort {} {command}: root seed {}, config {}",
            env!("CARGO_PKG_VERSION"),
            config.seed,
            &config.hash()[..16]
        );
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut config = Config::load(&common.config)?;
    if let Some(s) = common.seed {
        let mut text = config.to_kv();
        text = text
            .lines()
            .filter(|l| !l.starts_with("seed =") && !l.starts_with("scenario.seed ="))
            .map(|l| format!("{l}\n"))
            .collect();
        text.push_str(&format!("seed = {s}\n"));
        config = Config::from_str_at(&text, &common.config.display().to_string())?;
    }
    Ok(config)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn dataset_of(config: &Config) -> Result<Dataset> {
    let dir = config
        .train
        .dataset
        .as_ref()
        .ok_or_else(|| Error::config("train.dataset", "no dataset directory configured"))?;
    Dataset::read(dir, config.scenario.classes())
}

fn write_report(dir: &Path, report: &EvalReport, prefix: &str) -> Result<Vec<String>> {
    let metrics = format!("{prefix}metrics.csv");
    let confusion = format!("{prefix}confusion.csv");
    write(&dir.join(&metrics), &report.metrics_csv())?;
    write(&dir.join(&confusion), &report.confusion_csv())?;
    Ok(vec![metrics, confusion])
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { common, snr } => {
            let mut config = load_config(common)?;
            if let Some(s) = snr {
                config.scenario.snr = *s;
            }
            header(cli, "synth", &config);
            let dataset = Dataset::synthesize(&config.scenario)?;
            dataset.write(&common.out)?;
            let files = [crate::pipeline::data::TRAINS_FILE, crate::pipeline::data::VAL_FILE, TEST_FILE];
            Manifest::new("synth", &config, files.iter().map(|s| s.to_string()).collect()).write(&common.out, &config)?;
            println!(
                "wrote {} training, {} validation and {} test pulses to {}",
                dataset.trains.iter().map(Vec::len).sum::<usize>(),
                dataset.val.len(),
                dataset.test.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Fit { common } => {
            let config = load_config(common)?;
            header(cli, "fit", &config);
            let dataset = dataset_of(&config)?;
            let mix = crate::pipeline::augmented_mixture(
                &dataset.trains,
                &config.scenario,
                &config.train,
                crate::seed::derive(config.seed, "train/data/0"),
            )?;
            let windows = windowize(&mix.stream, config.scenario.window_len, config.scenario.window_stride)?;
            let mut fitted = config.clone();
            fitted.embed = fit_affine(&windows, &config.embed)?;
            let spreads = crate::masking::estimate_spreads(&mix.pieces, &fitted.embed)?;
            mkdir(&common.out)?;
            write(&common.out.join("fitted.cfg"), &fitted.to_kv())?;
            let mut csv = String::from("variable,a,b,min_spread,max_spread\n");
            for ((v, lo, hi), var) in spread_summary(&spreads).into_iter().zip(&fitted.embed.vars) {
                csv.push_str(&format!("{},{},{},{lo},{hi}\n", v.name(), var.a, var.b));
            }
            write(&common.out.join("spreads.csv"), &csv)?;
            Manifest::new("fit", &fitted, vec!["fitted.cfg".into(), "spreads.csv".into()]).write(&common.out, &fitted)?;
            print!("{csv}");
            Ok(())
        }
        Command::Embed { common, input } => {
            let config = load_config(common)?;
            header(cli, "embed", &config);
            let stream = read_pdw(input)?;
            let windows = windowize(&stream, config.scenario.window_len, config.scenario.window_stride)?;
            let dim = config.embed.token_dim();
            let mut csv = String::from("window,l");
            for v in Variable::ALL {
                for d in 1..=dim {
                    csv.push_str(&format!(",{}_{d}", v.name()));
                }
            }
            csv.push('\n');
            for (i, w) in windows.iter().enumerate() {
                let e = encode(w, &config.embed)?;
                for l in 0..e.len {
                    csv.push_str(&format!("{i},{l}"));
                    for v in e.token(l) {
                        csv.push_str(&format!(",{v}"));
                    }
                    csv.push('\n');
                }
            }
            mkdir(&common.out)?;
            write(&common.out.join("embeddings.csv"), &csv)?;
            Manifest::new("embed", &config, vec!["embeddings.csv".into()]).write(&common.out, &config)?;
            println!("embedded {} windows of {} tokens ({} features each)", windows.len(), config.scenario.window_len, N_VARS * dim);
            Ok(())
        }
        Command::Train { common, overrides } => {
            let mut config = load_config(common)?;
            if let Some(p) = overrides.mask_prob {
                config.mask.mask_prob = p;
            }
            if let Some(f) = overrides.mask_fill {
                config.mask.fill = f;
            }
            if let Some(m) = overrides.mode {
                config.model.mode = m;
            }
            config.validate()?;
            header(cli, "train", &config);
            let dataset = dataset_of(&config)?;
            let quiet = cli.quiet;
            let outcome = train_with(&config, &dataset, |r| {
                if !quiet {
                    eprintln!("epoch {:>3}  loss {:.4}  val macro-F1 {:.4}", r.epoch, r.loss, r.val_f1.unwrap_or(f64::NAN));
                }
            })?;
            mkdir(&common.out)?;
            outcome.best.save(&common.out.join("checkpoint.wvck"))?;
            write(&common.out.join("train_log.jsonl"), &log_jsonl(&outcome.log))?;
            Manifest::new("train", &config, vec!["checkpoint.wvck".into(), "train_log.jsonl".into()]).write(&common.out, &config)?;
            println!(
                "best val macro-F1 {:.4} at epoch {}; checkpoint in {}",
                outcome.val_f1[outcome.best_epoch],
                outcome.best_epoch,
                common.out.display()
            );
            Ok(())
        }
        Command::Eval { checkpoint, out, input, snr } => {
            let clf = Classifier::load(checkpoint)?;
            header(cli, "eval", &clf.config);
            let (stream, snr_label) = match (input, snr) {
                (Some(p), _) => (read_pdw(p)?, format!("file:{}", p.display())),
                (None, s) => {
                    let s = s.unwrap_or(clf.config.scenario.snr);
                    (crate::pipeline::test_scene(&clf.config.scenario, s)?, s.to_string())
                }
            };
            let mut report = evaluate(&clf, &stream)?;
            report.meta.snr = snr_label;
            mkdir(out)?;
            let files = write_report(out, &report, "")?;
            Manifest::new("eval", &clf.config, files).write(out, &clf.config)?;
            println!(
                "accuracy {:.4}  macro precision {:.4}  recall {:.4}  F1 {:.4}",
                report.accuracy, report.macro_precision, report.macro_recall, report.macro_f1
            );
            Ok(())
        }
        Command::Ablate {
            config,
            out,
            seeds,
            checkpoints,
            mask_prob,
        } => {
            mkdir(out)?;
            let mut runs = Vec::new();
            let mut first = None;
            for path in config {
                let mut base = Config::load(path)?;
                if let Some(p) = mask_prob {
                    base.mask.mask_prob = *p;
                    base.validate()?;
                }
                header(cli, "ablate", &base);
                let name = path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
                let got = match checkpoints {
                    Some(dir) => ablation_from_checkpoints(&name, dir, seeds)?,
                    None => run_ablation(&name, &base, seeds, |run, outcome| {
                        let dir = out.join(&run.scenario).join(run.variant.name()).join(format!("seed{}", run.seed));
                        let saved = mkdir(&dir)
                            .and_then(|_| outcome.best.save(&dir.join("checkpoint.wvck")))
                            .and_then(|_| write(&dir.join("train_log.jsonl"), &log_jsonl(&outcome.log)));
                        if let Err(e) = saved {
                            log::warn!("could not save run artifacts: {e}");
                        }
                        if !cli.quiet {
                            eprintln!(
                                "{} {:<14} seed {}: macro-F1 {:.4}",
                                run.scenario,
                                run.variant.name(),
                                run.seed,
                                run.report.macro_f1
                            );
                        }
                    })?,
                };
                runs.extend(got);
                first.get_or_insert(base);
            }
            let table = ablation_table_csv(&runs);
            write(&out.join("ablation.csv"), &table)?;
            write(&out.join("ablation_raw.csv"), &ablation_raw_csv(&runs))?;
            let base = first.expect("clap requires a config");
            Manifest::new("ablate", &base, vec!["ablation.csv".into(), "ablation_raw.csv".into()]).write(out, &base)?;
            print!("{table}");
            Ok(())
        }
        Command::Sweep { checkpoint, out, snr } => {
            let clf = Classifier::load(checkpoint)?;
            header(cli, "sweep", &clf.config);
            let snrs: Vec<Snr> = if snr.is_empty() {
                clf.config.scenario.sweep_db.iter().map(|&d| Snr::Db(d)).collect()
            } else {
                snr.clone()
            };
            let points = snr_sweep(&clf, &clf.config.scenario, &snrs)?;
            mkdir(out)?;
            let csv = sweep_csv(&points);
            write(&out.join("sweep.csv"), &csv)?;
            let mut files = vec!["sweep.csv".to_string()];
            for p in &points {
                files.extend(write_report(out, &p.report, &format!("snr_{}_", p.snr))?);
            }
            Manifest::new("sweep", &clf.config, files).write(out, &clf.config)?;
            print!("{csv}");
            Ok(())
        }
        Command::Inspect {
            value,
            k,
            delta,
            dim,
            f_variant,
        } => {
            let var = VarEmbedding::new(*dim, *delta, *k);
            var.validate("inspect")?;
            let mut out = vec![0.0; *dim];
            encode_scalar(*value, &var, *f_variant, &mut out);
            let parts: Vec<String> = out.iter().map(|v| format!("{v}")).collect();
            println!("{}", parts.join(" "));
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn parser_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        let cmd = Cli::command();
        let mut count = 0;
        for sub in cmd.get_subcommands() {
            assert!(sub.get_about().is_some(), "subcommand {} lacks help", sub.get_name());
            let mut help = Vec::new();
            sub.clone().write_long_help(&mut help).unwrap();
            let help = String::from_utf8(help).unwrap();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    count += 1;
                    assert!(arg.get_help().is_some() || arg.get_long_help().is_some(), "--{long} of {} undocumented", sub.get_name());
                    assert!(help.contains(&format!("--{long}")), "--{long} missing from {} help", sub.get_name());
                }
            }
        }
        assert!(count > 20);
    }

    #[test]
    fn interface_flags_exist() {
        let cmd = Cli::command();
        let longs: Vec<String> = cmd
            .get_subcommands()
            .flat_map(|s| s.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect::<Vec<_>>())
            .chain(cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)))
            .collect();
        for flag in ["config", "out", "seed", "snr", "mask-prob", "mask-fill", "mode", "quiet", "verbose"] {
            assert!(longs.iter().any(|l| l == flag), "--{flag} missing");
        }
    }

    #[test]
    fn usage_errors_exit_1_and_help_exits_0() {
        assert_eq!(run(["pulsesort", "train", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["pulsesort"]), EXIT_USAGE);
        assert_eq!(run(["pulsesort", "--help"]), EXIT_OK);
        assert_eq!(run(["pulsesort", "inspect", "--value", "2.5", "--k", "10", "--delta", "2", "--dim", "8"]), EXIT_OK);
    }
}
