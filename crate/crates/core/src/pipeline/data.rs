//! Datasets on disk and the per-epoch augmented training mixtures.

use std::path::Path;

use rand::Rng as _;
use serde::Serialize;

use crate::config::{Config, TrainConfig};
use crate::error::{Error, Result};
use crate::pdw::synth::{affine_jitter, generate_scene, generate_scene_trains, intercept, sort_stream};
use crate::pdw::{apply_nonideal, interleave, read_pdw, write_pdw, NonIdeal, PdwRecord, ScenarioConfig, Snr, Window};
use crate::seed;

pub const TRAINS_FILE: &str = "trains.bin";
pub const VAL_FILE: &str = "val.bin";
pub const TEST_FILE: &str = "test.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.cfg";

/// Clean single-emitter trains for augmentation plus fixed validation and
/// test scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One toa-sorted train per emitter, in label order.
    pub trains: Vec<Vec<PdwRecord>>,
    pub val: Vec<PdwRecord>,
    pub test: Vec<PdwRecord>,
}

/// Seeds of the three splits; distinct tags keep them disjoint.
pub fn split_seed(scenario: &ScenarioConfig, split: &str) -> u64 {
    seed::derive(scenario.seed, &format!("split/{split}"))
}

/// The test scene of a scenario at a given SNR. The clean trains and drop
/// pattern depend only on the seed; the SNR only scales the noise.
pub fn test_scene(scenario: &ScenarioConfig, snr: Snr) -> Result<Vec<PdwRecord>> {
    generate_scene(&scenario.emitters, scenario.test_pulses, &scenario.effects_at(snr), split_seed(scenario, "test"))
}

impl Dataset {
    pub fn synthesize(scenario: &ScenarioConfig) -> Result<Self> {
        scenario.validate()?;
        let trains = generate_scene_trains(&scenario.emitters, scenario.train_pulses, split_seed(scenario, "train"))?;
        let val = generate_scene(&scenario.emitters, scenario.val_pulses, &scenario.effects(), split_seed(scenario, "val"))?;
        let test = test_scene(scenario, scenario.snr)?;
        Ok(Dataset { trains, val, test })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let trains: Vec<PdwRecord> = self.trains.iter().flatten().copied().collect();
        write_pdw(&dir.join(TRAINS_FILE), &trains)?;
        write_pdw(&dir.join(VAL_FILE), &self.val)?;
        write_pdw(&dir.join(TEST_FILE), &self.test)
    }

    /// Reads a directory written by [`Dataset::write`]; trains are split back
    /// by label.
    pub fn read(dir: &Path, classes: usize) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Missing {
                what: "dataset directory (train.dataset)",
                name: dir.display().to_string(),
            });
        }
        let flat = read_pdw(&dir.join(TRAINS_FILE))?;
        let mut trains = vec![Vec::new(); classes];
        for p in flat {
            let slot = trains.get_mut(usize::from(p.label)).ok_or_else(|| {
                Error::Precondition(format!("class-count mismatch: dataset label {} but {classes} classes", p.label))
            })?;
            slot.push(p);
        }
        Ok(Dataset {
            trains,
            val: read_pdw(&dir.join(VAL_FILE))?,
            test: read_pdw(&dir.join(TEST_FILE))?,
        })
    }
}

/// One epoch of training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub stream: Vec<PdwRecord>,
    /// The intercepted single-emitter pieces before drops and noise.
    pub pieces: Vec<Vec<PdwRecord>>,
}

/// Builds a stream of consecutive segments until `train.pulses_per_epoch`
/// pulses exist. In a segment every emitter contributes one random
/// interception of its clean train at a random offset; the merged segment
/// gets its own drop rate and SNR.
pub fn augmented_mixture(trains: &[Vec<PdwRecord>], scenario: &ScenarioConfig, train: &TrainConfig, rng_seed: u64) -> Result<Mixture> {
    let aug = &train.augment;
    let mut rng = seed::rng(rng_seed);
    let mut stream = Vec::with_capacity(train.pulses_per_epoch + 1024);
    let mut pieces = Vec::new();
    let mut t = 0.0;
    let mut segment = 0u64;
    let nonempty = trains.iter().any(|tr| tr.len() > 1);
    if !nonempty {
        return Err(Error::Precondition("augmentation needs trains with at least two pulses".into()));
    }
    while stream.len() < train.pulses_per_epoch {
        let spans: Vec<f64> = trains.iter().map(|_| rng.gen_range(aug.span_us.0..=aug.span_us.1)).collect();
        let seg_len = spans.iter().copied().fold(0.0, f64::max);
        let mut seg_pieces = Vec::with_capacity(trains.len());
        for ((tr, &span), spec) in trains.iter().zip(&spans).zip(&scenario.emitters) {
            let offset = t + rng.gen_range(0.0..=seg_len - span);
            let mut piece = intercept(tr, span, offset, &mut rng);
            affine_jitter(&mut piece, spec, aug.affine_shift, aug.affine_scale, &mut rng);
            seg_pieces.push(piece);
        }
        let merged = interleave(&seg_pieces)?;
        let effects = NonIdeal {
            drop_prob: rng.gen_range(0.0..=aug.max_drop),
            snr: Snr::Db(rng.gen_range(aug.snr_db.0..=aug.snr_db.1)),
            noise: aug.noise,
        };
        let noisy = apply_nonideal(&merged, &effects, seed::derive(rng_seed, &format!("segment/{segment}")))?;
        stream.extend(noisy);
        pieces.extend(seg_pieces.into_iter().filter(|p| !p.is_empty()));
        t += seg_len;
        segment += 1;
    }
    sort_stream(&mut stream);
    Ok(Mixture { stream, pieces })
}

/// Windows of length `len` covering every pulse exactly once: stride-`len`
/// tiles plus, when needed, a final window aligned to the end of the stream.
/// The second element is the offset inside the window of the first pulse not
/// covered by an earlier window.
pub fn tiling_windows(stream: &[PdwRecord], len: usize) -> Result<Vec<(Window, usize)>> {
    if stream.len() < len {
        return Err(Error::Precondition(format!(
            "stream of {} pulses is shorter than the window length {len}; use a smaller window length",
            stream.len()
        )));
    }
    let mut out: Vec<(Window, usize)> = stream.chunks_exact(len).map(|c| (Window::from_slice(c), 0)).collect();
    let covered = out.len() * len;
    if covered < stream.len() {
        let start = stream.len() - len;
        out.push((Window::from_slice(&stream[start..]), covered - start));
    }
    Ok(out)
}

/// Provenance written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &Config, files: Vec<String>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config.hash(),
            root_seed: config.seed,
            files,
        }
    }

    /// Writes `manifest.json` and the canonical `config.cfg` into `dir`.
    pub fn write(&self, dir: &Path, config: &Config) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, config.to_kv()).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdw::synth::is_toa_sorted;

    fn small() -> Config {
        let mut c = Config::default();
        c.scenario.train_pulses = 3000;
        c.scenario.val_pulses = 400;
        c.scenario.test_pulses = 500;
        c.train.pulses_per_epoch = 1500;
        c
    }

    #[test]
    fn synthesis_is_deterministic_and_splits_differ() {
        let c = small();
        let a = Dataset::synthesize(&c.scenario).unwrap();
        assert_eq!(a, Dataset::synthesize(&c.scenario).unwrap());
        assert_eq!(a.trains.len(), 3);
        assert!(a.trains.iter().enumerate().all(|(i, t)| t.iter().all(|p| p.label as usize == i)));
        assert_ne!(a.val[..10], a.test[..10]);
    }

    #[test]
    fn dataset_round_trip_on_disk() {
        let c = small();
        let d = Dataset::synthesize(&c.scenario).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.write(dir.path()).unwrap();
        assert_eq!(Dataset::read(dir.path(), 3).unwrap(), d);
        assert!(matches!(Dataset::read(&dir.path().join("nope"), 3), Err(Error::Missing { .. })));
    }

    #[test]
    fn mixture_is_sorted_seeded_and_long_enough() {
        let c = small();
        let d = Dataset::synthesize(&c.scenario).unwrap();
        let m = augmented_mixture(&d.trains, &c.scenario, &c.train, 5).unwrap();
        assert!(m.stream.len() >= c.train.pulses_per_epoch);
        assert!(is_toa_sorted(&m.stream));
        assert_eq!(m, augmented_mixture(&d.trains, &c.scenario, &c.train, 5).unwrap());
        assert_ne!(m.stream, augmented_mixture(&d.trains, &c.scenario, &c.train, 6).unwrap().stream);
        assert!(m.pieces.iter().all(|p| p.iter().all(|q| q.label == p[0].label)));
    }

    #[test]
    fn tiling_covers_every_pulse_once() {
        let c = small();
        let d = Dataset::synthesize(&c.scenario).unwrap();
        let stream = &d.test[..300];
        let tiles = tiling_windows(stream, 128).unwrap();
        let labels: Vec<u16> = tiles.iter().flat_map(|(w, skip)| w.labels[*skip..].to_vec()).collect();
        assert_eq!(labels, stream.iter().map(|p| p.label).collect::<Vec<_>>());
        assert!(tiling_windows(&stream[..10], 128).unwrap_err().to_string().contains("smaller window"));
    }
}
