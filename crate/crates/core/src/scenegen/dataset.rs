//! Dataset assembly: seeded scene generation, overlap filtering, and
//! on-disk layout (WAV clips, JSONL annotations, JSON manifest).

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegen::{
    default_registry, reject_overlap, synthesize_scene, AudioClip, EventAnnotation, Pool,
    SceneSpec, DEFAULT_BACKGROUND_LEVEL_DB, DEFAULT_MAX_POLYPHONY, DEFAULT_SNR_RANGE_DB,
};
use crate::wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Everything that determines dataset content. The output directory is
/// deliberately not part of this, so manifests from different locations
/// compare equal when the content matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub clip_duration_s: f64,
    pub sample_rate: u32,
    pub snr_range_db: (f64, f64),
    pub background_level_db: f64,
    /// Inclusive bounds on foreground events per clip.
    pub events_range: (usize, usize),
    pub max_polyphony: usize,
    pub split_sizes: SplitSizes,
    pub seed: u64,
}

impl DatasetConfig {
    /// Small-and-fast scale: 2 s clips at 8 kHz, 400/50/50 splits.
    pub fn desk(seed: u64) -> Self {
        DatasetConfig {
            clip_duration_s: 2.0,
            sample_rate: 8000,
            snr_range_db: DEFAULT_SNR_RANGE_DB,
            background_level_db: DEFAULT_BACKGROUND_LEVEL_DB,
            events_range: (1, 3),
            max_polyphony: DEFAULT_MAX_POLYPHONY,
            split_sizes: SplitSizes { train: 400, val: 50, test: 50 },
            seed,
        }
    }

    /// Reference scale: 10 s clips at 32 kHz, 4000/500/500 splits.
    pub fn full(seed: u64) -> Self {
        DatasetConfig {
            clip_duration_s: 10.0,
            sample_rate: 32000,
            snr_range_db: DEFAULT_SNR_RANGE_DB,
            background_level_db: DEFAULT_BACKGROUND_LEVEL_DB,
            events_range: (1, 3),
            max_polyphony: DEFAULT_MAX_POLYPHONY,
            split_sizes: SplitSizes { train: 4000, val: 500, test: 500 },
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.events_range;
        if lo > hi || hi > 3 {
            return Err(Error::InvalidInput(format!(
                "events_range ({lo}, {hi}) must satisfy lo <= hi <= 3"
            )));
        }
        Ok(())
    }
}

/// One retained clip as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub clip_id: String,
    /// Seed that regenerates this clip's event count and scene.
    pub clip_seed: u64,
    pub n_events: usize,
    /// Peak normalization factor applied to the mix (1.0 = untouched).
    pub norm_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub name: String,
    pub pool: Pool,
    /// Scenes generated for this split, including overlap-rejected ones.
    pub attempted: u64,
    pub clips: Vec<ClipEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub global_seed: u64,
    pub n_classes: usize,
    pub splits: Vec<SplitManifest>,
}

impl Manifest {
    pub fn split(&self, name: &str) -> Option<&SplitManifest> {
        self.splits.iter().find(|s| s.name == name)
    }
}

/// One annotation row in annotations.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub clip_id: String,
    pub class_id: usize,
    pub onset_s: f64,
    pub offset_s: f64,
    pub snr_db: f64,
}

impl AnnotationRecord {
    pub fn to_annotation(&self) -> EventAnnotation {
        EventAnnotation {
            class_id: self.class_id,
            onset_s: self.onset_s,
            offset_s: self.offset_s,
            snr_db: self.snr_db,
        }
    }
}

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

fn split_pool(name: &str) -> Pool {
    // Training uses its own foreground pool; validation shares the eval
    // pool so thresholds tuned on it transfer to the test split.
    match name {
        "train" => Pool::Train,
        _ => Pool::Eval,
    }
}

fn split_size(sizes: &SplitSizes, name: &str) -> usize {
    match name {
        "train" => sizes.train,
        "val" => sizes.val,
        _ => sizes.test,
    }
}

/// Generate, filter, and persist the full dataset under `out_dir`.
/// Running twice with the same config produces bit-identical files.
pub fn build_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() {
        return Err(Error::InvalidInput(format!(
            "refusing to overwrite existing dataset at {}",
            out_dir.display()
        )));
    }
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

    let mut splits = Vec::new();
    let mut ann_lines = String::new();
    for (split_idx, name) in SPLIT_NAMES.iter().enumerate() {
        let pool = split_pool(name);
        let registry = default_registry(pool);
        let size = split_size(&cfg.split_sizes, name);
        // Per-split stream so split sizes can change without reshuffling
        // the other splits' clips.
        let mut srng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (split_idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let mut clips = Vec::with_capacity(size);
        let mut attempted: u64 = 0;
        let attempt_cap = 50 * size as u64 + 50;
        while clips.len() < size {
            if attempted >= attempt_cap {
                return Err(Error::Contract(format!(
                    "split {name}: {attempted} attempts yielded only {} of {size} clips; \
                     overlap rejection rate is implausibly high",
                    clips.len()
                )));
            }
            let clip_seed = srng.next_u64();
            attempted += 1;
            let scene = generate_clip(cfg, pool, clip_seed, &registry)?;
            if !reject_overlap(&scene.annotations, cfg.max_polyphony) {
                continue;
            }
            let clip_id = format!("{name}-{:04}", clips.len());
            let wav_path = audio_dir.join(format!("{clip_id}.wav"));
            wav::write_wav_f32(&wav_path, &scene.clip.samples, cfg.sample_rate)?;
            for a in &scene.annotations {
                let rec = AnnotationRecord {
                    clip_id: clip_id.clone(),
                    class_id: a.class_id,
                    onset_s: a.onset_s,
                    offset_s: a.offset_s,
                    snr_db: a.snr_db,
                };
                ann_lines.push_str(&serde_json::to_string(&rec).expect("serializable"));
                ann_lines.push('\n');
            }
            clips.push(ClipEntry {
                clip_id,
                clip_seed,
                n_events: scene.annotations.len(),
                norm_scale: scene.norm_scale,
            });
        }
        splits.push(SplitManifest { name: (*name).to_string(), pool, attempted, clips });
    }

    let manifest = Manifest {
        config: cfg.clone(),
        global_seed: cfg.seed,
        n_classes: default_registry(Pool::Train).len(),
        splits,
    };
    let ann_path = out_dir.join("annotations.jsonl");
    std::fs::write(&ann_path, ann_lines).map_err(|e| Error::io(&ann_path, e))?;
    let body = serde_json::to_string_pretty(&manifest).expect("serializable");
    std::fs::write(&manifest_path, body + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

/// Regenerate the scene a clip seed denotes. The first draw picks the event
/// count, the second the scene seed; this order is frozen by the manifest.
fn generate_clip(
    cfg: &DatasetConfig,
    pool: Pool,
    clip_seed: u64,
    registry: &[crate::scenegen::EventClassDef],
) -> Result<crate::scenegen::SceneOutput> {
    let mut crng = ChaCha8Rng::seed_from_u64(clip_seed);
    let (ev_lo, ev_hi) = cfg.events_range;
    let n_events = crng.random_range(ev_lo..=ev_hi);
    let scene_seed = crng.next_u64();
    let spec = SceneSpec {
        clip_duration_s: cfg.clip_duration_s,
        sample_rate: cfg.sample_rate,
        n_events,
        snr_range_db: cfg.snr_range_db,
        background_level_db: cfg.background_level_db,
        pool,
        seed: scene_seed,
    };
    synthesize_scene(&spec, registry)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&body).map_err(|e| Error::malformed(&path, e.to_string()))
}

pub fn load_annotations(dir: &Path) -> Result<Vec<AnnotationRecord>> {
    let path = dir.join("annotations.jsonl");
    let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut records = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(&path, format!("line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

pub fn clip_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join("audio").join(format!("{clip_id}.wav"))
}

pub fn load_clip(dir: &Path, clip_id: &str) -> Result<AudioClip> {
    let path = clip_path(dir, clip_id);
    let (samples, sample_rate) = wav::read_wav_f32(&path)?;
    Ok(AudioClip { samples, sample_rate, clip_id: clip_id.to_string() })
}
