//! Classifier heads over log-mel input and the training loop.
//!
//! One convolutional trunk serves three uses: a clip-level head (temporal
//! max pooling over per-frame logits, then sigmoid), a framewise head
//! (sigmoid per frame), and strong supervision (per-frame BCE). Because the
//! clip score is the max over frame logits and sigmoid is monotone, the
//! clip probability always equals the max framewise probability; training
//! asserts that identity on a probe batch every epoch.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, MelFrontendConfig};
use crate::error::{Error, Result};
use crate::grad::optim::{Adam, AdamConfig};
use crate::grad::params::ParamSet;
use crate::grad::{Graph, PadMode, TensorId};
use crate::scenegen::dataset as sgdataset;
use crate::scenegen::EventAnnotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub channels: usize,
    /// Odd kernel sides so 'same' reflect padding is symmetric.
    pub kernel: (usize, usize),
    /// Average-pool factors (time, frequency).
    pub pool: (usize, usize),
}

/// Which output the model serves downstream; the trunk is identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    Clip,
    Framewise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_classes: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub embed_dim: usize,
    pub head: HeadMode,
}

impl ModelConfig {
    /// Small-and-fast scale: three blocks, time downsampling 8x.
    pub fn desk(head: HeadMode) -> Self {
        let block = |channels| ConvBlock { channels, kernel: (3, 3), pool: (2, 2) };
        ModelConfig {
            n_classes: 10,
            conv_blocks: vec![block(8), block(16), block(32)],
            embed_dim: 64,
            head,
        }
    }

    /// Reference scale: five blocks, 1001 spectrogram frames -> 31 output frames.
    pub fn full(head: HeadMode) -> Self {
        let block = |channels| ConvBlock { channels, kernel: (3, 3), pool: (2, 2) };
        ModelConfig {
            n_classes: 10,
            conv_blocks: vec![block(16), block(32), block(64), block(64), block(128)],
            embed_dim: 128,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.embed_dim == 0 || self.conv_blocks.is_empty() {
            return Err(Error::InvalidInput(
                "model needs classes, an embedding, and at least one conv block".into(),
            ));
        }
        for b in &self.conv_blocks {
            if b.channels == 0 || b.pool.0 == 0 || b.pool.1 == 0 {
                return Err(Error::InvalidInput("conv block sizes must be positive".into()));
            }
            if b.kernel.0 % 2 == 0 || b.kernel.1 % 2 == 0 {
                return Err(Error::InvalidInput(
                    "conv kernels must be odd for symmetric same padding".into(),
                ));
            }
        }
        Ok(())
    }

    /// Output frame count for a given spectrogram frame count.
    pub fn output_frames(&self, t_spec: usize) -> usize {
        self.conv_blocks.iter().fold(t_spec, |t, b| t / b.pool.0)
    }

    /// Seconds covered by one output frame.
    pub fn frame_duration(&self, mel: &MelFrontendConfig, sample_rate: u32) -> f64 {
        let stride: usize = self.conv_blocks.iter().map(|b| b.pool.0).product();
        (mel.hop * stride) as f64 / f64::from(sample_rate)
    }
}

/// Per-frame class probabilities at the model's native resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FramewisePrediction {
    /// (T, C), entries in [0, 1].
    pub probs: Array2<f64>,
    pub frame_duration: f64,
}

/// Clip score per class: max over frames.
pub fn clip_from_frames(fp: &FramewisePrediction) -> Vec<f64> {
    let t = fp.probs.nrows();
    fp.probs
        .columns()
        .into_iter()
        .map(|col| {
            let mut best = f64::NEG_INFINITY;
            for &v in col.iter() {
                if v > best {
                    best = v;
                }
            }
            if t == 0 { 0.0 } else { best }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

/// Tensor ids of the inserted parameters, in ParamSet insertion order.
pub struct ParamIds(Vec<TensorId>);

impl Model {
    /// He-initialized trunk, zero-initialized head: an untrained model
    /// scores exactly 0.5 everywhere.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut c_in = 1usize;
        for (i, b) in config.conv_blocks.iter().enumerate() {
            let fan_in = c_in * b.kernel.0 * b.kernel.1;
            let std = (2.0 / fan_in as f64).sqrt();
            params.insert(
                &format!("conv{i}.kernel"),
                he_array(&mut rng, &[b.channels, c_in, b.kernel.0, b.kernel.1], std),
            )?;
            params.insert(&format!("conv{i}.bias"), ArrayD::zeros(IxDyn(&[b.channels])))?;
            c_in = b.channels;
        }
        let std = (2.0 / c_in as f64).sqrt();
        params.insert("fc1.weight", he_array(&mut rng, &[c_in, config.embed_dim], std))?;
        params.insert("fc1.bias", ArrayD::zeros(IxDyn(&[config.embed_dim])))?;
        params.insert(
            "head.weight",
            ArrayD::zeros(IxDyn(&[config.embed_dim, config.n_classes])),
        )?;
        params.insert("head.bias", ArrayD::zeros(IxDyn(&[config.n_classes])))?;
        Ok(Model { config: config.clone(), params })
    }

    /// Insert all parameters into a graph; leaves when `trainable`, else
    /// constants (no gradients tracked).
    pub fn insert_params(&self, g: &mut Graph, trainable: bool) -> ParamIds {
        let ids = self
            .params
            .iter()
            .map(|(_, v)| if trainable { g.leaf(v.clone()) } else { g.constant(v.clone()) })
            .collect();
        ParamIds(ids)
    }

    /// Per-frame logits (T, C) from a (T_spec, n_mels) input tensor.
    pub fn frame_logits_with(
        &self,
        g: &mut Graph,
        ids: &ParamIds,
        mel: TensorId,
    ) -> Result<TensorId> {
        let s = g.shape(mel).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch { op: "frame_logits", lhs: s, rhs: vec![0, 0] });
        }
        let n_blocks = self.config.conv_blocks.len();
        let mut x = g.reshape(mel, &[1, s[0], s[1]])?;
        for (i, b) in self.config.conv_blocks.iter().enumerate() {
            let pad = (b.kernel.0 / 2, b.kernel.1 / 2);
            x = g.conv2d(x, ids.0[2 * i], (1, 1), pad, PadMode::Reflect)?;
            x = add_channel_bias(g, x, ids.0[2 * i + 1])?;
            x = g.relu(x);
            x = avg_pool(g, x, b.pool)?;
        }
        // (C, T', M') -> frequency average -> (T', C).
        x = g.mean_axis(x, 2)?;
        x = g.transpose2(x)?;
        let h = g.matmul(x, ids.0[2 * n_blocks])?;
        let h = add_row_bias(g, h, ids.0[2 * n_blocks + 1])?;
        let h = g.relu(h);
        let z = g.matmul(h, ids.0[2 * n_blocks + 2])?;
        add_row_bias(g, z, ids.0[2 * n_blocks + 3])
    }

    /// Clip-level sigmoid scores: sigmoid of the temporal max of frame logits.
    pub fn clip_probs(&self, mel: &Array2<f64>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let ids = self.insert_params(&mut g, false);
        let m = g.constant(mel.clone().into_dyn());
        let z = self.frame_logits_with(&mut g, &ids, m)?;
        let peak = g.max_axis(z, 0)?;
        let p = g.sigmoid(peak);
        Ok(g.value(p).iter().cloned().collect())
    }

    pub fn framewise(&self, mel: &Array2<f64>, frame_duration: f64) -> Result<FramewisePrediction> {
        let mut g = Graph::new();
        let ids = self.insert_params(&mut g, false);
        let m = g.constant(mel.clone().into_dyn());
        let z = self.frame_logits_with(&mut g, &ids, m)?;
        let p = g.sigmoid(z);
        let probs = g
            .value(p)
            .clone()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("frame logits are 2-D");
        Ok(FramewisePrediction { probs, frame_duration })
    }

    /// Persist parameters at `path` (plus `<path>.json` index) and the
    /// architecture at `<path>.config.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path)?;
        let cfg_path = append_ext(path, ".config.json");
        let body = serde_json::to_string_pretty(&self.config).expect("serializable");
        std::fs::write(&cfg_path, body + "\n").map_err(|e| Error::io(&cfg_path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let params = ParamSet::load(path)?;
        let cfg_path = append_ext(path, ".config.json");
        let body = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config: ModelConfig =
            serde_json::from_str(&body).map_err(|e| Error::malformed(&cfg_path, e.to_string()))?;
        config.validate()?;
        Ok(Model { config, params })
    }
}

fn append_ext(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(ext);
    std::path::PathBuf::from(os)
}

fn he_array(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> ArrayD<f64> {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| std * normal(rng)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), values).expect("shape matches length")
}

/// Standard normal via Box-Muller; u1 shifted into (0, 1].
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn add_channel_bias(g: &mut Graph, x: TensorId, bias: TensorId) -> Result<TensorId> {
    let s = g.shape(x).to_vec();
    let b = g.reshape(bias, &[s[0], 1, 1])?;
    let b = g.broadcast_to(b, &s)?;
    g.add(x, b)
}

fn add_row_bias(g: &mut Graph, x: TensorId, bias: TensorId) -> Result<TensorId> {
    let s = g.shape(x).to_vec();
    let b = g.reshape(bias, &[1, s[1]])?;
    let b = g.broadcast_to(b, &s)?;
    g.add(x, b)
}

/// Average pooling by integer factors; trailing remainder rows/columns that
/// do not fill a cell are dropped.
fn avg_pool(g: &mut Graph, x: TensorId, pool: (usize, usize)) -> Result<TensorId> {
    let (ph, pw) = pool;
    let mut x = x;
    if ph > 1 {
        let s = g.shape(x).to_vec();
        let h2 = s[1] / ph;
        if h2 == 0 {
            return Err(Error::InvalidInput(format!(
                "pool factor {ph} exceeds input height {}",
                s[1]
            )));
        }
        if h2 * ph != s[1] {
            x = g.slice(x, &[(0, s[0]), (0, h2 * ph), (0, s[2])])?;
        }
        x = g.reshape(x, &[s[0], h2, ph, s[2]])?;
        x = g.mean_axis(x, 2)?;
    }
    if pw > 1 {
        let s = g.shape(x).to_vec();
        let w2 = s[2] / pw;
        if w2 == 0 {
            return Err(Error::InvalidInput(format!(
                "pool factor {pw} exceeds input width {}",
                s[2]
            )));
        }
        if w2 * pw != s[2] {
            x = g.slice(x, &[(0, s[0]), (0, s[1]), (0, w2 * pw)])?;
        }
        x = g.reshape(x, &[s[0], s[1], w2, pw])?;
        x = g.mean_axis(x, 3)?;
    }
    Ok(x)
}

/// Multi-hot clip label from a clip's annotations.
pub fn clip_label(annotations: &[EventAnnotation], n_classes: usize) -> Result<Array1<f64>> {
    let mut y = Array1::zeros(n_classes);
    for a in annotations {
        if a.class_id >= n_classes {
            return Err(Error::InvalidInput(format!(
                "class_id {} out of range for {n_classes} classes",
                a.class_id
            )));
        }
        y[a.class_id] = 1.0;
    }
    Ok(y)
}

/// Frame-level labels at the model's resolution: frame t is active for a
/// class iff its half-open span [t*D, (t+1)*D) overlaps any event of that
/// class.
pub fn rasterize_labels(
    annotations: &[EventAnnotation],
    n_classes: usize,
    t_frames: usize,
    frame_duration: f64,
) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((t_frames, n_classes));
    for a in annotations {
        if a.class_id >= n_classes {
            return Err(Error::InvalidInput(format!(
                "class_id {} out of range for {n_classes} classes",
                a.class_id
            )));
        }
        for t in 0..t_frames {
            // Boundaries derived as k*D, never by accumulation, so they are
            // bit-identical to span endpoints produced the same way.
            let lo = t as f64 * frame_duration;
            let hi = (t + 1) as f64 * frame_duration;
            if lo < a.offset_s && a.onset_s < hi {
                y[[t, a.class_id]] = 1.0;
            }
        }
    }
    Ok(y)
}

/// Merge consecutive active frames back into half-open time spans.
pub fn derasterize_spans(active: &[bool], frame_duration: f64) -> Vec<(f64, f64)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (t, &on) in active.iter().enumerate() {
        match (on, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                spans.push((s as f64 * frame_duration, t as f64 * frame_duration));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s as f64 * frame_duration, active.len() as f64 * frame_duration));
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Clip-level labels drive a BCE loss on the temporal-max logits.
    Weak,
    /// Frame-level labels drive a per-frame BCE loss.
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub supervision: Supervision,
    pub seed: u64,
}

impl TrainConfig {
    pub fn desk_defaults(supervision: Supervision, seed: u64) -> Self {
        TrainConfig { epochs: 100, patience: 10, lr: 1e-3, batch_size: 16, supervision, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch_size must be positive".into()));
        }
        if self.patience > self.epochs {
            return Err(Error::InvalidInput(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::InvalidInput("lr must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One clip prepared for training.
#[derive(Debug, Clone)]
pub struct Example {
    pub clip_id: String,
    pub mel: Array2<f64>,
    pub clip_label: Array1<f64>,
    pub frame_label: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub n_classes: usize,
    pub t_frames: usize,
    pub frame_duration: f64,
}

/// Prepare train and val splits of a built dataset: cached log-mels plus
/// clip and frame labels at the model's resolution.
pub fn load_training_data(
    dir: &Path,
    mel_cfg: &MelFrontendConfig,
    model_cfg: &ModelConfig,
) -> Result<TrainingData> {
    model_cfg.validate()?;
    let manifest = sgdataset::load_manifest(dir)?;
    let sr = manifest.config.sample_rate;
    mel_cfg.validate(sr)?;
    if manifest.n_classes != model_cfg.n_classes {
        return Err(Error::Contract(format!(
            "dataset has {} classes but the model expects {}",
            manifest.n_classes, model_cfg.n_classes
        )));
    }
    let mut by_clip: HashMap<String, Vec<EventAnnotation>> = HashMap::new();
    for rec in sgdataset::load_annotations(dir)? {
        by_clip.entry(rec.clip_id.clone()).or_default().push(rec.to_annotation());
    }
    let frame_duration = model_cfg.frame_duration(mel_cfg, sr);
    let mut t_frames = 0usize;
    let empty: Vec<EventAnnotation> = Vec::new();

    let mut build = |name: &str| -> Result<Vec<Example>> {
        let split = manifest
            .split(name)
            .ok_or_else(|| Error::Contract(format!("manifest lacks split {name}")))?;
        let mut out = Vec::with_capacity(split.clips.len());
        for entry in &split.clips {
            let clip = sgdataset::load_clip(dir, &entry.clip_id)?;
            let mel = dsp::logmel(&clip.samples, sr, mel_cfg)?;
            let t = model_cfg.output_frames(mel.values.nrows());
            if t_frames == 0 {
                t_frames = t;
            } else if t != t_frames {
                return Err(Error::Contract(format!(
                    "clip {} yields {t} frames, expected {t_frames}",
                    entry.clip_id
                )));
            }
            let anns = by_clip.get(&entry.clip_id).unwrap_or(&empty);
            out.push(Example {
                clip_id: entry.clip_id.clone(),
                mel: mel.values,
                clip_label: clip_label(anns, model_cfg.n_classes)?,
                frame_label: rasterize_labels(anns, model_cfg.n_classes, t, frame_duration)?,
            });
        }
        Ok(out)
    };

    let train = build("train")?;
    let val = build("val")?;
    Ok(TrainingData { train, val, n_classes: model_cfg.n_classes, t_frames, frame_duration })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// BCE from logits: softplus(z) - y*z, numerically stable for any z.
fn bce_from_logits(g: &mut Graph, z: TensorId, y: ArrayD<f64>) -> Result<TensorId> {
    let sp = g.softplus(z);
    let yc = g.constant(y);
    let yz = g.mul(yc, z)?;
    let d = g.sub(sp, yz)?;
    g.mean_all(d)
}

fn weak_loss(g: &mut Graph, logits: TensorId, y: &Array1<f64>) -> Result<TensorId> {
    let m = g.max_axis(logits, 0)?;
    bce_from_logits(g, m, y.clone().into_dyn())
}

fn strong_loss(g: &mut Graph, logits: TensorId, y: &Array2<f64>) -> Result<TensorId> {
    bce_from_logits(g, logits, y.clone().into_dyn())
}

fn example_loss(
    g: &mut Graph,
    model: &Model,
    ids: &ParamIds,
    ex: &Example,
    supervision: Supervision,
) -> Result<TensorId> {
    let mel = g.constant(ex.mel.clone().into_dyn());
    let z = model.frame_logits_with(g, ids, mel)?;
    match supervision {
        Supervision::Weak => weak_loss(g, z, &ex.clip_label),
        Supervision::Strong => strong_loss(g, z, &ex.frame_label),
    }
}

fn mean_of(g: &mut Graph, terms: &[TensorId]) -> Result<TensorId> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scalar_mul(acc, 1.0 / terms.len() as f64))
}

fn train_batch(
    model: &mut Model,
    adam: &mut Adam,
    examples: &[&Example],
    supervision: Supervision,
) -> Result<f64> {
    let mut g = Graph::new();
    let ids = model.insert_params(&mut g, true);
    let losses: Vec<TensorId> = examples
        .iter()
        .map(|ex| example_loss(&mut g, model, &ids, ex, supervision))
        .collect::<Result<_>>()?;
    let total = mean_of(&mut g, &losses)?;
    let loss = g.scalar_value(total);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite batch loss {loss}")));
    }
    g.backward(total)?;
    let grads: Vec<ArrayD<f64>> = ids.0.iter().map(|&id| g.grad(id)).collect();
    let mut arrays = model.params.arrays();
    adam.step(&mut arrays, &grads)?;
    model.params.replace_arrays(arrays)?;
    Ok(loss)
}

fn split_loss(model: &Model, examples: &[Example], supervision: Supervision) -> Result<f64> {
    let mut sum = 0.0;
    for ex in examples {
        let mut g = Graph::new();
        let ids = model.insert_params(&mut g, false);
        let l = example_loss(&mut g, model, &ids, ex, supervision)?;
        sum += g.scalar_value(l);
    }
    Ok(sum / examples.len() as f64)
}

/// Clip probability must equal the max framewise probability on every probe
/// clip; sigmoid's monotonicity makes the two heads one computation.
fn probe_clip_frame_consistency(model: &Model, probe: &[Example], frame_duration: f64) -> Result<()> {
    for ex in probe {
        let clip = model.clip_probs(&ex.mel)?;
        let fp = model.framewise(&ex.mel, frame_duration)?;
        let from_frames = clip_from_frames(&fp);
        for c in 0..clip.len() {
            if (clip[c] - from_frames[c]).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "clip {}: class {c} clip prob {} != max frame prob {}",
                    ex.clip_id, clip[c], from_frames[c]
                )));
            }
        }
    }
    Ok(())
}

/// Full training run: shuffled minibatches, Adam, early stopping on
/// validation loss, best-epoch weights restored at the end.
pub fn train(data: &TrainingData, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<TrainOutcome> {
    tcfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::InvalidInput("training needs non-empty train and val splits".into()));
    }
    if data.n_classes != mcfg.n_classes {
        return Err(Error::Contract(format!(
            "data has {} classes, model expects {}",
            data.n_classes, mcfg.n_classes
        )));
    }
    // Temporal max pooling drops NaN frames silently, so a poisoned input
    // could otherwise train to a finite loss; reject it up front.
    for ex in data.train.iter().chain(&data.val) {
        if !ex.mel.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite values in input features for clip {}",
                ex.clip_id
            )));
        }
    }
    let mut model = Model::init(mcfg, tcfg.seed)?;
    let mut adam = Adam::new(AdamConfig { lr: tcfg.lr, ..AdamConfig::default() });
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let probe_len = data.val.len().min(4);

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Vec<ArrayD<f64>>)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..tcfg.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        fisher_yates(&mut order, &mut shuffle_rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(tcfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.train[i]).collect();
            let loss = train_batch(&mut model, &mut adam, &batch, tcfg.supervision)
                .map_err(|e| Error::Numerical(format!("epoch {epoch}: {e}")))?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / data.train.len() as f64;
        let val_loss = split_loss(&model, &data.val, tcfg.supervision)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "validation loss diverged at epoch {epoch}: {val_loss}"
            )));
        }
        probe_clip_frame_consistency(&model, &data.val[..probe_len], data.frame_duration)?;
        log.push(EpochStats { epoch, train_loss, val_loss });

        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, model.params.arrays()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, arrays) = best.expect("at least one epoch ran");
    model.params.replace_arrays(arrays)?;
    Ok(TrainOutcome { model, log, best_epoch, stopped_early })
}

fn fisher_yates(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Training log as CSV: epoch, losses, and whether this row ended training
/// by early stop.
pub fn save_training_log(log: &[EpochStats], stopped_early: bool, path: &Path) -> Result<()> {
    let mut body = String::from("epoch,train_loss,val_loss,stopped_early\n");
    for (i, row) in log.iter().enumerate() {
        let flag = stopped_early && i + 1 == log.len();
        body.push_str(&format!("{},{},{},{}\n", row.epoch, row.train_loss, row.val_loss, flag));
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
