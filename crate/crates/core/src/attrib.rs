//! Attribution maps over waveform samples.
//!
//! Integrated gradients scores each sample of a clip by the path integral
//! of the class-score gradient from a zero baseline to the clip, using a
//! midpoint Riemann sum; random and energy maps are the model-free
//! references. Maps are dumped as a raw score vector plus a JSON sidecar.

use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::diff::DiffFrontend;
use crate::error::{Error, Result};
use crate::grad::{Graph, TensorId};
use crate::model::Model;
use crate::scenegen::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ig,
    Random,
    Energy,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ig => "ig",
            Method::Random => "random",
            Method::Energy => "energy",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        match s {
            "ig" => Ok(Method::Ig),
            "random" => Ok(Method::Random),
            "energy" => Ok(Method::Energy),
            other => Err(Error::InvalidInput(format!("unknown method {other}"))),
        }
    }
}

/// The reference input the attribution path starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    ZeroWaveform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionRequest {
    pub clip_id: String,
    pub class_id: usize,
    pub method: Method,
    pub steps: usize,
    pub baseline: Baseline,
    /// Present for the random method only.
    pub seed: Option<u64>,
}

impl AttributionRequest {
    pub fn ig(clip_id: &str, class_id: usize, steps: usize) -> Self {
        AttributionRequest {
            clip_id: clip_id.to_string(),
            class_id,
            method: Method::Ig,
            steps,
            baseline: Baseline::ZeroWaveform,
            seed: None,
        }
    }

    pub fn random(clip_id: &str, class_id: usize, seed: u64) -> Self {
        AttributionRequest {
            clip_id: clip_id.to_string(),
            class_id,
            method: Method::Random,
            steps: 1,
            baseline: Baseline::ZeroWaveform,
            seed: Some(seed),
        }
    }

    pub fn energy(clip_id: &str, class_id: usize) -> Self {
        AttributionRequest {
            clip_id: clip_id.to_string(),
            class_id,
            method: Method::Energy,
            steps: 1,
            baseline: Baseline::ZeroWaveform,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidInput("attribution steps must be >= 1".into()));
        }
        if self.method == Method::Random && self.seed.is_none() {
            return Err(Error::InvalidInput("random attribution requires a seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub request: AttributionRequest,
    /// Signed score per waveform sample.
    pub scores: Vec<f64>,
    /// Class score at the clip itself (model-based methods only).
    pub f_x: Option<f64>,
    /// Class score at the baseline input (model-based methods only).
    pub f_baseline: Option<f64>,
    /// |sum(scores) - (f_x - f_baseline)|, recorded on every IG run.
    pub completeness_gap: Option<f64>,
}

impl AttributionMap {
    /// Importance magnitudes: absolute values of the signed scores.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.abs()).collect()
    }
}

/// Midpoint-rule path integral of the gradient of `build`'s scalar output,
/// from a zero baseline to `x`: scores_i = x_i * (1/n) sum_k dF/dx_i at
/// alpha_k * x, alpha_k = (k - 0.5) / n. Returns (scores, F(x), F(0)).
pub fn path_integrated_gradients(
    x: &[f64],
    steps: usize,
    mut build: impl FnMut(&mut Graph, TensorId) -> Result<TensorId>,
) -> Result<(Vec<f64>, f64, f64)> {
    if steps == 0 {
        return Err(Error::InvalidInput("attribution steps must be >= 1".into()));
    }
    let n = x.len();
    let mut grad_sum = vec![0.0f64; n];
    for k in 1..=steps {
        let alpha = (k as f64 - 0.5) / steps as f64;
        let point: Vec<f64> = x.iter().map(|&v| alpha * v).collect();
        let mut g = Graph::new();
        let wave = g.leaf(ArrayD::from_shape_vec(IxDyn(&[n]), point).expect("1-D"));
        let f = build(&mut g, wave)?;
        g.backward(f)?;
        let grad = g.grad(wave);
        for (acc, &gv) in grad_sum.iter_mut().zip(grad.iter()) {
            if !gv.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient at path step {k} of {steps}"
                )));
            }
            *acc += gv;
        }
    }
    let scores: Vec<f64> =
        x.iter().zip(&grad_sum).map(|(&xi, &gs)| xi * (gs / steps as f64)).collect();

    let eval_at = |values: Vec<f64>, build: &mut dyn FnMut(&mut Graph, TensorId) -> Result<TensorId>| -> Result<f64> {
        let mut g = Graph::new();
        let wave = g.constant(ArrayD::from_shape_vec(IxDyn(&[n]), values).expect("1-D"));
        let f = build(&mut g, wave)?;
        Ok(g.scalar_value(f))
    };
    let f_x = eval_at(x.to_vec(), &mut build)?;
    let f_baseline = eval_at(vec![0.0; n], &mut build)?;
    Ok((scores, f_x, f_baseline))
}

/// Graph builder for the model's sigmoid clip score of one class, reached
/// from the waveform through the differentiable log-mel frontend.
pub fn class_score_builder<'a>(
    model: &'a Model,
    frontend: &'a DiffFrontend,
    class_id: usize,
) -> impl FnMut(&mut Graph, TensorId) -> Result<TensorId> + 'a {
    move |g: &mut Graph, wave: TensorId| {
        let mel = frontend.logmel_graph(g, wave)?;
        let ids = model.insert_params(g, false);
        let z = model.frame_logits_with(g, &ids, mel)?;
        let peak = g.max_axis(z, 0)?;
        let p = g.sigmoid(peak);
        let pc = g.slice(p, &[(class_id, class_id + 1)])?;
        g.mean_all(pc)
    }
}

/// Integrated gradients for one detected class of one clip.
///
/// The class must pass the prediction gate (clip score strictly above 0.5)
/// or the request is rejected; the completeness gap is recorded on the map.
pub fn integrated_gradients(
    model: &Model,
    frontend: &DiffFrontend,
    clip: &AudioClip,
    class_id: usize,
    steps: usize,
) -> Result<AttributionMap> {
    let request = AttributionRequest::ig(&clip.clip_id, class_id, steps);
    request.validate()?;
    if class_id >= model.config.n_classes {
        return Err(Error::InvalidInput(format!(
            "class_id {class_id} out of range for {} classes",
            model.config.n_classes
        )));
    }
    if clip.sample_rate != frontend.sample_rate() {
        return Err(Error::InvalidInput(format!(
            "clip sample rate {} does not match frontend rate {}",
            clip.sample_rate,
            frontend.sample_rate()
        )));
    }
    if !clip.samples.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite samples in clip {}",
            clip.clip_id
        )));
    }

    let mut build = class_score_builder(model, frontend, class_id);
    let gate = {
        let mut g = Graph::new();
        let wave = g.constant(
            ArrayD::from_shape_vec(IxDyn(&[clip.samples.len()]), clip.samples.clone())
                .expect("1-D"),
        );
        let f = build(&mut g, wave)?;
        g.scalar_value(f)
    };
    // Samples were verified finite above, so the score is an ordinary float.
    if gate <= 0.5 {
        return Err(Error::RejectedRequest(format!(
            "clip {} class {class_id}: score {gate} does not exceed the 0.5 gate",
            clip.clip_id
        )));
    }

    let (scores, f_x, f_baseline) = path_integrated_gradients(&clip.samples, steps, build)?;
    let gap = (scores.iter().sum::<f64>() - (f_x - f_baseline)).abs();
    Ok(AttributionMap {
        request,
        scores,
        f_x: Some(f_x),
        f_baseline: Some(f_baseline),
        completeness_gap: Some(gap),
    })
}

/// Uniform [0,1) score per sample; deterministic per seed.
pub fn random_attribution(clip: &AudioClip, class_id: usize, seed: u64) -> AttributionMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f64> = (0..clip.samples.len()).map(|_| rng.random::<f64>()).collect();
    AttributionMap {
        request: AttributionRequest::random(&clip.clip_id, class_id, seed),
        scores,
        f_x: None,
        f_baseline: None,
        completeness_gap: None,
    }
}

/// Signal amplitude as importance: score_i = sample_i, magnitude |sample_i|.
/// Class-independent by construction.
pub fn energy_attribution(clip: &AudioClip, class_id: usize) -> AttributionMap {
    AttributionMap {
        request: AttributionRequest::energy(&clip.clip_id, class_id),
        scores: clip.samples.clone(),
        f_x: None,
        f_baseline: None,
        completeness_gap: None,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    clip_id: String,
    class_id: usize,
    method: Method,
    steps: usize,
    seed: Option<u64>,
    completeness_gap: Option<f64>,
    f_x: Option<f64>,
    f_baseline: Option<f64>,
}

/// Dump file name for one (clip, class, method) attribution.
pub fn attribution_file_name(clip_id: &str, class_id: usize, method: Method) -> String {
    format!("{clip_id}.{class_id}.{}.attr", method.as_str())
}

/// Write the score vector (little-endian f64s behind a u64 count) plus a
/// `.json` sidecar; returns the binary path.
pub fn save_attribution(map: &AttributionMap, dir: &Path) -> Result<PathBuf> {
    let req = &map.request;
    let path = dir.join(attribution_file_name(&req.clip_id, req.class_id, req.method));
    let mut bytes = Vec::with_capacity(8 + 8 * map.scores.len());
    bytes.extend_from_slice(&(map.scores.len() as u64).to_le_bytes());
    for &s in &map.scores {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;

    let sidecar = Sidecar {
        clip_id: req.clip_id.clone(),
        class_id: req.class_id,
        method: req.method,
        steps: req.steps,
        seed: req.seed,
        completeness_gap: map.completeness_gap,
        f_x: map.f_x,
        f_baseline: map.f_baseline,
    };
    let json_path = sidecar_path(&path);
    let body = serde_json::to_string_pretty(&sidecar).expect("serializable");
    std::fs::write(&json_path, body + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(path)
}

fn sidecar_path(bin_path: &Path) -> PathBuf {
    let mut os = bin_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

pub fn load_attribution(path: &Path) -> Result<AttributionMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::malformed(path, "missing score count header"));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 8 + 8 * n {
        return Err(Error::malformed(
            path,
            format!("expected {n} scores ({} bytes), found {}", 8 + 8 * n, bytes.len()),
        ));
    }
    let scores: Vec<f64> = bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let json_path = sidecar_path(path);
    let body = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sc: Sidecar =
        serde_json::from_str(&body).map_err(|e| Error::malformed(&json_path, e.to_string()))?;
    let request = AttributionRequest {
        clip_id: sc.clip_id,
        class_id: sc.class_id,
        method: sc.method,
        steps: sc.steps,
        baseline: Baseline::ZeroWaveform,
        seed: sc.seed,
    };
    request.validate()?;
    Ok(AttributionMap {
        request,
        scores,
        f_x: sc.f_x,
        f_baseline: sc.f_baseline,
        completeness_gap: sc.completeness_gap,
    })
}
