//! Frame-level temporal detection metrics on a fixed 100 ms grid.
//!
//! Attribution maps and framewise model predictions are reduced to per-frame
//! values, percentile-binarized per (clip, class) vector, and scored against
//! ground-truth masks with IoU, frame precision/recall/F1, and the pointing
//! game. Sweeps cover every percentile threshold 1..=99; reports aggregate
//! per class and macro.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attrib::AttributionMap;
use crate::error::{Error, Result};
use crate::model::FramewisePrediction;
use crate::scenegen::EventAnnotation;

/// Evaluation frame length in seconds, fixed regardless of model resolution.
pub const FRAME_LEN_S: f64 = 0.1;

/// Boundary of evaluation frame `k` in seconds. Computed as a division so
/// the result is correctly rounded and comparisons against sample-grid
/// annotation times (also divisions) are consistent; `k * 0.1` rounds the
/// other way at some multiples.
fn frame_edge(k: usize) -> f64 {
    k as f64 / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub n_frames: usize,
}

impl FrameGrid {
    /// Grid covering a clip duration: ceil(duration / 0.1), tolerant of one
    /// part in 1e9 of float error on exact multiples.
    pub fn from_duration(clip_duration_s: f64) -> Result<FrameGrid> {
        if !clip_duration_s.is_finite() || clip_duration_s <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "clip duration must be positive, got {clip_duration_s}"
            )));
        }
        let n = (clip_duration_s * 10.0 - 1e-9).ceil() as usize;
        Ok(FrameGrid { n_frames: n.max(1) })
    }

    /// Grid covering a sample count; the sample rate must divide into
    /// whole 100 ms windows.
    pub fn from_samples(n_samples: usize, sample_rate: u32) -> Result<FrameGrid> {
        let w = samples_per_frame(sample_rate)?;
        if n_samples == 0 {
            return Err(Error::InvalidInput("empty clip has no frames".into()));
        }
        Ok(FrameGrid { n_frames: n_samples.div_ceil(w) })
    }
}

/// Samples in one 100 ms window.
pub fn samples_per_frame(sample_rate: u32) -> Result<usize> {
    if sample_rate == 0 || !sample_rate.is_multiple_of(10) {
        return Err(Error::InvalidInput(format!(
            "sample rate {sample_rate} does not divide into 100 ms windows"
        )));
    }
    Ok(sample_rate as usize / 10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    GroundTruth,
    Attribution,
    FramewiseModel,
    Random,
    Energy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMask {
    pub bits: Vec<bool>,
    pub source: MaskSource,
}

impl FrameMask {
    pub fn new(bits: Vec<bool>, source: MaskSource) -> FrameMask {
        FrameMask { bits, source }
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }
}

/// Ground-truth activity of one class on the grid: frame k is active iff
/// its half-open span [k/10, (k+1)/10) overlaps any event of the class.
pub fn gt_mask(annotations: &[EventAnnotation], class_id: usize, grid: FrameGrid) -> FrameMask {
    let mut bits = vec![false; grid.n_frames];
    for a in annotations.iter().filter(|a| a.class_id == class_id) {
        for (k, bit) in bits.iter_mut().enumerate() {
            if frame_edge(k) < a.offset_s && a.onset_s < frame_edge(k + 1) {
                *bit = true;
            }
        }
    }
    FrameMask::new(bits, MaskSource::GroundTruth)
}

/// Mean attribution magnitude per 100 ms window; the trailing partial
/// window averages over the samples it actually has.
pub fn attr_to_frames(
    map: &AttributionMap,
    sample_rate: u32,
    grid: FrameGrid,
) -> Result<Vec<f64>> {
    let w = samples_per_frame(sample_rate)?;
    let n = map.scores.len();
    if n.div_ceil(w) != grid.n_frames {
        return Err(Error::Contract(format!(
            "{} samples at {sample_rate} Hz yield {} frames, grid has {}",
            n,
            n.div_ceil(w),
            grid.n_frames
        )));
    }
    let mut out = Vec::with_capacity(grid.n_frames);
    for k in 0..grid.n_frames {
        let lo = k * w;
        let hi = ((k + 1) * w).min(n);
        let sum: f64 = map.scores[lo..hi].iter().map(|s| s.abs()).sum();
        out.push(sum / (hi - lo) as f64);
    }
    Ok(out)
}

/// How a sweep or report chose its percentile threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSelection {
    Fixed,
    ValidationOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub tau: u8,
    pub selection: TauSelection,
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        validate_tau(self.tau)
    }
}

fn validate_tau(tau: u8) -> Result<()> {
    if !(1..=99).contains(&tau) {
        return Err(Error::InvalidInput(format!("percentile tau {tau} outside 1..=99")));
    }
    Ok(())
}

/// Percentile-binarize one (clip, class) frame vector: nearest-rank
/// threshold at tau, strict >, so an all-equal vector yields no detections.
pub fn binarize(frame_values: &[f64], tau: u8, source: MaskSource) -> Result<FrameMask> {
    validate_tau(tau)?;
    if frame_values.is_empty() {
        return Err(Error::InvalidInput("cannot binarize an empty frame vector".into()));
    }
    if !frame_values.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite frame value in binarize".into()));
    }
    let mut sorted = frame_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Nearest-rank index: ceil(tau/100 * n), 1-based.
    let rank = (tau as usize * n).div_ceil(100);
    let threshold = sorted[rank - 1];
    let bits = frame_values.iter().map(|&v| v > threshold).collect();
    Ok(FrameMask::new(bits, source))
}

/// Intersection over union of two masks; two empty masks count as a
/// perfect match (no event, no detection).
pub fn iou(a: &FrameMask, b: &FrameMask) -> Result<f64> {
    if a.bits.len() != b.bits.len() {
        return Err(Error::InvalidInput(format!(
            "mask length mismatch: {} vs {}",
            a.bits.len(),
            b.bits.len()
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Frame-level precision, recall, F1; any zero denominator yields 0.
pub fn frame_f1(pred: &FrameMask, gt: &FrameMask) -> Result<(f64, f64, f64)> {
    if pred.bits.len() != gt.bits.len() {
        return Err(Error::InvalidInput(format!(
            "mask length mismatch: {} vs {}",
            pred.bits.len(),
            gt.bits.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &g) in pred.bits.iter().zip(&gt.bits) {
        tp += usize::from(p && g);
        fp += usize::from(p && !g);
        fneg += usize::from(!p && g);
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

/// Pointing game: does the largest frame value (first index on ties) land
/// inside the ground truth? The caller must exclude clips without the
/// class, so an empty ground truth is a contract violation.
pub fn pointing_game(frame_values: &[f64], gt: &FrameMask) -> Result<bool> {
    if !gt.any() {
        return Err(Error::Contract(
            "pointing game requires at least one active ground-truth frame".into(),
        ));
    }
    if frame_values.len() != gt.bits.len() {
        return Err(Error::InvalidInput(format!(
            "value/mask length mismatch: {} vs {}",
            frame_values.len(),
            gt.bits.len()
        )));
    }
    let mut best = 0usize;
    for (i, &v) in frame_values.iter().enumerate() {
        if v > frame_values[best] {
            best = i;
        }
    }
    Ok(gt.bits[best])
}

/// Model-frame probabilities for one class resampled onto the grid: each
/// grid frame takes the model frame containing its center (clamped at the
/// tail, so the map is total).
pub fn framewise_values(
    fp: &FramewisePrediction,
    class_id: usize,
    grid: FrameGrid,
) -> Result<Vec<f64>> {
    let (t, c) = fp.probs.dim();
    if class_id >= c {
        return Err(Error::InvalidInput(format!(
            "class_id {class_id} out of range for {c} classes"
        )));
    }
    if t == 0 || !fp.frame_duration.is_finite() || fp.frame_duration <= 0.0 {
        return Err(Error::InvalidInput("framewise prediction has no frames".into()));
    }
    let mut out = Vec::with_capacity(grid.n_frames);
    for k in 0..grid.n_frames {
        let center = (k as f64 + 0.5) / 10.0;
        let idx = ((center / fp.frame_duration) as usize).min(t - 1);
        out.push(fp.probs[[idx, class_id]]);
    }
    Ok(out)
}

/// Binarized framewise-model mask, sharing the attribution percentile
/// machinery so the comparison is like-for-like.
pub fn framewise_mask(
    fp: &FramewisePrediction,
    class_id: usize,
    grid: FrameGrid,
    tau: u8,
) -> Result<FrameMask> {
    let values = framewise_values(fp, class_id, grid)?;
    binarize(&values, tau, MaskSource::FramewiseModel)
}

/// The five reported methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    Ig,
    FwWs,
    FwSs,
    Random,
    Energy,
}

impl EvalMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMethod::Ig => "ig",
            EvalMethod::FwWs => "fw-ws",
            EvalMethod::FwSs => "fw-ss",
            EvalMethod::Random => "random",
            EvalMethod::Energy => "energy",
        }
    }

    pub fn mask_source(self) -> MaskSource {
        match self {
            EvalMethod::Ig => MaskSource::Attribution,
            EvalMethod::FwWs | EvalMethod::FwSs => MaskSource::FramewiseModel,
            EvalMethod::Random => MaskSource::Random,
            EvalMethod::Energy => MaskSource::Energy,
        }
    }

    pub fn all() -> [EvalMethod; 5] {
        [EvalMethod::Ig, EvalMethod::FwWs, EvalMethod::FwSs, EvalMethod::Random, EvalMethod::Energy]
    }
}

impl std::str::FromStr for EvalMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<EvalMethod> {
        match s {
            "ig" => Ok(EvalMethod::Ig),
            "fw-ws" => Ok(EvalMethod::FwWs),
            "fw-ss" => Ok(EvalMethod::FwSs),
            "random" => Ok(EvalMethod::Random),
            "energy" => Ok(EvalMethod::Energy),
            other => Err(Error::InvalidInput(format!("unknown method {other}"))),
        }
    }
}

/// One (clip, class) pair prepared for scoring: frame values plus the
/// ground-truth mask. Only pairs whose clip contains the class exist.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance {
    pub clip_id: String,
    pub class_id: usize,
    pub values: Vec<f64>,
    pub gt: FrameMask,
}

impl EvalInstance {
    fn validate(&self, n_classes: usize) -> Result<()> {
        if self.class_id >= n_classes {
            return Err(Error::InvalidInput(format!(
                "instance {} class {} out of range",
                self.clip_id, self.class_id
            )));
        }
        if self.values.len() != self.gt.bits.len() {
            return Err(Error::InvalidInput(format!(
                "instance {}: {} values vs {} mask frames",
                self.clip_id,
                self.values.len(),
                self.gt.bits.len()
            )));
        }
        if !self.gt.any() {
            return Err(Error::Contract(format!(
                "instance {} class {} has empty ground truth; caller must exclude it",
                self.clip_id, self.class_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: u8,
    pub mean_iou: f64,
    pub mean_f1: f64,
}

/// Per-instance metrics at one threshold, macro-averaged: per-class means
/// first, then an unweighted mean over classes with at least one instance.
fn macro_metrics_at(
    instances: &[EvalInstance],
    n_classes: usize,
    source: MaskSource,
    tau: u8,
) -> Result<(f64, f64)> {
    let mut iou_sums = vec![(0.0f64, 0usize); n_classes];
    let mut f1_sums = vec![0.0f64; n_classes];
    for inst in instances {
        let mask = binarize(&inst.values, tau, source)?;
        let i = iou(&mask, &inst.gt)?;
        let (_, _, f1) = frame_f1(&mask, &inst.gt)?;
        iou_sums[inst.class_id].0 += i;
        iou_sums[inst.class_id].1 += 1;
        f1_sums[inst.class_id] += f1;
    }
    let mut miou = 0.0;
    let mut mf1 = 0.0;
    let mut present = 0usize;
    for c in 0..n_classes {
        let (s, n) = iou_sums[c];
        if n > 0 {
            miou += s / n as f64;
            mf1 += f1_sums[c] / n as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(Error::InvalidInput("no instances to evaluate".into()));
    }
    Ok((miou / present as f64, mf1 / present as f64))
}

/// Macro IoU and F1 at every percentile threshold 1..=99.
pub fn threshold_sweep(
    instances: &[EvalInstance],
    n_classes: usize,
    source: MaskSource,
) -> Result<Vec<SweepRow>> {
    for inst in instances {
        inst.validate(n_classes)?;
    }
    (1..=99u8)
        .map(|tau| {
            let (mean_iou, mean_f1) = macro_metrics_at(instances, n_classes, source, tau)?;
            Ok(SweepRow { tau, mean_iou, mean_f1 })
        })
        .collect()
}

/// Threshold with the best mean IoU; lowest tau wins ties.
pub fn best_tau(rows: &[SweepRow]) -> Result<u8> {
    let best = rows
        .iter()
        .max_by(|a, b| a.mean_iou.total_cmp(&b.mean_iou).then(b.tau.cmp(&a.tau)))
        .ok_or_else(|| Error::InvalidInput("empty sweep".into()))?;
    Ok(best.tau)
}

/// Ready-to-score inputs for one method.
#[derive(Debug, Clone)]
pub struct MethodInputs {
    pub method: EvalMethod,
    pub tau: ThresholdSpec,
    pub instances: Vec<EvalInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMethodRow {
    pub method: EvalMethod,
    pub class_id: usize,
    pub n_instances: usize,
    pub tau: u8,
    pub mean_iou: f64,
    pub std_iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pg_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: EvalMethod,
    pub tau: u8,
    pub tau_selection: TauSelection,
    pub n_classes_present: usize,
    pub macro_iou: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_pg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub class_id: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Clip-level probabilities and labels for the classification table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub probs: Vec<f64>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_class: Vec<ClassMethodRow>,
    pub summary: Vec<MethodSummary>,
    pub classification: Vec<ClassificationRow>,
    pub classification_macro_f1: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Clip-level detection quality per class at the strict 0.5 gate.
pub fn classification_table(
    preds: &[ClipPrediction],
    n_classes: usize,
) -> Result<(Vec<ClassificationRow>, f64)> {
    let mut rows = Vec::with_capacity(n_classes);
    for p in preds {
        if p.probs.len() != n_classes || p.labels.len() != n_classes {
            return Err(Error::InvalidInput(format!(
                "clip {}: expected {n_classes} probs and labels",
                p.clip_id
            )));
        }
    }
    let mut macro_f1 = 0.0;
    for c in 0..n_classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fneg = 0usize;
        let mut support = 0usize;
        for p in preds {
            let predicted = p.probs[c] > 0.5;
            let actual = p.labels[c];
            support += usize::from(actual);
            tp += usize::from(predicted && actual);
            fp += usize::from(predicted && !actual);
            fneg += usize::from(!predicted && actual);
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        macro_f1 += f1;
        rows.push(ClassificationRow { class_id: c, support, precision, recall, f1 });
    }
    Ok((rows, macro_f1 / n_classes as f64))
}

/// Score every method at its threshold: per-class rows, macro summaries,
/// and the clip-level classification table.
pub fn evaluate(
    inputs: &[MethodInputs],
    clip_preds: &[ClipPrediction],
    n_classes: usize,
) -> Result<DetectionReport> {
    if n_classes == 0 {
        return Err(Error::InvalidInput("n_classes must be positive".into()));
    }
    let mut per_class = Vec::new();
    let mut summary = Vec::new();
    for mi in inputs {
        mi.tau.validate()?;
        let source = mi.method.mask_source();
        let mut by_class: Vec<Vec<&EvalInstance>> = vec![Vec::new(); n_classes];
        for inst in &mi.instances {
            inst.validate(n_classes)?;
            by_class[inst.class_id].push(inst);
        }
        let mut macros = Vec::new();
        for (c, instances) in by_class.iter().enumerate() {
            if instances.is_empty() {
                continue;
            }
            let mut ious = Vec::with_capacity(instances.len());
            let mut precisions = Vec::with_capacity(instances.len());
            let mut recalls = Vec::with_capacity(instances.len());
            let mut f1s = Vec::with_capacity(instances.len());
            let mut hits = 0usize;
            for inst in instances {
                let mask = binarize(&inst.values, mi.tau.tau, source)?;
                ious.push(iou(&mask, &inst.gt)?);
                let (p, r, f1) = frame_f1(&mask, &inst.gt)?;
                precisions.push(p);
                recalls.push(r);
                f1s.push(f1);
                hits += usize::from(pointing_game(&inst.values, &inst.gt)?);
            }
            let (mean_iou, std_iou) = mean_std(&ious);
            let row = ClassMethodRow {
                method: mi.method,
                class_id: c,
                n_instances: instances.len(),
                tau: mi.tau.tau,
                mean_iou,
                std_iou,
                precision: precisions.iter().sum::<f64>() / precisions.len() as f64,
                recall: recalls.iter().sum::<f64>() / recalls.len() as f64,
                f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
                pg_accuracy: hits as f64 / instances.len() as f64,
            };
            macros.push(row.clone());
            per_class.push(row);
        }
        if macros.is_empty() {
            return Err(Error::InvalidInput(format!(
                "method {} has no instances to evaluate",
                mi.method.as_str()
            )));
        }
        let n = macros.len() as f64;
        summary.push(MethodSummary {
            method: mi.method,
            tau: mi.tau.tau,
            tau_selection: mi.tau.selection,
            n_classes_present: macros.len(),
            macro_iou: macros.iter().map(|r| r.mean_iou).sum::<f64>() / n,
            macro_f1: macros.iter().map(|r| r.f1).sum::<f64>() / n,
            macro_precision: macros.iter().map(|r| r.precision).sum::<f64>() / n,
            macro_recall: macros.iter().map(|r| r.recall).sum::<f64>() / n,
            macro_pg: macros.iter().map(|r| r.pg_accuracy).sum::<f64>() / n,
        });
    }
    let (classification, classification_macro_f1) = classification_table(clip_preds, n_classes)?;
    Ok(DetectionReport { per_class, summary, classification, classification_macro_f1 })
}

fn write_text(path: &Path, body: String) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Per-class rows plus one `macro` row per method.
pub fn write_detection_csv(
    report: &DetectionReport,
    class_names: &[String],
    path: &Path,
) -> Result<()> {
    let mut body = String::from(
        "method,class,n_instances,tau,mean_iou,std_iou,precision,recall,f1,pg_accuracy\n",
    );
    for r in &report.per_class {
        let name = class_names
            .get(r.class_id)
            .map(String::as_str)
            .unwrap_or("unknown");
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.method.as_str(),
            name,
            r.n_instances,
            r.tau,
            r.mean_iou,
            r.std_iou,
            r.precision,
            r.recall,
            r.f1,
            r.pg_accuracy
        ));
    }
    for s in &report.summary {
        body.push_str(&format!(
            "{},macro,{},{},{},,{},{},{},{}\n",
            s.method.as_str(),
            s.n_classes_present,
            s.tau,
            s.macro_iou,
            s.macro_precision,
            s.macro_recall,
            s.macro_f1,
            s.macro_pg
        ));
    }
    write_text(path, body)
}

pub fn write_classification_csv(
    report: &DetectionReport,
    class_names: &[String],
    path: &Path,
) -> Result<()> {
    let mut body = String::from("class,support,precision,recall,f1\n");
    for r in &report.classification {
        let name = class_names
            .get(r.class_id)
            .map(String::as_str)
            .unwrap_or("unknown");
        body.push_str(&format!(
            "{name},{},{},{},{}\n",
            r.support, r.precision, r.recall, r.f1
        ));
    }
    body.push_str(&format!("macro,,,,{}\n", report.classification_macro_f1));
    write_text(path, body)
}

pub fn write_report_json(report: &DetectionReport, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(report).expect("serializable");
    write_text(path, body + "\n")
}

/// Sweep curves for plotting: one row per (method, tau).
pub fn write_sweep_csv(curves: &[(EvalMethod, Vec<SweepRow>)], path: &Path) -> Result<()> {
    let mut body = String::from("method,tau,mean_iou,mean_f1\n");
    for (method, rows) in curves {
        for r in rows {
            body.push_str(&format!(
                "{},{},{},{}\n",
                method.as_str(),
                r.tau,
                r.mean_iou,
                r.mean_f1
            ));
        }
    }
    write_text(path, body)
}
