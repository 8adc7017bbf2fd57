//! Log-mel spectrogram frontend.
//!
//! The STFT is expressed as two matrix products against constant cosine
//! and sine matrices rather than an FFT: the same matrices drive both the
//! pure functions here and the differentiable graph path in [`diff`], so
//! waveform-level attribution can backpropagate through the frontend and
//! the two paths agree numerically.
//!
//! Conventions pinned here: reflect center-padding with
//! `T_spec = floor(len/hop) + 1` frames, symmetric Hamming window,
//! HTK mel scale (2595·log10(1 + f/700)) with peak-1 triangles, and a
//! log floor applied to mel power.

pub mod diff;

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::reflect_index;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelFrontendConfig {
    pub window_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl MelFrontendConfig {
    /// 8 kHz desk scale: window/hop ratio and band edges scaled
    /// proportionally from the 32 kHz configuration.
    pub fn desk() -> Self {
        Self {
            window_len: 256,
            hop: 80,
            n_mels: 32,
            fmin: 25.0,
            fmax: 3500.0,
            log_floor: 1e-10,
        }
    }

    /// 32 kHz full scale: 1024-sample Hamming window, 320-sample hop,
    /// 64 mel bins spanning 50 Hz to 14 kHz.
    pub fn full() -> Self {
        Self {
            window_len: 1024,
            hop: 320,
            n_mels: 64,
            fmin: 50.0,
            fmax: 14000.0,
            log_floor: 1e-10,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 {
            return Err(Error::InvalidInput("window_len and hop must be positive".into()));
        }
        if self.hop > self.window_len {
            return Err(Error::InvalidInput(format!(
                "hop {} exceeds window_len {}",
                self.hop, self.window_len
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::InvalidInput("n_mels must be at least 1".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got [{}, {}]",
                self.fmin, self.fmax
            )));
        }
        if !self.log_floor.is_finite() || self.log_floor <= 0.0 {
            return Err(Error::InvalidInput("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of one-sided spectrum bins.
    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Spectral frames produced for a signal of `n_samples`.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        n_samples / self.hop + 1
    }

    /// Seconds between spectral frame centers.
    pub fn frame_period(&self, sample_rate: u32) -> f64 {
        self.hop as f64 / sample_rate as f64
    }
}

/// Log-mel energies, `T_spec x n_mels`, with per-frame center times.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub frame_times: Vec<f64>,
}

#[derive(Serialize)]
struct SpectrogramSidecar<'a> {
    t_spec: usize,
    n_mels: usize,
    frame_times: &'a [f64],
}

impl MelSpectrogram {
    /// Binary dump (row-major little-endian f64) plus a `<path>.json`
    /// sidecar carrying `{t_spec, n_mels, frame_times}`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * self.values.len());
        for &v in self.values.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = SpectrogramSidecar {
            t_spec: self.values.nrows(),
            n_mels: self.values.ncols(),
            frame_times: &self.frame_times,
        };
        let mut spath = path.as_os_str().to_owned();
        spath.push(".json");
        let spath = std::path::PathBuf::from(spath);
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Contract(format!("sidecar serialization: {e}")))?;
        std::fs::write(&spath, json).map_err(|e| Error::io(&spath, e))?;
        Ok(())
    }
}

/// Symmetric Hamming window.
pub fn hamming(window_len: usize) -> Array1<f64> {
    if window_len == 1 {
        return Array1::ones(1);
    }
    let n = window_len as f64 - 1.0;
    Array1::from_iter(
        (0..window_len).map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n).cos()),
    )
}

/// Constant DFT matrices, both `(n_bins, window_len)`:
/// `cos[k][n] = cos(2πkn/W)` and `sin[k][n] = -sin(2πkn/W)`, so that for a
/// frame x, `re = cos·x`, `im = sin·x`, and power `= re² + im²`.
pub fn dft_matrices(window_len: usize) -> (Array2<f64>, Array2<f64>) {
    let n_bins = window_len / 2 + 1;
    let mut cos_m = Array2::zeros((n_bins, window_len));
    let mut sin_m = Array2::zeros((n_bins, window_len));
    for k in 0..n_bins {
        for n in 0..window_len {
            let phase = 2.0 * std::f64::consts::PI * (k * n) as f64 / window_len as f64;
            cos_m[[k, n]] = phase.cos();
            sin_m[[k, n]] = -phase.sin();
        }
    }
    (cos_m, sin_m)
}

/// Overlapping analysis frames, `(T_spec, window_len)`, reflect-padded by
/// `window_len/2` so frame t is centered on sample `t*hop`.
pub fn frame_matrix(samples: &[f64], window_len: usize, hop: usize) -> Array2<f64> {
    let len = samples.len();
    let n_frames = len / hop + 1;
    let half = (window_len / 2) as isize;
    let mut frames = Array2::zeros((n_frames, window_len));
    for t in 0..n_frames {
        let start = (t * hop) as isize - half;
        for n in 0..window_len {
            frames[[t, n]] = samples[reflect_index(start + n as isize, len)];
        }
    }
    frames
}

/// Power spectrogram, `(T_spec, n_bins)`.
pub fn stft_power(samples: &[f64], cfg: &MelFrontendConfig) -> Result<Array2<f64>> {
    if samples.len() < cfg.hop {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one hop ({})",
            samples.len(),
            cfg.hop
        )));
    }
    let window = hamming(cfg.window_len);
    let mut frames = frame_matrix(samples, cfg.window_len, cfg.hop);
    for mut row in frames.rows_mut() {
        row *= &window;
    }
    let (cos_m, sin_m) = dft_matrices(cfg.window_len);
    let re = frames.dot(&cos_m.t());
    let im = frames.dot(&sin_m.t());
    Ok(&re * &re + &im * &im)
}

/// Filter peak frequencies in Hz: `n_mels + 2` points equally spaced on
/// the HTK mel scale from fmin to fmax; points 1..=n_mels are the peaks.
fn mel_points(cfg: &MelFrontendConfig) -> Vec<f64> {
    let to_mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let from_mel = |m: f64| 700.0 * (10.0f64.powf(m / 2595.0) - 1.0);
    let lo = to_mel(cfg.fmin);
    let hi = to_mel(cfg.fmax);
    (0..cfg.n_mels + 2)
        .map(|i| from_mel(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Triangular mel filterbank, `(n_mels, n_bins)`, peak weight 1.
pub fn mel_filterbank(cfg: &MelFrontendConfig, sample_rate: u32) -> Result<Array2<f64>> {
    cfg.validate(sample_rate)?;
    let points = mel_points(cfg);
    let n_bins = cfg.n_bins();
    let bin_hz = sample_rate as f64 / cfg.window_len as f64;
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for j in 0..cfg.n_mels {
        let (lo, center, hi) = (points[j], points[j + 1], points[j + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f >= lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f <= hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb[[j, k]] = w.max(0.0);
        }
    }
    Ok(fb)
}

/// Full frontend: power spectrogram, mel projection, floored log.
pub fn logmel(samples: &[f64], sample_rate: u32, cfg: &MelFrontendConfig) -> Result<MelSpectrogram> {
    cfg.validate(sample_rate)?;
    let power = stft_power(samples, cfg)?;
    let fb = mel_filterbank(cfg, sample_rate)?;
    let mel_power = power.dot(&fb.t());
    let values = mel_power.mapv(|p| p.max(cfg.log_floor).ln());
    let period = cfg.frame_period(sample_rate);
    let frame_times = (0..values.nrows()).map(|t| t as f64 * period).collect();
    Ok(MelSpectrogram { values, frame_times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DESK_SR: u32 = 8000;

    #[test]
    fn zero_waveform_gives_zero_power_and_floored_logmel() {
        let cfg = MelFrontendConfig::desk();
        let samples = vec![0.0; 1600];
        let p = stft_power(&samples, &cfg).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        let m = logmel(&samples, DESK_SR, &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        assert!(m.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn full_scale_frame_count() {
        let cfg = MelFrontendConfig::full();
        let samples = vec![0.0; 320_000];
        let p = stft_power(&samples, &cfg).unwrap();
        assert_eq!(p.nrows(), 1001);
        assert_eq!(p.ncols(), 513);
    }

    #[test]
    fn too_short_signal_is_rejected() {
        let cfg = MelFrontendConfig::desk();
        assert!(stft_power(&vec![0.0; cfg.hop - 1], &cfg).is_err());
        assert!(stft_power(&[], &cfg).is_err());
    }

    /// Naive reflect-padded windowed DFT, written independently of the
    /// production path (explicit index folding, per-bin loops).
    fn naive_frame_power(samples: &[f64], cfg: &MelFrontendConfig, t: usize) -> Vec<f64> {
        let len = samples.len() as isize;
        let w = cfg.window_len;
        let half = (w / 2) as isize;
        let window = hamming(w);
        let mut frame = vec![0.0; w];
        for n in 0..w {
            let mut i = (t * cfg.hop) as isize - half + n as isize;
            // Fold into range by explicit bouncing.
            loop {
                if i < 0 {
                    i = -i;
                } else if i >= len && len > 1 {
                    i = 2 * (len - 1) - i;
                } else {
                    break;
                }
                if len == 1 {
                    i = 0;
                    break;
                }
            }
            frame[n] = samples[i as usize] * window[n];
        }
        (0..w / 2 + 1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &x) in frame.iter().enumerate() {
                    let phase = 2.0 * std::f64::consts::PI * (k * n) as f64 / w as f64;
                    re += x * phase.cos();
                    im -= x * phase.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn sine_at_bin_center_concentrates_and_matches_naive_dft() {
        let cfg = MelFrontendConfig::desk();
        // Bin 32 of a 256-point DFT at 8 kHz sits exactly at 1000 Hz.
        let bin = 32;
        let freq = bin as f64 * DESK_SR as f64 / cfg.window_len as f64;
        assert_eq!(freq, 1000.0);
        let n = 4000;
        let samples: Vec<f64> = (0..n)
            .map(|i| 0.8 * (2.0 * std::f64::consts::PI * freq * i as f64 / DESK_SR as f64).sin())
            .collect();
        let p = stft_power(&samples, &cfg).unwrap();

        for t in 0..p.nrows() {
            let oracle = naive_frame_power(&samples, &cfg, t);
            for k in 0..p.ncols() {
                let (a, b) = (p[[t, k]], oracle[k]);
                let denom = a.abs().max(b.abs()).max(1e-9);
                assert!(
                    (a - b).abs() / denom < 1e-9,
                    "frame {t} bin {k}: {a} vs {b}"
                );
            }
        }

        // Steady-state frames (window fully inside the signal): >= 90% of
        // frame power in the 3 bins around the sine bin.
        let half = cfg.window_len / 2;
        for t in 0..p.nrows() {
            let center = t * cfg.hop;
            if center < half || center + half > n {
                continue;
            }
            let total: f64 = p.row(t).sum();
            let local: f64 = (bin - 1..=bin + 1).map(|k| p[[t, k]]).sum();
            assert!(
                local >= 0.9 * total,
                "frame {t}: {local} < 0.9 * {total}"
            );
        }
    }

    #[test]
    fn filterbank_centers_match_htk_references() {
        // Frozen HTK-scale center frequencies (computed externally).
        let full = MelFrontendConfig::full();
        let p = mel_points(&full);
        assert!((p[1] - 85.1310012812582).abs() < 1e-6);
        assert!((p[2] - 121.90758556388141).abs() < 1e-6);
        assert!((p[32] - 2545.255299187455).abs() < 1e-6);
        assert!((p[64] - 13342.24260920568).abs() < 1e-6);

        let desk = MelFrontendConfig::desk();
        let d = mel_points(&desk);
        assert!((d[1] - 64.63914986528792).abs() < 1e-6);
        assert!((d[16] - 999.1604336258554).abs() < 1e-6);
        assert!((d[32] - 3282.2705919994555).abs() < 1e-6);
    }

    #[test]
    fn filterbank_structure_full_scale() {
        let cfg = MelFrontendConfig::full();
        let sr = 32_000;
        let fb = mel_filterbank(&cfg, sr).unwrap();
        assert_eq!(fb.shape(), &[64, 513]);
        let points = mel_points(&cfg);
        let centers = &points[1..=64];
        for w in centers.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(centers[0] >= 50.0);
        assert!(*centers.last().unwrap() <= 14000.0);
        // Peak weight 1 at the bin nearest each center whenever a bin falls
        // inside the triangle; every weight within [0, 1].
        assert!(fb.iter().all(|&w| (0.0..=1.0).contains(&w)));
        // Every bin strictly inside (fmin, fmax) is covered.
        let bin_hz = sr as f64 / cfg.window_len as f64;
        for k in 0..513 {
            let f = k as f64 * bin_hz;
            if f > cfg.fmin && f < cfg.fmax {
                let total: f64 = fb.column(k).sum();
                assert!(total > 0.0, "bin {k} at {f} Hz uncovered");
            }
        }
    }

    #[test]
    fn single_filter_spans_whole_band() {
        let cfg = MelFrontendConfig {
            n_mels: 1,
            ..MelFrontendConfig::desk()
        };
        let fb = mel_filterbank(&cfg, DESK_SR).unwrap();
        assert_eq!(fb.nrows(), 1);
        let row = fb.row(0);
        let peak_bin = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let points = mel_points(&cfg);
        let bin_hz = DESK_SR as f64 / cfg.window_len as f64;
        // The peak sits at one of the two bins bracketing the mel midpoint
        // (the flatter edge of an asymmetric triangle can win the argmax).
        assert!((peak_bin as f64 * bin_hz - points[1]).abs() < bin_hz + 1e-9);
        // Rises to the peak, falls after.
        for k in 1..=peak_bin {
            assert!(row[k] >= row[k - 1] - 1e-12);
        }
        for k in peak_bin + 1..row.len() {
            assert!(row[k] <= row[k - 1] + 1e-12);
        }
    }

    #[test]
    fn flat_spectrum_projects_to_weight_sums() {
        let cfg = MelFrontendConfig::desk();
        let fb = mel_filterbank(&cfg, DESK_SR).unwrap();
        let flat = Array2::ones((3, cfg.n_bins()));
        let out = flat.dot(&fb.t());
        for j in 0..cfg.n_mels {
            let expect: f64 = fb.row(j).sum();
            for t in 0..3 {
                assert!((out[[t, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn doubling_amplitude_raises_logmel_by_log4() {
        let cfg = MelFrontendConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let samples: Vec<f64> = (0..1200).map(|_| rng.random_range(-0.4..0.4)).collect();
        let doubled: Vec<f64> = samples.iter().map(|&x| 2.0 * x).collect();
        let a = logmel(&samples, DESK_SR, &cfg).unwrap();
        let b = logmel(&doubled, DESK_SR, &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        let log4 = 4.0f64.ln();
        for (&va, &vb) in a.values.iter().zip(b.values.iter()) {
            if va > floor + log4 {
                assert!((vb - va - log4).abs() < 1e-9, "{va} -> {vb}");
            } else {
                assert!(vb >= va);
            }
        }
    }

    #[test]
    fn frame_times_step_by_hop() {
        let cfg = MelFrontendConfig::desk();
        let m = logmel(&vec![0.1; 800], DESK_SR, &cfg).unwrap();
        assert_eq!(m.frame_times.len(), m.values.nrows());
        assert_eq!(m.frame_times[0], 0.0);
        assert!((m.frame_times[1] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn spectrogram_dump_round_trips() {
        let cfg = MelFrontendConfig::desk();
        let m = logmel(&vec![0.05; 480], DESK_SR, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.bin");
        m.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 8 * m.values.len());
        let first = f64::from_le_bytes(bytes[..8].try_into().unwrap());
        assert_eq!(first.to_bits(), m.values[[0, 0]].to_bits());
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("bin.json")).unwrap())
                .unwrap();
        assert_eq!(sidecar["t_spec"], m.values.nrows());
        assert_eq!(sidecar["n_mels"], cfg.n_mels);
    }

    proptest! {
        #[test]
        fn frame_count_formula_holds(len in 80usize..4000) {
            let cfg = MelFrontendConfig::desk();
            let samples = vec![0.25; len];
            let p = stft_power(&samples, &cfg).unwrap();
            prop_assert_eq!(p.nrows(), len / cfg.hop + 1);
            prop_assert_eq!(p.ncols(), cfg.n_bins());
        }

        #[test]
        fn power_of_two_scaling_never_decreases_logmel(
            seed in 0u64..1000,
            len in 200usize..1500,
            k_exp in 1u32..3,
        ) {
            // Powers of two scale every float exactly, so monotonicity
            // holds with no tolerance.
            let cfg = MelFrontendConfig::desk();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..len).map(|_| rng.random_range(-0.2..0.2)).collect();
            let k = 2.0f64.powi(k_exp as i32);
            let scaled: Vec<f64> = samples.iter().map(|&x| k * x).collect();
            let a = logmel(&samples, DESK_SR, &cfg).unwrap();
            let b = logmel(&scaled, DESK_SR, &cfg).unwrap();
            for (&va, &vb) in a.values.iter().zip(b.values.iter()) {
                prop_assert!(vb >= va);
            }
        }
    }

    #[test]
    fn generic_upscaling_never_decreases_logmel() {
        // Non-power-of-two gain: same property within fp rounding headroom.
        let cfg = MelFrontendConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let samples: Vec<f64> = (0..900).map(|_| rng.random_range(-0.3..0.3)).collect();
        let scaled: Vec<f64> = samples.iter().map(|&x| 1.7 * x).collect();
        let a = logmel(&samples, DESK_SR, &cfg).unwrap();
        let b = logmel(&scaled, DESK_SR, &cfg).unwrap();
        for (&va, &vb) in a.values.iter().zip(b.values.iter()) {
            assert!(vb >= va - 1e-9);
        }
    }

    #[test]
    fn logmel_is_deterministic() {
        let cfg = MelFrontendConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let samples: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = logmel(&samples, DESK_SR, &cfg).unwrap();
        let b = logmel(&samples, DESK_SR, &cfg).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.frame_times, b.frame_times);
    }

    #[test]
    fn config_validation_rejects_bad_bands() {
        let mut cfg = MelFrontendConfig::desk();
        cfg.fmax = 5000.0; // above 8 kHz Nyquist
        assert!(cfg.validate(DESK_SR).is_err());
        let mut cfg = MelFrontendConfig::desk();
        cfg.fmin = 3600.0;
        assert!(cfg.validate(DESK_SR).is_err());
        let mut cfg = MelFrontendConfig::desk();
        cfg.hop = 300;
        assert!(cfg.validate(DESK_SR).is_err());
        let mut cfg = MelFrontendConfig::desk();
        cfg.n_mels = 0;
        assert!(cfg.validate(DESK_SR).is_err());
    }

    /// A lone drone event lights up the log-mel frames inside its span.
    #[test]
    fn event_frames_carry_more_logmel_energy_than_background() {
        use crate::scenegen::{self, Pool, SceneSpec};

        let mut reg: Vec<_> = scenegen::default_registry(Pool::Train)
            .into_iter()
            .filter(|d| d.name == "harmonic_drone")
            .collect();
        reg[0].class_id = 0;
        let spec = SceneSpec::with_defaults(2.0, DESK_SR, 1, Pool::Train, 314);
        let out = scenegen::synthesize_scene(&spec, &reg).unwrap();
        let ann = &out.annotations[0];

        let cfg = MelFrontendConfig::desk();
        let mel = logmel(&out.clip.samples, DESK_SR, &cfg).unwrap();
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for (t, &time) in mel.frame_times.iter().enumerate() {
            let mean = mel.values.row(t).mean().unwrap();
            if time >= ann.onset_s && time < ann.offset_s {
                inside.push(mean);
            } else {
                outside.push(mean);
            }
        }
        assert!(inside.len() >= 3 && outside.len() >= 3);
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            avg(&inside) > avg(&outside) + 0.5,
            "inside {} vs outside {}",
            avg(&inside),
            avg(&outside)
        );
    }
}
