//! Differentiable frontend: the same framing, window, DFT, and mel
//! constants as the pure path, assembled inside an autodiff graph so
//! gradients reach the waveform.

use ndarray::Array2;

use super::{dft_matrices, hamming, mel_filterbank, MelFrontendConfig};
use crate::error::Result;
use crate::grad::{Graph, TensorId};

/// Precomputed constants for building log-mel graphs over waveforms.
pub struct DiffFrontend {
    cfg: MelFrontendConfig,
    sample_rate: u32,
    /// Window as a `(1, window_len)` row for broadcasting over frames.
    window_row: Array2<f64>,
    /// `(window_len, n_bins)` — transposed DFT cosine matrix.
    cos_t: Array2<f64>,
    /// `(window_len, n_bins)` — transposed DFT sine matrix.
    sin_t: Array2<f64>,
    /// `(n_bins, n_mels)` — transposed mel filterbank.
    mel_t: Array2<f64>,
}

impl DiffFrontend {
    pub fn new(cfg: &MelFrontendConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let (cos_m, sin_m) = dft_matrices(cfg.window_len);
        let fb = mel_filterbank(cfg, sample_rate)?;
        let window = hamming(cfg.window_len);
        let window_row = window
            .into_shape_with_order((1, cfg.window_len))
            .expect("1-D to row");
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            window_row,
            cos_t: cos_m.t().as_standard_layout().to_owned(),
            sin_t: sin_m.t().as_standard_layout().to_owned(),
            mel_t: fb.t().as_standard_layout().to_owned(),
        })
    }

    pub fn config(&self) -> &MelFrontendConfig {
        &self.cfg
    }

    /// Sample rate the mel filterbank was built for.
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Build the log-mel computation over a 1-D waveform tensor.
    /// Returns a `(T_spec, n_mels)` tensor of floored log energies.
    pub fn logmel_graph(&self, g: &mut Graph, wave: TensorId) -> Result<TensorId> {
        let frames = g.frame_signal(wave, self.cfg.window_len, self.cfg.hop)?;
        let t_spec = g.shape(frames)[0];
        let win = g.constant(self.window_row.clone().into_dyn());
        let win = g.broadcast_to(win, &[t_spec, self.cfg.window_len])?;
        let frames = g.mul(frames, win)?;
        let cos_t = g.constant(self.cos_t.clone().into_dyn());
        let sin_t = g.constant(self.sin_t.clone().into_dyn());
        let re = g.matmul(frames, cos_t)?;
        let im = g.matmul(frames, sin_t)?;
        let re2 = g.mul(re, re)?;
        let im2 = g.mul(im, im)?;
        let power = g.add(re2, im2)?;
        let mel_t = g.constant(self.mel_t.clone().into_dyn());
        let mel_power = g.matmul(power, mel_t)?;
        Ok(g.log_clamped(mel_power, self.cfg.log_floor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::logmel;
    use crate::grad::{central_difference, relative_error};
    use ndarray::ArrayD;
    use ndarray::IxDyn;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SR: u32 = 8000;

    fn random_wave(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn graph_path_matches_pure_path() {
        let cfg = MelFrontendConfig::desk();
        let samples = random_wave(53, 1600);
        let pure = logmel(&samples, SR, &cfg).unwrap();

        let fe = DiffFrontend::new(&cfg, SR).unwrap();
        let mut g = Graph::new();
        let wave = g.leaf(ArrayD::from_shape_vec(IxDyn(&[1600]), samples).unwrap());
        let lm = fe.logmel_graph(&mut g, wave).unwrap();
        let got = g.value(lm);

        assert_eq!(got.shape(), pure.values.shape());
        for (a, b) in got.iter().zip(pure.values.iter()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn waveform_gradient_matches_finite_differences() {
        // Short signal keeps the FD sweep cheap: every sample perturbed.
        let cfg = MelFrontendConfig {
            window_len: 32,
            hop: 10,
            n_mels: 6,
            fmin: 100.0,
            fmax: 3000.0,
            log_floor: 1e-10,
        };
        let samples = random_wave(59, 40);
        let fe = DiffFrontend::new(&cfg, SR).unwrap();

        let mut g = Graph::new();
        let wave = g.leaf(ArrayD::from_shape_vec(IxDyn(&[40]), samples.clone()).unwrap());
        let lm = fe.logmel_graph(&mut g, wave).unwrap();
        let y = g.mean_all(lm).unwrap();
        g.backward(y).unwrap();
        let analytic = g.grad(wave);

        let fd = central_difference(
            |v| {
                let mut g = Graph::new();
                let wave = g.leaf(ArrayD::from_shape_vec(IxDyn(&[40]), v.to_vec()).unwrap());
                let lm = fe.logmel_graph(&mut g, wave).unwrap();
                let y = g.mean_all(lm).unwrap();
                g.scalar_value(y)
            },
            &samples,
            1e-5,
        );
        for (a, b) in analytic.iter().zip(&fd) {
            let err = relative_error(*a, *b);
            assert!(err < 1e-4, "analytic {a} vs fd {b}: {err}");
        }
    }

    #[test]
    fn zero_waveform_gradient_is_zero() {
        // At the all-zero baseline every mel power sits below the floor,
        // so the clamped log has zero gradient into the waveform.
        let cfg = MelFrontendConfig::desk();
        let fe = DiffFrontend::new(&cfg, SR).unwrap();
        let mut g = Graph::new();
        let wave = g.leaf(ArrayD::zeros(IxDyn(&[800])));
        let lm = fe.logmel_graph(&mut g, wave).unwrap();
        let y = g.mean_all(lm).unwrap();
        g.backward(y).unwrap();
        assert!(g.grad(wave).iter().all(|&v| v == 0.0));
    }
}
