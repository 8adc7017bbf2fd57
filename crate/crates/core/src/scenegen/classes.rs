//! Parametric event class definitions and their waveform generators.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::f64::consts::PI;

/// Temporal character of a class; drives the envelope contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Near-constant short-time RMS over the whole event.
    Stationary,
    /// Energy concentrated in short bursts separated by near-silence.
    Transient,
}

/// Foreground pool a clip is drawn from. Class parameters are perturbed
/// per pool so train and eval events never share exact synth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Train,
    Eval,
}

impl Pool {
    fn tag(self) -> u64 {
        match self {
            Pool::Train => 0,
            Pool::Eval => 1,
        }
    }
}

/// Generator shape plus its parameters. Frequencies in Hz, times in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SynthKind {
    /// Sum of random-phase sinusoids spread over a band, envelope flattened.
    BandNoise { f_lo: f64, f_hi: f64, n_components: usize },
    /// Harmonic stack with slow independent per-harmonic amplitude wobble.
    HarmonicDrone { f0: f64, n_harmonics: usize, wobble_hz: f64, wobble_depth: f64 },
    /// Band noise multiplied by a sinusoidal amplitude modulator.
    AmNoise { f_lo: f64, f_hi: f64, n_components: usize, am_hz: f64, am_depth: f64 },
    /// Short windowed noise bursts on a jittered periodic grid.
    ClickTrain { rate_hz: f64, click_ms: f64, f_lo: f64, f_hi: f64 },
    /// Exponentially decaying tone pips on a periodic grid.
    ToneBursts { rate_hz: f64, carrier_hz: f64, decay_ms: f64 },
    /// Short linear frequency sweeps on a periodic grid.
    ChirpSequence { rate_hz: f64, f_start: f64, f_end: f64, chirp_ms: f64 },
    /// Pairs of damped low-frequency thumps on a periodic grid.
    ImpulsePairs { rate_hz: f64, pair_gap_ms: f64, thump_hz: f64, decay_ms: f64 },
    /// Gated tone bursts alternating between two carriers.
    Warble { rate_hz: f64, f_a: f64, f_b: f64, burst_ms: f64 },
}

/// One sound event class: identity, temporal kind, generator, duration bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventClassDef {
    pub class_id: usize,
    pub name: String,
    pub kind: EventKind,
    pub synth: SynthKind,
    /// Inclusive bounds on event duration in seconds.
    pub duration_range: (f64, f64),
}

const STATIONARY_DUR: (f64, f64) = (0.45, 0.95);
const TRANSIENT_DUR: (f64, f64) = (0.35, 0.80);

/// The ten default classes, with per-pool parameter perturbation so the two
/// pools never share exact generator parameters for any class.
pub fn default_registry(pool: Pool) -> Vec<EventClassDef> {
    let base: Vec<(&str, EventKind, SynthKind)> = vec![
        (
            "band_noise",
            EventKind::Stationary,
            SynthKind::BandNoise { f_lo: 400.0, f_hi: 900.0, n_components: 64 },
        ),
        (
            "harmonic_drone",
            EventKind::Stationary,
            SynthKind::HarmonicDrone { f0: 110.0, n_harmonics: 8, wobble_hz: 0.7, wobble_depth: 0.12 },
        ),
        (
            "am_noise",
            EventKind::Stationary,
            SynthKind::AmNoise { f_lo: 1000.0, f_hi: 2000.0, n_components: 64, am_hz: 22.0, am_depth: 0.6 },
        ),
        (
            "low_rumble",
            EventKind::Stationary,
            SynthKind::BandNoise { f_lo: 50.0, f_hi: 180.0, n_components: 32 },
        ),
        (
            "narrow_hiss",
            EventKind::Stationary,
            SynthKind::BandNoise { f_lo: 2300.0, f_hi: 3300.0, n_components: 64 },
        ),
        (
            "click_train",
            EventKind::Transient,
            SynthKind::ClickTrain { rate_hz: 12.0, click_ms: 3.0, f_lo: 1800.0, f_hi: 3400.0 },
        ),
        (
            "tone_bursts",
            EventKind::Transient,
            SynthKind::ToneBursts { rate_hz: 6.5, carrier_hz: 1500.0, decay_ms: 14.0 },
        ),
        (
            "chirp_seq",
            EventKind::Transient,
            SynthKind::ChirpSequence { rate_hz: 7.7, f_start: 600.0, f_end: 1400.0, chirp_ms: 20.0 },
        ),
        (
            "impulse_pairs",
            EventKind::Transient,
            SynthKind::ImpulsePairs { rate_hz: 5.5, pair_gap_ms: 30.0, thump_hz: 450.0, decay_ms: 4.0 },
        ),
        (
            "warble",
            EventKind::Transient,
            SynthKind::Warble { rate_hz: 7.0, f_a: 500.0, f_b: 800.0, burst_ms: 30.0 },
        ),
    ];

    base.into_iter()
        .enumerate()
        .map(|(class_id, (name, kind, synth))| {
            let mut rng = pool_rng(class_id, pool);
            let synth = perturb(synth, &mut rng);
            let duration_range = match kind {
                EventKind::Stationary => STATIONARY_DUR,
                EventKind::Transient => TRANSIENT_DUR,
            };
            EventClassDef { class_id, name: name.to_string(), kind, synth, duration_range }
        })
        .collect()
}

/// Deterministic per-(class, pool) stream, independent of call order.
fn pool_rng(class_id: usize, pool: Pool) -> ChaCha8Rng {
    let seed = (class_id as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ pool.tag().wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multiplicative jitter of at most +-6% on frequencies and rates.
fn jitter(rng: &mut ChaCha8Rng, v: f64) -> f64 {
    v * (1.0 + 0.06 * (rng.random::<f64>() * 2.0 - 1.0))
}

fn perturb(synth: SynthKind, rng: &mut ChaCha8Rng) -> SynthKind {
    match synth {
        SynthKind::BandNoise { f_lo, f_hi, n_components } => SynthKind::BandNoise {
            f_lo: jitter(rng, f_lo),
            f_hi: jitter(rng, f_hi),
            n_components,
        },
        SynthKind::HarmonicDrone { f0, n_harmonics, wobble_hz, wobble_depth } => {
            SynthKind::HarmonicDrone {
                f0: jitter(rng, f0),
                n_harmonics,
                wobble_hz: jitter(rng, wobble_hz),
                wobble_depth,
            }
        }
        SynthKind::AmNoise { f_lo, f_hi, n_components, am_hz, am_depth } => SynthKind::AmNoise {
            f_lo: jitter(rng, f_lo),
            f_hi: jitter(rng, f_hi),
            n_components,
            am_hz: jitter(rng, am_hz),
            am_depth,
        },
        SynthKind::ClickTrain { rate_hz, click_ms, f_lo, f_hi } => SynthKind::ClickTrain {
            rate_hz: jitter(rng, rate_hz),
            click_ms,
            f_lo: jitter(rng, f_lo),
            f_hi: jitter(rng, f_hi),
        },
        SynthKind::ToneBursts { rate_hz, carrier_hz, decay_ms } => SynthKind::ToneBursts {
            rate_hz: jitter(rng, rate_hz),
            carrier_hz: jitter(rng, carrier_hz),
            decay_ms,
        },
        SynthKind::ChirpSequence { rate_hz, f_start, f_end, chirp_ms } => SynthKind::ChirpSequence {
            rate_hz: jitter(rng, rate_hz),
            f_start: jitter(rng, f_start),
            f_end: jitter(rng, f_end),
            chirp_ms,
        },
        SynthKind::ImpulsePairs { rate_hz, pair_gap_ms, thump_hz, decay_ms } => {
            SynthKind::ImpulsePairs {
                rate_hz: jitter(rng, rate_hz),
                pair_gap_ms,
                thump_hz: jitter(rng, thump_hz),
                decay_ms,
            }
        }
        SynthKind::Warble { rate_hz, f_a, f_b, burst_ms } => SynthKind::Warble {
            rate_hz: jitter(rng, rate_hz),
            f_a: jitter(rng, f_a),
            f_b: jitter(rng, f_b),
            burst_ms,
        },
    }
}

/// Render `n` samples of the raw (un-normalized) event waveform.
pub(crate) fn render(synth: &SynthKind, n: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = f64::from(sample_rate);
    match synth {
        SynthKind::BandNoise { f_lo, f_hi, n_components } => {
            let mut x = sinusoid_bed(n, sr, *f_lo, *f_hi, *n_components, rng);
            agc_flatten(&mut x, (0.1 * sr) as usize);
            x
        }
        SynthKind::HarmonicDrone { f0, n_harmonics, wobble_hz, wobble_depth } => {
            let mut x = vec![0.0; n];
            for h in 1..=*n_harmonics {
                let f = f0 * h as f64;
                if f >= sr / 2.0 {
                    break;
                }
                let phase: f64 = rng.random::<f64>() * 2.0 * PI;
                let wob_phase: f64 = rng.random::<f64>() * 2.0 * PI;
                let wob_hz = wobble_hz * (0.5 + rng.random::<f64>());
                let amp = 1.0 / h as f64;
                for (i, xi) in x.iter_mut().enumerate() {
                    let t = i as f64 / sr;
                    let wob = 1.0 + wobble_depth * (2.0 * PI * wob_hz * t + wob_phase).sin();
                    *xi += amp * wob * (2.0 * PI * f * t + phase).sin();
                }
            }
            x
        }
        SynthKind::AmNoise { f_lo, f_hi, n_components, am_hz, am_depth } => {
            let mut x = sinusoid_bed(n, sr, *f_lo, *f_hi, *n_components, rng);
            agc_flatten(&mut x, (0.1 * sr) as usize);
            let phase: f64 = rng.random::<f64>() * 2.0 * PI;
            for (i, xi) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                *xi *= 1.0 + am_depth * (2.0 * PI * am_hz * t + phase).sin();
            }
            x
        }
        SynthKind::ClickTrain { rate_hz, click_ms, f_lo, f_hi } => {
            let click_len = ((click_ms / 1000.0) * sr).round() as usize;
            burst_grid(n, sr, *rate_hz, rng, |rng| {
                let mut click = sinusoid_bed(click_len, sr, *f_lo, *f_hi, 6, rng);
                hann_window(&mut click);
                click
            })
        }
        SynthKind::ToneBursts { rate_hz, carrier_hz, decay_ms } => {
            let tau = decay_ms / 1000.0;
            let burst_len = ((5.0 * tau) * sr).round() as usize;
            burst_grid(n, sr, *rate_hz, rng, |rng| {
                let phase: f64 = rng.random::<f64>() * 2.0 * PI;
                (0..burst_len)
                    .map(|i| {
                        let t = i as f64 / sr;
                        (2.0 * PI * carrier_hz * t + phase).sin() * (-t / tau).exp()
                    })
                    .collect()
            })
        }
        SynthKind::ChirpSequence { rate_hz, f_start, f_end, chirp_ms } => {
            let dur = chirp_ms / 1000.0;
            let burst_len = (dur * sr).round() as usize;
            burst_grid(n, sr, *rate_hz, rng, |rng| {
                let phase: f64 = rng.random::<f64>() * 2.0 * PI;
                let mut chirp: Vec<f64> = (0..burst_len)
                    .map(|i| {
                        let t = i as f64 / sr;
                        let inst = f_start * t + 0.5 * (f_end - f_start) / dur * t * t;
                        (2.0 * PI * inst + phase).sin()
                    })
                    .collect();
                hann_window(&mut chirp);
                chirp
            })
        }
        SynthKind::ImpulsePairs { rate_hz, pair_gap_ms, thump_hz, decay_ms } => {
            let tau = decay_ms / 1000.0;
            let gap = ((pair_gap_ms / 1000.0) * sr).round() as usize;
            let thump_len = ((6.0 * tau) * sr).round() as usize;
            burst_grid(n, sr, *rate_hz, rng, |rng| {
                let mut pair = vec![0.0; gap + thump_len];
                for start in [0, gap] {
                    let phase: f64 = rng.random::<f64>() * 2.0 * PI;
                    for i in 0..thump_len {
                        let t = i as f64 / sr;
                        pair[start + i] +=
                            (2.0 * PI * thump_hz * t + phase).sin() * (-t / tau).exp();
                    }
                }
                pair
            })
        }
        SynthKind::Warble { rate_hz, f_a, f_b, burst_ms } => {
            let burst_len = ((burst_ms / 1000.0) * sr).round() as usize;
            let mut which = 0usize;
            burst_grid(n, sr, *rate_hz, rng, |rng| {
                let f = if which.is_multiple_of(2) { *f_a } else { *f_b };
                which += 1;
                let phase: f64 = rng.random::<f64>() * 2.0 * PI;
                let mut tone: Vec<f64> = (0..burst_len)
                    .map(|i| (2.0 * PI * f * (i as f64 / sr) + phase).sin())
                    .collect();
                hann_window(&mut tone);
                tone
            })
        }
    }
}

/// Sum of `k` random-phase sinusoids with frequencies uniform in [f_lo, f_hi].
/// Each sinusoid runs as a complex rotation; the amplitude drift over event
/// lengths here is below 1e-11 and irrelevant next to the AGC pass.
fn sinusoid_bed(n: usize, sr: f64, f_lo: f64, f_hi: f64, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for _ in 0..k {
        let f = f_lo + (f_hi - f_lo) * rng.random::<f64>();
        let phase = rng.random::<f64>() * 2.0 * PI;
        let (mut im, mut re) = phase.sin_cos();
        let (ds, dc) = (2.0 * PI * f / sr).sin_cos();
        for xi in x.iter_mut() {
            *xi += im;
            let next_re = re * dc - im * ds;
            im = re * ds + im * dc;
            re = next_re;
        }
    }
    x
}

/// Divide by the local RMS envelope so short-time level stays near constant.
fn agc_flatten(x: &mut [f64], window: usize) {
    let n = x.len();
    if n == 0 || window == 0 {
        return;
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i] * x[i];
    }
    let half = window / 2;
    let mut env = vec![0.0; n];
    for (i, e) in env.iter_mut().enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        *e = ((prefix[hi] - prefix[lo]) / (hi - lo) as f64).sqrt();
    }
    let peak_env = env.iter().cloned().fold(0.0, f64::max);
    let floor = (peak_env * 1e-3).max(1e-12);
    for (xi, e) in x.iter_mut().zip(&env) {
        *xi /= e.max(floor);
    }
}

fn hann_window(x: &mut [f64]) {
    let n = x.len();
    if n < 2 {
        return;
    }
    for (i, xi) in x.iter_mut().enumerate() {
        *xi *= 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
    }
}

/// Place bursts from `make` on a periodic grid with small timing and level
/// jitter; bursts overrunning the end are truncated.
fn burst_grid<F>(n: usize, sr: f64, rate_hz: f64, rng: &mut ChaCha8Rng, mut make: F) -> Vec<f64>
where
    F: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    let mut x = vec![0.0; n];
    let period = sr / rate_hz;
    let mut k = 0usize;
    loop {
        let nominal = k as f64 * period;
        if nominal >= n as f64 {
            break;
        }
        // First burst lands at the very start so onset matches annotation.
        let jit = if k == 0 { 0.0 } else { period * 0.1 * (rng.random::<f64>() * 2.0 - 1.0) };
        let start = (nominal + jit).max(0.0).round() as usize;
        let amp = 0.8 + 0.4 * rng.random::<f64>();
        let burst = make(rng);
        for (i, b) in burst.iter().enumerate() {
            if start + i >= n {
                break;
            }
            x[start + i] += amp * b;
        }
        k += 1;
    }
    x
}
