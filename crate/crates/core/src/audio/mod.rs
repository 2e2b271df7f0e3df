//! Audio fixtures, the log-Mel front end, a Griffin-Lim vocoder, a
//! single-signal SNR estimator and the WER/MSE evaluation metrics.

mod mel;
pub mod metrics;
mod snr;
mod stft;
mod vocoder;
pub mod wav;

pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, MelConfig, MelSpec, LOG_FLOOR};
pub use metrics::{edit_distance, mse_loss, wer, wer_str};
pub use snr::estimate_snr;
pub use vocoder::{griffin_lim, DEFAULT_GRIFFIN_LIM_ITERS};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioError {
    #[error("frequency {freq} Hz is at or above Nyquist for sample rate {sample_rate} Hz")]
    AliasedFrequency { freq: f64, sample_rate: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("signal too short: need at least {needed} samples, got {actual}")]
    TooShort { needed: usize, actual: usize },
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<u32>, Vec<u32>),
    #[error("wav i/o: {0}")]
    Wav(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::InvalidArgument("samples must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(n: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| f64::from(s).powi(2)).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

/// Sum of sines plus seeded white Gaussian noise.
pub fn synth_wave(
    components: &[(f64, f64)],
    duration_s: f64,
    sample_rate: u32,
    noise_sigma: f64,
    seed: u64,
) -> Result<Waveform, AudioError> {
    if !(duration_s > 0.0) {
        return Err(AudioError::InvalidArgument(format!("duration must be positive, got {duration_s}")));
    }
    if sample_rate == 0 {
        return Err(AudioError::InvalidArgument("sample rate must be positive".into()));
    }
    let nyquist = f64::from(sample_rate) / 2.0;
    if let Some(&(freq, _)) = components.iter().find(|(f, _)| *f >= nyquist || *f < 0.0) {
        return Err(AudioError::AliasedFrequency { freq, sample_rate });
    }
    if !(noise_sigma >= 0.0) {
        return Err(AudioError::InvalidArgument("noise sigma must be non-negative".into()));
    }

    let n = (duration_s * f64::from(sample_rate)).round() as usize;
    let sr = f64::from(sample_rate);
    let mut rng = Pcg64::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("sigma checked above");
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let tone: f64 = components
                .iter()
                .map(|&(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum();
            let eps = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (tone + eps) as f32
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sine_peak_and_length() {
        let w = synth_wave(&[(440.0, 1.0)], 1.0, 16000, 0.0, 0).unwrap();
        assert_eq!(w.samples.len(), 16000);
        assert!((w.peak() - 1.0).abs() <= 1e-6, "peak {}", w.peak());
    }

    #[test]
    fn unit_sine_power() {
        let w = synth_wave(&[(440.0, 1.0)], 1.0, 16000, 0.0, 0).unwrap();
        assert!((w.mean_power() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn aliasing_rejected() {
        assert!(matches!(
            synth_wave(&[(8000.0, 1.0)], 1.0, 16000, 0.0, 0),
            Err(AudioError::AliasedFrequency { .. })
        ));
        assert!(synth_wave(&[(100.0, 1.0)], 0.0, 16000, 0.0, 0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let a = synth_wave(&[], 0.1, 16000, 0.3, 7).unwrap();
        let b = synth_wave(&[], 0.1, 16000, 0.3, 7).unwrap();
        let c = synth_wave(&[], 0.1, 16000, 0.3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
