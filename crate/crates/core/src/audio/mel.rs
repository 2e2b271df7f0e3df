use super::stft::{frame_count, stft};
use super::{AudioError, Waveform};
use crate::tensor::Tensor;

/// Additive floor inside the log so silence maps to a finite value.
pub const LOG_FLOOR: f32 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mel: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_fft: 512,
            hop: 160,
            n_mel: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    /// `[n_frames, n_mel]` log-amplitude values.
    pub frames: Tensor,
    pub frame_hop: usize,
    pub sample_rate: u32,
}

impl MelSpec {
    pub fn from_rows(rows: &[Vec<f32>], n_mel: usize, frame_hop: usize, sample_rate: u32) -> Self {
        let data: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let frames = Tensor::from_f32(vec![rows.len() as u32, n_mel as u32], data)
            .expect("rows must all have n_mel columns");
        Self {
            frames,
            frame_hop,
            sample_rate,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0] as usize
    }

    pub fn n_mel(&self) -> usize {
        self.frames.shape()[1] as usize
    }

    pub fn values(&self) -> &[f32] {
        self.frames.as_f32().expect("mel frames are FP32")
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let m = self.n_mel();
        &self.values()[i * m..(i + 1) * m]
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale filterbank spanning 0 Hz to Nyquist, peak weight 1,
/// as `n_mel` rows of `n_fft / 2 + 1` weights.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mel: usize) -> Vec<Vec<f32>> {
    let sr = f64::from(sample_rate);
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..n_mel + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mel + 1) as f64))
        .collect();
    (0..n_mel)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sr / n_fft as f64;
                    let w = if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    };
                    w as f32
                })
                .collect()
        })
        .collect()
}

pub fn log_mel(w: &Waveform, cfg: &MelConfig) -> Result<MelSpec, AudioError> {
    if cfg.hop == 0 || cfg.n_fft < cfg.hop || cfg.n_mel == 0 {
        return Err(AudioError::InvalidArgument(format!(
            "need n_fft >= hop > 0 and n_mel > 0, got {cfg:?}"
        )));
    }
    if w.samples.len() < cfg.n_fft {
        return Err(AudioError::TooShort {
            needed: cfg.n_fft,
            actual: w.samples.len(),
        });
    }
    let bank = mel_filterbank(w.sample_rate, cfg.n_fft, cfg.n_mel);
    let spec = stft(&w.samples, cfg.n_fft, cfg.hop);
    debug_assert_eq!(spec.len(), frame_count(w.samples.len(), cfg.n_fft, cfg.hop));
    let rows: Vec<Vec<f32>> = spec
        .iter()
        .map(|frame| {
            let mags: Vec<f32> = frame.iter().map(|c| c.norm()).collect();
            bank.iter()
                .map(|filter| {
                    let e: f32 = filter.iter().zip(&mags).map(|(a, b)| a * b).sum();
                    (e + LOG_FLOOR).ln()
                })
                .collect()
        })
        .collect();
    Ok(MelSpec::from_rows(&rows, cfg.n_mel, cfg.hop, w.sample_rate))
}
