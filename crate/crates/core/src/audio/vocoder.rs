//! Griffin-Lim phase reconstruction from a log-Mel spectrogram.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex32;

use super::mel::{mel_filterbank, LOG_FLOOR};
use super::stft::{istft, stft};
use super::{MelSpec, Waveform};

pub const DEFAULT_GRIFFIN_LIM_ITERS: usize = 8;

/// Inverts a log-Mel spectrogram to audio.
///
/// The mel amplitudes are mapped back to linear-frequency magnitudes with the
/// filterbank pseudo-inverse, then phase is recovered by alternating
/// projections starting from zero phase. `n_fft` must match the transform
/// that produced the spectrogram; the output has
/// `(n_frames - 1) * hop + n_fft` samples.
pub fn griffin_lim(m: &MelSpec, n_fft: usize, iters: usize) -> Waveform {
    let iters = iters.max(1);
    let hop = m.frame_hop;
    let n_frames = m.n_frames();
    let n_mel = m.n_mel();
    let n_bins = n_fft / 2 + 1;
    if n_frames == 0 {
        return Waveform::silence(0, m.sample_rate);
    }

    let bank = mel_filterbank(m.sample_rate, n_fft, n_mel);
    let fb = DMatrix::from_fn(n_mel, n_bins, |r, c| f64::from(bank[r][c]));
    let pinv = fb
        .pseudo_inverse(1e-10)
        .expect("pseudo-inverse with non-negative epsilon");

    let mel_amp = DMatrix::from_fn(n_mel, n_frames, |r, c| {
        f64::from((m.row(c)[r].exp() - LOG_FLOOR).max(0.0))
    });
    let lin = pinv * mel_amp;
    let target: Vec<Vec<f32>> = (0..n_frames)
        .map(|f| (0..n_bins).map(|k| lin[(k, f)].max(0.0) as f32).collect())
        .collect();

    // zero-phase start
    let mut spec: Vec<Vec<Complex32>> = target
        .iter()
        .map(|row| row.iter().map(|&a| Complex32::new(a, 0.0)).collect())
        .collect();
    for _ in 0..iters {
        let y = istft(&spec, n_fft, hop);
        let est = stft(&y, n_fft, hop);
        for (f, row) in spec.iter_mut().enumerate() {
            for (k, c) in row.iter_mut().enumerate() {
                let e = est[f][k];
                let norm = e.norm();
                let a = target[f][k];
                *c = if norm > 0.0 {
                    e * (a / norm)
                } else {
                    Complex32::new(a, 0.0)
                };
            }
        }
    }
    Waveform {
        samples: istft(&spec, n_fft, hop),
        sample_rate: m.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{log_mel, synth_wave, MelConfig};

    fn pearson(a: &[f32], b: &[f32]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let mb = b.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
        for (&x, &y) in a.iter().zip(b) {
            let (dx, dy) = (f64::from(x) - ma, f64::from(y) - mb);
            cov += dx * dy;
            va += dx * dx;
            vb += dy * dy;
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn output_length() {
        let cfg = MelConfig::default();
        let w = synth_wave(&[(440.0, 0.5)], 0.3, 16000, 0.0, 0).unwrap();
        let m = log_mel(&w, &cfg).unwrap();
        let y = griffin_lim(&m, cfg.n_fft, 2);
        assert_eq!(y.samples.len(), (m.n_frames() - 1) * cfg.hop + cfg.n_fft);
    }

    #[test]
    fn self_consistent_round_trip() {
        let cfg = MelConfig::default();
        let w = synth_wave(&[(440.0, 0.6), (1800.0, 0.3)], 0.5, 16000, 0.0, 1).unwrap();
        let m = log_mel(&w, &cfg).unwrap();
        let y = griffin_lim(&m, cfg.n_fft, DEFAULT_GRIFFIN_LIM_ITERS);
        let m2 = log_mel(&y, &cfg).unwrap();
        assert_eq!(m2.n_frames(), m.n_frames());
        let r = pearson(m.values(), m2.values());
        assert!(r >= 0.7, "pearson r = {r}");
    }

    #[test]
    fn silence_stays_silent() {
        let cfg = MelConfig::default();
        let rows = vec![vec![LOG_FLOOR.ln(); cfg.n_mel]; 20];
        let m = MelSpec::from_rows(&rows, cfg.n_mel, cfg.hop, cfg.sample_rate);
        let y = griffin_lim(&m, cfg.n_fft, DEFAULT_GRIFFIN_LIM_ITERS);
        assert!(y.peak() <= 1e-3);
    }

    #[test]
    fn deterministic() {
        let cfg = MelConfig::default();
        let w = synth_wave(&[(300.0, 0.5)], 0.2, 16000, 0.01, 3).unwrap();
        let m = log_mel(&w, &cfg).unwrap();
        assert_eq!(griffin_lim(&m, cfg.n_fft, 3), griffin_lim(&m, cfg.n_fft, 3));
    }
}
