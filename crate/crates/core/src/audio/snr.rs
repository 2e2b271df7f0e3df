use super::{AudioError, Waveform};

const FRAME_S: f64 = 0.025;
const HOP_S: f64 = 0.010;
const MIN_FRAMES: usize = 10;

/// Single-signal SNR estimate in dB.
///
/// The signal is cut into 25 ms frames with a 10 ms hop. The noise floor is
/// the mean power of the quietest tenth of the frames and the signal power is
/// the mean over all frames.
pub fn estimate_snr(w: &Waveform) -> Result<f64, AudioError> {
    let sr = f64::from(w.sample_rate);
    let frame = (FRAME_S * sr).round() as usize;
    let hop = (HOP_S * sr).round() as usize;
    let needed = frame + (MIN_FRAMES - 1) * hop;
    if frame == 0 || hop == 0 || w.samples.len() < needed {
        return Err(AudioError::TooShort {
            needed,
            actual: w.samples.len(),
        });
    }
    let n_frames = (w.samples.len() - frame) / hop + 1;
    let mut powers: Vec<f64> = (0..n_frames)
        .map(|i| {
            let s = &w.samples[i * hop..i * hop + frame];
            s.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>() / frame as f64
        })
        .collect();
    let total = powers.iter().sum::<f64>() / n_frames as f64;
    powers.sort_by(f64::total_cmp);
    let k = (n_frames / 10).max(1);
    let noise = powers[..k].iter().sum::<f64>() / k as f64;
    Ok(10.0 * (total / noise.max(1e-12)).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_wave;

    fn with_trailing_silence(w: Waveform, frac: f64) -> Waveform {
        let n = w.samples.len();
        let keep = ((1.0 - frac) * n as f64) as usize;
        let mut s = w.samples;
        s[keep..].iter_mut().for_each(|x| *x = 0.0);
        Waveform::new(s, w.sample_rate).unwrap()
    }

    #[test]
    fn sine_with_trailing_silence_is_clean() {
        let w = with_trailing_silence(synth_wave(&[(440.0, 1.0)], 1.0, 16000, 0.0, 0).unwrap(), 0.2);
        // brute-force powers: decile frames are silent, so the floor clamps
        let snr = estimate_snr(&w).unwrap();
        assert!(snr >= 20.0, "snr {snr}");
    }

    #[test]
    fn white_noise_is_noisy() {
        let w = synth_wave(&[], 1.0, 16000, 0.5, 11).unwrap();
        let snr = estimate_snr(&w).unwrap();
        assert!(snr <= 6.0 && snr >= 0.0, "snr {snr}");
    }

    #[test]
    fn sine_plus_noise_matches_power_accounting() {
        let (amp, sigma, active) = (0.5f64, 0.05f64, 0.8f64);
        let tone = synth_wave(&[(440.0, amp)], 2.0, 16000, 0.0, 0).unwrap();
        let tone = with_trailing_silence(tone, 1.0 - active);
        let noise = synth_wave(&[], 2.0, 16000, sigma, 5).unwrap();
        let mixed: Vec<f32> = tone.samples.iter().zip(&noise.samples).map(|(a, b)| a + b).collect();
        let w = Waveform::new(mixed, 16000).unwrap();
        let ps = active * amp * amp / 2.0;
        let pn = sigma * sigma;
        let expected = 10.0 * ((ps + pn) / pn).log10();
        let snr = estimate_snr(&w).unwrap();
        assert!((snr - expected).abs() <= 2.0, "snr {snr} expected {expected}");
    }

    #[test]
    fn scale_invariant() {
        let tone = with_trailing_silence(synth_wave(&[(300.0, 0.4)], 1.0, 16000, 0.0, 0).unwrap(), 0.3);
        let noise = synth_wave(&[], 1.0, 16000, 0.02, 2).unwrap();
        let mixed = tone.samples.iter().zip(&noise.samples).map(|(a, b)| a + b).collect();
        let w = Waveform::new(mixed, 16000).unwrap();
        let scaled = Waveform::new(w.samples.iter().map(|x| x * 3.7).collect(), 16000).unwrap();
        let (a, b) = (estimate_snr(&w).unwrap(), estimate_snr(&scaled).unwrap());
        assert!((a - b).abs() <= 0.1);
    }

    #[test]
    fn too_short() {
        let w = Waveform::silence(1000, 16000);
        assert!(matches!(estimate_snr(&w), Err(AudioError::TooShort { .. })));
    }
}
