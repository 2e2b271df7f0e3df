use rustfft::num_complex::Complex32;
use rustfft::FftPlanner;

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            (0.5 - 0.5 * x.cos()) as f32
        })
        .collect()
}

pub(crate) fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    if len < n_fft {
        0
    } else {
        (len - n_fft) / hop + 1
    }
}

/// One-sided STFT, `n_fft / 2 + 1` bins per frame, no centering.
pub(crate) fn stft(samples: &[f32], n_fft: usize, hop: usize) -> Vec<Vec<Complex32>> {
    let window = hann(n_fft);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut buf = vec![Complex32::default(); n_fft];
    (0..frame_count(samples.len(), n_fft, hop))
        .map(|f| {
            let start = f * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex32::new(samples[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            buf[..n_bins].to_vec()
        })
        .collect()
}

/// Weighted overlap-add inverse of [`stft`]. Output length is
/// `(frames - 1) * hop + n_fft`.
pub(crate) fn istft(frames: &[Vec<Complex32>], n_fft: usize, hop: usize) -> Vec<f32> {
    if frames.is_empty() {
        return Vec::new();
    }
    let window = hann(n_fft);
    let ifft = FftPlanner::<f32>::new().plan_fft_inverse(n_fft);
    let len = (frames.len() - 1) * hop + n_fft;
    let mut out = vec![0.0f32; len];
    let mut norm = vec![0.0f32; len];
    let mut buf = vec![Complex32::default(); n_fft];
    let n_bins = n_fft / 2 + 1;
    for (f, spec) in frames.iter().enumerate() {
        // rebuild the Hermitian-symmetric spectrum
        buf[..n_bins].copy_from_slice(spec);
        for k in n_bins..n_fft {
            buf[k] = spec[n_fft - k].conj();
        }
        ifft.process(&mut buf);
        let start = f * hop;
        for i in 0..n_fft {
            let v = buf[i].re / n_fft as f32;
            out[start + i] += v * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        if *n > 1e-8 {
            *o /= *n;
        } else {
            *o = 0.0;
        }
    }
    out
}
