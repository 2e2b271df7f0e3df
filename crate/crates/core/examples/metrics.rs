//! Word error rate, mel-spectrogram MSE and the SNR estimate.

use cascade::audio::{estimate_snr, log_mel, mse_loss, synth_wave, wer_str, MelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (r, h) in [
        ("how is it going", "how is it"),
        ("the cat sat on the mat", "the cat sat on a mat"),
        ("hello", "hello world again"),
    ] {
        println!("wer({r:?}, {h:?}) = {:.1}%", wer_str(r, h)?);
    }

    let cfg = MelConfig::default();
    let clean = synth_wave(&[(300.0, 0.5), (900.0, 0.2)], 1.0, 16000, 0.0, 0)?;
    let noisy = synth_wave(&[(300.0, 0.5), (900.0, 0.2)], 1.0, 16000, 0.05, 0)?;
    let a = log_mel(&clean, &cfg)?;
    let b = log_mel(&noisy, &cfg)?;
    println!("mel frames {} x {}, mse(clean, noisy) = {:.4}", a.n_frames(), a.n_mel(), mse_loss(&a, &b)?);

    let mut gated = clean.clone();
    let n = gated.samples.len();
    gated.samples[n / 2..].iter_mut().for_each(|s| *s *= 0.01);
    println!("snr of half-muted tone: {:.1} dB", estimate_snr(&gated)?);
    println!("snr of noisy tone:      {:.1} dB", estimate_snr(&noisy)?);
    Ok(())
}
