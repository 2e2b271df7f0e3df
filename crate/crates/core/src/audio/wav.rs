//! 16-bit PCM mono WAV input and output.

use std::path::Path;

use super::{AudioError, Waveform};

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let err = |e: hound::Error| AudioError::Wav(e.to_string());
    let mut writer = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * f32::from(i16::MAX)).round() as i16;
        writer.write_sample(v).map_err(err)?;
    }
    writer.finalize().map_err(err)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let err = |e: hound::Error| AudioError::Wav(e.to_string());
    let mut reader = hound::WavReader::open(path).map_err(err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(AudioError::Wav(format!(
            "expected 16-bit PCM mono, got {} channel(s) at {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f32::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    Waveform::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_wave;

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let w = synth_wave(&[(440.0, 0.8)], 0.1, 16000, 0.0, 0).unwrap();
        write_wav(&path, &w).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.sample_rate, 16000);
        assert_eq!(r.samples.len(), w.samples.len());
        for (a, b) in w.samples.iter().zip(&r.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
