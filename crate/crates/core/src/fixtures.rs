//! Bundled inputs shared by the examples, the CLI and the tests.

use crate::audio::{synth_wave, Waveform};

/// A 12-character prompt.
pub const SHORT_TEXT: &str = "Hello there!";

/// A 270-character prompt.
pub const LONG_TEXT: &str = "Farmers near the lake start work before sunrise, checking the weather \
on a small phone and sending prices to buyers in town. When the signal is weak the phone must still \
answer quickly, so most of the work happens locally and only the hard cases travel over the network.";

/// Deterministic voiced-speech stand-in: three partials plus light noise.
pub fn speech_like(duration_s: f64, seed: u64) -> Waveform {
    synth_wave(&[(220.0, 0.4), (660.0, 0.2), (1500.0, 0.1)], duration_s, 16000, 0.01, seed)
        .expect("fixture parameters are valid")
}
