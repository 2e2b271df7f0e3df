//! The cascade trigger: pass the edge result or escalate to the cloud.

use thiserror::Error;

use crate::audio::{estimate_snr, AudioError, Waveform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("no decoding steps to score")]
    EmptySequence,
    #[error("invalid gate config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// Minimum mean chosen-token log-probability, in nats.
    pub stt_threshold: f64,
    /// Minimum estimated SNR, in dB.
    pub tts_threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            stt_threshold: -2.0,
            tts_threshold: 10.0,
        }
    }
}

impl GateConfig {
    pub fn new(stt_threshold: f64, tts_threshold: f64) -> Result<Self, GateError> {
        if stt_threshold.is_nan() || stt_threshold > 0.0 {
            return Err(GateError::InvalidConfig(format!(
                "stt threshold must be <= 0 nats, got {stt_threshold}"
            )));
        }
        if tts_threshold.is_nan() || tts_threshold == f64::INFINITY {
            return Err(GateError::InvalidConfig(format!(
                "tts threshold must be a finite dB value or -inf, got {tts_threshold}"
            )));
        }
        Ok(Self {
            stt_threshold,
            tts_threshold,
        })
    }

    /// Thresholds low enough that every edge result passes.
    pub fn always_pass() -> Self {
        Self {
            stt_threshold: f64::NEG_INFINITY,
            tts_threshold: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Escalate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub verdict: Verdict,
    pub metric: f64,
    pub threshold: f64,
}

impl GateDecision {
    /// Ties pass.
    pub fn decide(metric: f64, threshold: f64) -> Self {
        let verdict = if metric >= threshold {
            Verdict::Pass
        } else {
            Verdict::Escalate
        };
        Self {
            verdict,
            metric,
            threshold,
        }
    }

    pub fn escalates(&self) -> bool {
        self.verdict == Verdict::Escalate
    }
}

/// Mean chosen-token log-probability against the STT threshold.
pub fn stt_gate(step_logprobs: &[f32], cfg: &GateConfig) -> Result<GateDecision, GateError> {
    if step_logprobs.is_empty() {
        return Err(GateError::EmptySequence);
    }
    let mean = step_logprobs.iter().map(|&v| f64::from(v)).sum::<f64>() / step_logprobs.len() as f64;
    Ok(GateDecision::decide(mean, cfg.stt_threshold))
}

/// Estimated SNR of synthesized audio against the TTS threshold.
pub fn tts_gate(w: &Waveform, cfg: &GateConfig) -> Result<GateDecision, GateError> {
    let snr = estimate_snr(w)?;
    Ok(GateDecision::decide(snr, cfg.tts_threshold))
}
