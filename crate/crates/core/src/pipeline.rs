//! Edge-side orchestration of the cascade.
//!
//! A run executes the edge path, scores it with the quality gate and, on
//! escalation, ships the prenet features to the cloud encoder and decodes
//! again from the returned hidden states. Compute time is derived from
//! metered multiply-accumulate counts so virtual-mode traces are exact and
//! reproducible.

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::audio::{griffin_lim, log_mel, AudioError, MelConfig, MelSpec, Waveform, DEFAULT_GRIFFIN_LIM_ITERS};
use crate::gating::{stt_gate, tts_gate, GateConfig, GateDecision, GateError};
use crate::model::layers::OpCounter;
use crate::model::{Branch, DecodeResult, HiddenStates, ModelError, ModelInput, SplitModel, Task};
use crate::netsim::{CloudLink, LinkSpec, NetError, VirtualLink};
use crate::service::CloudService;
use crate::tensor::{DType, Tensor};
use crate::wire::{decode_frame, encode_frame, frame_len, FrameKind, WireError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Throughput assumptions that turn operation counts into seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputeModel {
    /// Multiply-accumulates per second on the edge device.
    pub edge_macs_per_s: f64,
    pub cloud_macs_per_s: f64,
}

impl Default for ComputeModel {
    fn default() -> Self {
        Self {
            edge_macs_per_s: 1.0e9,
            cloud_macs_per_s: 2.0e10,
        }
    }
}

impl ComputeModel {
    pub fn edge_time(&self, macs: u64) -> Duration {
        Duration::from_secs_f64(macs as f64 / self.edge_macs_per_s)
    }

    pub fn cloud_time(&self, macs: u64) -> Duration {
        Duration::from_secs_f64(macs as f64 / self.cloud_macs_per_s)
    }
}

/// Parameters of the TTS vocoder stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocoderConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub iters: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_fft: 512,
            hop: 256,
            iters: DEFAULT_GRIFFIN_LIM_ITERS,
        }
    }
}

/// Front end for the bundled STT model: a 20 ms hop so 128 source frames
/// cover 2.56 s of audio.
pub fn stt_mel_config() -> MelConfig {
    MelConfig {
        hop: 320,
        ..MelConfig::default()
    }
}

fn fft_macs(n_fft: usize) -> u64 {
    (n_fft as f64 * (n_fft as f64).log2()).ceil() as u64
}

/// Operation-count estimate for a log-mel front end over `frames` frames.
pub fn mel_macs(frames: usize, cfg: &MelConfig) -> u64 {
    let per_frame = fft_macs(cfg.n_fft) + ((cfg.n_fft / 2 + 1) * cfg.n_mel) as u64;
    frames as u64 * per_frame
}

/// Operation-count estimate for Griffin-Lim over `frames` frames.
pub fn vocoder_macs(frames: usize, n_mel: usize, cfg: &VocoderConfig) -> u64 {
    let bins = (cfg.n_fft / 2 + 1) as u64;
    let per_frame = bins * n_mel as u64 + cfg.iters.max(1) as u64 * 2 * fft_macs(cfg.n_fft);
    frames as u64 * per_frame
}

/// The edge device: model, signal-processing settings and compute model.
#[derive(Debug, Clone)]
pub struct EdgeRuntime {
    pub model: SplitModel,
    pub mel: MelConfig,
    pub vocoder: VocoderConfig,
    pub compute: ComputeModel,
}

impl EdgeRuntime {
    pub fn new(model: SplitModel) -> Self {
        let mel = MelConfig {
            n_mel: model.config().n_mel,
            ..stt_mel_config()
        };
        Self {
            model,
            mel,
            vocoder: VocoderConfig::default(),
            compute: ComputeModel::default(),
        }
    }

    pub fn task(&self) -> Task {
        self.model.task()
    }

    /// A cloud service serving this runtime's cloud encoder.
    pub fn cloud_service(&self) -> Arc<CloudService> {
        let max = crate::service::largest_features_frame(self.model.config()) * 2;
        Arc::new(
            CloudService::from_models(vec![self.model.clone()], max)
                .expect("limit is derived from the model's own config"),
        )
    }

    /// An in-process virtual link to [`Self::cloud_service`].
    pub fn virtual_link(&self, spec: LinkSpec) -> VirtualLink {
        VirtualLink::new(spec, self.cloud_service(), self.compute.cloud_macs_per_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputSummary {
    Tokens(usize),
    AudioSeconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub task: Task,
    pub escalated: bool,
    /// The cloud was needed but unreachable; the edge result was kept.
    pub degraded: bool,
    pub net_error: Option<String>,
    pub gate: GateDecision,
    pub cpu_time: Duration,
    pub cloud_time: Duration,
    pub transfer_time: Duration,
    pub wall_time: Duration,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub decode_passes: u32,
    pub output: OutputSummary,
}

impl RunTrace {
    pub fn cpu_time_s(&self) -> f64 {
        self.cpu_time.as_secs_f64()
    }

    pub fn cloud_time_s(&self) -> f64 {
        self.cloud_time.as_secs_f64()
    }

    pub fn transfer_time_s(&self) -> f64 {
        self.transfer_time.as_secs_f64()
    }

    pub fn wall_time_s(&self) -> f64 {
        self.wall_time.as_secs_f64()
    }
}

struct Escalation {
    hidden: HiddenStates,
    cloud_time: Duration,
    transfer_time: Duration,
    uplink: u64,
    downlink: u64,
}

fn escalate(
    task: Task,
    model: &SplitModel,
    features: &Tensor,
    link: &mut dyn CloudLink,
) -> Result<Escalation, NetError> {
    let request = encode_frame(task, FrameKind::Features, features)
        .map_err(|e| NetError::Protocol(e.to_string()))?;
    let ex = link.send_recv(&request)?;
    let frame = decode_frame(&ex.response).map_err(|e| NetError::Protocol(e.to_string()))?;
    if frame.kind != FrameKind::HiddenStates || frame.task != task {
        return Err(NetError::Protocol(format!("unexpected {:?} frame", frame.kind)));
    }
    let states = frame.tensor;
    let expected_rows = features.shape()[0];
    if states.dtype() != DType::F32 || states.shape() != [expected_rows, model.config().d_model as u32] {
        return Err(NetError::Protocol(format!("hidden states of shape {:?}", states.shape())));
    }
    Ok(Escalation {
        hidden: HiddenStates {
            states,
            origin: Branch::Cloud,
        },
        cloud_time: ex.handler_time,
        transfer_time: ex.uplink.duration() + ex.downlink.duration(),
        uplink: ex.uplink.bytes,
        downlink: ex.downlink.bytes,
    })
}

/// Shared cascade control flow. `finish` turns a decode into the task
/// output and charges its post-processing to `ops`.
fn cascade<O>(
    rt: &EdgeRuntime,
    features: Tensor,
    mut ops: OpCounter,
    link: &mut dyn CloudLink,
    force_escalate: bool,
    finish: impl Fn(&DecodeResult, &mut OpCounter) -> Result<O, PipelineError>,
    gate: impl Fn(&DecodeResult, &O) -> Result<GateDecision, PipelineError>,
    summary: impl Fn(&O) -> OutputSummary,
) -> Result<(O, RunTrace), PipelineError> {
    let model = &rt.model;
    let task = model.task();
    let hidden = model.encoder_forward_metered(&features, Branch::Edge, &mut ops)?;
    let decoded = model.decoder_greedy_metered(&hidden, &mut ops);
    let mut output = finish(&decoded, &mut ops)?;
    let decision = gate(&decoded, &output)?;

    let mut trace = RunTrace {
        task,
        escalated: false,
        degraded: false,
        net_error: None,
        gate: decision,
        cpu_time: Duration::ZERO,
        cloud_time: Duration::ZERO,
        transfer_time: Duration::ZERO,
        wall_time: Duration::ZERO,
        uplink_bytes: 0,
        downlink_bytes: 0,
        decode_passes: 1,
        output: summary(&output),
    };

    if force_escalate || decision.escalates() {
        match escalate(task, model, &features, link) {
            Ok(esc) => {
                // the edge decode is discarded; its cost stays on the edge clock
                let redecoded = model.decoder_greedy_metered(&esc.hidden, &mut ops);
                output = finish(&redecoded, &mut ops)?;
                trace.escalated = true;
                trace.decode_passes = 2;
                trace.cloud_time = esc.cloud_time;
                trace.transfer_time = esc.transfer_time;
                trace.uplink_bytes = esc.uplink;
                trace.downlink_bytes = esc.downlink;
                trace.output = summary(&output);
            }
            Err(e) => {
                trace.degraded = true;
                trace.net_error = Some(e.to_string());
            }
        }
    }
    trace.cpu_time = rt.compute.edge_time(ops.macs);
    trace.wall_time = trace.cpu_time + trace.cloud_time + trace.transfer_time;
    Ok((output, trace))
}

fn require_task(rt: &EdgeRuntime, task: Task) -> Result<(), PipelineError> {
    if rt.task() != task {
        return Err(PipelineError::InvalidArgument(format!(
            "runtime holds a {} model, not {}",
            rt.task(),
            task
        )));
    }
    Ok(())
}

/// Transcribes `w`, escalating when the gate fails or `force_escalate` is set.
pub fn run_stt(
    w: &Waveform,
    rt: &EdgeRuntime,
    gate_cfg: &GateConfig,
    link: &mut dyn CloudLink,
    force_escalate: bool,
) -> Result<(Vec<u32>, RunTrace), PipelineError> {
    require_task(rt, Task::Stt)?;
    if w.sample_rate != rt.mel.sample_rate {
        return Err(PipelineError::InvalidArgument(format!(
            "expected {} Hz audio, got {} Hz",
            rt.mel.sample_rate, w.sample_rate
        )));
    }
    let mut ops = OpCounter::default();
    let mel = log_mel(w, &rt.mel)?;
    ops.add(mel_macs(mel.n_frames(), &rt.mel));
    let features = rt.model.prenet_forward_metered(ModelInput::Mel(&mel), &mut ops)?;
    cascade(
        rt,
        features,
        ops,
        link,
        force_escalate,
        |d, _| match d {
            DecodeResult::Tokens { tokens, .. } => Ok(tokens.clone()),
            DecodeResult::Frames { .. } => unreachable!("STT decodes tokens"),
        },
        |d, _| match d {
            DecodeResult::Tokens { step_logprobs, .. } => Ok(stt_gate(step_logprobs, gate_cfg)?),
            DecodeResult::Frames { .. } => unreachable!("STT decodes tokens"),
        },
        |t| OutputSummary::Tokens(t.len()),
    )
}

/// Maps text to TTS input tokens, one per character. Tokens 0 and 1 are
/// reserved.
pub fn text_to_tokens(text: &str, vocab_size: usize) -> Vec<u32> {
    let span = vocab_size.saturating_sub(2).max(1) as u32;
    text.chars().map(|c| 2 + (c as u32) % span).collect()
}

fn vocode(d: &DecodeResult, rt: &EdgeRuntime, ops: &mut OpCounter) -> Waveform {
    let DecodeResult::Frames { frames, .. } = d else {
        unreachable!("TTS decodes frames")
    };
    let mel = MelSpec {
        frames: frames.clone(),
        frame_hop: rt.vocoder.hop,
        sample_rate: rt.vocoder.sample_rate,
    };
    ops.add(vocoder_macs(mel.n_frames(), mel.n_mel(), &rt.vocoder));
    griffin_lim(&mel, rt.vocoder.n_fft, rt.vocoder.iters)
}

/// Synthesizes speech for `tokens`, escalating when the gate fails or
/// `force_escalate` is set.
pub fn run_tts(
    tokens: &[u32],
    rt: &EdgeRuntime,
    gate_cfg: &GateConfig,
    link: &mut dyn CloudLink,
    force_escalate: bool,
) -> Result<(Waveform, RunTrace), PipelineError> {
    require_task(rt, Task::Tts)?;
    let mut ops = OpCounter::default();
    let features = rt.model.prenet_forward_metered(ModelInput::Tokens(tokens), &mut ops)?;
    cascade(
        rt,
        features,
        ops,
        link,
        force_escalate,
        |d, ops| Ok(vocode(d, rt, ops)),
        |_, w| match tts_gate(w, gate_cfg) {
            // too short to estimate noise: treat as unusable output
            Err(GateError::Audio(AudioError::TooShort { .. })) => {
                Ok(GateDecision::decide(f64::NEG_INFINITY, gate_cfg.tts_threshold))
            }
            other => Ok(other?),
        },
        |w| OutputSummary::AudioSeconds(w.duration_s()),
    )
}

/// Predicted uplink size of an escalation for `rows` feature rows.
pub fn features_frame_bytes(rows: usize, d_model: usize) -> u64 {
    frame_len(2, DType::F32, rows * d_model) as u64
}

#[derive(Debug, Clone, Copy)]
pub enum SweepInput<'a> {
    Audio(&'a Waveform),
    Tokens(&'a [u32]),
}

/// One bandwidth point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub bandwidth_kbs: f64,
    pub trace: RunTrace,
}

/// Forced-escalation runs over virtual links of each bandwidth, in order.
pub fn sweep_bandwidth(
    input: SweepInput<'_>,
    bandwidths_kbs: &[f64],
    rt: &EdgeRuntime,
    template: LinkSpec,
) -> Result<Vec<SweepRow>, PipelineError> {
    if bandwidths_kbs.is_empty() {
        return Err(PipelineError::InvalidArgument("no bandwidths given".into()));
    }
    let service = rt.cloud_service();
    let gate = GateConfig::always_pass();
    bandwidths_kbs
        .iter()
        .map(|&kbs| {
            let spec = LinkSpec::new(kbs * crate::netsim::KB, template.rtt, template.mode)?;
            let mut link = VirtualLink::new(spec, service.clone(), rt.compute.cloud_macs_per_s);
            let trace = match input {
                SweepInput::Audio(w) => run_stt(w, rt, &gate, &mut link, true)?.1,
                SweepInput::Tokens(t) => run_tts(t, rt, &gate, &mut link, true)?.1,
            };
            Ok(SweepRow {
                bandwidth_kbs: kbs,
                trace,
            })
        })
        .collect()
}

/// Bandwidths of the standard sweep, in KB/s.
pub const STANDARD_SWEEP_KBS: [f64; 7] = [64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0];
