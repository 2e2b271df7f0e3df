//! Seeded toy transformer encoder-decoder split into an edge part and a
//! cloud part.
//!
//! The edge holds the prenet, a shallow ("compressed") encoder, the full
//! decoder and the postnet. The cloud holds a deeper, independently
//! initialized encoder that consumes the same prenet features. Either
//! encoder's output can feed the edge decoder.

pub mod layers;

use std::fmt;
use std::str::FromStr;

use rand_pcg::Pcg64;
use thiserror::Error;

use crate::audio::MelSpec;
use crate::config::{ConfigError, KvConfig};
use crate::tensor::{quantize_linear, Tensor, TensorError};
use layers::{
    log_softmax, positional_encoding, AttentionMap, DecoderLayer, Embedding, EncoderLayer, LayerNorm,
    Linear, OpCounter,
};

/// End-of-sequence token for transcription.
pub const EOS_TOKEN: u32 = 0;
/// First decoder input token for transcription.
pub const BOS_TOKEN: u32 = 1;
/// Initial bias of the TTS stop head, so untrained models do not stop at once.
pub const TTS_STOP_BIAS: f32 = -2.0;

const EDGE_STREAM: u128 = 0x0ed9e;
const CLOUD_STREAM: u128 = 0xc10d;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input length {len} exceeds maximum {max}")]
    InputTooLong { len: usize, max: usize },
    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("{task} model cannot take {got} input")]
    WrongInput { task: Task, got: &'static str },
    #[error("shape mismatch: expected {expected}, got {actual:?}")]
    ShapeMismatch { expected: String, actual: Vec<u32> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Stt,
    Tts,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Stt => "stt",
            Task::Tts => "tts",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stt" => Ok(Task::Stt),
            "tts" => Ok(Task::Tts),
            other => Err(format!("unknown task `{other}` (expected stt or tts)")),
        }
    }
}

/// Which parameters to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Edge,
    Cloud,
    All,
}

/// Which encoder runs, and where hidden states came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Edge,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub task: Task,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers_full: usize,
    pub n_enc_layers_edge: usize,
    pub n_dec_layers: usize,
    /// Output vocabulary for STT, input vocabulary for TTS.
    pub vocab_size: usize,
    /// Input mel bins for STT, output mel bins for TTS.
    pub n_mel: usize,
    /// Mel frames (STT) or tokens (TTS).
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    /// Encoder length for STT; `None` for TTS.
    pub enc_fixed_len: Option<usize>,
    pub seed: u64,
}

impl ModelConfig {
    /// Transcription config. Three of eight encoder layers stay on the edge,
    /// which puts about 56% of all parameters there.
    pub fn bundled_stt() -> Self {
        Self {
            task: Task::Stt,
            d_model: 64,
            n_heads: 2,
            n_enc_layers_full: 8,
            n_enc_layers_edge: 3,
            n_dec_layers: 5,
            vocab_size: 128,
            n_mel: 40,
            max_src_len: 128,
            max_tgt_len: 32,
            enc_fixed_len: Some(64),
            seed: 7,
        }
    }

    /// Synthesis config with about 38% of all parameters on the edge.
    pub fn bundled_tts() -> Self {
        Self {
            task: Task::Tts,
            d_model: 64,
            n_heads: 2,
            n_enc_layers_full: 8,
            n_enc_layers_edge: 2,
            n_dec_layers: 2,
            vocab_size: 64,
            n_mel: 40,
            max_src_len: 320,
            max_tgt_len: 200,
            enc_fixed_len: None,
            seed: 11,
        }
    }

    pub fn bundled(task: Task) -> Self {
        match task {
            Task::Stt => Self::bundled_stt(),
            Task::Tts => Self::bundled_tts(),
        }
    }

    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_enc_layers_edge == 0 || self.n_enc_layers_edge > self.n_enc_layers_full {
            return bad(format!(
                "need 1 <= n_enc_layers_edge ({}) <= n_enc_layers_full ({})",
                self.n_enc_layers_edge, self.n_enc_layers_full
            ));
        }
        if self.n_dec_layers == 0 || self.max_tgt_len == 0 || self.max_src_len == 0 {
            return bad("layer and length limits must be positive".into());
        }
        if self.vocab_size < 2 || self.n_mel == 0 {
            return bad("vocab_size must be >= 2 and n_mel positive".into());
        }
        match (self.task, self.enc_fixed_len) {
            (Task::Stt, None) | (Task::Stt, Some(0)) => bad("STT requires enc_fixed_len".into()),
            (Task::Tts, Some(_)) => bad("enc_fixed_len applies to STT only".into()),
            _ => Ok(()),
        }
    }

    /// Reads a config from `key = value` entries. `task` picks the bundled
    /// defaults; every other field overrides them.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let task: Task = match kv.get_str("task") {
            Some(t) => t.parse().map_err(ConfigError::Invalid)?,
            None => Task::Stt,
        };
        let base = Self::bundled(task);
        let enc_fixed_len = match kv.get_str("enc_fixed_len") {
            Some("none") => None,
            Some(_) => kv.get("enc_fixed_len")?,
            None => base.enc_fixed_len,
        };
        let cfg = Self {
            task,
            d_model: kv.get_or("d_model", base.d_model)?,
            n_heads: kv.get_or("n_heads", base.n_heads)?,
            n_enc_layers_full: kv.get_or("n_enc_layers_full", base.n_enc_layers_full)?,
            n_enc_layers_edge: kv.get_or("n_enc_layers_edge", base.n_enc_layers_edge)?,
            n_dec_layers: kv.get_or("n_dec_layers", base.n_dec_layers)?,
            vocab_size: kv.get_or("vocab_size", base.vocab_size)?,
            n_mel: kv.get_or("n_mel", base.n_mel)?,
            max_src_len: kv.get_or("max_src_len", base.max_src_len)?,
            max_tgt_len: kv.get_or("max_tgt_len", base.max_tgt_len)?,
            enc_fixed_len,
            seed: kv.get_or("seed", base.seed)?,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prenet {
    /// Mel frames projected to `d_model`, then downsampled by two.
    Mel(Linear),
    /// Token embedding plus position encoding.
    Tokens(Embedding),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
    pub norm: LayerNorm,
}

impl Encoder {
    fn random(cfg: &ModelConfig, n_layers: usize, rng: &mut Pcg64) -> Self {
        let bound = init_bound(cfg);
        Self {
            layers: (0..n_layers)
                .map(|_| EncoderLayer::random(cfg.d_model, cfg.n_heads, cfg.d_ff(), bound, rng))
                .collect(),
            norm: LayerNorm::new(cfg.d_model),
        }
    }

    pub fn forward(&self, x: &[f32], ops: &mut OpCounter, mut maps: Option<&mut Vec<AttentionMap>>) -> Vec<f32> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut map = maps.as_ref().map(|_| AttentionMap::new());
            h = layer.forward(&h, ops, map.as_mut());
            if let (Some(all), Some(m)) = (maps.as_deref_mut(), map) {
                all.push(m);
            }
        }
        self.norm.forward(&h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderInput {
    /// Previous token embedding (STT).
    Tokens(Embedding),
    /// Previous mel frame projected to `d_model` (TTS).
    Frames(Linear),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub input: DecoderInput,
    pub layers: Vec<DecoderLayer>,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Postnet {
    Vocab(Linear),
    Mel { frame: Linear, stop: Linear },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeParams {
    pub prenet: Prenet,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub postnet: Postnet,
}

/// Encoder output, `[enc_len, d_model]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub states: Tensor,
    pub origin: Branch,
}

impl HiddenStates {
    pub fn len(&self) -> usize {
        self.states.shape()[0] as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeResult {
    /// Greedy transcript without the EOS token. `step_logprobs` has one
    /// entry per decoding step, including a final EOS step if one occurred.
    Tokens {
        tokens: Vec<u32>,
        step_logprobs: Vec<f32>,
    },
    /// `[n_frames, n_mel]` log-mel frames and the stop probability per step.
    Frames { frames: Tensor, stop_probs: Vec<f32> },
}

impl DecodeResult {
    pub fn steps(&self) -> usize {
        match self {
            DecodeResult::Tokens { step_logprobs, .. } => step_logprobs.len(),
            DecodeResult::Frames { stop_probs, .. } => stop_probs.len(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a> {
    Mel(&'a MelSpec),
    Tokens(&'a [u32]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitModel {
    config: ModelConfig,
    edge: EdgeParams,
    cloud: Encoder,
    edge_quantized: Option<Vec<(String, Tensor)>>,
}

fn init_bound(cfg: &ModelConfig) -> f32 {
    1.0 / (cfg.d_model as f32).sqrt()
}

pub fn build_split_model(config: ModelConfig) -> Result<SplitModel, ModelError> {
    SplitModel::build(config)
}

impl SplitModel {
    pub fn build(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let seed = u128::from(config.seed);
        let mut rng = Pcg64::new(seed, EDGE_STREAM);
        let bound = init_bound(&config);
        let (d, ff) = (config.d_model, config.d_ff());

        let prenet = match config.task {
            Task::Stt => Prenet::Mel(Linear::random(config.n_mel, d, bound, &mut rng)),
            Task::Tts => Prenet::Tokens(Embedding::random(config.vocab_size, d, bound, &mut rng)),
        };
        let encoder = Encoder::random(&config, config.n_enc_layers_edge, &mut rng);
        let input = match config.task {
            Task::Stt => DecoderInput::Tokens(Embedding::random(config.vocab_size, d, bound, &mut rng)),
            Task::Tts => DecoderInput::Frames(Linear::random(config.n_mel, d, bound, &mut rng)),
        };
        let decoder = Decoder {
            input,
            layers: (0..config.n_dec_layers)
                .map(|_| DecoderLayer::random(d, config.n_heads, ff, bound, &mut rng))
                .collect(),
            norm: LayerNorm::new(d),
        };
        let postnet = match config.task {
            Task::Stt => Postnet::Vocab(Linear::random(d, config.vocab_size, bound, &mut rng)),
            Task::Tts => {
                let frame = Linear::random(d, config.n_mel, bound, &mut rng);
                let mut stop = Linear::random(d, 1, bound, &mut rng);
                stop.bias[0] = TTS_STOP_BIAS;
                Postnet::Mel { frame, stop }
            }
        };

        let mut cloud_rng = Pcg64::new(seed, CLOUD_STREAM);
        let cloud = Encoder::random(&config, config.n_enc_layers_full, &mut cloud_rng);

        Ok(Self {
            config,
            edge: EdgeParams {
                prenet,
                encoder,
                decoder,
                postnet,
            },
            cloud,
            edge_quantized: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn edge_params(&self) -> &EdgeParams {
        &self.edge
    }

    pub fn cloud_encoder(&self) -> &Encoder {
        &self.cloud
    }

    /// Replaces the cloud encoder. Its depth must equal `n_enc_layers_full`.
    pub fn with_cloud_encoder(mut self, encoder: Encoder) -> Result<Self, ModelError> {
        if encoder.layers.len() != self.config.n_enc_layers_full
            || encoder.norm.gamma.len() != self.config.d_model
        {
            return Err(ModelError::InvalidConfig(format!(
                "cloud encoder must have {} layers of width {}",
                self.config.n_enc_layers_full, self.config.d_model
            )));
        }
        self.cloud = encoder;
        Ok(self)
    }

    /// Test rig: the cloud encoder becomes the edge encoder followed by
    /// identity blocks, so both branches compute the same function.
    pub fn with_identity_extended_cloud(self) -> Self {
        let cfg = &self.config;
        let mut layers = self.edge.encoder.layers.clone();
        while layers.len() < cfg.n_enc_layers_full {
            layers.push(EncoderLayer::identity(cfg.d_model, cfg.n_heads, cfg.d_ff()));
        }
        let encoder = Encoder {
            layers,
            norm: self.edge.encoder.norm.clone(),
        };
        self.with_cloud_encoder(encoder)
            .expect("extended encoder has the configured depth")
    }

    pub fn prenet_forward(&self, input: ModelInput<'_>) -> Result<Tensor, ModelError> {
        self.prenet_forward_metered(input, &mut OpCounter::default())
    }

    pub fn prenet_forward_metered(&self, input: ModelInput<'_>, ops: &mut OpCounter) -> Result<Tensor, ModelError> {
        let cfg = &self.config;
        let d = cfg.d_model;
        match (&self.edge.prenet, input) {
            (Prenet::Mel(proj), ModelInput::Mel(mel)) => {
                let n = mel.n_frames();
                if n > cfg.max_src_len {
                    return Err(ModelError::InputTooLong {
                        len: n,
                        max: cfg.max_src_len,
                    });
                }
                if mel.n_mel() != cfg.n_mel {
                    return Err(ModelError::ShapeMismatch {
                        expected: format!("[frames, {}]", cfg.n_mel),
                        actual: mel.frames.shape().to_vec(),
                    });
                }
                let projected = proj.forward(mel.values(), ops);
                let fixed = cfg.enc_fixed_len.expect("validated STT config");
                let mut out = vec![0.0f32; fixed * d];
                for (j, pair) in projected.chunks(2 * d).take(fixed).enumerate() {
                    let row = &mut out[j * d..(j + 1) * d];
                    let count = (pair.len() / d) as f32;
                    for (c, r) in row.iter_mut().enumerate() {
                        let sum: f32 = pair.chunks(d).map(|p| p[c]).sum();
                        *r = sum / count;
                    }
                    for (r, p) in row.iter_mut().zip(positional_encoding(j, d)) {
                        *r += p;
                    }
                }
                Ok(Tensor::from_f32(vec![fixed as u32, d as u32], out)?)
            }
            (Prenet::Tokens(embed), ModelInput::Tokens(tokens)) => {
                if tokens.is_empty() {
                    return Err(ModelError::EmptyInput);
                }
                if tokens.len() > cfg.max_src_len {
                    return Err(ModelError::InputTooLong {
                        len: tokens.len(),
                        max: cfg.max_src_len,
                    });
                }
                let mut out = Vec::with_capacity(tokens.len() * d);
                for (pos, &t) in tokens.iter().enumerate() {
                    if t as usize >= cfg.vocab_size {
                        return Err(ModelError::TokenOutOfRange {
                            token: t,
                            vocab: cfg.vocab_size,
                        });
                    }
                    let pe = positional_encoding(pos, d);
                    out.extend(embed.row(t as usize).iter().zip(pe).map(|(e, p)| e + p));
                }
                Ok(Tensor::from_f32(vec![tokens.len() as u32, d as u32], out)?)
            }
            (_, ModelInput::Mel(_)) => Err(ModelError::WrongInput {
                task: cfg.task,
                got: "mel",
            }),
            (_, ModelInput::Tokens(_)) => Err(ModelError::WrongInput {
                task: cfg.task,
                got: "token",
            }),
        }
    }

    /// Checks that `features` is a legal encoder input for this config.
    pub fn check_features(&self, features: &Tensor) -> Result<(), ModelError> {
        let cfg = &self.config;
        let shape = features.shape();
        let expected = match cfg.enc_fixed_len {
            Some(n) => format!("[{n}, {}]", cfg.d_model),
            None => format!("[1..={}, {}]", cfg.max_src_len, cfg.d_model),
        };
        let ok = shape.len() == 2
            && shape[1] as usize == cfg.d_model
            && match cfg.enc_fixed_len {
                Some(n) => shape[0] as usize == n,
                None => (1..=cfg.max_src_len).contains(&(shape[0] as usize)),
            }
            && features.as_f32().is_some();
        if ok {
            Ok(())
        } else {
            Err(ModelError::ShapeMismatch {
                expected,
                actual: shape.to_vec(),
            })
        }
    }

    pub fn encoder_forward(&self, features: &Tensor, which: Branch) -> Result<HiddenStates, ModelError> {
        self.encoder_forward_metered(features, which, &mut OpCounter::default())
    }

    pub fn encoder_forward_metered(
        &self,
        features: &Tensor,
        which: Branch,
        ops: &mut OpCounter,
    ) -> Result<HiddenStates, ModelError> {
        self.check_features(features)?;
        let x = features.as_f32().expect("checked FP32");
        let out = self.encoder(which).forward(x, ops, None);
        Ok(HiddenStates {
            states: Tensor::from_f32(features.shape().to_vec(), out)?,
            origin: which,
        })
    }

    /// Per-layer attention probabilities of one encoder pass.
    pub fn encoder_attention_maps(&self, features: &Tensor, which: Branch) -> Result<Vec<AttentionMap>, ModelError> {
        self.check_features(features)?;
        let mut maps = Vec::new();
        self.encoder(which)
            .forward(features.as_f32().expect("checked FP32"), &mut OpCounter::default(), Some(&mut maps));
        Ok(maps)
    }

    fn encoder(&self, which: Branch) -> &Encoder {
        match which {
            Branch::Edge => &self.edge.encoder,
            Branch::Cloud => &self.cloud,
        }
    }

    pub fn decoder_greedy(&self, hidden: &HiddenStates) -> DecodeResult {
        self.decode_steps(hidden, self.config.max_tgt_len, &mut OpCounter::default())
    }

    pub fn decoder_greedy_metered(&self, hidden: &HiddenStates, ops: &mut OpCounter) -> DecodeResult {
        self.decode_steps(hidden, self.config.max_tgt_len, ops)
    }

    /// Greedy autoregressive decoding for at most `max_steps` steps (capped
    /// at `max_tgt_len`).
    pub fn decode_steps(&self, hidden: &HiddenStates, max_steps: usize, ops: &mut OpCounter) -> DecodeResult {
        let cfg = &self.config;
        let d = cfg.d_model;
        let max_steps = max_steps.min(cfg.max_tgt_len);
        let memory = hidden.states.as_f32().expect("hidden states are FP32");
        let dec = &self.edge.decoder;
        let mut caches: Vec<_> = dec.layers.iter().map(|l| l.prepare(memory, ops)).collect();

        let mut run_step = |input: Vec<f32>, pos: usize, ops: &mut OpCounter| -> Vec<f32> {
            let mut x: Vec<f32> = input.iter().zip(positional_encoding(pos, d)).map(|(a, b)| a + b).collect();
            for (layer, cache) in dec.layers.iter().zip(caches.iter_mut()) {
                x = layer.step(&x, cache, ops);
            }
            dec.norm.forward(&x)
        };

        match (&dec.input, &self.edge.postnet) {
            (DecoderInput::Tokens(embed), Postnet::Vocab(head)) => {
                let mut tokens = Vec::new();
                let mut step_logprobs = Vec::new();
                let mut prev = BOS_TOKEN;
                for pos in 0..max_steps {
                    let h = run_step(embed.row(prev as usize).to_vec(), pos, ops);
                    let lp = log_softmax(&head.forward(&h, ops));
                    let best = argmax(&lp);
                    step_logprobs.push(lp[best]);
                    if best as u32 == EOS_TOKEN {
                        break;
                    }
                    tokens.push(best as u32);
                    prev = best as u32;
                }
                DecodeResult::Tokens { tokens, step_logprobs }
            }
            (DecoderInput::Frames(proj), Postnet::Mel { frame, stop }) => {
                let mut rows: Vec<f32> = Vec::new();
                let mut stop_probs = Vec::new();
                let mut prev = vec![0.0f32; cfg.n_mel];
                for pos in 0..max_steps {
                    let h = run_step(proj.forward(&prev, ops), pos, ops);
                    let out = frame.forward(&h, ops);
                    let p = sigmoid(stop.forward(&h, ops)[0]);
                    rows.extend_from_slice(&out);
                    stop_probs.push(p);
                    prev = out;
                    if p > 0.5 {
                        break;
                    }
                }
                let n = stop_probs.len() as u32;
                DecodeResult::Frames {
                    frames: Tensor::from_f32(vec![n, cfg.n_mel as u32], rows).expect("rows match frame count"),
                    stop_probs,
                }
            }
            _ => unreachable!("decoder input and postnet are built for the same task"),
        }
    }

    /// Every parameter tensor of `part`, with stable dotted names.
    pub fn named_tensors(&self, part: Part) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        if matches!(part, Part::Edge | Part::All) {
            let e = &self.edge;
            match &e.prenet {
                Prenet::Mel(l) => push_linear(&mut out, "prenet.proj", l),
                Prenet::Tokens(emb) => push_embedding(&mut out, "prenet.embed", emb),
            }
            push_encoder(&mut out, "encoder", &e.encoder);
            match &e.decoder.input {
                DecoderInput::Tokens(emb) => push_embedding(&mut out, "decoder.embed", emb),
                DecoderInput::Frames(l) => push_linear(&mut out, "decoder.prenet", l),
            }
            for (i, l) in e.decoder.layers.iter().enumerate() {
                let p = format!("decoder.layers.{i}");
                push_norm(&mut out, &format!("{p}.norm1"), &l.norm1);
                push_attention(&mut out, &format!("{p}.self_attn"), &l.self_attn);
                push_norm(&mut out, &format!("{p}.norm2"), &l.norm2);
                push_attention(&mut out, &format!("{p}.cross_attn"), &l.cross_attn);
                push_norm(&mut out, &format!("{p}.norm3"), &l.norm3);
                push_linear(&mut out, &format!("{p}.ffn.up"), &l.ffn.up);
                push_linear(&mut out, &format!("{p}.ffn.down"), &l.ffn.down);
            }
            push_norm(&mut out, "decoder.norm", &e.decoder.norm);
            match &e.postnet {
                Postnet::Vocab(l) => push_linear(&mut out, "postnet.vocab", l),
                Postnet::Mel { frame, stop } => {
                    push_linear(&mut out, "postnet.frame", frame);
                    push_linear(&mut out, "postnet.stop", stop);
                }
            }
        }
        if matches!(part, Part::Cloud | Part::All) {
            push_encoder(&mut out, "cloud_encoder", &self.cloud);
        }
        out
    }

    pub fn param_count(&self, part: Part) -> usize {
        self.named_tensors(part).iter().map(|(_, t)| t.len()).sum()
    }

    /// Edge share of all parameters.
    pub fn edge_fraction(&self) -> f64 {
        self.param_count(Part::Edge) as f64 / self.param_count(Part::All) as f64
    }

    /// Builds the INT8 mirror of the edge parameters.
    pub fn quantize_edge(&mut self) -> Result<(), ModelError> {
        let q = self
            .named_tensors(Part::Edge)
            .into_iter()
            .map(|(name, t)| Ok((name, quantize_linear(&t)?)))
            .collect::<Result<Vec<_>, TensorError>>()?;
        self.edge_quantized = Some(q);
        Ok(())
    }

    pub fn edge_quantized(&self) -> Option<&[(String, Tensor)]> {
        self.edge_quantized.as_deref()
    }

    pub fn edge_fp32_bytes(&self) -> usize {
        self.named_tensors(Part::Edge).iter().map(|(_, t)| t.memory_bytes()).sum()
    }

    pub fn edge_int8_bytes(&self) -> Option<usize> {
        self.edge_quantized
            .as_ref()
            .map(|q| q.iter().map(|(_, t)| t.memory_bytes()).sum())
    }
}

fn argmax(x: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn tensor(shape: &[usize], data: &[f32]) -> Tensor {
    let shape = shape.iter().map(|&d| d as u32).collect();
    Tensor::from_f32(shape, data.to_vec()).expect("parameter buffers match their shapes")
}

fn push_linear(out: &mut Vec<(String, Tensor)>, name: &str, l: &Linear) {
    out.push((format!("{name}.weight"), tensor(&[l.in_dim, l.out_dim], &l.weight)));
    out.push((format!("{name}.bias"), tensor(&[l.out_dim], &l.bias)));
}

fn push_embedding(out: &mut Vec<(String, Tensor)>, name: &str, e: &Embedding) {
    out.push((format!("{name}.table"), tensor(&[e.vocab, e.dim], &e.table)));
}

fn push_norm(out: &mut Vec<(String, Tensor)>, name: &str, n: &LayerNorm) {
    out.push((format!("{name}.gamma"), tensor(&[n.gamma.len()], &n.gamma)));
    out.push((format!("{name}.beta"), tensor(&[n.beta.len()], &n.beta)));
}

fn push_attention(out: &mut Vec<(String, Tensor)>, name: &str, a: &layers::MultiHeadAttention) {
    push_linear(out, &format!("{name}.q"), &a.q);
    push_linear(out, &format!("{name}.k"), &a.k);
    push_linear(out, &format!("{name}.v"), &a.v);
    push_linear(out, &format!("{name}.o"), &a.o);
}

fn push_encoder(out: &mut Vec<(String, Tensor)>, name: &str, enc: &Encoder) {
    for (i, l) in enc.layers.iter().enumerate() {
        let p = format!("{name}.layers.{i}");
        push_norm(out, &format!("{p}.norm1"), &l.norm1);
        push_attention(out, &format!("{p}.attn"), &l.attn);
        push_norm(out, &format!("{p}.norm2"), &l.norm2);
        push_linear(out, &format!("{p}.ffn.up"), &l.ffn.up);
        push_linear(out, &format!("{p}.ffn.down"), &l.ffn.down);
    }
    push_norm(out, &format!("{name}.norm"), &enc.norm);
}
