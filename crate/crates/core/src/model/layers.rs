//! Transformer building blocks over flat row-major `f32` buffers.

use rand::Rng;
use rand_pcg::Pcg64;

/// Multiply-accumulate tally used as the deterministic compute-cost measure.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub macs: u64,
}

impl OpCounter {
    pub fn add(&mut self, macs: u64) {
        self.macs += macs;
    }
}

pub(crate) fn uniform(rng: &mut Pcg64, n: usize, bound: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// `y = x W + b` with `W` stored `[in_dim, out_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub(crate) fn random(in_dim: usize, out_dim: usize, bound: f32, rng: &mut Pcg64) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: uniform(rng, in_dim * out_dim, bound),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f32], ops: &mut OpCounter) -> Vec<f32> {
        debug_assert_eq!(x.len() % self.in_dim, 0);
        let rows = x.len() / self.in_dim;
        let mut out = Vec::with_capacity(rows * self.out_dim);
        for r in 0..rows {
            let xr = &x[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.bias.clone();
            for (i, &xi) in xr.iter().enumerate() {
                let w = &self.weight[i * self.out_dim..(i + 1) * self.out_dim];
                for (a, &wj) in acc.iter_mut().zip(w) {
                    *a += xi * wj;
                }
            }
            out.extend_from_slice(&acc);
        }
        ops.add((rows * self.in_dim * self.out_dim) as u64);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vocab: usize,
    pub dim: usize,
    pub table: Vec<f32>,
}

impl Embedding {
    pub(crate) fn random(vocab: usize, dim: usize, bound: f32, rng: &mut Pcg64) -> Self {
        Self {
            vocab,
            dim,
            table: uniform(rng, vocab * dim, bound),
        }
    }

    pub fn row(&self, id: usize) -> &[f32] {
        &self.table[id * self.dim..(id + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

const LN_EPS: f32 = 1e-5;

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let d = self.gamma.len();
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks(d) {
            let mean = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / d as f32;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            out.extend(
                row.iter()
                    .zip(self.gamma.iter().zip(&self.beta))
                    .map(|(v, (g, b))| (v - mean) * inv * g + b),
            );
        }
        out
    }
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn forward(&self, x: &[f32], ops: &mut OpCounter) -> Vec<f32> {
        let mut h = self.up.forward(x, ops);
        h.iter_mut().for_each(|v| *v = gelu(*v));
        self.down.forward(&h, ops)
    }
}

/// Per-head attention probabilities, `[head][query_row][key_row]`.
pub type AttentionMap = Vec<Vec<Vec<f32>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub n_heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

impl MultiHeadAttention {
    pub(crate) fn random(d: usize, n_heads: usize, bound: f32, rng: &mut Pcg64) -> Self {
        Self {
            n_heads,
            q: Linear::random(d, d, bound, rng),
            k: Linear::random(d, d, bound, rng),
            v: Linear::random(d, d, bound, rng),
            o: Linear::random(d, d, bound, rng),
        }
    }

    fn dim(&self) -> usize {
        self.q.out_dim
    }

    /// Scaled dot-product attention of projected queries against projected
    /// keys/values, followed by the output projection. Every query attends to
    /// every key row given.
    pub fn attend(
        &self,
        q: &[f32],
        k: &[f32],
        v: &[f32],
        ops: &mut OpCounter,
        mut map: Option<&mut AttentionMap>,
    ) -> Vec<f32> {
        let d = self.dim();
        let hd = d / self.n_heads;
        let (nq, nk) = (q.len() / d, k.len() / d);
        let scale = 1.0 / (hd as f32).sqrt();
        let mut ctx = vec![0.0f32; nq * d];
        if let Some(m) = map.as_deref_mut() {
            *m = vec![Vec::with_capacity(nq); self.n_heads];
        }
        let mut scores = vec![0.0f32; nk];
        for h in 0..self.n_heads {
            let off = h * hd;
            for i in 0..nq {
                let qi = &q[i * d + off..i * d + off + hd];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &k[j * d + off..j * d + off + hd];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                }
                softmax_in_place(&mut scores);
                let out = &mut ctx[i * d + off..i * d + off + hd];
                for (j, &p) in scores.iter().enumerate() {
                    let vj = &v[j * d + off..j * d + off + hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
                if let Some(m) = map.as_deref_mut() {
                    m[h].push(scores.clone());
                }
            }
        }
        ops.add((2 * nq * nk * d) as u64);
        self.o.forward(&ctx, ops)
    }

    pub fn self_attention(&self, x: &[f32], ops: &mut OpCounter, map: Option<&mut AttentionMap>) -> Vec<f32> {
        let q = self.q.forward(x, ops);
        let k = self.k.forward(x, ops);
        let v = self.v.forward(x, ops);
        self.attend(&q, &k, &v, ops, map)
    }
}

pub fn softmax_in_place(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub fn log_softmax(x: &[f32]) -> Vec<f32> {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let lse = x.iter().map(|v| (v - max).exp()).sum::<f32>().ln() + max;
    x.iter().map(|v| v - lse).collect()
}

fn add_in_place(x: &mut [f32], y: &[f32]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

/// Pre-norm encoder block: self-attention then feed-forward, each residual.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub(crate) fn random(d: usize, n_heads: usize, d_ff: usize, bound: f32, rng: &mut Pcg64) -> Self {
        Self {
            norm1: LayerNorm::new(d),
            attn: MultiHeadAttention::random(d, n_heads, bound, rng),
            norm2: LayerNorm::new(d),
            ffn: FeedForward {
                up: Linear::random(d, d_ff, bound, rng),
                down: Linear::random(d_ff, d, bound, rng),
            },
        }
    }

    /// A block whose residual branches are exactly zero.
    pub fn identity(d: usize, n_heads: usize, d_ff: usize) -> Self {
        Self {
            norm1: LayerNorm::new(d),
            attn: MultiHeadAttention {
                n_heads,
                q: Linear::zeros(d, d),
                k: Linear::zeros(d, d),
                v: Linear::zeros(d, d),
                o: Linear::zeros(d, d),
            },
            norm2: LayerNorm::new(d),
            ffn: FeedForward {
                up: Linear::zeros(d, d_ff),
                down: Linear::zeros(d_ff, d),
            },
        }
    }

    pub fn forward(&self, x: &[f32], ops: &mut OpCounter, map: Option<&mut AttentionMap>) -> Vec<f32> {
        let mut h = x.to_vec();
        let a = self.attn.self_attention(&self.norm1.forward(x), ops, map);
        add_in_place(&mut h, &a);
        let f = self.ffn.forward(&self.norm2.forward(&h), ops);
        add_in_place(&mut h, &f);
        h
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention over the
/// encoder output, feed-forward.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub norm1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm3: LayerNorm,
    pub ffn: FeedForward,
}

/// Keys and values accumulated for one decoder block.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerCache {
    self_k: Vec<f32>,
    self_v: Vec<f32>,
    cross_k: Vec<f32>,
    cross_v: Vec<f32>,
}

impl DecoderLayer {
    pub(crate) fn random(d: usize, n_heads: usize, d_ff: usize, bound: f32, rng: &mut Pcg64) -> Self {
        Self {
            norm1: LayerNorm::new(d),
            self_attn: MultiHeadAttention::random(d, n_heads, bound, rng),
            norm2: LayerNorm::new(d),
            cross_attn: MultiHeadAttention::random(d, n_heads, bound, rng),
            norm3: LayerNorm::new(d),
            ffn: FeedForward {
                up: Linear::random(d, d_ff, bound, rng),
                down: Linear::random(d_ff, d, bound, rng),
            },
        }
    }

    pub(crate) fn prepare(&self, memory: &[f32], ops: &mut OpCounter) -> LayerCache {
        LayerCache {
            cross_k: self.cross_attn.k.forward(memory, ops),
            cross_v: self.cross_attn.v.forward(memory, ops),
            ..LayerCache::default()
        }
    }

    /// Advances one position. The new row attends to itself and every earlier
    /// row, which is the causal mask.
    pub(crate) fn step(&self, x: &[f32], cache: &mut LayerCache, ops: &mut OpCounter) -> Vec<f32> {
        let mut h = x.to_vec();
        let a = self.norm1.forward(x);
        let q = self.self_attn.q.forward(&a, ops);
        cache.self_k.extend(self.self_attn.k.forward(&a, ops));
        cache.self_v.extend(self.self_attn.v.forward(&a, ops));
        let s = self.self_attn.attend(&q, &cache.self_k, &cache.self_v, ops, None);
        add_in_place(&mut h, &s);

        let b = self.norm2.forward(&h);
        let q = self.cross_attn.q.forward(&b, ops);
        let c = self.cross_attn.attend(&q, &cache.cross_k, &cache.cross_v, ops, None);
        add_in_place(&mut h, &c);

        let f = self.ffn.forward(&self.norm3.forward(&h), ops);
        add_in_place(&mut h, &f);
        h
    }
}

/// Sinusoidal position encoding for one position.
pub fn positional_encoding(pos: usize, d: usize) -> Vec<f32> {
    (0..d)
        .map(|i| {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            if i % 2 == 0 {
                angle.sin() as f32
            } else {
                angle.cos() as f32
            }
        })
        .collect()
}
