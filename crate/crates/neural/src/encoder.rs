//! Pre-norm transformer encoder with learned positions. Position 0 carries
//! the `[cls]` token and its output is the pooled representation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::layers::{FeedForward, LayerNorm, Linear};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const MASKED: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 256,
            max_len: 128,
            dropout: 0.0,
            init_std: 0.3,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(NeuralError::Config(m));
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive".into());
        }
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return fail(format!("dim {} must be a positive multiple of heads {}", self.dim, self.heads));
        }
        if self.max_len < 8 {
            return fail(format!("max_len {} must be at least 8", self.max_len));
        }
        if self.ff_dim == 0 {
            return fail("ff_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        if !(self.init_std > 0.0) {
            return fail("init_std must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Block {
    ln_attn: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    tokens: ParamId,
    positions: ParamId,
    blocks: Vec<Block>,
    ln_final: LayerNorm,
}

/// Tape handles for an encoded sequence.
#[derive(Debug, Clone, Copy)]
pub struct EncodedVars {
    /// `1 x d`, the position-0 output.
    pub pooled: Var,
    /// `n x d`
    pub per_token: Var,
}

/// Plain values of an encoded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub pooled: Vec<f64>,
    pub per_token: Vec<Vec<f64>>,
}

/// Per-call options for [`Encoder::forward`].
#[derive(Default)]
pub struct ForwardOptions<'r> {
    /// Number of leading positions that are real tokens; the rest are padding
    /// and are excluded as attention keys.
    pub valid_len: Option<usize>,
    /// Cut over-length inputs to `max_len` instead of failing.
    pub truncate: bool,
    /// Source of dropout masks; dropout is off when `None`.
    pub dropout_rng: Option<&'r mut dyn rand::RngCore>,
}

impl Encoder {
    pub fn new<R: Rng>(config: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let std = config.init_std;
        let tokens = store.normal("enc.tokens", config.vocab_size, d, std, rng);
        let positions = store.normal("enc.positions", config.max_len, d, std, rng);
        let blocks = (0..config.layers)
            .map(|l| {
                let p = format!("enc.block{l}");
                Block {
                    ln_attn: LayerNorm::new(store, &format!("{p}.ln_attn"), d),
                    query: Linear::new(store, &format!("{p}.query"), d, d, std, rng),
                    key: Linear::new(store, &format!("{p}.key"), d, d, std, rng),
                    value: Linear::new(store, &format!("{p}.value"), d, d, std, rng),
                    out: Linear::new(store, &format!("{p}.out"), d, d, std, rng),
                    ln_ff: LayerNorm::new(store, &format!("{p}.ln_ff"), d),
                    ff: FeedForward::new(store, &format!("{p}.ff"), d, config.ff_dim, d, std, rng),
                }
            })
            .collect();
        let ln_final = LayerNorm::new(store, "enc.ln_final", d);
        Ok(Encoder {
            config,
            tokens,
            positions,
            blocks,
            ln_final,
        })
    }

    /// Every parameter owned by the encoder.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.tokens, self.positions];
        for b in &self.blocks {
            ids.extend(b.ln_attn.ids());
            ids.extend(b.query.ids());
            ids.extend(b.key.ids());
            ids.extend(b.value.ids());
            ids.extend(b.out.ids());
            ids.extend(b.ln_ff.ids());
            ids.extend(b.ff.ids());
        }
        ids.extend(self.ln_final.ids());
        ids
    }

    pub fn check_input(&self, ids: &[usize], truncate: bool) -> Result<usize> {
        if ids.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(NeuralError::TokenOutOfRange {
                id: bad,
                vocab: self.config.vocab_size,
            });
        }
        if ids.len() > self.config.max_len {
            if truncate {
                return Ok(self.config.max_len);
            }
            return Err(NeuralError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        Ok(ids.len())
    }

    fn dropout(&self, tape: &mut Tape, x: Var, opts: &mut ForwardOptions) -> Var {
        let p = self.config.dropout;
        let Some(rng) = opts.dropout_rng.as_mut() else { return x };
        if p == 0.0 {
            return x;
        }
        let (r, c) = tape.value(x).shape();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let m = tape.constant(Tensor::from_vec(r, c, mask));
        tape.mul(x, m)
    }

    /// Records the forward pass of `ids` on `tape`.
    pub fn forward(&self, tape: &mut Tape, ids: &[usize], mut opts: ForwardOptions) -> Result<EncodedVars> {
        let n = self.check_input(ids, opts.truncate)?;
        let ids = &ids[..n];
        let valid = opts.valid_len.unwrap_or(n).min(n);
        let d = self.config.dim;
        let heads = self.config.heads;
        let hd = d / heads;
        let inv_sqrt = 1.0 / (hd as f64).sqrt();

        let tok = tape.gather(self.tokens, ids);
        let positions: Vec<usize> = (0..n).collect();
        let pos = tape.gather(self.positions, &positions);
        let mut x = tape.add(tok, pos);
        x = self.dropout(tape, x, &mut opts);

        let mask = (valid < n).then(|| {
            let mut m = Tensor::zeros(n, n);
            for r in 0..n {
                for c in valid..n {
                    m.data[r * n + c] = MASKED;
                }
            }
            m
        });

        for block in &self.blocks {
            let h = block.ln_attn.forward(tape, x);
            let q = block.query.forward(tape, h);
            let k = block.key.forward(tape, h);
            let v = block.value.forward(tape, h);
            let mut contexts = Vec::with_capacity(heads);
            for head in 0..heads {
                let qh = tape.slice_cols(q, head * hd, hd);
                let kh = tape.slice_cols(k, head * hd, hd);
                let vh = tape.slice_cols(v, head * hd, hd);
                let scores = tape.matmul_bt(qh, kh);
                let mut scores = tape.scale(scores, inv_sqrt);
                if let Some(m) = &mask {
                    scores = tape.add_const(scores, m);
                }
                let attn = tape.softmax_rows(scores);
                contexts.push(tape.matmul(attn, vh));
            }
            let ctx = if heads == 1 { contexts[0] } else { tape.concat_cols(&contexts) };
            let attn_out = block.out.forward(tape, ctx);
            let attn_out = self.dropout(tape, attn_out, &mut opts);
            x = tape.add(x, attn_out);

            let h = block.ln_ff.forward(tape, x);
            let f = block.ff.forward(tape, h);
            let f = self.dropout(tape, f, &mut opts);
            x = tape.add(x, f);
        }
        let per_token = self.ln_final.forward(tape, x);
        let pooled = tape.row(per_token, 0);
        Ok(EncodedVars { pooled, per_token })
    }

    /// Inference-only forward pass.
    pub fn encode(&self, store: &ParamStore, ids: &[usize]) -> Result<EncodedSequence> {
        self.encode_with(store, ids, ForwardOptions::default())
    }

    pub fn encode_with(&self, store: &ParamStore, ids: &[usize], opts: ForwardOptions) -> Result<EncodedSequence> {
        let mut tape = Tape::new(store);
        let enc = self.forward(&mut tape, ids, opts)?;
        let per = tape.value(enc.per_token);
        Ok(EncodedSequence {
            pooled: tape.value(enc.pooled).data.clone(),
            per_token: (0..per.rows).map(|r| per.row(r).to_vec()).collect(),
        })
    }
}
