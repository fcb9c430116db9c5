use ktl_core::text::tokenize;
use ktl_core::text::vocab::CLS_ID;
use ktl_core::text::Vocabulary;
use ktl_core::Direction;
use ktl_neural::{Encoder, EncoderConfig, ForwardOptions, Linear, ParamId, ParamStore, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ObjectiveError, Result};
use crate::krl::{self, KrlHeads};
use crate::method::{DistanceSemantics, Field, Method};
use crate::smlm;

pub const CHECKPOINT_FORMAT: &str = "ktl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    Krl(KrlHeads),
    Smlm(Linear),
}

/// A trained encoder plus its objective heads.
#[derive(Debug, Clone, PartialEq)]
pub struct KtlModel {
    pub method: Method,
    pub vocab: Vocabulary,
    pub encoder: Encoder,
    pub heads: Heads,
    pub params: ParamStore,
}

/// Small enough that the unmasking distribution starts near uniform.
pub const SMLM_HEAD_INIT_STD: f64 = 0.1;

impl KtlModel {
    /// Freshly initialized model; `config.vocab_size` is taken from `vocab`.
    pub fn new(method: Method, vocab: Vocabulary, mut config: EncoderConfig, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(config, &mut params, &mut rng)?;
        let d = encoder.config.dim;
        let heads = match method {
            Method::Smlm => Heads::Smlm(Linear::new(
                &mut params,
                "smlm.unmask",
                d,
                vocab.len(),
                SMLM_HEAD_INIT_STD,
                &mut rng,
            )),
            _ => Heads::Krl(KrlHeads::new(&mut params, d, &mut rng)),
        };
        Ok(KtlModel {
            method,
            vocab,
            encoder,
            heads,
            params,
        })
    }

    pub fn semantics(&self) -> DistanceSemantics {
        self.method.semantics()
    }

    pub fn max_len(&self) -> usize {
        self.encoder.config.max_len
    }

    pub fn head_param_ids(&self) -> Vec<ParamId> {
        match &self.heads {
            Heads::Krl(h) => h.param_ids(),
            Heads::Smlm(l) => l.ids().to_vec(),
        }
    }

    /// Token ids of a phrase, without markers.
    pub fn token_ids(&self, text: &str) -> Vec<usize> {
        self.vocab.encode(&tokenize(text))
    }

    /// `[cls]` followed by the phrase ids.
    pub fn field_input(&self, field: Field, ids: &[usize]) -> Result<Vec<usize>> {
        let len = ids.len() + 1;
        if len > self.max_len() {
            return Err(ObjectiveError::FieldTooLong {
                field,
                len,
                max: self.max_len(),
            });
        }
        let mut out = Vec::with_capacity(len);
        out.push(CLS_ID);
        out.extend_from_slice(ids);
        Ok(out)
    }

    pub(crate) fn pooled(&self, tape: &mut Tape, input: &[usize], truncate: bool) -> Result<Var> {
        let opts = ForwardOptions {
            truncate,
            ..Default::default()
        };
        Ok(self.encoder.forward(tape, input, opts)?.pooled)
    }

    /// `[d_h, d_r, d_t]` for the triple `(h, r, t)`. An empty `h` yields
    /// `d_h = 1` and is encoded as a bare `[cls]` elsewhere.
    pub fn distances(&self, h: &str, r: &str, t: &str) -> Result<[f64; 3]> {
        let ids = [self.token_ids(h), self.token_ids(r), self.token_ids(t)];
        self.distances_ids([&ids[0], &ids[1], &ids[2]])
    }

    pub fn distances_ids(&self, ids: [&[usize]; 3]) -> Result<[f64; 3]> {
        let mut tape = Tape::new(&self.params);
        let mut out = [1.0; 3];
        match &self.heads {
            Heads::Krl(heads) => {
                let mut pooled = Vec::with_capacity(3);
                for field in Field::ALL {
                    let input = self.field_input(field, ids[field.index()])?;
                    pooled.push(self.pooled(&mut tape, &input, false)?);
                }
                let pooled = [pooled[0], pooled[1], pooled[2]];
                for d in Direction::ALL {
                    if d == Direction::GenerateHead && ids[0].is_empty() {
                        continue;
                    }
                    let (g, o) = krl::krl_forward(&mut tape, heads, d, pooled);
                    let (gv, ov) = (tape.value(g).data.clone(), tape.value(o).data.clone());
                    out[d.index()] = krl::krl_distance(self.semantics(), &gv, &ov);
                }
            }
            Heads::Smlm(head) => {
                for d in Direction::ALL {
                    if d == Direction::GenerateHead && ids[0].is_empty() {
                        continue;
                    }
                    let masked = smlm::smlm_mask(ids, d, self.max_len())?;
                    out[d.index()] = smlm::smlm_distance(&self.encoder, head, &mut tape, &masked)?;
                }
            }
        }
        Ok(out)
    }

    /// Single distance `D` in `direction`.
    pub fn distance(&self, direction: Direction, h: &str, r: &str, t: &str) -> Result<f64> {
        Ok(self.distances(h, r, t)?[direction.index()])
    }

    pub fn to_checkpoint(&self, training: Option<serde_json::Value>, manifest: Option<serde_json::Value>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            format_version: CHECKPOINT_VERSION,
            method: self.method,
            distance_semantics: self.semantics(),
            encoder_config: self.encoder.config.clone(),
            vocab: self.vocab.clone(),
            encoder: self.encoder.clone(),
            heads: self.heads.clone(),
            params: self.params.clone(),
            training,
            manifest,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let bad = |m: String| Err(ObjectiveError::Checkpoint(m));
        if ck.format != CHECKPOINT_FORMAT {
            return bad(format!("unexpected format {:?}", ck.format));
        }
        if ck.format_version != CHECKPOINT_VERSION {
            return bad(format!("unsupported format_version {}", ck.format_version));
        }
        if ck.distance_semantics != ck.method.semantics() {
            return bad(format!(
                "distance_semantics {:?} does not match method {}",
                ck.distance_semantics, ck.method
            ));
        }
        if ck.encoder.config != ck.encoder_config || ck.encoder_config.vocab_size != ck.vocab.len() {
            return bad("encoder config does not match encoder or vocabulary".into());
        }
        let template = KtlModel::new(ck.method, ck.vocab.clone(), ck.encoder_config.clone(), 0)?;
        if template.encoder != ck.encoder || template.heads != ck.heads || template.params.len() != ck.params.len() {
            return bad("parameter layout does not match the declared configuration".into());
        }
        for id in template.params.ids() {
            if template.params.name(id) != ck.params.name(id)
                || template.params.get(id).shape() != ck.params.get(id).shape()
            {
                return bad(format!("parameter {} has unexpected name or shape", ck.params.name(id)));
            }
        }
        if !ck.params.all_finite() {
            return bad("non-finite parameter values".into());
        }
        Ok(KtlModel {
            method: ck.method,
            vocab: ck.vocab,
            encoder: ck.encoder,
            heads: ck.heads,
            params: ck.params,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint(None, None))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        KtlModel::from_checkpoint(serde_json::from_str(s)?)
    }
}

/// On-disk model container.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub method: Method,
    pub distance_semantics: DistanceSemantics,
    pub encoder_config: EncoderConfig,
    pub vocab: Vocabulary,
    pub encoder: Encoder,
    pub heads: Heads,
    pub params: ParamStore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}
