//! Span masking over the layout `[cls] h [sep] r [sep] t [sep]`.

use std::f64::consts::LN_2;

use ktl_core::text::vocab::{CLS_ID, MASK_ID, SEP_ID};
use ktl_core::Direction;
use ktl_neural::tape::log_sum_exp;
use ktl_neural::{Encoder, ForwardOptions, Linear, Tape, Tensor, Var};

use crate::error::{ObjectiveError, Result};
use crate::method::Field;

/// A masked sequence with the original ids at the masked positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedTriple {
    pub ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub targets: Vec<usize>,
}

/// Lays out the three fields and masks every token of the generated one.
pub fn smlm_mask(fields: [&[usize]; 3], direction: Direction, max_len: usize) -> Result<MaskedTriple> {
    let field = Field::generated_by(direction);
    if fields[field.index()].is_empty() {
        return Err(ObjectiveError::EmptyMaskedField(field));
    }
    let len = 4 + fields.iter().map(|f| f.len()).sum::<usize>();
    if len > max_len {
        let longest = Field::ALL
            .into_iter()
            .max_by_key(|f| fields[f.index()].len())
            .unwrap_or(field);
        return Err(ObjectiveError::FieldTooLong {
            field: longest,
            len,
            max: max_len,
        });
    }
    let mut ids = Vec::with_capacity(len);
    let mut positions = Vec::new();
    let mut targets = Vec::new();
    ids.push(CLS_ID);
    for (i, f) in fields.iter().enumerate() {
        for &tok in f.iter() {
            if i == field.index() {
                positions.push(ids.len());
                targets.push(tok);
                ids.push(MASK_ID);
            } else {
                ids.push(tok);
            }
        }
        ids.push(SEP_ID);
    }
    Ok(MaskedTriple { ids, positions, targets })
}

/// Unmasking logits at the masked positions, one row per mask.
pub fn smlm_logits(tape: &mut Tape, encoder: &Encoder, head: &Linear, masked: &MaskedTriple) -> Result<Var> {
    let enc = encoder.forward(tape, &masked.ids, ForwardOptions::default())?;
    let rows: Vec<Var> = masked.positions.iter().map(|&p| tape.row(enc.per_token, p)).collect();
    let stacked = if rows.len() == 1 { rows[0] } else { tape.concat_rows(&rows) };
    Ok(head.forward(tape, stacked))
}

/// Mean cross-entropy in nats, as used for training.
pub fn smlm_loss_var(tape: &mut Tape, encoder: &Encoder, head: &Linear, masked: &MaskedTriple) -> Result<Var> {
    let logits = smlm_logits(tape, encoder, head, masked)?;
    Ok(tape.cross_entropy(logits, &masked.targets))
}

/// `-(1/n) Σ log₂ P(target_i)` over the rows of `logits`.
pub fn smlm_loss_from_logits(logits: &Tensor, targets: &[usize]) -> f64 {
    assert_eq!(logits.rows, targets.len());
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let row = logits.row(i);
            log_sum_exp(row) - row[t]
        })
        .sum();
    total / targets.len() as f64 / LN_2
}

/// Distance of the masked field: its joint unmasking loss in bits.
pub fn smlm_distance(encoder: &Encoder, head: &Linear, tape: &mut Tape, masked: &MaskedTriple) -> Result<f64> {
    let logits = smlm_logits(tape, encoder, head, masked)?;
    Ok(smlm_loss_from_logits(tape.value(logits), &masked.targets))
}
