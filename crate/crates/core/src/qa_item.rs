use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KtlError, Result};

/// A multiple-choice question. `context`, `question`, `option` map onto
/// `(h, r, t)` when scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub question: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl QaItem {
    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(KtlError::Validation("question is empty".into()));
        }
        if self.options.len() < 2 {
            return Err(KtlError::Validation(format!(
                "need at least 2 options, got {}",
                self.options.len()
            )));
        }
        if let Some(i) = self.options.iter().position(|o| o.trim().is_empty()) {
            return Err(KtlError::Validation(format!("option {i} is empty")));
        }
        if let Some(l) = self.label {
            if l >= self.options.len() {
                return Err(KtlError::Validation(format!(
                    "label {l} out of range for {} options",
                    self.options.len()
                )));
            }
        }
        Ok(())
    }

    /// Context text, or `None` when absent or blank.
    pub fn context_text(&self) -> Option<&str> {
        self.context.as_deref().filter(|c| !c.trim().is_empty())
    }
}

/// Reads and validates QA JSONL, naming the 1-based line of the first bad record.
pub fn read_qa_jsonl<R: BufRead>(input: R, source: &Path) -> Result<Vec<QaItem>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| KtlError::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| KtlError::MalformedLine {
            path: source.to_path_buf(),
            line: i + 1,
            message,
        };
        let item: QaItem = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        item.validate().map_err(|e| malformed(e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_qa_jsonl<W: Write>(mut out: W, items: &[QaItem]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| KtlError::io("<output>", e))?;
    }
    out.flush().map_err(|e| KtlError::io("<output>", e))?;
    Ok(())
}
