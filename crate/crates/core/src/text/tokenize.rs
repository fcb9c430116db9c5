use unicode_normalization::UnicodeNormalization;

/// Clitic suffixes split off the end of a word (`personx's` -> `personx`, `'s`).
const CLITICS: &[&str] = &["'s", "'re", "'ve", "'ll", "'d", "'m", "'t"];

/// NFC, lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercasing whitespace tokenizer that detaches leading and trailing
/// punctuation as single-character tokens and splits off English clitics.
///
/// Idempotent on its own output joined by single spaces.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized = normalize(text);
    let mut out = Vec::new();
    for piece in normalized.split(' ').filter(|p| !p.is_empty()) {
        split_piece(piece, &mut out);
    }
    out
}

/// Joins tokens with single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

fn split_piece(piece: &str, out: &mut Vec<String>) {
    if CLITICS.contains(&piece) {
        out.push(piece.to_string());
        return;
    }

    let chars: Vec<char> = piece.chars().collect();
    let mut start = 0;
    let mut end = chars.len();

    let mut trailing = Vec::new();
    while end > start && is_punct(chars[end - 1]) {
        trailing.push(chars[end - 1].to_string());
        end -= 1;
    }
    trailing.reverse();

    let mut leading = Vec::new();
    while start < end && is_punct(chars[start]) {
        let rest: String = chars[start..end].iter().collect();
        if CLITICS.iter().any(|c| rest == *c) {
            break;
        }
        leading.push(chars[start].to_string());
        start += 1;
    }

    out.extend(leading);
    if start < end {
        let core: String = chars[start..end].iter().collect();
        match CLITICS
            .iter()
            .find(|c| core.len() > c.len() && core.ends_with(*c))
        {
            Some(clitic) => {
                split_piece(&core[..core.len() - clitic.len()], out);
                out.push(clitic.to_string());
            }
            None => out.push(core),
        }
    }
    out.extend(trailing);
}
