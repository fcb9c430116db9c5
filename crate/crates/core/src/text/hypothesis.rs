use super::lexicon::Lexicon;
use super::tokenize::normalize;

/// Rewrites a question plus one answer option as a declarative statement.
///
/// Rules, first match wins:
/// 1. a blank (`_`, `___`, any run of underscores) is replaced by the option;
/// 2. a leading wh-word from the rule table is removed. If the next word is an
///    auxiliary, the statement is `rest [aux] [connector] option`, with
///    do-support auxiliaries dropped. Otherwise the option takes the subject
///    slot: `option rest`;
/// 3. otherwise `question option`.
///
/// A terminal `?` becomes `.`. The result is normalized (lowercase, single
/// spaces). Agreement is not repaired.
pub fn question_to_hypothesis(question: &str, option: &str, lexicon: &Lexicon) -> String {
    let out = convert(question, option, lexicon);
    if !out.is_empty() {
        return out;
    }
    match normalize(question) {
        q if q.is_empty() => question.to_string(),
        q => q,
    }
}

fn convert(question: &str, option: &str, lexicon: &Lexicon) -> String {
    let q = normalize(question);
    let option = normalize(option);

    if q.contains('_') {
        return normalize(&replace_blank(&q, &option));
    }

    let body = match q.strip_suffix('?') {
        Some(stripped) => stripped.trim_end(),
        None => q.as_str(),
    };
    let had_question_mark = body.len() != q.len();

    if let Some(hyp) = wh_rewrite(body, &option, lexicon) {
        return normalize(&format!("{hyp}."));
    }

    let head = if had_question_mark {
        format!("{body}.")
    } else {
        q.clone()
    };
    normalize(&format!("{head} {option}"))
}

fn replace_blank(q: &str, option: &str) -> String {
    let mut out = String::with_capacity(q.len() + option.len());
    let mut in_blank = false;
    for c in q.chars() {
        if c == '_' {
            if !in_blank {
                out.push_str(option);
                in_blank = true;
            }
        } else {
            in_blank = false;
            out.push(c);
        }
    }
    match out.strip_suffix('?') {
        Some(s) => format!("{s}."),
        None => out,
    }
}

const DO_SUPPORT: &[&str] = &["do", "does", "did"];

fn wh_rewrite(body: &str, option: &str, lexicon: &Lexicon) -> Option<String> {
    let words: Vec<&str> = body.split(' ').filter(|w| !w.is_empty()).collect();
    let first = *words.first()?;
    let rule = lexicon.wh_rule(first.trim_end_matches(','))?;
    let rest = &words[1..];
    if rest.is_empty() {
        return None;
    }

    let connector = rule.connector.as_deref();
    if lexicon.auxiliaries.contains(rest[0]) {
        let aux = rest[0];
        let clause = rest[1..].join(" ");
        let mut parts: Vec<&str> = Vec::new();
        if !clause.is_empty() {
            parts.push(&clause);
        }
        if !DO_SUPPORT.contains(&aux) {
            parts.push(aux);
        }
        if let Some(c) = connector {
            parts.push(c);
        }
        parts.push(option);
        Some(parts.join(" "))
    } else {
        Some(format!("{option} {}", rest.join(" ")))
    }
}
