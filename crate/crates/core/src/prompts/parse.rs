use super::{Outcome, ParseMethod, Selection};
use crate::candidates::CandidateSet;

const ABSTAIN_PHRASES: [&str; 3] = ["none of the entity match", "none of the entities match", "none of the above"];

fn leading_letter(response: &str, n_candidates: usize) -> Option<usize> {
    let t = response.trim_start().trim_start_matches(['*', '(']);
    let mut chars = t.chars();
    let c = chars.next()?;
    if !c.is_ascii_uppercase() {
        return None;
    }
    let idx = (c as u8 - b'A') as usize;
    if idx > n_candidates {
        return None;
    }
    match chars.next() {
        None | Some(')' | '.' | ':' | '*' | '\n' | '\r') => Some(idx),
        _ => None,
    }
}

/// `needle` occurs in `hay` with no alphanumeric character directly on either side.
fn contains_bounded(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    hay.match_indices(needle).any(|(pos, _)| {
        let before = hay[..pos].chars().next_back();
        let after = hay[pos + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Names a candidate can be referred to by, lowercased: the id, the id with
/// spaces, and the title without a trailing parenthetical qualifier.
fn names(entity_id: &str) -> Vec<String> {
    let id = entity_id.to_lowercase();
    let spaced = id.replace('_', " ");
    let mut out = vec![id, spaced.clone()];
    if let Some(open) = spaced.rfind(" (") {
        if spaced.ends_with(')') {
            out.push(spaced[..open].trim_end().to_string());
        }
    }
    out.retain(|n| !n.is_empty());
    out.dedup();
    out
}

/// Map a model answer onto the candidate list.
///
/// Cascade: a leading option letter; an abstention phrase; a unique candidate
/// name found in the text; otherwise abstain as a fallback. Never fails.
pub fn parse_selection(response: &str, candidates: &CandidateSet) -> Selection {
    let n = candidates.len();
    let select = |outcome, parse_method| Selection { outcome, raw_response: response.to_string(), parse_method };

    if let Some(idx) = leading_letter(response, n) {
        let outcome = if idx == n { Outcome::Abstain } else { Outcome::Chosen(idx) };
        return select(outcome, ParseMethod::OptionLetter);
    }
    let lower = response.to_lowercase();
    if ABSTAIN_PHRASES.iter().any(|p| lower.contains(p)) {
        return select(Outcome::Abstain, ParseMethod::AbstainPhrase);
    }
    let matched: Vec<usize> = candidates
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| names(&c.entity_id).iter().any(|name| contains_bounded(&lower, name)))
        .map(|(i, _)| i)
        .collect();
    if let [only] = matched[..] {
        return select(Outcome::Chosen(only), ParseMethod::TitleMatch);
    }
    select(Outcome::Abstain, ParseMethod::FallbackAbstain)
}
