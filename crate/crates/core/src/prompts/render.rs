use serde::{Deserialize, Serialize};

use super::templates::{fill, TemplateSet};
use super::AuxiliaryContext;
use crate::candidates::CandidateSet;
use crate::corpus::{char_slice, Document, Mention};
use crate::llm::CompletionRequest;

/// Text of the final abstention option.
pub const ABSTAIN_OPTION: &str = "None of the entity match";
/// Descriptions are cut to this many scalar values.
pub const DESCRIPTION_LIMIT: usize = 300;
/// Options are lettered A-Z and one letter is reserved for abstention.
pub const MAX_OPTIONS: usize = 25;

const OPEN: &str = "[[";
const CLOSE: &str = "]]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSettings {
    pub model_id: String,
    pub temperature: f64,
    pub augmentation_max_tokens: u32,
    pub selection_max_tokens: u32,
    /// Scalar values of document kept on each side of the mention in the
    /// selection prompt; `None` keeps the whole document.
    pub excerpt_window: Option<usize>,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            model_id: "gpt-4".into(),
            temperature: 0.0,
            augmentation_max_tokens: 256,
            selection_max_tokens: 32,
            excerpt_window: None,
        }
    }
}

pub fn option_letter(idx: usize) -> char {
    assert!(idx <= MAX_OPTIONS, "option index {idx} has no letter");
    (b'A' + idx as u8) as char
}

/// Join pieces, putting a backslash between two adjacent identical square
/// brackets so only the inserted markers read as `[[` or `]]`.
fn join_escaped(pieces: &[&str]) -> String {
    let mut out = String::new();
    for piece in pieces {
        let is_marker = *piece == OPEN || *piece == CLOSE;
        let mut chars = piece.chars().peekable();
        while let Some(c) = chars.next() {
            if matches!(c, '[' | ']') && out.ends_with(c) {
                out.push('\\');
            }
            out.push(c);
            if is_marker {
                out.extend(chars.by_ref());
            }
        }
    }
    out
}

/// The document text with the mention wrapped in `[[...]]`. Any other bracket
/// pair in the text is broken up with a backslash.
pub fn mark_mention(doc: &Document, mention: &Mention, window: Option<usize>) -> String {
    let len = doc.char_len();
    let (lo, hi) = match window {
        Some(w) => (mention.start.saturating_sub(w), (mention.end + w).min(len)),
        None => (0, len),
    };
    let left = char_slice(&doc.text, lo, mention.start).unwrap_or_default();
    let mid = char_slice(&doc.text, mention.start, mention.end).unwrap_or_default();
    let right = char_slice(&doc.text, mention.end, hi).unwrap_or_default();
    let marked = join_escaped(&[left, OPEN, mid, CLOSE, right]);
    let prefix = if lo > 0 { "..." } else { "" };
    let suffix = if hi < len { "..." } else { "" };
    format!("{prefix}{marked}{suffix}")
}

fn truncate_chars(s: &str, limit: usize) -> &str {
    match s.char_indices().nth(limit) {
        Some((b, _)) => &s[..b],
        None => s,
    }
}

/// One lettered line per candidate (id, then its description after a U+2014 dash), then the abstention option.
pub fn render_options(candidates: &CandidateSet) -> String {
    let mut lines: Vec<String> = candidates
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let desc = truncate_chars(c.description.trim(), DESCRIPTION_LIMIT);
            if desc.is_empty() {
                format!("{}) {}", option_letter(i), c.entity_id)
            } else {
                format!("{}) {} \u{2014} {}", option_letter(i), c.entity_id, desc)
            }
        })
        .collect();
    lines.push(format!("{}) {}", option_letter(candidates.len()), ABSTAIN_OPTION));
    lines.join("\n")
}

pub fn render_augmentation_prompt(
    templates: &TemplateSet,
    settings: &PromptSettings,
    doc: &Document,
    mention: &Mention,
) -> CompletionRequest {
    let document = mark_mention(doc, mention, None);
    CompletionRequest {
        model_id: settings.model_id.clone(),
        system_text: templates.system.clone(),
        user_text: fill(&templates.augmentation, &[("document", &document), ("mention", &mention.surface)]),
        temperature: settings.temperature,
        max_output_tokens: settings.augmentation_max_tokens,
    }
}

/// Panics if `candidates` is empty or longer than [`MAX_OPTIONS`]; callers
/// short-circuit empty sets and config validation bounds the cap.
pub fn render_selection_prompt(
    templates: &TemplateSet,
    settings: &PromptSettings,
    doc: &Document,
    mention: &Mention,
    aux: Option<&AuxiliaryContext>,
    candidates: &CandidateSet,
) -> CompletionRequest {
    assert!(!candidates.is_empty(), "selection prompt needs at least one candidate");
    assert!(candidates.len() <= MAX_OPTIONS, "too many candidates for lettered options");
    let document = mark_mention(doc, mention, settings.excerpt_window);
    let aux_block = match aux {
        Some(a) => format!(
            "{}\n\n",
            fill(&templates.aux_block, &[("aux", a.text.trim()), ("mention", &mention.surface)])
        ),
        None => String::new(),
    };
    let options = render_options(candidates);
    CompletionRequest {
        model_id: settings.model_id.clone(),
        system_text: templates.system.clone(),
        user_text: fill(
            &templates.selection,
            &[("document", &document), ("mention", &mention.surface), ("aux", &aux_block), ("options", &options)],
        ),
        temperature: settings.temperature,
        max_output_tokens: settings.selection_max_tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{Candidate, Provenance};

    fn doc(text: &str, start: usize, end: usize) -> (Document, Mention) {
        let surface: String = text.chars().skip(start).take(end - start).collect();
        let m = Mention { start, end, surface, gold_entity: "X".into() };
        (Document { doc_id: "d".into(), text: text.into(), mentions: vec![m.clone()] }, m)
    }

    fn cands(n: usize) -> CandidateSet {
        CandidateSet {
            candidates: (0..n)
                .map(|i| Candidate {
                    entity_id: format!("E{i}"),
                    provenance: Provenance::Prior,
                    prior: Some(1.0 / n as f64),
                    retrieval_score: None,
                    description: format!("Entity number {i}."),
                })
                .collect(),
        }
    }

    #[test]
    fn augmentation_question_names_the_mention() {
        let (d, m) = doc("Tim Cook announced a new iPhone.", 0, 8);
        let req = render_augmentation_prompt(&TemplateSet::builtin(), &PromptSettings::default(), &d, &m);
        assert!(req.user_text.contains("[[Tim Cook]] announced a new iPhone."));
        assert!(req.user_text.contains("What does \"Tim Cook\" represent in the passage above?"));
        assert_eq!(req.temperature, 0.0);
    }

    #[test]
    fn only_the_gold_occurrence_is_marked() {
        let (d, m) = doc("Paris loves Paris.", 12, 17);
        assert_eq!(mark_mention(&d, &m, None), "Paris loves [[Paris]].");
    }

    #[test]
    fn stray_brackets_are_escaped() {
        let (d, m) = doc("a [[b]] c[x]", 10, 11);
        let marked = mark_mention(&d, &m, None);
        assert_eq!(marked, "a [\\[b]\\] c[\\[[x]]\\]");
        assert_eq!(marked.matches("[[").count(), 1);
        assert_eq!(marked.matches("]]").count(), 1);
    }

    #[test]
    fn excerpt_window_clips_with_ellipses() {
        let (d, m) = doc("0123456789abcdefghij", 10, 12);
        assert_eq!(mark_mention(&d, &m, Some(3)), "...789[[ab]]cde...");
        assert_eq!(mark_mention(&d, &m, Some(100)), "0123456789[[ab]]cdefghij");
    }

    #[test]
    fn three_candidates_get_a_to_c_plus_abstention() {
        let opts = render_options(&cands(3));
        let lines: Vec<_> = opts.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "A) E0 \u{2014} Entity number 0.");
        assert_eq!(lines[3], "D) None of the entity match");
    }

    #[test]
    fn ten_candidates_end_with_k() {
        let opts = render_options(&cands(10));
        assert!(opts.lines().nth(9).unwrap().starts_with("J) E9"));
        assert_eq!(opts.lines().last().unwrap(), "K) None of the entity match");
    }

    #[test]
    fn empty_description_has_no_dash() {
        let mut c = cands(1);
        c.candidates[0].description.clear();
        assert_eq!(render_options(&c).lines().next().unwrap(), "A) E0");
    }

    #[test]
    fn long_descriptions_are_truncated() {
        let mut c = cands(1);
        c.candidates[0].description = "é".repeat(400);
        let line = render_options(&c).lines().next().unwrap().to_string();
        assert_eq!(line.chars().filter(|&ch| ch == 'é').count(), DESCRIPTION_LIMIT);
    }

    #[test]
    fn aux_block_present_only_with_augmentation() {
        let (d, m) = doc("Tim Cook spoke.", 0, 8);
        let t = TemplateSet::builtin();
        let s = PromptSettings::default();
        let aux = AuxiliaryContext { doc_id: "d".into(), mention_index: 0, text: "The CEO of Apple.".into() };
        let with = render_selection_prompt(&t, &s, &d, &m, Some(&aux), &cands(2));
        let without = render_selection_prompt(&t, &s, &d, &m, None, &cands(2));
        assert!(with.user_text.contains("Background on \"Tim Cook\":\nThe CEO of Apple.\n\nWhich"));
        assert!(!without.user_text.contains("Background"));
        assert!(without.user_text.contains("[[Tim Cook]] spoke.\n\nWhich of the following"));
        assert!(with.user_text.ends_with("Answer with the letter of a single option only."));
    }
}
