use unicode_normalization::UnicodeNormalization;

/// Punctuation stripped from either end of a surface form. Symbols such as
/// `+`, `#`, `&` or `$` are kept so names like "C++" survive.
fn is_edge_punct(c: char) -> bool {
    matches!(
        c,
        '!' | '"' | '\'' | '(' | ')' | ',' | '-' | '.' | '/' | ':' | ';' | '?' | '[' | ']' | '{'
            | '}' | '*' | '_'
            | '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{00AB}' | '\u{00BB}'
            | '\u{2013}' | '\u{2014}' | '\u{2026}' | '\u{00BF}' | '\u{00A1}' | '\u{00B7}'
    )
}

/// Key used for alias-table lookups: NFC, lowercase, whitespace runs
/// collapsed to one space, and surrounding whitespace/punctuation removed.
pub fn normalize_surface(surface: &str) -> String {
    let nfc: String = surface.nfc().collect();
    let trimmed = nfc.trim_matches(|c: char| c.is_whitespace() || is_edge_punct(c));
    let lower = trimmed.to_lowercase();
    lower.split_whitespace().collect::<Vec<_>>().join(" ")
}
