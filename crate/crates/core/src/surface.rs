//! Whitespace tokenization and surface-form matching shared by the rule
//! oracle, the HVM featurizer, and FATE labeling.

use crate::knowledge::Position;

pub fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Lowercases, drops a possessive `'s`, and trims surrounding punctuation.
/// Returns an empty string for pure punctuation.
pub fn normalize_token(token: &str) -> String {
    let lower = token.to_lowercase();
    let stem = lower
        .strip_suffix("'s")
        .or_else(|| lower.strip_suffix("\u{2019}s"))
        .unwrap_or(&lower);
    stem.trim_matches(|c: char| !c.is_alphanumeric()).to_owned()
}

/// Normalized non-empty tokens of a text.
pub fn normalized(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Words a field value contributes to running text. Relation identifiers
/// such as `largest_city` surface as `largest city`.
pub fn field_words(value: &str, position: Position) -> String {
    match position {
        Position::Relation => value.replace('_', " ").split_whitespace().collect::<Vec<_>>().join(" "),
        _ => value.to_owned(),
    }
}

pub fn normalized_field(value: &str, position: Position) -> Vec<String> {
    normalized(&field_words(value, position))
}

/// `form` occurs contiguously inside `hypothesis`.
pub fn contains_form(hypothesis: &[String], form: &[String]) -> bool {
    !form.is_empty()
        && form.len() <= hypothesis.len()
        && hypothesis.windows(form.len()).any(|w| w == form)
}

/// `hypothesis` shares at least one token position with an occurrence of
/// `form`, assuming the hypothesis is a contiguous window cut from longer
/// text: the form occurs inside it, the hypothesis ends with a proper prefix
/// of the form, starts with a proper suffix of it, or lies inside the form.
pub fn touches_form(hypothesis: &[String], form: &[String]) -> bool {
    if form.is_empty() || hypothesis.is_empty() {
        return false;
    }
    if contains_form(hypothesis, form) || contains_form(form, hypothesis) {
        return true;
    }
    let max = form.len().min(hypothesis.len() + 1) - 1;
    (1..=max).any(|k| {
        hypothesis[hypothesis.len() - k..] == form[..k] || hypothesis[..k] == form[form.len() - k..]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(text: &str) -> Vec<String> {
        normalized(text)
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_token("Ireland's"), "ireland");
        assert_eq!(normalize_token("city."), "city");
        assert_eq!(normalize_token("."), "");
        assert_eq!(n("Dublin is Ireland's largest city ."), ["dublin", "is", "ireland", "largest", "city"]);
    }

    #[test]
    fn relation_words() {
        assert_eq!(field_words("largest_city", Position::Relation), "largest city");
        assert_eq!(field_words("Aston_Martin", Position::Object), "Aston_Martin");
    }

    #[test]
    fn touching_fragments() {
        let form = n("national capital");
        assert!(touches_form(&n("Dublin is Ireland's national"), &form));
        assert!(touches_form(&n("capital ."), &form));
        assert!(touches_form(&n("national capital."), &form));
        assert!(touches_form(&n("x national capital y"), &form));
        assert!(!touches_form(&n("Dublin is Ireland's largest"), &form));
        assert!(!touches_form(&n("capital national"), &n("a national capital b")));
        assert!(!touches_form(&[], &form));
    }

    #[test]
    fn containment() {
        assert!(contains_form(&n("a b c"), &n("b c")));
        assert!(!contains_form(&n("a b"), &n("a b c")));
        assert!(!contains_form(&n("a b"), &[]));
    }
}
