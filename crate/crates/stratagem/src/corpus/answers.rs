//! Answer extraction, normalization, and comparison.
//!
//! Normalization is kind-directed and total: anything that fails to parse
//! under its declared kind falls back to plain-text canonicalization instead
//! of erroring, so a malformed model answer can never abort a scoring run.
//! Every normalizer is idempotent, which keeps stored canonical answers
//! comparable with freshly normalized ones.

use serde::{Deserialize, Serialize};

use super::AnswerKind;
use crate::error::{Error, Result};

/// Marker that introduces a final answer in solution text.
pub const ANSWER_MARKER: &str = "The answer is";
/// Marker used by answer-aggregation replies.
pub const FINAL_ANSWER_MARKER: &str = "The final answer is";

/// A normalized answer ready for equality comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalAnswer {
    pub kind: AnswerKind,
    pub text: String,
}

/// Returns the text after the last occurrence of `marker`, trimmed of
/// surrounding whitespace and one trailing period. Matching is
/// case-sensitive; an absent marker is an error so callers can decide
/// whether to abstain or score the output incorrect.
pub fn extract_answer(text: &str, marker: &str) -> Result<String> {
    let at = text.rfind(marker).ok_or_else(|| Error::MarkerNotFound {
        marker: marker.to_string(),
    })?;
    let mut tail = text[at + marker.len()..].trim().to_string();
    if tail.ends_with('.') {
        tail.pop();
    }
    Ok(tail.trim().to_string())
}

/// Normalizes `raw` under `kind`. Never fails; unparseable input degrades to
/// the plain-text canonical form.
pub fn normalize_answer(raw: &str, kind: AnswerKind) -> CanonicalAnswer {
    let text = match kind {
        AnswerKind::Number => normalize_number(raw).unwrap_or_else(|| plain_text(raw)),
        AnswerKind::FractionOrExpression => normalize_fraction_or_expression(raw),
        AnswerKind::BooleanYesNo => normalize_yes_no(raw),
        AnswerKind::DateMmddyyyy => normalize_date(raw).unwrap_or_else(|| plain_text(raw)),
        AnswerKind::WordSequence | AnswerKind::FreeText => plain_text(raw),
    };
    CanonicalAnswer { kind, text }
}

/// True when both answers normalize to the same canonical text.
pub fn answers_match(a: &str, b: &str, kind: AnswerKind) -> bool {
    normalize_answer(a, kind).text == normalize_answer(b, kind).text
}

/// Strips math-mode wrappers, surrounding whitespace, and trailing periods
/// until a fixed point is reached.
fn strip_wrappers(s: &str) -> String {
    let mut t = s.trim().to_string();
    loop {
        let before = t.clone();
        for (open, close) in [("$$", "$$"), ("$", "$"), ("\\(", "\\)"), ("\\[", "\\]")] {
            if t.len() > open.len() + close.len() && t.starts_with(open) && t.ends_with(close) {
                t = t[open.len()..t.len() - close.len()].trim().to_string();
            }
        }
        if t.ends_with('.') {
            t.pop();
            t = t.trim_end().to_string();
        }
        if t == before {
            break;
        }
    }
    t
}

/// Lowercased, whitespace-collapsed plain form shared by the free-text kind
/// and every fallback path.
fn plain_text(s: &str) -> String {
    strip_wrappers(s)
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalize_number(raw: &str) -> Option<String> {
    let mut t = strip_wrappers(raw);
    t = t.replace(',', "").replace("\\$", "").replace('$', "");
    if let Some(stripped) = t.strip_suffix("\\%") {
        t = stripped.to_string();
    } else if let Some(stripped) = t.strip_suffix('%') {
        t = stripped.to_string();
    }
    let t = t.trim();
    if let Ok(i) = t.parse::<i128>() {
        return Some(i.to_string());
    }
    match t.parse::<f64>() {
        Ok(f) if f.is_finite() => {
            // -0 and 0 must compare equal.
            if f == 0.0 {
                Some("0".to_string())
            } else {
                Some(format!("{f}"))
            }
        }
        _ => None,
    }
}

fn normalize_fraction_or_expression(raw: &str) -> String {
    // Whitespace never changes the meaning of a symbolic answer, so it is
    // removed entirely rather than collapsed. Folding case before the
    // rational parse keeps the result a fixed point of normalization.
    let mut e = plain_text(raw);
    e.retain(|c| !c.is_whitespace());
    if let Some((num, den)) = parse_rational(&e) {
        return if den == 1 {
            num.to_string()
        } else {
            format!("{num}/{den}")
        };
    }
    e
}

/// Parses integers, `a/b`, and `\frac{a}{b}` forms into a reduced rational
/// with a positive denominator. Returns None for anything else.
fn parse_rational(s: &str) -> Option<(i128, i128)> {
    let t = s.trim();
    let (outer_neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, t),
    };
    let braced = ["\\frac", "\\dfrac", "\\tfrac"]
        .iter()
        .find_map(|p| t.strip_prefix(p));
    let (mut num, mut den) = if let Some(rest) = braced {
        let (a, rest) = take_braced(rest.trim_start())?;
        let (b, rest) = take_braced(rest.trim_start())?;
        if !rest.trim().is_empty() {
            return None;
        }
        (a.trim().parse::<i128>().ok()?, b.trim().parse::<i128>().ok()?)
    } else if let Some((a, b)) = t.split_once('/') {
        (a.trim().parse::<i128>().ok()?, b.trim().parse::<i128>().ok()?)
    } else {
        (t.parse::<i128>().ok()?, 1)
    };
    if den == 0 {
        return None;
    }
    if outer_neg {
        num = num.checked_neg()?;
    }
    if den < 0 {
        num = num.checked_neg()?;
        den = den.checked_neg()?;
    }
    let g = gcd(num.unsigned_abs(), den.unsigned_abs());
    if g > 1 {
        num /= g as i128;
        den /= g as i128;
    }
    Some((num, den))
}

fn take_braced(s: &str) -> Option<(&str, &str)> {
    s.strip_prefix('{').and_then(|rest| rest.split_once('}'))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn normalize_yes_no(raw: &str) -> String {
    let t = plain_text(raw);
    for word in ["yes", "no"] {
        if t == *word {
            return t;
        }
        // "Yes, because ..." still means yes; "north" does not mean no.
        if let Some(rest) = t.strip_prefix(word) {
            if rest.starts_with([',', '.', ';', ':', '!', ' ']) {
                return word.to_string();
            }
        }
    }
    t
}

fn normalize_date(raw: &str) -> Option<String> {
    let t = strip_wrappers(raw);
    for fmt in ["%m/%d/%Y", "%m-%d-%Y"] {
        if let Ok(date) = chrono::NaiveDate::parse_from_str(t.trim(), fmt) {
            return Some(date.format("%m/%d/%Y").to_string());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extracts_after_last_marker() {
        let text = "The answer is wrong here. Later: The answer is 42.";
        assert_eq!(extract_answer(text, ANSWER_MARKER).unwrap(), "42");
    }

    #[test]
    fn extract_trims_whitespace_and_period() {
        assert_eq!(
            extract_answer("Answer: The answer is  05/23/1943. ", ANSWER_MARKER).unwrap(),
            "05/23/1943"
        );
    }

    #[test]
    fn missing_marker_is_an_error() {
        assert!(matches!(
            extract_answer("no marker here", ANSWER_MARKER),
            Err(Error::MarkerNotFound { .. })
        ));
    }

    #[test]
    fn number_strips_commas_and_currency() {
        assert!(answers_match("3,929", "3929", AnswerKind::Number));
        assert!(answers_match("$5.50", "5.5", AnswerKind::Number));
        assert!(answers_match("20\\%", "20", AnswerKind::Number));
        assert!(!answers_match("60", "180", AnswerKind::Number));
    }

    #[test]
    fn fractions_reduce_exactly() {
        assert!(answers_match(
            "$\\frac{23}{4}$",
            "23/4",
            AnswerKind::FractionOrExpression
        ));
        assert!(answers_match("46/8", "23/4", AnswerKind::FractionOrExpression));
        assert!(answers_match(
            "-\\frac{3}{6}",
            "1/-2",
            AnswerKind::FractionOrExpression
        ));
        assert!(!answers_match("23/4", "24/4", AnswerKind::FractionOrExpression));
    }

    #[test]
    fn expressions_ignore_spacing_and_case() {
        assert!(answers_match(
            "(-2, 5)",
            "(-2,5)",
            AnswerKind::FractionOrExpression
        ));
        assert!(answers_match(
            "$x^2 + 1$",
            "X^2+1",
            AnswerKind::FractionOrExpression
        ));
    }

    #[test]
    fn yes_no_folds_case() {
        assert!(answers_match("yes", "Yes.", AnswerKind::BooleanYesNo));
        assert!(!answers_match("yes", "no", AnswerKind::BooleanYesNo));
        assert_eq!(normalize_yes_no("Yes, it does"), "yes");
        assert_eq!(normalize_yes_no("north"), "north");
    }

    #[test]
    fn dates_zero_pad() {
        assert!(answers_match(
            "5/23/1943",
            "05/23/1943",
            AnswerKind::DateMmddyyyy
        ));
        assert_eq!(
            normalize_answer("05/23/1943.", AnswerKind::DateMmddyyyy).text,
            "05/23/1943"
        );
    }

    #[test]
    fn word_sequences_collapse_whitespace() {
        assert!(answers_match(
            "Costume  Counterpart Oven.",
            "costume counterpart oven",
            AnswerKind::WordSequence
        ));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in ".{0,40}", kind_idx in 0usize..6) {
            let kind = [
                AnswerKind::Number,
                AnswerKind::FractionOrExpression,
                AnswerKind::BooleanYesNo,
                AnswerKind::DateMmddyyyy,
                AnswerKind::WordSequence,
                AnswerKind::FreeText,
            ][kind_idx];
            let once = normalize_answer(&raw, kind);
            let twice = normalize_answer(&once.text, kind);
            prop_assert_eq!(&once.text, &twice.text);
        }

        #[test]
        fn matching_is_symmetric(a in ".{0,20}", b in ".{0,20}") {
            prop_assert_eq!(
                answers_match(&a, &b, AnswerKind::FreeText),
                answers_match(&b, &a, AnswerKind::FreeText)
            );
        }

        #[test]
        fn extraction_takes_the_last_marker(prefix in "[a-z ]{0,20}", tail in "[0-9]{1,6}") {
            let text = format!("{prefix}The answer is 1. And {ANSWER_MARKER} {tail}");
            prop_assert_eq!(extract_answer(&text, ANSWER_MARKER).unwrap(), tail);
        }
    }
}
