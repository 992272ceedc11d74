/// Maps a raw completion onto one of `allowed`.
///
/// The completion is trimmed, lowercased, and stripped of surrounding
/// quotes and trailing punctuation. An exact match with an allowed label
/// wins; otherwise, if exactly one allowed label occurs as a whole token in
/// the first line, that label wins. Anything else is a parse failure
/// (`None`).
pub fn parse_label(raw: &str, allowed: &[String]) -> Option<String> {
    let normalized = normalize_answer(raw);
    if let Some(hit) = allowed.iter().find(|a| normalize_answer(a) == normalized) {
        return Some(hit.clone());
    }
    let first_line = raw.trim().lines().next().unwrap_or("").to_lowercase();
    let mut hits = allowed
        .iter()
        .filter(|a| contains_token(&first_line, &normalize_answer(a)));
    match (hits.next(), hits.next()) {
        (Some(only), None) => Some(only.clone()),
        _ => None,
    }
}

const QUOTES: &[char] = &['\'', '"', '`', '‘', '’', '“', '”', '「', '」'];
const TERMINAL: &[char] = &['.', ',', '!', '?', ';', ':', '。', '，', '！', '？'];

pub(crate) fn normalize_answer(s: &str) -> String {
    let mut cur = s.trim().to_lowercase();
    loop {
        let next = cur
            .trim()
            .trim_end_matches(TERMINAL)
            .trim_matches(QUOTES)
            .trim()
            .to_string();
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '_'
}

/// `needle` occurs in `hay` bounded by non-word characters on both sides.
fn contains_token(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    hay.match_indices(needle).any(|(start, _)| {
        let before = hay[..start].chars().next_back();
        let after = hay[start + needle.len()..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn allowed(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization_cases() {
        let a = allowed(&["benign", "illicit"]);
        assert_eq!(parse_label("Illicit.", &a).as_deref(), Some("illicit"));
        assert_eq!(parse_label("  'benign'  ", &a).as_deref(), Some("benign"));
        assert_eq!(parse_label("\"ILLICIT\"!", &a).as_deref(), Some("illicit"));
    }

    #[test]
    fn no_label_or_two_labels_fail() {
        let a = allowed(&["benign", "illicit"]);
        assert_eq!(parse_label("I cannot determine that", &a), None);
        assert_eq!(parse_label("benign or illicit", &a), None);
        assert_eq!(parse_label("", &a), None);
    }

    #[test]
    fn single_token_in_first_line() {
        let a = allowed(&["benign", "illicit"]);
        assert_eq!(
            parse_label("The answer is illicit\nbecause benign...", &a).as_deref(),
            Some("illicit")
        );
        assert_eq!(parse_label("Answer: illicitly", &a), None);
    }

    #[test]
    fn hyphenated_and_symbolic_labels() {
        let a = allowed(&["data-theft", "fraud", "others"]);
        assert_eq!(
            parse_label("Category: data-theft", &a).as_deref(),
            Some("data-theft")
        );
        let d: Vec<String> = (0..13).map(|i| i.to_string()).collect();
        assert_eq!(parse_label("10", &d).as_deref(), Some("10"));
        assert_eq!(parse_label("label 1", &d).as_deref(), Some("1"));
    }

    #[test]
    fn idempotent_on_allowed_labels() {
        let a = allowed(&["benign", "illicit", "money-laundry"]);
        for l in &a {
            assert_eq!(parse_label(l, &a).as_ref(), Some(l));
        }
    }
}
