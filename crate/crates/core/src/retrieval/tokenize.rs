/// Splits text into lexical tokens for BM25.
///
/// Runs of alphanumeric characters form one lowercased token, except that
/// every Han, kana or Hangul codepoint is a token of its own. Everything
/// else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            flush(&mut run, &mut tokens);
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            run.extend(c.to_lowercase());
        } else {
            flush(&mut run, &mut tokens);
        }
    }
    flush(&mut run, &mut tokens);
    tokens
}

fn flush(run: &mut String, tokens: &mut Vec<String>) {
    if !run.is_empty() {
        tokens.push(std::mem::take(run));
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF       // CJK unified ideographs
        | 0x3400..=0x4DBF     // extension A
        | 0x20000..=0x2EBEF   // extensions B-F
        | 0xF900..=0xFAFF     // compatibility ideographs
        | 0x3040..=0x309F     // hiragana
        | 0x30A0..=0x30FF     // katakana
        | 0xAC00..=0xD7AF     // hangul syllables
    )
}
