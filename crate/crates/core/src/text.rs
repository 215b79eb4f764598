//! Tokenization shared by the hashed and subword models.

use serde::{Deserialize, Serialize};

/// Token inserted between question and comment. The tokenizer never produces it,
/// so it cannot collide with a real word.
pub const SEPARATOR_TOKEN: &str = "[SEP]";

/// How a (question, comment) pair becomes one token sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// question tokens, separator, comment tokens
    #[default]
    QuestionAndComment,
    /// comment tokens only; the question is ignored
    CommentOnly,
}

/// Lowercased words; any non-alphanumeric character is a boundary.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens of a (question, comment) pair. Empty when both texts have no tokens.
pub fn pair_tokens(question: &str, comment: &str, composition: Composition) -> Vec<String> {
    let comment = tokenize(comment);
    match composition {
        Composition::CommentOnly => comment,
        Composition::QuestionAndComment => {
            let mut tokens = tokenize(question);
            if tokens.is_empty() && comment.is_empty() {
                return tokens;
            }
            tokens.push(SEPARATOR_TOKEN.to_string());
            tokens.extend(comment);
            tokens
        }
    }
}

/// Character n-grams of `word` wrapped in `<` and `>`, for `min_n <= n <= max_n`.
///
/// A lone boundary marker is never emitted. Returns nothing when the range is empty
/// or `max_n == 0`.
pub fn char_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    if max_n == 0 || min_n > max_n {
        return Vec::new();
    }
    let chars: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for start in 0..chars.len() {
        for n in min_n.max(1)..=max_n {
            let end = start + n;
            if end > chars.len() {
                break;
            }
            if n == 1 && (start == 0 || end == chars.len()) {
                continue;
            }
            out.push(chars[start..end].iter().collect());
        }
    }
    out
}
