//! BERT WordPiece tokenization: basic pre-tokenization, then greedy longest-match subwords.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use crate::EncoderError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub input_ids: Vec<u32>,
    pub token_type_ids: Vec<u32>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordPieceTokenizer {
    vocab: HashMap<String, u32>,
    tokens: Vec<String>,
    lowercase: bool,
    pad_id: u32,
    unk_id: u32,
    cls_id: u32,
    sep_id: u32,
}

fn is_control(c: char) -> bool {
    if matches!(c, '\t' | '\n' | '\r') {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control | GeneralCategory::Format
    )
}

fn is_punctuation(c: char) -> bool {
    if c.is_ascii()
        && !c.is_ascii_alphanumeric()
        && !c.is_ascii_whitespace()
        && !c.is_ascii_control()
    {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::OtherPunctuation
            | GeneralCategory::OpenPunctuation
    )
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F | 0x2B820..=0x2CEAF | 0xF900..=0xFAFF | 0x2F800..=0x2FA1F)
}

impl WordPieceTokenizer {
    /// Builds a tokenizer from a token list in id order. The five special tokens must be
    /// present.
    pub fn from_tokens(tokens: Vec<String>, lowercase: bool) -> Result<Self, EncoderError> {
        let vocab: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let id = |t: &str| {
            vocab
                .get(t)
                .copied()
                .ok_or_else(|| EncoderError::Config(format!("vocabulary lacks the {t} token")))
        };
        Ok(WordPieceTokenizer {
            pad_id: id(PAD)?,
            unk_id: id(UNK)?,
            cls_id: id(CLS)?,
            sep_id: id(SEP)?,
            vocab,
            tokens,
            lowercase,
        })
    }

    /// Reads a `vocab.txt` with one token per line.
    pub fn from_vocab_file(path: &Path, lowercase: bool) -> Result<Self, EncoderError> {
        let file = std::fs::File::open(path)?;
        let tokens = BufReader::new(file)
            .lines()
            .map(|l| l.map(|s| s.trim_end_matches(['\r', '\n']).to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_tokens(tokens, lowercase)
    }

    pub fn save_vocab(&self, path: &Path) -> Result<(), EncoderError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.tokens {
            writeln!(f, "{t}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Whitespace and punctuation splitting, with optional lowercasing and accent removal.
    pub fn basic_tokenize(&self, text: &str) -> Vec<String> {
        let mut cleaned = String::with_capacity(text.len());
        for c in text.chars() {
            if c == '\0' || c == '\u{fffd}' || is_control(c) {
                continue;
            }
            if is_cjk(c) {
                cleaned.push(' ');
                cleaned.push(c);
                cleaned.push(' ');
            } else if c.is_whitespace() {
                cleaned.push(' ');
            } else {
                cleaned.push(c);
            }
        }
        let mut out = Vec::new();
        for word in cleaned.split_whitespace() {
            let word: String = if self.lowercase {
                word.to_lowercase()
                    .nfd()
                    .filter(|&c| get_general_category(c) != GeneralCategory::NonspacingMark)
                    .collect()
            } else {
                word.to_string()
            };
            let mut current = String::new();
            for c in word.chars() {
                if is_punctuation(c) {
                    if !current.is_empty() {
                        out.push(std::mem::take(&mut current));
                    }
                    out.push(c.to_string());
                } else {
                    current.push(c);
                }
            }
            if !current.is_empty() {
                out.push(current);
            }
        }
        out
    }

    fn wordpiece(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk_id);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut sub: String = chars[start..end].iter().collect();
                if start > 0 {
                    sub.insert_str(0, "##");
                }
                if let Some(&id) = self.vocab.get(&sub) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk_id);
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    pub fn tokenize_ids(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for w in self.basic_tokenize(text) {
            self.wordpiece(&w, &mut ids);
        }
        ids
    }

    /// Packs `[CLS] question [SEP] comment [SEP]` into at most `max_len` tokens. The
    /// comment is truncated first; the question is only cut when it alone does not fit.
    pub fn encode_pair(&self, question: &str, comment: &str, max_len: usize) -> Encoding {
        assert!(
            max_len >= 3,
            "max_len must leave room for the special tokens"
        );
        let mut q = self.tokenize_ids(question);
        let mut c = self.tokenize_ids(comment);
        let budget = max_len - 3;
        if q.len() > budget {
            q.truncate(budget);
        }
        c.truncate(budget - q.len());
        let mut input_ids = Vec::with_capacity(q.len() + c.len() + 3);
        input_ids.push(self.cls_id);
        input_ids.extend(&q);
        input_ids.push(self.sep_id);
        let first = input_ids.len();
        input_ids.extend(&c);
        input_ids.push(self.sep_id);
        let mut token_type_ids = vec![0; first];
        token_type_ids.resize(input_ids.len(), 1);
        Encoding {
            input_ids,
            token_type_ids,
        }
    }
}

/// Vocabulary for randomly initialized models: special tokens, single characters with
/// their `##` continuations, and the given whole words.
pub fn build_vocab<'a>(words: impl IntoIterator<Item = &'a str>, lowercase: bool) -> Vec<String> {
    let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
    let mut push = |t: String, tokens: &mut Vec<String>| {
        if seen.insert(t.clone()) {
            tokens.push(t);
        }
    };
    let probe =
        WordPieceTokenizer::from_tokens(tokens.clone(), lowercase).expect("special tokens present");
    let mut words_out = Vec::new();
    for w in words {
        for piece in probe.basic_tokenize(w) {
            words_out.push(piece);
        }
    }
    for w in &words_out {
        for ch in w.chars() {
            push(ch.to_string(), &mut tokens);
            push(format!("##{ch}"), &mut tokens);
        }
    }
    for w in words_out {
        push(w, &mut tokens);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(words: &[&str], lowercase: bool) -> WordPieceTokenizer {
        let mut v: Vec<String> = [PAD, UNK, CLS, SEP, MASK]
            .iter()
            .map(|s| s.to_string())
            .collect();
        v.extend(words.iter().map(|s| s.to_string()));
        WordPieceTokenizer::from_tokens(v, lowercase).unwrap()
    }

    #[test]
    fn basic_splits_punctuation_and_strips_accents() {
        let t = tok(&[], true);
        assert_eq!(
            t.basic_tokenize("Über-Preise, sind\tzu HOCH!"),
            ["uber", "-", "preise", ",", "sind", "zu", "hoch", "!"]
        );
        let cased = tok(&[], false);
        assert_eq!(
            cased.basic_tokenize("Über «Preise»"),
            ["Über", "«", "Preise", "»"]
        );
        assert_eq!(cased.basic_tokenize("a\u{200b}b 中文"), ["ab", "中", "文"]);
    }

    #[test]
    fn greedy_longest_match() {
        let t = tok(&["un", "##aff", "##able", "aff", "##a"], true);
        let ids = t.tokenize_ids("unaffable");
        let pieces: Vec<&str> = ids.iter().map(|&i| t.token(i).unwrap()).collect();
        assert_eq!(pieces, ["un", "##aff", "##able"]);
        // one unmatched piece makes the whole word unknown
        let ids = t.tokenize_ids("unx");
        assert_eq!(ids, [t.unk_id]);
    }

    #[test]
    fn pair_packing_and_truncation() {
        let t = tok(&["a", "b", "c", "d"], true);
        let e = t.encode_pair("a b", "c d c d", 100);
        assert_eq!(e.input_ids, [2, 5, 6, 3, 7, 8, 7, 8, 3]);
        assert_eq!(e.token_type_ids, [0, 0, 0, 0, 1, 1, 1, 1, 1]);

        // comment is cut first
        let e = t.encode_pair("a b", "c d c d", 7);
        assert_eq!(e.input_ids, [2, 5, 6, 3, 7, 8, 3]);
        // question alone too long: keep its prefix, comment empty
        let e = t.encode_pair("a b a b a b", "c", 6);
        assert_eq!(e.input_ids, [2, 5, 6, 5, 3, 3]);
        assert_eq!(e.len(), 6);
    }

    #[test]
    fn vocab_roundtrip_and_builder() {
        let v = build_vocab(["Hallo Welt", "bonjour"], true);
        let t = WordPieceTokenizer::from_tokens(v, true).unwrap();
        assert!(!t.tokenize_ids("hallo welt bonjour").contains(&t.unk_id));
        // unseen words still decompose into characters
        assert!(!t.tokenize_ids("lohn").contains(&t.unk_id));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        t.save_vocab(&p).unwrap();
        assert_eq!(WordPieceTokenizer::from_vocab_file(&p, true).unwrap(), t);
    }

    #[test]
    fn missing_special_token_is_an_error() {
        assert!(WordPieceTokenizer::from_tokens(vec!["a".into()], true).is_err());
    }
}
