//! Whitespace vocabulary and fixed-length id sequences.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::normalize::{CleanLog, RawRef};
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const CLS: u32 = 3;
pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[MASK]", "[CLS]"];

pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Counts whitespace tokens across `corpus` and keeps those seen at least
    /// `min_freq` times, most frequent first (ties lexicographic), capped so the
    /// total including the four specials is at most `max_size`.
    pub fn build(corpus: &[CleanLog], min_freq: usize, max_size: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if min_freq == 0 {
            return Err(Error::ConfigInvalid {
                field: "min_freq".into(),
                message: "must be at least 1".into(),
            });
        }
        if max_size <= SPECIALS.len() {
            return Err(Error::ConfigInvalid {
                field: "max_size".into(),
                message: format!("must exceed {}", SPECIALS.len()),
            });
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for log in corpus {
            for tok in log.tokens() {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(tok, n)| n >= min_freq && !SPECIALS.contains(&tok))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - SPECIALS.len());
        Ok(Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string())))
    }

    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let id_to_token: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(tokens)
            .collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, log: &CleanLog, max_len: usize) -> Result<TokenSequence> {
        if max_len < 2 {
            return Err(Error::ConfigInvalid {
                field: "max_len".into(),
                message: "must be at least 2".into(),
            });
        }
        let mut ids: Vec<u32> = log
            .tokens()
            .map(|t| self.id(t).filter(|&id| id as usize >= SPECIALS.len()).unwrap_or(UNK))
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptyAfterCleaning);
        }
        let truncated = ids.len() > max_len;
        ids.truncate(max_len);
        let length = ids.len();
        ids.resize(max_len, PAD);
        Ok(TokenSequence {
            ids,
            length,
            truncated,
            raw_ref: log.raw_ref.clone(),
        })
    }

    /// Maps ids back to tokens, skipping padding.
    pub fn decode(&self, ids: &[u32]) -> Result<Vec<String>> {
        ids.iter()
            .filter(|&&id| id != PAD)
            .map(|&id| {
                self.token(id)
                    .map(str::to_string)
                    .ok_or(Error::UnknownId(id))
            })
            .collect()
    }

    /// One token per line, line number = id.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for tok in &self.id_to_token {
            writeln!(w, "{tok}")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("write to Vec");
        buf
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let lines = r.lines().collect::<std::io::Result<Vec<_>>>()?;
        if lines.len() <= SPECIALS.len() {
            return Err(Error::format("vocabulary", "fewer than five entries"));
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if lines[i] != *s {
                return Err(Error::format(
                    "vocabulary",
                    format!("line {i} must be `{s}`, found `{}`", lines[i]),
                ));
            }
        }
        let vocab = Self::from_tokens(lines.into_iter().skip(SPECIALS.len()));
        if vocab.token_to_id.len() != vocab.id_to_token.len() {
            return Err(Error::format("vocabulary", "duplicate token"));
        }
        Ok(vocab)
    }

    pub fn digest(&self) -> String {
        crate::digest(&self.to_bytes())
    }
}

/// A log as a padded sequence of token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    /// Always `max_len` long; positions at and past `length` hold [`PAD`].
    pub ids: Vec<u32>,
    pub length: usize,
    pub truncated: bool,
    pub raw_ref: RawRef,
}

impl TokenSequence {
    pub fn content(&self) -> &[u32] {
        &self.ids[..self.length]
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }
}

/// Encodes every log, skipping none; fails on the first empty one.
pub fn encode_all(vocab: &Vocabulary, logs: &[CleanLog], max_len: usize) -> Result<Vec<TokenSequence>> {
    logs.iter().map(|l| vocab.encode(l, max_len)).collect()
}

/// Fraction of tokens in `logs` that map to something other than [`UNK`].
pub fn coverage(vocab: &Vocabulary, logs: &[CleanLog]) -> f64 {
    let (mut known, mut total) = (0usize, 0usize);
    for tok in logs.iter().flat_map(CleanLog::tokens) {
        total += 1;
        known += usize::from(vocab.id(tok).is_some());
    }
    if total == 0 {
        0.0
    } else {
        known as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logs(texts: &[&str]) -> Vec<CleanLog> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                CleanLog::new(
                    *t,
                    RawRef {
                        source_id: "t".into(),
                        line_no: i,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn frequency_order_and_cutoff() {
        let v = Vocabulary::build(&logs(&["a b", "a c"]), 1, 100).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), Some(5));
        assert_eq!(v.id("c"), Some(6));
        let v = Vocabulary::build(&logs(&["a b", "a c"]), 2, 100).unwrap();
        assert_eq!(v.tokens(), &["[PAD]", "[UNK]", "[MASK]", "[CLS]", "a"]);
        let v = Vocabulary::build(&logs(&["a b c", "a c"]), 1, 6).unwrap();
        assert_eq!(v.tokens()[4..], ["a", "c"]);
    }

    #[test]
    fn empty_corpus_fails() {
        assert!(matches!(Vocabulary::build(&[], 1, 10), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn encode_maps_oov_and_pads() {
        let v = Vocabulary::build(&logs(&["ras kernel info"]), 1, 100).unwrap();
        let s = v.encode(&logs(&["ras kernel info"])[0], 8).unwrap();
        assert_eq!(s.length, 3);
        assert_eq!(
            s.content(),
            &[v.id("ras").unwrap(), v.id("kernel").unwrap(), v.id("info").unwrap()]
        );
        assert!(s.ids[3..].iter().all(|&i| i == PAD));
        let s = v.encode(&logs(&["zzz-unknown kernel"])[0], 8).unwrap();
        assert_eq!(s.content(), &[UNK, v.id("kernel").unwrap()]);
        assert_eq!(s.length, 2);
    }

    #[test]
    fn truncates_long_logs() {
        let text = vec!["w"; 200].join(" ");
        let corpus = logs(&[&text]);
        let v = Vocabulary::build(&corpus, 1, 10).unwrap();
        let s = v.encode(&corpus[0], 128).unwrap();
        assert_eq!(s.length, 128);
        assert_eq!(s.ids.len(), 128);
        assert!(s.truncated);
    }

    #[test]
    fn decode_round_trip_and_errors() {
        let corpus = logs(&["ras kernel info"]);
        let v = Vocabulary::build(&corpus, 1, 100).unwrap();
        let s = v.encode(&corpus[0], 6).unwrap();
        assert_eq!(v.decode(&s.ids).unwrap(), vec!["ras", "kernel", "info"]);
        assert_eq!(v.decode(&[MASK]).unwrap(), vec!["[MASK]"]);
        assert!(matches!(v.decode(&[99]), Err(Error::UnknownId(99))));
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::build(&logs(&["b a", "a c d"]), 1, 100).unwrap();
        let bytes = v.to_bytes();
        let back = Vocabulary::read_from(&bytes[..]).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_bytes(), bytes);
        assert!(Vocabulary::read_from(&b"[PAD]\n[UNK]\nx\n[CLS]\na\n"[..]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn min_freq_is_monotone(words in proptest::collection::vec("[a-e]{1,2}", 1..60), f in 1usize..5) {
                let corpus: Vec<String> = words.chunks(4).map(|c| c.join(" ")).collect();
                let refs: Vec<&str> = corpus.iter().map(String::as_str).collect();
                let corpus = logs(&refs);
                let lo = Vocabulary::build(&corpus, f, 1000).unwrap();
                let hi = Vocabulary::build(&corpus, f + 1, 1000).unwrap();
                prop_assert!(hi.len() <= lo.len());
                prop_assert_eq!(Vocabulary::build(&corpus, f, 1000).unwrap().to_bytes(), lo.to_bytes());
            }

            #[test]
            fn in_vocab_round_trip(words in proptest::collection::vec("[a-z]{1,4}", 1..20)) {
                let text = words.join(" ");
                let corpus = logs(&[&text]);
                let v = Vocabulary::build(&corpus, 1, 1000).unwrap();
                let s = v.encode(&corpus[0], 32).unwrap();
                prop_assert_eq!(v.decode(&s.ids).unwrap(), words);
            }
        }
    }
}
