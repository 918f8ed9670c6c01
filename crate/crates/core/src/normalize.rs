//! Parsing-free log cleaning.
//!
//! A raw line goes through three rewrites, in order: timestamp removal,
//! compound-token splitting, and placeholder substitution (paths, then
//! addresses, then numbers). The result is lowercased with whitespace collapsed.

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where a log line came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawRef {
    pub source_id: String,
    pub line_no: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLog {
    pub text: String,
    pub source_id: String,
    pub line_no: usize,
}

impl RawLog {
    pub fn new(text: impl Into<String>, source_id: impl Into<String>, line_no: usize) -> Self {
        let mut text = text.into();
        while text.ends_with('\n') || text.ends_with('\r') {
            text.pop();
        }
        RawLog {
            text,
            source_id: source_id.into(),
            line_no,
        }
    }

    pub fn raw_ref(&self) -> RawRef {
        RawRef {
            source_id: self.source_id.clone(),
            line_no: self.line_no,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CleanLog {
    pub text: String,
    pub raw_ref: RawRef,
}

impl CleanLog {
    pub fn new(text: impl Into<String>, raw_ref: RawRef) -> Self {
        CleanLog {
            text: text.into(),
            raw_ref,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }
}

/// A named regular expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub name: String,
    pub regex: String,
    /// Matches shorter than this many bytes are left untouched.
    #[serde(default)]
    pub min_len: usize,
}

impl PatternSpec {
    fn new(name: &str, regex: &str) -> Self {
        PatternSpec {
            name: name.to_string(),
            regex: regex.to_string(),
            min_len: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaceholderWords {
    pub path: String,
    pub number: String,
    pub address: String,
}

impl Default for PlaceholderWords {
    fn default() -> Self {
        PlaceholderWords {
            path: "filepath".into(),
            number: "float".into(),
            address: "address".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationConfig {
    /// Applied in order; put longer formats before their prefixes.
    pub timestamp_patterns: Vec<PatternSpec>,
    pub address_patterns: Vec<PatternSpec>,
    pub placeholder_words: PlaceholderWords,
    pub split_compound: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            timestamp_patterns: vec![
                // 2005-06-09-14.53.14.219998
                PatternSpec::new(
                    "dotted",
                    r"\b\d{4}-\d{2}-\d{2}-\d{2}\.\d{2}\.\d{2}(?:\.\d+)?",
                ),
                PatternSpec::new(
                    "iso8601",
                    r"\b\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?(?:Z|[+-]\d{2}:?\d{2})?",
                ),
                PatternSpec::new(
                    "syslog",
                    r"\b(?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec)\s+\d{1,2}\s+\d{2}:\d{2}:\d{2}\b",
                ),
                PatternSpec::new("date", r"\b\d{4}[./-]\d{2}[./-]\d{2}\b"),
                PatternSpec::new("time", r"\b\d{2}:\d{2}:\d{2}(?:[.,]\d+)?\b"),
                PatternSpec::new("epoch", r"\b1\d{9}(?:\.\d+)?\b"),
            ],
            address_patterns: vec![
                PatternSpec::new(
                    "ipv4",
                    r"\b\d{1,3}(?:\.\d{1,3}){3}(?::\d{1,5})?(?:/\d{1,2})?\b",
                ),
                PatternSpec::new("mac", r"\b[0-9A-Fa-f]{2}(?:[:-][0-9A-Fa-f]{2}){5}\b"),
                PatternSpec::new("hex", r"\b0[xX][0-9A-Fa-f]+\b"),
                PatternSpec {
                    name: "hexword".into(),
                    regex: r"\b(?:[0-9]+[A-Fa-f]|[A-Fa-f]+[0-9])[0-9A-Fa-f]*\b".into(),
                    min_len: 8,
                },
            ],
            placeholder_words: PlaceholderWords::default(),
            split_compound: true,
        }
    }
}

/// Per-class replacement tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementCounts {
    pub timestamp: usize,
    pub path: usize,
    pub address: usize,
    pub number: usize,
}

impl std::ops::AddAssign for ReplacementCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.timestamp += rhs.timestamp;
        self.path += rhs.path;
        self.address += rhs.address;
        self.number += rhs.number;
    }
}

struct CompiledPattern {
    regex: Regex,
    min_len: usize,
}

impl CompiledPattern {
    fn compile(spec: &PatternSpec) -> Result<Self> {
        let regex = Regex::new(&spec.regex).map_err(|e| Error::InvalidPattern {
            pattern: spec.name.clone(),
            message: e.to_string(),
        })?;
        Ok(CompiledPattern {
            regex,
            min_len: spec.min_len,
        })
    }

    /// Replaces each qualifying match with ` word `, counting replacements.
    fn replace(&self, text: &str, word: &str, count: &mut usize) -> String {
        self.regex
            .replace_all(text, |caps: &Captures| {
                let m = &caps[0];
                if m.len() < self.min_len {
                    m.to_string()
                } else {
                    *count += 1;
                    format!(" {word} ")
                }
            })
            .into_owned()
    }
}

/// Compiled form of a [`NormalizationConfig`].
pub struct Normalizer {
    config: NormalizationConfig,
    timestamps: Vec<CompiledPattern>,
    addresses: Vec<CompiledPattern>,
    path: Regex,
    number: Regex,
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Normalizer {
    pub fn new(config: NormalizationConfig) -> Result<Self> {
        let words = &config.placeholder_words;
        let all = [&words.path, &words.number, &words.address];
        for (field, w) in ["path", "number", "address"].iter().zip(all) {
            let valid = !w.is_empty()
                && w.chars().all(|c| c.is_ascii_lowercase())
                && !w.chars().any(char::is_whitespace);
            if !valid {
                return Err(Error::ConfigInvalid {
                    field: format!("placeholder_words.{field}"),
                    message: format!("`{w}` is not a single lowercase alphabetic token"),
                });
            }
        }
        if words.path == words.number || words.path == words.address || words.number == words.address
        {
            return Err(Error::ConfigInvalid {
                field: "placeholder_words".into(),
                message: "placeholder words must be distinct".into(),
            });
        }
        let timestamps = config
            .timestamp_patterns
            .iter()
            .map(CompiledPattern::compile)
            .collect::<Result<_>>()?;
        let addresses = config
            .address_patterns
            .iter()
            .map(CompiledPattern::compile)
            .collect::<Result<_>>()?;
        Ok(Normalizer {
            config,
            timestamps,
            addresses,
            // Absolute or ./ ../ ~/ relative paths, starting at a token boundary.
            path: Regex::new(r"(^|[^\w.\-])((?:~|\.{1,2})?(?:/[\w.\-+@%]+)+/?|[A-Za-z]:\\[^\s]+)")
                .expect("static regex"),
            number: Regex::new(r"\d+(?:\.\d+)*(?:[eE][-+]?\d+)?").expect("static regex"),
        })
    }

    pub fn config(&self) -> &NormalizationConfig {
        &self.config
    }

    pub fn strip_timestamps(&self, text: &str) -> String {
        self.strip_timestamps_counted(text).0
    }

    fn strip_timestamps_counted(&self, text: &str) -> (String, usize) {
        let mut count = 0;
        let mut out = text.to_string();
        for p in &self.timestamps {
            out = p.replace(&out, "", &mut count);
        }
        (collapse_whitespace(&out), count)
    }

    pub fn replace_placeholders(&self, text: &str) -> String {
        self.replace_placeholders_counted(text).0
    }

    pub fn replace_placeholders_counted(&self, text: &str) -> (String, ReplacementCounts) {
        let words = &self.config.placeholder_words;
        let mut counts = ReplacementCounts::default();
        let mut out = self
            .path
            .replace_all(text, |caps: &Captures| {
                counts.path += 1;
                format!("{} {} ", &caps[1], words.path)
            })
            .into_owned();
        for p in &self.addresses {
            out = p.replace(&out, &words.address, &mut counts.address);
        }
        out = self
            .number
            .replace_all(&out, |_: &Captures| {
                counts.number += 1;
                format!(" {} ", words.number)
            })
            .into_owned();
        (collapse_whitespace(&out), counts)
    }

    pub fn normalize(&self, raw: &RawLog) -> Result<CleanLog> {
        self.normalize_counted(raw).map(|(log, _)| log)
    }

    pub fn normalize_counted(&self, raw: &RawLog) -> Result<(CleanLog, ReplacementCounts)> {
        let (text, timestamp) = self.strip_timestamps_counted(&raw.text);
        let text = if self.config.split_compound {
            split_compound(&text)
        } else {
            text
        };
        let (text, mut counts) = self.replace_placeholders_counted(&text);
        counts.timestamp = timestamp;
        let text = collapse_whitespace(&text.to_lowercase());
        if text.is_empty() {
            return Err(Error::EmptyAfterCleaning);
        }
        Ok((CleanLog::new(text, raw.raw_ref()), counts))
    }
}

/// Inserts a space at camel-case and upper-run boundaries:
/// `RASKernelInfo` becomes `RAS Kernel Info`, `ciod2Fail` becomes `ciod2 Fail`.
pub fn split_compound(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        if i > 0 && c.is_uppercase() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_numeric() || (prev.is_uppercase() && next_lower) {
                out.push(' ');
            }
        }
        out.push(c);
    }
    out
}

/// Outcome of cleaning a whole file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub total_lines: usize,
    pub kept: usize,
    /// Line numbers (1-based) that cleaned down to nothing.
    pub dropped_lines: Vec<usize>,
    pub replacements: ReplacementCounts,
}

/// Cleans `raws` in order, dropping lines that become empty.
pub fn clean_all(normalizer: &Normalizer, raws: &[RawLog]) -> (Vec<CleanLog>, CleanReport) {
    let mut report = CleanReport {
        total_lines: raws.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(raws.len());
    for raw in raws {
        match normalizer.normalize_counted(raw) {
            Ok((log, counts)) => {
                report.replacements += counts;
                out.push(log);
            }
            Err(_) => report.dropped_lines.push(raw.line_no),
        }
    }
    report.kept = out.len();
    (out, report)
}
