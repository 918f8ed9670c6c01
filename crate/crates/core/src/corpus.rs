//! Deduplication, seeded splitting, labeled-file loading and a synthetic generator.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{EvalCorpora, Label};
use crate::normalize::{CleanLog, Normalizer, RawLog};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub records: Vec<(CleanLog, Label)>,
    /// Where the records were read from or how they were generated.
    pub source: String,
}

impl LabeledCorpus {
    pub fn logs_with(&self, label: Label) -> Vec<CleanLog> {
        self.records
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(c, _)| c.clone())
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|(_, l)| *l == label).count()
    }
}

/// Unique logs by cleaned text, first occurrence kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deduped {
    pub logs: Vec<CleanLog>,
    /// Occurrences of each kept log in the input, parallel to `logs`.
    pub multiplicities: Vec<usize>,
}

pub fn dedupe(corpus: &[CleanLog]) -> Deduped {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut logs = Vec::new();
    let mut multiplicities = Vec::new();
    for log in corpus {
        match index.get(log.text.as_str()) {
            Some(&i) => multiplicities[i] += 1,
            None => {
                index.insert(&log.text, logs.len());
                logs.push(log.clone());
                multiplicities.push(1);
            }
        }
    }
    Deduped { logs, multiplicities }
}

pub const MIN_UNIQUE_NORMALS: usize = 10;

/// 70/15/15 over unique normals; every anomaly goes to test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<CleanLog>,
    pub validation: Vec<CleanLog>,
    pub test: Vec<CleanLog>,
    pub test_labels: Vec<Label>,
    pub seed: u64,
}

/// Seeded shuffle of `unique_normals`, then contiguous cuts of
/// `round(0.7n)`, `round(0.15n)` and the rest. Anomalies are appended to test.
pub fn split(unique_normals: &[CleanLog], anomalies: &[CleanLog], seed: u64) -> Result<Split> {
    let n = unique_normals.len();
    if n < MIN_UNIQUE_NORMALS {
        return Err(Error::TooFewLogs {
            needed: MIN_UNIQUE_NORMALS,
            got: n,
        });
    }
    let mut shuffled = unique_normals.to_vec();
    shuffled.shuffle(&mut seed::rng(seed, &[0x5b1]));
    let n_train = (0.70 * n as f64).round() as usize;
    let n_val = (0.15 * n as f64).round() as usize;
    let mut rest = shuffled.split_off(n_train);
    let test_normals = rest.split_off(n_val);
    let mut test_labels = vec![Label::Normal; test_normals.len()];
    test_labels.extend(std::iter::repeat_n(Label::Anomalous, anomalies.len()));
    let mut test = test_normals;
    test.extend_from_slice(anomalies);
    Ok(Split {
        train: shuffled,
        validation: rest,
        test,
        test_labels,
        seed,
    })
}

impl Split {
    /// Dedupes both classes and splits.
    pub fn from_corpus(corpus: &LabeledCorpus, seed: u64) -> Result<Self> {
        let normals = dedupe(&corpus.logs_with(Label::Normal)).logs;
        let anomalies = dedupe(&corpus.logs_with(Label::Anomalous)).logs;
        split(&normals, &anomalies, seed)
    }

    pub fn eval_corpora(&self) -> EvalCorpora {
        EvalCorpora {
            train: self.train.clone(),
            calibration: self.validation.clone(),
            test: self.test.clone(),
            test_labels: self.test_labels.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Labeled files

/// Reads `label<TAB>log` lines, with label `0` (normal) or `1` (anomalous).
pub fn read_labeled_tsv<R: BufRead>(r: R, source_id: &str) -> Result<Vec<(RawLog, Label)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("labeled file", format!("line {}: no tab", i + 1)))?;
        let label = Label::from_digit(label)
            .ok_or_else(|| Error::format("labeled file", format!("line {}: label `{label}`", i + 1)))?;
        out.push((RawLog::new(text, source_id, i + 1), label));
    }
    Ok(out)
}

pub fn write_labeled_tsv<W: Write>(mut w: W, records: &[(String, Label)]) -> Result<()> {
    for (text, label) in records {
        writeln!(w, "{}\t{text}", label.as_digit())?;
    }
    Ok(())
}

/// One log per line; line numbers start at 1.
pub fn read_lines<R: BufRead>(r: R, source_id: &str) -> Result<Vec<RawLog>> {
    r.lines()
        .enumerate()
        .map(|(i, l)| Ok(RawLog::new(l?, source_id, i + 1)))
        .collect()
}

/// Parallel label file: one `0` or `1` per line.
pub fn read_labels<R: BufRead>(r: R) -> Result<Vec<Label>> {
    r.lines()
        .enumerate()
        .map(|(i, l)| {
            let l = l?;
            Label::from_digit(&l)
                .ok_or_else(|| Error::format("label file", format!("line {}: `{l}`", i + 1)))
        })
        .collect()
}

pub fn write_labels<W: Write>(mut w: W, labels: &[Label]) -> Result<()> {
    for l in labels {
        writeln!(w, "{}", l.as_digit())?;
    }
    Ok(())
}

/// Cleans labeled raw lines, dropping (and counting) lines empty after cleaning.
pub fn clean_labeled(normalizer: &Normalizer, raws: &[(RawLog, Label)], source: &str) -> (LabeledCorpus, usize) {
    let mut dropped = 0;
    let records = raws
        .iter()
        .filter_map(|(raw, label)| match normalizer.normalize(raw) {
            Ok(c) => Some((c, *label)),
            Err(_) => {
                dropped += 1;
                None
            }
        })
        .collect();
    (
        LabeledCorpus {
            records,
            source: source.to_string(),
        },
        dropped,
    )
}

// ---------------------------------------------------------------------------
// Synthetic logs

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Int,
    Float,
    Path,
    Ip,
    Hex,
    /// Index into the template's choice pools.
    Choice(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Word(String),
    /// Two words written as one CamelCase token in the raw line.
    Compound(String, String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub items: Vec<Item>,
    pub pools: Vec<Vec<String>>,
}

impl Template {
    /// Skeleton with slots shown as `<kind>`; identifies the template.
    pub fn skeleton(&self) -> String {
        self.items
            .iter()
            .map(|it| match it {
                Item::Word(w) => w.clone(),
                Item::Compound(a, b) => format!("{a} {b}"),
                Item::Slot(Slot::Choice(i)) => format!("<choice{i}:{}>", self.pools[*i].join("|")),
                Item::Slot(s) => format!("<{s:?}>").to_lowercase(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn keywords(&self) -> impl Iterator<Item = &str> {
        self.items.iter().flat_map(|it| match it {
            Item::Word(w) => vec![w.as_str()],
            Item::Compound(a, b) => vec![a.as_str(), b.as_str()],
            Item::Slot(_) => vec![],
        })
    }

    fn render(&self, rng: &mut ChaCha8Rng) -> String {
        let parts: Vec<String> = self
            .items
            .iter()
            .map(|it| match it {
                Item::Word(w) => w.clone(),
                Item::Compound(a, b) => format!("{}{}", capitalize(a), capitalize(b)),
                Item::Slot(s) => render_slot(s, &self.pools, rng),
            })
            .collect();
        parts.join(" ")
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

fn render_slot(slot: &Slot, pools: &[Vec<String>], rng: &mut ChaCha8Rng) -> String {
    match slot {
        Slot::Int => rng.gen_range(0..100_000u32).to_string(),
        Slot::Float => format!("{:.4}", rng.gen_range(0.0..1000.0f64)),
        Slot::Path => {
            let seg = |rng: &mut ChaCha8Rng| {
                (0..rng.gen_range(3..8))
                    .map(|_| (b'a' + rng.gen_range(0..26)) as char)
                    .collect::<String>()
            };
            format!("/{}/{}/{}.log", seg(rng), seg(rng), seg(rng))
        }
        Slot::Ip => format!(
            "{}.{}.{}.{}",
            rng.gen_range(1..255),
            rng.gen_range(0..255),
            rng.gen_range(0..255),
            rng.gen_range(1..255)
        ),
        Slot::Hex => format!("0x{:08x}", rng.gen::<u32>()),
        Slot::Choice(i) => pools[*i].choose(rng).expect("non-empty pool").clone(),
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Distinct pronounceable words of 2 to 3 syllables that the normalizer leaves untouched.
fn lexicon(n: usize, rng: &mut ChaCha8Rng, taken: &mut HashSet<String>, normalizer: &Normalizer) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), NUCLEI.choose(rng).unwrap()))
            .collect();
        let clean = normalizer
            .normalize(&RawLog::new(w.clone(), "", 0))
            .map(|c| c.text)
            .unwrap_or_default();
        if clean == w && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// How anomalous logs are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// A template built from words that never occur in normal logs.
    Novel,
    /// A normal template with its items reordered.
    Shuffled,
    /// A normal template whose choice slots hold words from other templates, plus one
    /// foreign keyword.
    Injected,
    /// A normal template with every value slot changed to a different kind.
    WrongSlots,
}

/// Mixture weights over [`AnomalyKind`], in declaration order.
pub const ANOMALY_MIX: [(AnomalyKind, f64); 4] = [
    (AnomalyKind::Novel, 0.35),
    (AnomalyKind::Shuffled, 0.35),
    (AnomalyKind::Injected, 0.20),
    (AnomalyKind::WrongSlots, 0.10),
];

/// A seeded family of normal and anomaly templates. Sampling is seeded separately,
/// so fresh samples from the same distribution are cheap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generator {
    pub normal: Vec<Template>,
    pub novel: Vec<Template>,
    keywords: Vec<String>,
}

const VALUE_SLOTS: [Slot; 5] = [Slot::Int, Slot::Float, Slot::Path, Slot::Ip, Slot::Hex];

fn build_template(
    rng: &mut ChaCha8Rng,
    keywords: &[String],
    pool_words: &mut impl Iterator<Item = String>,
) -> Template {
    let n_words = rng.gen_range(8..=12);
    let mut items: Vec<Item> = Vec::new();
    for i in 0..n_words {
        let w = keywords.choose(rng).unwrap().clone();
        if i > 0 && rng.gen_bool(0.15) {
            let w2 = keywords.choose(rng).unwrap().clone();
            items.push(Item::Compound(w, w2));
        } else {
            items.push(Item::Word(w));
        }
    }
    let n_values = rng.gen_range(1..=3);
    let n_choices = rng.gen_range(5..=7);
    let mut pools = Vec::new();
    for c in 0..n_choices {
        let size = rng.gen_range(2..=3);
        pools.push(pool_words.by_ref().take(size).collect());
        let at = rng.gen_range(1..=items.len());
        items.insert(at, Item::Slot(Slot::Choice(c)));
    }
    for _ in 0..n_values {
        let at = rng.gen_range(1..=items.len());
        items.insert(at, Item::Slot(VALUE_SLOTS.choose(rng).unwrap().clone()));
    }
    Template { items, pools }
}

impl Generator {
    pub fn new(n_templates: usize, seed: u64) -> Result<Self> {
        if n_templates < 2 {
            return Err(Error::ConfigInvalid {
                field: "n_templates".into(),
                message: "must be at least 2".into(),
            });
        }
        let normalizer = Normalizer::new(Default::default())?;
        let mut rng = seed::rng(seed, &[0x7e3]);
        let mut taken: HashSet<String> = ["float", "filepath", "address"].map(String::from).into();
        let keywords = lexicon(5 * n_templates, &mut rng, &mut taken, &normalizer);
        let choice_words = lexicon(24 * n_templates, &mut rng, &mut taken, &normalizer);
        let n_novel = (n_templates / 5).max(2);
        let novel_keywords = lexicon(5 * n_novel, &mut rng, &mut taken, &normalizer);
        let novel_choices = lexicon(24 * n_novel, &mut rng, &mut taken, &normalizer);

        let mut words = choice_words.into_iter();
        let mut normal: Vec<Template> = Vec::with_capacity(n_templates);
        let mut seen = HashSet::new();
        while normal.len() < n_templates {
            let t = build_template(&mut rng, &keywords, &mut words);
            if seen.insert(t.skeleton()) {
                normal.push(t);
            }
        }
        let mut words = novel_choices.into_iter();
        let novel = (0..n_novel)
            .map(|_| build_template(&mut rng, &novel_keywords, &mut words))
            .collect();
        Ok(Generator {
            normal,
            novel,
            keywords,
        })
    }

    pub fn sample_normal(&self, rng: &mut ChaCha8Rng) -> String {
        self.normal.choose(rng).unwrap().render(rng)
    }

    /// An anomaly template of the given kind whose skeleton differs from every normal one.
    pub fn anomaly_template(&self, kind: AnomalyKind, rng: &mut ChaCha8Rng) -> Template {
        let normal_skeletons: HashSet<String> = self.normal.iter().map(Template::skeleton).collect();
        loop {
            let t = match kind {
                AnomalyKind::Novel => self.novel.choose(rng).unwrap().clone(),
                AnomalyKind::Shuffled => {
                    let mut t = self.normal.choose(rng).unwrap().clone();
                    let original = t.items.clone();
                    // a derangement where possible: no item keeps its position
                    for _ in 0..20 {
                        t.items.shuffle(rng);
                        if t.items.iter().zip(&original).all(|(a, b)| a != b) {
                            break;
                        }
                    }
                    t
                }
                AnomalyKind::Injected => {
                    let ti = rng.gen_range(0..self.normal.len());
                    let mut t = self.normal[ti].clone();
                    let own: HashSet<String> = t.keywords().map(str::to_string).collect();
                    let foreign: Vec<&String> = self.keywords.iter().filter(|k| !own.contains(*k)).collect();
                    let foreign_choices: Vec<&String> = self
                        .normal
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != ti)
                        .flat_map(|(_, o)| o.pools.iter().flatten())
                        .collect();
                    for it in &mut t.items {
                        if let Item::Slot(Slot::Choice(_)) = it {
                            *it = Item::Word((*foreign_choices.choose(rng).unwrap()).clone());
                        }
                    }
                    let word_positions: Vec<usize> = (0..t.items.len())
                        .filter(|&i| matches!(t.items[i], Item::Word(ref w) if own.contains(w)))
                        .collect();
                    if let Some(&i) = word_positions.choose(rng) {
                        t.items[i] = Item::Word((*foreign.choose(rng).unwrap()).clone());
                    }
                    t
                }
                AnomalyKind::WrongSlots => {
                    let mut t = self.normal.choose(rng).unwrap().clone();
                    for it in &mut t.items {
                        if let Item::Slot(s) = it {
                            if !matches!(s, Slot::Choice(_)) {
                                let kind = placeholder_class(s);
                                let others: Vec<&Slot> =
                                    VALUE_SLOTS.iter().filter(|o| placeholder_class(o) != kind).collect();
                                *s = (*others.choose(rng).unwrap()).clone();
                            }
                        }
                    }
                    // and one value slot more, next to a choice slot
                    let at = t
                        .items
                        .iter()
                        .position(|it| matches!(it, Item::Slot(Slot::Choice(_))))
                        .unwrap_or(0);
                    t.items.insert(at, Item::Slot(VALUE_SLOTS.choose(rng).unwrap().clone()));
                    t
                }
            };
            if !normal_skeletons.contains(&t.skeleton()) {
                return t;
            }
        }
    }

    pub fn sample_anomaly(&self, rng: &mut ChaCha8Rng) -> (String, AnomalyKind) {
        let kind = ANOMALY_MIX
            .choose_weighted(rng, |&(_, w)| w)
            .expect("weights are positive")
            .0;
        let t = self.anomaly_template(kind, rng);
        (t.render(rng), kind)
    }

    /// `n` raw normal lines with timestamps, seeded by `seed`.
    pub fn normals(&self, n: usize, seed: u64) -> Vec<String> {
        let mut rng = seed::rng(seed, &[0xa0]);
        (0..n)
            .map(|i| with_timestamp(i, &self.sample_normal(&mut rng), &mut rng))
            .collect()
    }
}

/// The placeholder a value slot normalizes to.
fn placeholder_class(s: &Slot) -> u8 {
    match s {
        Slot::Int | Slot::Float => 0,
        Slot::Path => 1,
        Slot::Ip | Slot::Hex => 2,
        Slot::Choice(_) => 3,
    }
}

fn with_timestamp(i: usize, body: &str, rng: &mut ChaCha8Rng) -> String {
    let secs = i as u64 * 7 + rng.gen_range(0..7);
    format!(
        "2005-06-{:02}-{:02}.{:02}.{:02}.{:06} {body}",
        3 + (secs / 86_400) % 27,
        (secs / 3600) % 24,
        (secs / 60) % 60,
        secs % 60,
        rng.gen_range(0..1_000_000)
    )
}

/// Raw synthetic lines with labels and the generator that produced them.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub generator: Generator,
    pub lines: Vec<String>,
    pub labels: Vec<Label>,
    /// `None` for normal lines.
    pub kinds: Vec<Option<AnomalyKind>>,
}

/// Raw lines for `n_normal` normal and `n_anomalies` anomalous logs, in seeded order.
pub fn synthesize_raw(n_templates: usize, n_normal: usize, n_anomalies: usize, seed: u64) -> Result<Synthetic> {
    let generator = Generator::new(n_templates, seed::derive(seed, &[0]))?;
    let mut rng = seed::rng(seed, &[1]);
    let mut bodies: Vec<(String, Label, Option<AnomalyKind>)> = Vec::with_capacity(n_normal + n_anomalies);
    for _ in 0..n_normal {
        bodies.push((generator.sample_normal(&mut rng), Label::Normal, None));
    }
    for _ in 0..n_anomalies {
        let (body, kind) = generator.sample_anomaly(&mut rng);
        bodies.push((body, Label::Anomalous, Some(kind)));
    }
    bodies.shuffle(&mut rng);
    let mut lines = Vec::with_capacity(bodies.len());
    let mut labels = Vec::with_capacity(bodies.len());
    let mut kinds = Vec::with_capacity(bodies.len());
    for (i, (body, label, kind)) in bodies.into_iter().enumerate() {
        lines.push(with_timestamp(i, &body, &mut rng));
        labels.push(label);
        kinds.push(kind);
    }
    Ok(Synthetic {
        generator,
        lines,
        labels,
        kinds,
    })
}

/// Synthetic corpus, cleaned with the default normalizer.
pub fn synthesize(n_templates: usize, n_normal: usize, n_anomalies: usize, seed: u64) -> Result<LabeledCorpus> {
    let synth = synthesize_raw(n_templates, n_normal, n_anomalies, seed)?;
    let normalizer = Normalizer::new(Default::default())?;
    let source = format!("synth:{n_templates}:{n_normal}:{n_anomalies}:{seed}");
    let raws: Vec<(RawLog, Label)> = synth
        .lines
        .iter()
        .zip(&synth.labels)
        .enumerate()
        .map(|(i, (l, &lab))| (RawLog::new(l.as_str(), source.as_str(), i + 1), lab))
        .collect();
    let (corpus, dropped) = clean_labeled(&normalizer, &raws, &source);
    debug_assert_eq!(dropped, 0);
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::RawRef;

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
    fn dedupe_keeps_first_occurrence() {
        let d = dedupe(&logs(&["a b", "a b", "c"]));
        assert_eq!(d.logs.iter().map(|l| l.text.as_str()).collect::<Vec<_>>(), ["a b", "c"]);
        assert_eq!(d.logs[0].raw_ref.line_no, 0);
        assert_eq!(d.multiplicities, [2, 1]);
        let u = logs(&["x", "y"]);
        assert_eq!(dedupe(&u).logs, u);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let texts: Vec<String> = (0..100).map(|i| format!("log {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let normals = logs(&refs);
        let anomalies = logs(&["bad one", "bad two"]);
        let s = split(&normals, &anomalies, 4).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 15, 17));
        assert_eq!(s.test_labels.iter().filter(|&&l| l == Label::Anomalous).count(), 2);
        assert_eq!(s, split(&normals, &anomalies, 4).unwrap());
        assert_ne!(s.train, split(&normals, &anomalies, 5).unwrap().train);
        assert!(matches!(
            split(&normals[..9], &anomalies, 0),
            Err(Error::TooFewLogs { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn labeled_tsv_round_trip() {
        let records = vec![("a b".to_string(), Label::Normal), ("c\td".to_string(), Label::Anomalous)];
        let mut buf = Vec::new();
        write_labeled_tsv(&mut buf, &records).unwrap();
        let back = read_labeled_tsv(&buf[..], "f").unwrap();
        assert_eq!(back[1].0.text, "c\td");
        assert_eq!(back[1].1, Label::Anomalous);
        assert_eq!(back[0].0.line_no, 1);
        assert!(read_labeled_tsv(&b"2\tx\n"[..], "f").is_err());
        assert!(read_labels(&b"0\n1\nx\n"[..]).is_err());
    }

    #[test]
    fn synthetic_counts_and_disjoint_templates() {
        let synth = synthesize_raw(6, 200, 40, 1).unwrap();
        assert_eq!(synth.labels.iter().filter(|&&l| l == Label::Normal).count(), 200);
        assert_eq!(synth.labels.iter().filter(|&&l| l == Label::Anomalous).count(), 40);
        let normal: HashSet<String> = synth.generator.normal.iter().map(Template::skeleton).collect();
        let mut rng = seed::rng(9, &[]);
        for (kind, _) in ANOMALY_MIX {
            for _ in 0..20 {
                let t = synth.generator.anomaly_template(kind, &mut rng);
                assert!(!normal.contains(&t.skeleton()), "{kind:?}");
            }
        }
        let corpus = synthesize(6, 200, 40, 1).unwrap();
        assert_eq!(corpus.records.len(), 240);
        assert_eq!(corpus, synthesize(6, 200, 40, 1).unwrap());
    }

    #[test]
    fn generator_words_survive_cleaning() {
        let g = Generator::new(4, 3).unwrap();
        let normalizer = Normalizer::new(Default::default()).unwrap();
        for t in &g.normal {
            for w in t.keywords() {
                let c = normalizer.normalize(&RawLog::new(w, "", 0)).unwrap();
                assert_eq!(c.text, w);
            }
        }
    }
}
