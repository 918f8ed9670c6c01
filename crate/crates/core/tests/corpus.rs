//! Fixture corpus: counting, splitting and separability checks.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use adalog::corpus::{dedupe, synthesize, synthesize_raw, AnomalyKind, Generator, LabeledCorpus, Split, ANOMALY_MIX};
use adalog::detect::{metrics, Label, Verdict};
use adalog::normalize::{Normalizer, RawLog};
use adalog::seed;

fn fixture() -> &'static LabeledCorpus {
    static F: OnceLock<LabeledCorpus> = OnceLock::new();
    F.get_or_init(|| synthesize(50, 5000, 200, 7).unwrap())
}

#[test]
fn label_counts_match_request() {
    let c = fixture();
    assert_eq!(c.count(Label::Normal), 5000);
    assert_eq!(c.count(Label::Anomalous), 200);
}

#[test]
fn dedupe_matches_hash_count() {
    let logs = fixture().logs_with(Label::Normal);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order = Vec::new();
    for l in &logs {
        let n = counts.entry(l.text.as_str()).or_insert(0);
        if *n == 0 {
            order.push(l.text.as_str());
        }
        *n += 1;
    }
    let d = dedupe(&logs);
    let texts: Vec<&str> = d.logs.iter().map(|l| l.text.as_str()).collect();
    assert_eq!(texts, order);
    let expected: Vec<usize> = order.iter().map(|t| counts[t]).collect();
    assert_eq!(d.multiplicities, expected);
    assert_eq!(d.multiplicities.iter().sum::<usize>(), logs.len());
    assert_eq!(dedupe(&d.logs).logs, d.logs);
}

#[test]
fn split_partitions_are_disjoint_and_sized() {
    let c = fixture();
    let s = Split::from_corpus(c, 7).unwrap();
    let set = |logs: &[adalog::normalize::CleanLog]| logs.iter().map(|l| l.text.clone()).collect::<HashSet<_>>();
    let test_normals: Vec<_> = s
        .test
        .iter()
        .zip(&s.test_labels)
        .filter(|(_, &l)| l == Label::Normal)
        .map(|(log, _)| log.clone())
        .collect();
    let (tr, va, te) = (set(&s.train), set(&s.validation), set(&test_normals));
    assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));

    let n = dedupe(&c.logs_with(Label::Normal)).logs.len() as f64;
    for (got, share) in [(tr.len(), 0.70), (va.len(), 0.15), (te.len(), 0.15)] {
        assert!((got as f64 - share * n).abs() <= 1.0, "{got} vs {share} of {n}");
    }
    let anomalies = s.test_labels.iter().filter(|&&l| l == Label::Anomalous).count();
    assert_eq!(anomalies, dedupe(&c.logs_with(Label::Anomalous)).logs.len());
    assert_eq!(Split::from_corpus(c, 7).unwrap(), s);
}

#[test]
fn anomaly_templates_never_match_normal_ones() {
    let g = Generator::new(50, 3).unwrap();
    let normal: HashSet<String> = g.normal.iter().map(|t| t.skeleton()).collect();
    let mut rng = seed::rng(3, &[9]);
    for (kind, _) in ANOMALY_MIX {
        for _ in 0..50 {
            assert!(!normal.contains(&g.anomaly_template(kind, &mut rng).skeleton()), "{kind:?}");
        }
    }
}

#[test]
fn every_anomaly_kind_is_emitted() {
    let s = synthesize_raw(50, 100, 200, 7).unwrap();
    let kinds: HashSet<AnomalyKind> = s.kinds.iter().flatten().copied().collect();
    assert_eq!(kinds.len(), ANOMALY_MIX.len());
}

/// Tokens of the anomaly-only (never-seen) templates mostly stay out of the normal vocabulary.
#[test]
fn novel_template_vocabulary_is_mostly_unseen() {
    let s = synthesize_raw(50, 5000, 200, 7).unwrap();
    let normalizer = Normalizer::new(Default::default()).unwrap();
    let tokens = |keep: &dyn Fn(Option<AnomalyKind>) -> bool| -> HashSet<String> {
        s.lines
            .iter()
            .zip(&s.kinds)
            .filter(|(_, &k)| keep(k))
            .flat_map(|(l, _)| {
                let c = normalizer.normalize(&RawLog::new(l.as_str(), "synth", 0)).unwrap();
                c.tokens().map(str::to_string).collect::<Vec<_>>()
            })
            .collect()
    };
    let normal = tokens(&|k| k.is_none());
    let novel = tokens(&|k| k == Some(AnomalyKind::Novel));
    assert!(!novel.is_empty());
    let shared = novel.intersection(&normal).count() as f64 / novel.len() as f64;
    assert!(shared < 0.5, "{shared}");
}

#[test]
fn unseen_token_baseline_is_imperfect() {
    let c = fixture();
    let s = Split::from_corpus(c, 7).unwrap();
    let seen: HashSet<&str> = s.train.iter().flat_map(|l| l.tokens()).collect();
    let verdicts: Vec<Verdict> = s
        .test
        .iter()
        .map(|l| {
            let flagged = l.tokens().any(|t| !seen.contains(t));
            Verdict::from_score(flagged as u8 as f64, 0.5)
        })
        .collect();
    let m = metrics(&verdicts, &s.test_labels).unwrap();
    assert!(m.f1 < 1.0, "{m:?}");
    // the in-vocabulary anomalies are the ones it misses
    assert!(m.fn_ > 0);
}
