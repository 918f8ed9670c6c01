//! Mask plans shared by training, calibration and detection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::Targets;
use crate::tokenize::{TokenSequence, MASK};
use crate::{Error, Result};

pub const DEFAULT_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskingStrategy {
    RandomFraction { fraction: f64 },
    TokenByToken,
}

impl Default for MaskingStrategy {
    fn default() -> Self {
        MaskingStrategy::RandomFraction {
            fraction: DEFAULT_FRACTION,
        }
    }
}

impl MaskingStrategy {
    pub fn random(fraction: f64) -> Result<Self> {
        let s = MaskingStrategy::RandomFraction { fraction };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MaskingStrategy::RandomFraction { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                Err(Error::ConfigInvalid {
                    field: "mask_fraction".into(),
                    message: format!("{fraction} is outside (0, 1]"),
                })
            }
            _ => Ok(()),
        }
    }
}

/// `token` or `random:<fraction>`.
impl fmt::Display for MaskingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskingStrategy::TokenByToken => write!(f, "token"),
            MaskingStrategy::RandomFraction { fraction } => write!(f, "random:{fraction}"),
        }
    }
}

impl FromStr for MaskingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ConfigInvalid {
            field: "mask_strategy".into(),
            message: format!("`{s}` is not `token` or `random:<fraction>`"),
        };
        match s.split_once(':') {
            None if s == "token" => Ok(MaskingStrategy::TokenByToken),
            None if s == "random" => Ok(MaskingStrategy::default()),
            Some(("random", f)) => MaskingStrategy::random(f.parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    /// Sorted, distinct content positions.
    pub masked_indices: Vec<usize>,
    pub original_ids: Vec<u32>,
    pub masked_sequence: TokenSequence,
}

impl MaskPlan {
    fn new(seq: &TokenSequence, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        let mut masked = seq.clone();
        let original_ids = indices
            .iter()
            .map(|&i| std::mem::replace(&mut masked.ids[i], MASK))
            .collect();
        MaskPlan {
            masked_indices: indices,
            original_ids,
            masked_sequence: masked,
        }
    }

    /// `(position, original id)` pairs for the loss or the scorer.
    pub fn targets(&self) -> Targets {
        self.masked_indices
            .iter()
            .copied()
            .zip(self.original_ids.iter().copied())
            .collect()
    }
}

/// `max(1, round(fraction × length))`, capped at `length`.
pub fn mask_count(length: usize, fraction: f64) -> usize {
    ((fraction * length as f64).round() as usize).clamp(1, length)
}

/// Masks a uniformly drawn subset of content positions.
pub fn plan_random(seq: &TokenSequence, fraction: f64, rng_seed: u64) -> MaskPlan {
    assert!(seq.length >= 1, "cannot mask an empty sequence");
    let k = mask_count(seq.length, fraction);
    let mut rng = crate::seed::rng(rng_seed, &[0x6d61_736b]);
    let picked = rand::seq::index::sample(&mut rng, seq.length, k).into_vec();
    MaskPlan::new(seq, picked)
}

/// One plan per content position, each masking only that position.
pub fn plan_token_by_token(seq: &TokenSequence) -> Vec<MaskPlan> {
    (0..seq.length).map(|i| MaskPlan::new(seq, vec![i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::RawRef;
    use crate::tokenize::PAD;

    fn seq(len: usize) -> TokenSequence {
        let mut ids: Vec<u32> = (0..len as u32).map(|i| 4 + i % 50).collect();
        ids.resize(len.max(2) + 2, PAD);
        TokenSequence {
            ids,
            length: len,
            truncated: false,
            raw_ref: RawRef {
                source_id: "t".into(),
                line_no: 0,
            },
        }
    }

    #[test]
    fn counts_follow_rounding_rule() {
        assert_eq!(plan_random(&seq(20), 0.15, 1).masked_indices.len(), 3);
        assert_eq!(plan_random(&seq(1), 0.15, 1).masked_indices, vec![0]);
        assert_eq!(plan_random(&seq(1), 1.0, 1).masked_indices, vec![0]);
        assert_eq!(plan_random(&seq(10), 0.5, 1).masked_indices.len(), 5);
        assert_eq!(plan_random(&seq(7), 1.0, 1).masked_indices, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_plan_is_pinned() {
        let plan = plan_random(&seq(10), 0.15, 42);
        assert_eq!(plan.masked_indices, GOLDEN_LEN10_SEED42);
        assert_eq!(plan, plan_random(&seq(10), 0.15, 42));
    }

    // ChaCha8 stream keyed through `seed::derive`; pinned for cross-run stability.
    const GOLDEN_LEN10_SEED42: [usize; 2] = [0, 1];

    #[test]
    fn plan_contents() {
        let s = seq(12);
        let plan = plan_random(&s, 0.25, 3);
        for (i, (&a, &b)) in s.ids.iter().zip(&plan.masked_sequence.ids).enumerate() {
            if plan.masked_indices.contains(&i) {
                assert_eq!(b, MASK);
            } else {
                assert_eq!(a, b);
            }
        }
        let targets = plan.targets();
        assert!(targets.iter().all(|&(p, id)| s.ids[p] == id));
    }

    #[test]
    fn token_by_token_covers_every_position() {
        let s = seq(3);
        let plans = plan_token_by_token(&s);
        assert_eq!(plans.len(), 3);
        for (k, p) in plans.iter().enumerate() {
            assert_eq!(p.masked_indices, vec![k]);
            let diffs = s.ids.iter().zip(&p.masked_sequence.ids).filter(|(a, b)| a != b).count();
            assert_eq!(diffs, 1);
        }
    }

    #[test]
    fn positions_are_masked_uniformly() {
        let s = seq(100);
        let mut hits = [0usize; 100];
        for seed in 0..1000 {
            for i in plan_random(&s, 0.15, seed).masked_indices {
                hits[i] += 1;
            }
        }
        for h in hits {
            let freq = h as f64 / 1000.0;
            assert!((freq - 0.15).abs() <= 0.05, "{freq}");
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("token".parse::<MaskingStrategy>().unwrap(), MaskingStrategy::TokenByToken);
        assert_eq!(
            "random:0.25".parse::<MaskingStrategy>().unwrap(),
            MaskingStrategy::RandomFraction { fraction: 0.25 }
        );
        assert_eq!("random".parse::<MaskingStrategy>().unwrap(), MaskingStrategy::default());
        assert!("random:0".parse::<MaskingStrategy>().is_err());
        assert!("random:1.5".parse::<MaskingStrategy>().is_err());
        assert!("span".parse::<MaskingStrategy>().is_err());
        let s = MaskingStrategy::random(0.5).unwrap();
        assert_eq!(s.to_string().parse::<MaskingStrategy>().unwrap(), s);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coverage_bound(len in 1usize..120, fraction in 0.01f64..=1.0, seed in any::<u64>()) {
                let plan = plan_random(&seq(len), fraction, seed);
                let m = plan.masked_indices.len();
                let ratio = m as f64 / len as f64;
                prop_assert!(m >= 1);
                prop_assert!(plan.masked_indices.iter().all(|&i| i < len));
                prop_assert!(plan.masked_indices.windows(2).all(|w| w[0] < w[1]));
                prop_assert!((ratio - fraction).abs() <= 1.0 / len as f64 + 1e-12);
            }
        }
    }
}
