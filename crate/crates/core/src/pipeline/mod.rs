//! Data construction: embedding, clustering, tagging, stratified sampling and
//! training-pair generation.

pub mod embed;
pub mod kmeans;
pub mod pairs;
pub mod sample;

pub use embed::{embed_text, FeatureVector, Sidecar, DEFAULT_DIM};
pub use kmeans::{kmeans, KMeansResult};
pub use pairs::{
    make_crossmode_pair, make_dpo_pairs, CrossModePair, PairBatch, Perturbation, PreferencePair, SkippedPair,
};
pub use sample::{allocate_quotas, stratified_sample, SampleOutcome, SampleReport, StratumKey};

use crate::error::{Error, Result};
use crate::records::{SourceRecord, TaggedRecord, TaggingRules};

pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone)]
pub struct TagOptions {
    pub rules: TaggingRules,
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for TagOptions {
    fn default() -> Self {
        TagOptions {
            rules: TaggingRules::default(),
            k: DEFAULT_K,
            dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

/// Stable id for the record at position `index` of an input file.
pub fn record_id(index: usize) -> String {
    format!("rec-{index:06}")
}

/// Clusters records by question embedding and attaches winner/difficulty tags.
/// With a sidecar, vectors are looked up by record id instead of computed.
pub fn tag_records(records: &[SourceRecord], opts: &TagOptions, sidecar: Option<&Sidecar>) -> Result<Vec<TaggedRecord>> {
    let ids: Vec<String> = (0..records.len()).map(record_id).collect();
    let mut points = Vec::with_capacity(records.len());
    for (id, r) in ids.iter().zip(records) {
        let v = match sidecar {
            Some(s) => s
                .get(id)
                .cloned()
                .ok_or_else(|| Error::Validation(format!("sidecar has no vector for {id}")))?,
            None => embed_text(&r.question, opts.dim),
        };
        points.push(v.values);
    }
    let clusters = kmeans(&points, opts.k, opts.seed)?;
    ids.into_iter()
        .zip(records)
        .zip(clusters.assignments)
        .map(|((id, r), c)| {
            Ok(TaggedRecord {
                id,
                record: r.clone(),
                tags: opts.rules.tag(r, c)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{Difficulty, Winner};

    fn rec(q: &str, a: i64, b: i64) -> SourceRecord {
        SourceRecord {
            question: q.into(),
            answer_a: "x".into(),
            answer_b: "y".into(),
            score_a: a,
            score_b: b,
        }
    }

    #[test]
    fn tags_and_clusters() {
        let recs = vec![
            rec("How do I reverse a linked list in Rust?", 9, 3),
            rec("How can I reverse a linked list in Rust?", 5, 5),
            rec("Write a sonnet about the winter sea.", 1, 2),
            rec("Compose a sonnet about the winter sea.", 6, 7),
        ];
        let opts = TagOptions {
            k: 2,
            ..TagOptions::default()
        };
        let t = tag_records(&recs, &opts, None).unwrap();
        assert_eq!(t[0].id, "rec-000000");
        assert_eq!(t[0].tags.cluster_id, t[1].tags.cluster_id);
        assert_eq!(t[2].tags.cluster_id, t[3].tags.cluster_id);
        assert_ne!(t[0].tags.cluster_id, t[2].tags.cluster_id);
        assert_eq!(t[0].tags.winner, Winner::AWin);
        assert_eq!(t[0].tags.difficulty, Difficulty::Easy);
        assert_eq!(t[1].tags.winner, Winner::Tie);
        assert_eq!(t[2].tags.winner, Winner::BothBad);
        assert_eq!(t[3].tags.difficulty, Difficulty::Hard);
        assert_eq!(tag_records(&recs, &opts, None).unwrap(), t);
    }

    #[test]
    fn k_larger_than_input_is_usage_error() {
        let recs = vec![rec("q", 5, 4)];
        assert!(matches!(tag_records(&recs, &TagOptions::default(), None), Err(Error::Usage(_))));
    }
}
