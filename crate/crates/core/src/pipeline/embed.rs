//! Hashed character n-gram embeddings, or precomputed vectors from a sidecar file.

use std::collections::HashMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::read_jsonl_strict;

pub const DEFAULT_DIM: usize = 256;
const NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// True when the input produced no features (empty text); such vectors are
    /// left as zeros instead of being normalized.
    pub degenerate: bool,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        let d = self.norm() * other.norm();
        if d == 0.0 {
            0.0
        } else {
            self.dot(other) / d
        }
    }

    fn normalized(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite embedding entry {v}")));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(FeatureVector {
                values,
                degenerate: true,
            });
        }
        Ok(FeatureVector {
            values: values.into_iter().map(|v| v / norm).collect(),
            degenerate: false,
        })
    }
}

fn bucket(gram: &[char], dim: usize) -> usize {
    let mut h = FnvHasher::default();
    for c in gram {
        h.write_u32(*c as u32);
    }
    (h.finish() % dim as u64) as usize
}

/// L2-normalized frequency vector of hashed character trigrams over the
/// lowercased text. Texts shorter than three characters hash as one gram.
pub fn embed_text(text: &str, dim: usize) -> FeatureVector {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let dim = dim.max(1);
    let mut values = vec![0.0; dim];
    if chars.len() >= NGRAM {
        for gram in chars.windows(NGRAM) {
            values[bucket(gram, dim)] += 1.0;
        }
    } else if !chars.is_empty() {
        values[bucket(&chars, dim)] += 1.0;
    }
    FeatureVector::normalized(values).expect("counts are finite")
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct SidecarLine {
    id: String,
    vector: Vec<f64>,
}

/// Precomputed embeddings keyed by record id.
#[derive(Debug, Clone, Default)]
pub struct Sidecar {
    dim: usize,
    vectors: HashMap<String, FeatureVector>,
}

impl Sidecar {
    /// Loads `{"id": ..., "vector": [...]}` lines; every vector must have `dim` entries.
    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        let lines: Vec<SidecarLine> = read_jsonl_strict(path)?;
        let mut vectors = HashMap::with_capacity(lines.len());
        for line in lines {
            if line.vector.len() != dim {
                return Err(Error::Validation(format!(
                    "sidecar vector for {:?} has dimension {}, expected {dim}",
                    line.id,
                    line.vector.len()
                )));
            }
            vectors.insert(line.id, FeatureVector::normalized(line.vector)?);
        }
        Ok(Sidecar { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.vectors.get(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn deterministic_and_normalized() {
        let a = embed_text("How do I sort a list in Python?", DEFAULT_DIM);
        let b = embed_text("How do I sort a list in Python?", DEFAULT_DIM);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(!a.degenerate);
    }

    #[test]
    fn empty_text_is_degenerate() {
        let e = embed_text("", DEFAULT_DIM);
        assert!(e.degenerate);
        assert_eq!(e.norm(), 0.0);
        assert!(!embed_text("ab", DEFAULT_DIM).degenerate);
    }

    #[test]
    fn unrelated_texts_are_less_similar() {
        let corpus = [
            ("What is the capital of France?", "Which city is the capital of France?"),
            ("Write a haiku about autumn leaves.", "Compose a haiku on falling autumn leaves."),
            ("Explain quicksort complexity.", "What is the time complexity of quicksort?"),
        ];
        for (i, (a, a2)) in corpus.iter().enumerate() {
            let ea = embed_text(a, DEFAULT_DIM);
            let self_sim = ea.cosine(&embed_text(a, DEFAULT_DIM));
            for (j, (b, _)) in corpus.iter().enumerate() {
                if i == j {
                    continue;
                }
                let cross = ea.cosine(&embed_text(b, DEFAULT_DIM));
                assert!(cross < self_sim);
                assert!(cross < ea.cosine(&embed_text(a2, DEFAULT_DIM)), "{a} / {b}");
            }
        }
    }

    #[test]
    fn sidecar_dimension_checked() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"r1","vector":[3.0,4.0]}}"#).unwrap();
        let s = Sidecar::load(f.path(), 2).unwrap();
        assert_eq!(s.get("r1").unwrap().values, vec![0.6, 0.8]);
        assert!(Sidecar::load(f.path(), 3).is_err());
    }
}
