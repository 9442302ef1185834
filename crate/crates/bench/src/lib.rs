//! Fixed inputs shared by the benchmarks.

use judgekit_core::pipeline::{embed_text, DEFAULT_DIM};
use judgekit_core::synth::{sampler_corpus, CorpusComposition};
use judgekit_core::parser::render_full;
use judgekit_core::{JudgmentLabel, SourceRecord};

pub fn corpus(n: usize) -> Vec<SourceRecord> {
    sampler_corpus(n, &CorpusComposition::default(), 1).expect("default composition is valid")
}

/// Question embeddings of a synthetic corpus.
pub fn points(n: usize) -> Vec<Vec<f64>> {
    corpus(n).iter().map(|r| embed_text(&r.question, DEFAULT_DIM).values).collect()
}

/// Structured completions cycling through the three labels, with some prose around them.
pub fn completions(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let label = JudgmentLabel::ALL[i % 3];
            format!("### Reasoning\nAnswer {i} is clearer and cites a source.\n{}", render_full(label))
        })
        .collect()
}
