//! Seeded synthetic data: a source corpus with a chosen winner/difficulty
//! composition, and a cross-mode benchmark whose supervised labels come from
//! a biased teacher while rewards and held-out metrics use the true scores.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{make_crossmode_pair, make_dpo_pairs, CrossModePair, Perturbation};
use crate::policy::{FeatureConfig, ToyJudgePolicy, TrainingData};
use crate::records::{EvaluationInstance, Gold, JudgmentLabel, ScoreRange, SourceRecord, TaggingRules};

const WORDS: [&str; 48] = [
    "the", "result", "depends", "on", "input", "size", "because", "each", "step", "reads", "one", "value",
    "so", "total", "cost", "grows", "linearly", "with", "data", "and", "memory", "stays", "small", "while",
    "order", "matters", "for", "correct", "output", "we", "check", "edge", "cases", "first", "then", "return",
    "answer", "clearly", "using", "simple", "terms", "that", "any", "reader", "can", "follow", "here", "now",
];

const DOMAINS: [(&str, [&str; 4]); 8] = [
    ("How do I {} a list in Python?", ["sort", "reverse", "filter", "flatten"]),
    ("What is the capital city of {}?", ["France", "Peru", "Kenya", "Norway"]),
    ("Write a short poem about {}.", ["autumn rain", "the sea", "old trains", "winter light"]),
    ("Explain the time complexity of {}.", ["quicksort", "binary search", "heap insert", "merge sort"]),
    ("Give me a recipe for {}.", ["lentil soup", "pancakes", "fried rice", "banana bread"]),
    ("Summarize the causes of {}.", ["inflation", "the first world war", "erosion", "drought"]),
    ("Translate '{}' into Spanish.", ["good morning", "thank you", "where is the station", "see you soon"]),
    ("What are the health effects of {}?", ["caffeine", "sleep loss", "daily walking", "sugar"]),
];

fn question<R: Rng>(rng: &mut R) -> String {
    let (tpl, fills) = DOMAINS.choose(rng).expect("non-empty");
    tpl.replace("{}", fills.choose(rng).expect("non-empty"))
}

fn sentence<R: Rng>(rng: &mut R, words: usize) -> String {
    let mut s: Vec<&str> = (0..words).map(|_| *WORDS.choose(rng).expect("non-empty")).collect();
    s.dedup();
    let mut text = s.join(" ");
    text.push('.');
    text
}

/// Winner composition (fractions summing to 1) and, for decisive records,
/// the difficulty mix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusComposition {
    pub a_win: f64,
    pub b_win: f64,
    pub tie: f64,
    pub both_bad: f64,
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
}

impl Default for CorpusComposition {
    /// A/B/tie/both-bad shares of a large judged corpus, with a difficulty
    /// mix skewed toward easy records.
    fn default() -> Self {
        CorpusComposition {
            a_win: 0.433,
            b_win: 0.448,
            tie: 0.011,
            both_bad: 0.108,
            easy: 0.559,
            medium: 0.380,
            hard: 0.061,
        }
    }
}

/// Score pair with the requested gap class, under default tagging rules.
fn decisive_scores<R: Rng>(rng: &mut R, difficulty: usize) -> (i64, i64) {
    let rules = TaggingRules::default();
    loop {
        let hi = rng.random_range(3..=10);
        let gap = match difficulty {
            0 => rng.random_range(rules.easy_gap..=9),
            1 => rng.random_range(rules.medium_gap..rules.easy_gap),
            _ => 1,
        };
        let lo = hi - gap;
        if lo >= 1 {
            return (hi, lo);
        }
    }
}

/// `n` source records whose winner and difficulty tags follow `comp` in
/// expectation, with questions drawn from a handful of topic templates.
pub fn sampler_corpus(n: usize, comp: &CorpusComposition, seed: u64) -> Result<Vec<SourceRecord>> {
    let winners = WeightedIndex::new([comp.a_win, comp.b_win, comp.tie, comp.both_bad])
        .map_err(|e| Error::Usage(format!("bad winner composition: {e}")))?;
    let diffs = WeightedIndex::new([comp.easy, comp.medium, comp.hard])
        .map_err(|e| Error::Usage(format!("bad difficulty composition: {e}")))?;
    let threshold = TaggingRules::default().both_bad_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = match winners.sample(&mut rng) {
            0 => {
                let d = diffs.sample(&mut rng);
                decisive_scores(&mut rng, d)
            }
            1 => {
                let d = diffs.sample(&mut rng);
                let (hi, lo) = decisive_scores(&mut rng, d);
                (lo, hi)
            }
            2 => {
                let s = rng.random_range(threshold + 1..=10);
                (s, s)
            }
            _ => (rng.random_range(1..=threshold), rng.random_range(1..=threshold)),
        };
        out.push(SourceRecord {
            question: question(&mut rng),
            answer_a: sentence(&mut rng, 8),
            answer_b: sentence(&mut rng, 8),
            score_a: a,
            score_b: b,
        });
    }
    Ok(out)
}

/// Parameters of the cross-mode benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub features: FeatureConfig,
    /// Distinct answer texts per answer feature.
    pub answers_per_feature: usize,
    /// Probability that the pairwise teacher answers `A_win` when B is better.
    pub position_bias: f64,
    /// Probability that the pointwise teacher scores a long answer one point high.
    pub length_inflation: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seed: 7,
            train_pairs: 1500,
            heldout_pairs: 500,
            features: FeatureConfig {
                fingerprint_buckets: 4,
                length_edges: vec![60],
            },
            answers_per_feature: 4,
            position_bias: 0.55,
            length_inflation: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: Vec<CrossModePair>,
    pub heldout: Vec<CrossModePair>,
    /// Teacher-labelled SFT targets, gold-derived DPO pairs and GRPO queries.
    pub data: TrainingData,
    /// True score of each answer feature.
    pub feature_scores: Vec<i64>,
}

impl Benchmark {
    pub fn initial_policy(&self, cfg: &BenchmarkConfig) -> Result<ToyJudgePolicy> {
        ToyJudgePolicy::new(cfg.features.clone(), ScoreRange::default())
    }
}

/// Answer texts, grouped by the feature they hash to.
fn answer_pool<R: Rng>(cfg: &BenchmarkConfig, rng: &mut R) -> Vec<Vec<String>> {
    let f = &cfg.features;
    let mut pool = vec![Vec::new(); f.answer_features()];
    let want = cfg.answers_per_feature.max(1);
    for (feature, texts) in pool.iter_mut().enumerate() {
        let bucket = feature / f.fingerprint_buckets;
        while texts.len() < want {
            let words = if bucket == 0 { rng.random_range(3..7) } else { rng.random_range(14..22) };
            let t = sentence(rng, words);
            if f.answer_feature(&t) == feature && !texts.contains(&t) {
                texts.push(t);
            }
        }
    }
    pool
}

fn teacher_label<R: Rng>(gold: JudgmentLabel, position_bias: f64, rng: &mut R) -> JudgmentLabel {
    use JudgmentLabel::*;
    let weights = match gold {
        AWin => [0.9, 0.05, 0.05],
        BWin => [position_bias, 0.95 - position_bias, 0.05],
        Tie => [0.4, 0.1, 0.5],
    };
    let i = WeightedIndex::new(weights).expect("valid weights").sample(rng);
    JudgmentLabel::ALL[i]
}

fn teacher_score<R: Rng>(gold: i64, long: bool, inflation: f64, range: ScoreRange, rng: &mut R) -> i64 {
    let (up, same, down) = if long {
        (inflation, (1.0 - inflation) * 0.75, (1.0 - inflation) * 0.25)
    } else {
        (0.15, 0.7, 0.15)
    };
    let delta = [1, 0, -1][WeightedIndex::new([up, same, down]).expect("valid weights").sample(rng)];
    (gold + delta).clamp(range.min, range.max)
}

/// Builds the benchmark. Each answer feature has a fixed true score (a
/// permutation of distinct values, so distinct features never tie); train and
/// held-out pairs draw answers from the same pool.
pub fn consistency_benchmark(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    cfg.features.validate()?;
    if !(0.0..=0.95).contains(&cfg.position_bias) || !(0.0..=1.0).contains(&cfg.length_inflation) {
        return Err(Error::Usage("teacher probabilities out of range".into()));
    }
    let range = ScoreRange::default();
    let rules = TaggingRules::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = answer_pool(cfg, &mut rng);
    let nf = pool.len();
    let mut scores: Vec<i64> = (0..nf as i64).map(|i| 10 - (i % 8)).collect();
    scores.shuffle(&mut rng);

    let make = |n: usize, prefix: &str, rng: &mut ChaCha8Rng| -> Result<Vec<CrossModePair>> {
        let mut out = Vec::with_capacity(n);
        let mut i = 0;
        while out.len() < n {
            let fa = rng.random_range(0..nf);
            let fb = rng.random_range(0..nf);
            let rec = SourceRecord {
                question: question(rng),
                answer_a: pool[fa].choose(rng).expect("non-empty").clone(),
                answer_b: pool[fb].choose(rng).expect("non-empty").clone(),
                score_a: scores[fa],
                score_b: scores[fb],
            };
            if let Some(p) = make_crossmode_pair(&rec, &format!("{prefix}-{i:05}"), &rules)? {
                out.push(p);
            }
            i += 1;
        }
        Ok(out)
    };
    let train = make(cfg.train_pairs, "train", &mut rng)?;
    let heldout = make(cfg.heldout_pairs, "heldout", &mut rng)?;

    let mut data = TrainingData::from_crossmode(&train, Vec::new());
    for inst in &mut data.sft {
        relabel(inst, cfg, range, &mut rng);
    }
    for p in &train {
        data.dpo.extend(make_dpo_pairs(&p.pairwise, &Perturbation::ALL, rng.random())?.pairs);
    }
    Ok(Benchmark {
        train,
        heldout,
        data,
        feature_scores: scores,
    })
}

fn relabel(inst: &mut EvaluationInstance, cfg: &BenchmarkConfig, range: ScoreRange, rng: &mut ChaCha8Rng) {
    inst.gold = match inst.gold {
        Gold::Label(l) => Gold::Label(teacher_label(l, cfg.position_bias, rng)),
        Gold::Score(s) => {
            let long = cfg.features.length_bucket(&inst.answer_a) > 0;
            Gold::Score(teacher_score(s, long, cfg.length_inflation, range, rng))
        }
    };
}
