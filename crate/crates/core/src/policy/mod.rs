//! A tabular judge policy: one softmax row of logits per discretized judging
//! context, with a pairwise head over {A_win, B_win, tie} and a pointwise head
//! over the integer score range.

mod eval;
mod gradcheck;
mod objectives;
mod train;

pub use eval::{evaluate_policy, predict_pairs, EvalSnapshot, PairPrediction};
pub use gradcheck::{compare_gradient, finite_diff_grad_check, random_case, GradCheckReport, GradDatum, LossKind, CLIP_MARGIN, REL_FLOOR};
pub use objectives::{dpo_row, grpo_row, log_softmax, sft_row, softmax};
pub use train::{
    train_curriculum, GrpoQuery, RefRefresh, Stage, StageReport, StageSchedule, TrainConfig, TrainReport,
    TrainingData,
};

use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use fnv::FnvHasher;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::{extract_judgment, extract_point_score, render_full, ExtractMode, ParseOptions};
use crate::records::{EvalMode, EvaluationInstance, Gold, JudgmentLabel, ScoreRange};

/// How answers are bucketed into context features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Number of hash buckets for the answer fingerprint.
    pub fingerprint_buckets: usize,
    /// Character-count boundaries between length buckets, ascending.
    pub length_edges: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            fingerprint_buckets: 16,
            length_edges: vec![200, 800],
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fingerprint_buckets == 0 {
            return Err(Error::Usage("fingerprint_buckets must be at least 1".into()));
        }
        if self.length_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Usage("length_edges must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn length_buckets(&self) -> usize {
        self.length_edges.len() + 1
    }

    /// Number of distinct per-answer features.
    pub fn answer_features(&self) -> usize {
        self.length_buckets() * self.fingerprint_buckets
    }

    pub fn length_bucket(&self, text: &str) -> usize {
        let n = text.chars().count();
        self.length_edges.iter().filter(|&&e| n >= e).count()
    }

    pub fn fingerprint(&self, text: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write(text.trim().as_bytes());
        (h.finish() % self.fingerprint_buckets as u64) as usize
    }

    pub fn answer_feature(&self, text: &str) -> usize {
        self.length_bucket(text) * self.fingerprint_buckets + self.fingerprint(text)
    }

    pub fn num_contexts(&self) -> usize {
        let nf = self.answer_features();
        2 * nf + 2 * nf * nf
    }
}

/// Decoded form of a context id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    pub mode: EvalMode,
    pub rubric: bool,
    pub answer_a: usize,
    /// Absent for pointwise contexts.
    pub answer_b: Option<usize>,
}

impl ContextKey {
    pub fn of(instance: &EvaluationInstance, cfg: &FeatureConfig) -> Self {
        let answer_a = cfg.answer_feature(&instance.answer_a);
        let answer_b = match instance.mode {
            EvalMode::Pointwise => None,
            EvalMode::Pairwise => Some(cfg.answer_feature(&instance.answer_b)),
        };
        ContextKey {
            mode: instance.mode,
            rubric: instance.has_rubric(),
            answer_a,
            answer_b,
        }
    }

    /// Pointwise ids come first, then pairwise ids laid out as
    /// `(rubric·F + a)·F + b`.
    pub fn id(&self, cfg: &FeatureConfig) -> usize {
        let nf = cfg.answer_features();
        let r = self.rubric as usize;
        match self.answer_b {
            None => r * nf + self.answer_a,
            Some(b) => 2 * nf + (r * nf + self.answer_a) * nf + b,
        }
    }

    pub fn from_id(id: usize, cfg: &FeatureConfig) -> Result<Self> {
        let nf = cfg.answer_features();
        if id < 2 * nf {
            return Ok(ContextKey {
                mode: EvalMode::Pointwise,
                rubric: id >= nf,
                answer_a: id % nf,
                answer_b: None,
            });
        }
        let rest = id - 2 * nf;
        if rest >= 2 * nf * nf {
            return Err(Error::Usage(format!("unknown context id {id}")));
        }
        let b = rest % nf;
        let ra = rest / nf;
        Ok(ContextKey {
            mode: EvalMode::Pairwise,
            rubric: ra >= nf,
            answer_a: ra % nf,
            answer_b: Some(b),
        })
    }

    /// The context of the answer-swapped instance.
    pub fn swapped(&self) -> Self {
        match self.answer_b {
            None => *self,
            Some(b) => ContextKey {
                answer_a: b,
                answer_b: Some(self.answer_a),
                ..*self
            },
        }
    }
}

pub fn featurize(instance: &EvaluationInstance, cfg: &FeatureConfig) -> usize {
    ContextKey::of(instance, cfg).id(cfg)
}

/// A decoded policy output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Output {
    Score(i64),
    Label(JudgmentLabel),
}

pub const CHECKPOINT_FORMAT: &str = "judgekit-toy-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyJudgePolicy {
    features: FeatureConfig,
    score_range: ScoreRange,
    logits: Vec<Vec<f64>>,
}

impl ToyJudgePolicy {
    /// All-zero logits, i.e. a uniform distribution in every context.
    pub fn new(features: FeatureConfig, score_range: ScoreRange) -> Result<Self> {
        features.validate()?;
        let nf = features.answer_features();
        let mut logits = vec![vec![0.0; score_range.len()]; 2 * nf];
        logits.extend(std::iter::repeat_n(vec![0.0; 3], 2 * nf * nf));
        Ok(ToyJudgePolicy {
            features,
            score_range,
            logits,
        })
    }

    pub fn features(&self) -> &FeatureConfig {
        &self.features
    }

    pub fn score_range(&self) -> ScoreRange {
        self.score_range
    }

    pub fn num_contexts(&self) -> usize {
        self.logits.len()
    }

    pub fn context_id(&self, instance: &EvaluationInstance) -> usize {
        featurize(instance, &self.features)
    }

    pub fn context_key(&self, context: usize) -> Result<ContextKey> {
        ContextKey::from_id(context, &self.features)
    }

    pub fn mode_of(&self, context: usize) -> Result<EvalMode> {
        Ok(self.context_key(context)?.mode)
    }

    pub fn row(&self, context: usize) -> Result<&[f64]> {
        self.logits
            .get(context)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Usage(format!("unknown context id {context}")))
    }

    pub fn row_mut(&mut self, context: usize) -> Result<&mut [f64]> {
        self.logits
            .get_mut(context)
            .map(Vec::as_mut_slice)
            .ok_or_else(|| Error::Usage(format!("unknown context id {context}")))
    }

    pub fn num_outputs(&self, context: usize) -> Result<usize> {
        Ok(self.row(context)?.len())
    }

    pub fn probs(&self, context: usize) -> Result<Vec<f64>> {
        Ok(softmax(self.row(context)?))
    }

    pub fn logprobs(&self, context: usize) -> Result<Vec<f64>> {
        Ok(log_softmax(self.row(context)?))
    }

    /// Most likely output; the lowest index wins ties.
    pub fn greedy(&self, context: usize) -> Result<usize> {
        let row = self.row(context)?;
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn output(&self, context: usize, output: usize) -> Result<Output> {
        let n = self.num_outputs(context)?;
        if output >= n {
            return Err(Error::Usage(format!("output {output} out of range for context {context}")));
        }
        Ok(match self.mode_of(context)? {
            EvalMode::Pairwise => Output::Label(JudgmentLabel::from_index(output).expect("three pairwise outputs")),
            EvalMode::Pointwise => Output::Score(self.score_range.min + output as i64),
        })
    }

    /// Output index of a gold annotation in this context, if representable.
    pub fn output_for_gold(&self, context: usize, gold: Gold) -> Result<Option<usize>> {
        Ok(match (self.mode_of(context)?, gold) {
            (EvalMode::Pairwise, Gold::Label(l)) => Some(l.index()),
            (EvalMode::Pointwise, Gold::Score(s)) if self.score_range.contains(s) => {
                Some((s - self.score_range.min) as usize)
            }
            _ => None,
        })
    }

    /// Completion text for an output, in the format the parser expects for `mode`.
    pub fn render(&self, context: usize, output: usize, mode: ExtractMode) -> Result<String> {
        Ok(match (self.output(context, output)?, mode) {
            (Output::Label(l), ExtractMode::Full) => render_full(l),
            (Output::Label(l), ExtractMode::Fast) => l.as_str().to_string(),
            (Output::Score(s), ExtractMode::Full) => format!("### Judgement\n{s}"),
            (Output::Score(s), ExtractMode::Fast) => s.to_string(),
        })
    }

    /// Maps a completion back to an output index through the parser.
    pub fn parse_output(&self, context: usize, completion: &str, opts: ParseOptions) -> Result<Option<usize>> {
        Ok(match self.mode_of(context)? {
            EvalMode::Pairwise => extract_judgment(completion, opts).ok().map(JudgmentLabel::index),
            EvalMode::Pointwise => extract_point_score(completion, opts.mode)
                .ok()
                .filter(|s| self.score_range.contains(*s))
                .map(|s| (s - self.score_range.min) as usize),
        })
    }

    /// Overwrites a row, e.g. to build fixtures.
    pub fn set_row(&mut self, context: usize, logits: &[f64]) -> Result<()> {
        let row = self.row_mut(context)?;
        if row.len() != logits.len() {
            return Err(Error::Usage(format!(
                "row for context {context} has {} outputs, got {}",
                row.len(),
                logits.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit for context {context}")));
        }
        row.copy_from_slice(logits);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.logits.iter().flatten().all(|v| v.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.to_checkpoint())?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        Self::from_checkpoint(ck)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            features: self.features.clone(),
            score_range: self.score_range,
            pairwise_outputs: JudgmentLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
            pointwise_outputs: (self.score_range.min..=self.score_range.max).collect(),
            rows: self
                .logits
                .iter()
                .enumerate()
                .filter(|(_, r)| r.iter().any(|v| *v != 0.0))
                .map(|(context, r)| CheckpointRow {
                    context,
                    logits: r.clone(),
                })
                .collect(),
        }
    }

    fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                ck.format, ck.version
            )));
        }
        let expected: Vec<i64> = (ck.score_range.min..=ck.score_range.max).collect();
        if ck.pointwise_outputs != expected {
            return Err(Error::Validation("checkpoint pointwise vocabulary does not match its score range".into()));
        }
        let labels: Vec<String> = JudgmentLabel::ALL.iter().map(|l| l.as_str().to_string()).collect();
        if ck.pairwise_outputs != labels {
            return Err(Error::Validation("checkpoint pairwise vocabulary is not A_win/B_win/tie".into()));
        }
        let mut policy = ToyJudgePolicy::new(ck.features, ck.score_range)?;
        for row in ck.rows {
            policy.set_row(row.context, &row.logits)?;
        }
        Ok(policy)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointRow {
    context: usize,
    logits: Vec<f64>,
}

/// On-disk policy: only rows that differ from zero are stored.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    features: FeatureConfig,
    score_range: ScoreRange,
    pairwise_outputs: Vec<String>,
    pointwise_outputs: Vec<i64>,
    rows: Vec<CheckpointRow>,
}

/// `log π(output | context)`.
pub fn policy_logprob(policy: &ToyJudgePolicy, context: usize, output: usize) -> Result<f64> {
    let lp = policy.logprobs(context)?;
    lp.get(output)
        .copied()
        .ok_or_else(|| Error::Usage(format!("output {output} out of range for context {context}")))
}

/// `m` independent draws from the context's distribution.
pub fn sample_group(policy: &ToyJudgePolicy, context: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(policy, context, m, &mut rng)
}

pub(crate) fn sample_with<R: Rng>(policy: &ToyJudgePolicy, context: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Usage("group size must be at least 1".into()));
    }
    let probs = policy.probs(context)?;
    let dist = WeightedIndex::new(&probs)
        .map_err(|e| Error::Numeric(format!("cannot sample context {context}: {e}")))?;
    Ok((0..m).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> ToyJudgePolicy {
        ToyJudgePolicy::new(FeatureConfig::default(), ScoreRange::default()).unwrap()
    }

    fn pair() -> EvaluationInstance {
        EvaluationInstance::pairwise("i", "task", "short answer", "long answer ".repeat(30), JudgmentLabel::AWin)
    }

    #[test]
    fn featurize_is_deterministic_and_order_sensitive() {
        let cfg = FeatureConfig::default();
        let i = pair();
        assert_eq!(featurize(&i, &cfg), featurize(&i.clone(), &cfg));
        let k = ContextKey::of(&i, &cfg);
        let s = ContextKey::of(&i.swapped(), &cfg);
        assert_eq!(s, k.swapped());
        assert_eq!((s.mode, s.rubric), (k.mode, k.rubric));
        assert_ne!(featurize(&i, &cfg), featurize(&i.swapped(), &cfg));
        let r = i.clone().with_rubric(Some("Be accurate.".into()));
        assert_ne!(featurize(&i, &cfg), featurize(&r, &cfg));
        let blank = i.clone().with_rubric(Some("  ".into()));
        assert_eq!(featurize(&i, &cfg), featurize(&blank, &cfg));
    }

    #[test]
    fn context_ids_round_trip() {
        let cfg = FeatureConfig {
            fingerprint_buckets: 3,
            length_edges: vec![10],
        };
        for id in 0..cfg.num_contexts() {
            let k = ContextKey::from_id(id, &cfg).unwrap();
            assert_eq!(k.id(&cfg), id);
        }
        assert!(ContextKey::from_id(cfg.num_contexts(), &cfg).is_err());
    }

    #[test]
    fn logprob_examples() {
        let mut p = policy();
        let c = p.context_id(&pair());
        assert!((policy_logprob(&p, c, 0).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        p.set_row(c, &[1.0, 0.0, 0.0]).unwrap();
        let lp: Vec<f64> = (0..3).map(|o| policy_logprob(&p, c, o).unwrap()).collect();
        assert!(lp[0] > lp[1] && lp[0] > lp[2]);
        assert!((lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(policy_logprob(&p, p.num_contexts(), 0).is_err());
        assert!(policy_logprob(&p, c, 3).is_err());
    }

    #[test]
    fn sampling() {
        let mut p = policy();
        let c = p.context_id(&pair());
        p.set_row(c, &[-800.0, 0.0, -800.0]).unwrap();
        assert_eq!(sample_group(&p, c, 20, 1).unwrap(), vec![1; 20]);
        p.set_row(c, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(sample_group(&p, c, 50, 9).unwrap(), sample_group(&p, c, 50, 9).unwrap());
        let draws = sample_group(&p, c, 30_000, 4).unwrap();
        for o in 0..3 {
            let f = draws.iter().filter(|&&d| d == o).count() as f64 / 30_000.0;
            assert!((f - 1.0 / 3.0).abs() < 0.02, "{f}");
        }
        assert!(sample_group(&p, c, 0, 0).is_err());
    }

    #[test]
    fn render_and_parse_round_trip() {
        let p = policy();
        let pw = EvaluationInstance::pointwise("p", "t", "answer", 7);
        for inst in [pair(), pw] {
            let c = p.context_id(&inst);
            for o in 0..p.num_outputs(c).unwrap() {
                for opts in [ParseOptions::default(), ParseOptions::fast()] {
                    let text = p.render(c, o, opts.mode).unwrap();
                    assert_eq!(p.parse_output(c, &text, opts).unwrap(), Some(o), "{text}");
                }
            }
        }
    }

    #[test]
    fn gold_mapping() {
        let p = policy();
        let pw = EvaluationInstance::pointwise("p", "t", "answer", 7);
        let c = p.context_id(&pw);
        assert_eq!(p.output_for_gold(c, Gold::Score(7)).unwrap(), Some(6));
        assert_eq!(p.output_for_gold(c, Gold::Score(11)).unwrap(), None);
        assert_eq!(p.output_for_gold(c, Gold::Label(JudgmentLabel::Tie)).unwrap(), None);
        assert_eq!(p.output(c, 9).unwrap(), Output::Score(10));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = policy();
        let c = p.context_id(&pair());
        p.set_row(c, &[0.1, -2.5, 1.0 / 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        p.save(&path).unwrap();
        assert_eq!(ToyJudgePolicy::load(&path).unwrap(), p);
        std::fs::write(&path, r#"{"format":"other","version":1}"#).unwrap();
        assert!(ToyJudgePolicy::load(&path).is_err());
    }
}
