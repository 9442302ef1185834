//! Three-stage curriculum: supervised fine-tuning, then DPO on preference
//! pairs, then GRPO with consistency rewards. Each stage runs plain SGD with a
//! constant learning rate over a seeded shuffle of its data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_policy, EvalSnapshot};
use super::objectives::{dpo_row, grpo_row, log_softmax, sft_row};
use super::{sample_with, ToyJudgePolicy};
use crate::error::{Error, Result};
use crate::losses::CurriculumWeights;
use crate::parser::ParseOptions;
use crate::pipeline::{CrossModePair, PreferencePair};
use crate::records::EvaluationInstance;
use crate::reward::{consistency_reward, GroundTruth, RewardOptions, TaskType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefRefresh {
    /// Each stage uses the policy it starts from as the frozen reference.
    PerStage,
    /// The initial policy is the reference for every stage.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Sft,
    Dpo,
    Grpo,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sft => "sft",
            Stage::Dpo => "dpo",
            Stage::Grpo => "grpo",
        }
    }
}

/// Epochs per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageSchedule {
    pub sft: usize,
    pub dpo: usize,
    pub grpo: usize,
}

impl Default for StageSchedule {
    fn default() -> Self {
        StageSchedule { sft: 5, dpo: 5, grpo: 5 }
    }
}

impl StageSchedule {
    pub fn epochs(&self, stage: Stage) -> usize {
        match stage {
            Stage::Sft => self.sft,
            Stage::Dpo => self.dpo,
            Stage::Grpo => self.grpo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub schedule: StageSchedule,
    pub learning_rate: f64,
    pub group_size: usize,
    pub seed: u64,
    /// Scale the DPO and GRPO step sizes.
    pub weights: CurriculumWeights,
    pub beta: f64,
    pub epsilon: f64,
    pub lambda_kl: f64,
    pub ref_refresh: RefRefresh,
    /// How rendered completions are parsed when scoring GRPO samples.
    pub parse: ParseOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: StageSchedule::default(),
            learning_rate: 0.1,
            group_size: 8,
            seed: 0,
            weights: CurriculumWeights::default(),
            beta: 0.1,
            epsilon: 0.2,
            lambda_kl: 0.01,
            ref_refresh: RefRefresh::PerStage,
            parse: ParseOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.schedule.grpo > 0 && self.group_size < 2 {
            return Err(Error::Usage(format!("group_size must be at least 2, got {}", self.group_size)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Usage(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Usage(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.lambda_kl >= 0.0 && self.lambda_kl.is_finite()) {
            return Err(Error::Usage(format!("lambda_kl must be >= 0, got {}", self.lambda_kl)));
        }
        self.weights.validate()
    }
}

/// One GRPO query: the instance to sample judgments for and the ground truth
/// used to reward them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrpoQuery {
    pub instance: EvaluationInstance,
    pub task: TaskType,
    pub g1: GroundTruth,
    pub g2: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingData {
    /// Instances with the gold annotation used as the supervised target.
    pub sft: Vec<EvaluationInstance>,
    pub dpo: Vec<PreferencePair>,
    pub grpo: Vec<GrpoQuery>,
}

impl TrainingData {
    /// Gold-supervised data from linked items: every instance is an SFT
    /// target, pairwise instances are rewarded for agreeing with the gold
    /// scores and pointwise ones for matching their gold score.
    pub fn from_crossmode(pairs: &[CrossModePair], dpo: Vec<PreferencePair>) -> Self {
        let mut data = TrainingData {
            dpo,
            ..TrainingData::default()
        };
        for p in pairs {
            let (a, b) = p.gold_scores();
            data.sft.extend(p.pointwise.iter().cloned());
            data.sft.push(p.pairwise.clone());
            data.grpo.push(GrpoQuery {
                instance: p.pairwise.clone(),
                task: TaskType::Pp,
                g1: GroundTruth::Int(a),
                g2: Some(b),
            });
            for (inst, g) in p.pointwise.iter().zip([a, b]) {
                data.grpo.push(GrpoQuery {
                    instance: inst.clone(),
                    task: TaskType::SpPoint,
                    g1: GroundTruth::Int(g),
                    g2: None,
                });
            }
        }
        data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub epochs: usize,
    pub steps: usize,
    /// Mean per-step loss of each epoch (GRPO: the negated objective).
    pub loss_curve: Vec<f64>,
    /// GRPO only: mean sampled reward of each epoch.
    pub reward_curve: Vec<f64>,
    pub heldout: Option<EvalSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub baseline: Option<EvalSnapshot>,
    pub stages: Vec<StageReport>,
}

impl TrainReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

struct SftItem {
    context: usize,
    target: usize,
}

struct DpoItem {
    context: usize,
    chosen: usize,
    rejected: usize,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    rng: ChaCha8Rng,
    stage: Stage,
    step: usize,
}

impl Trainer<'_> {
    fn non_finite(&self, detail: String) -> Error {
        Error::NonFinite {
            stage: self.stage.as_str().to_string(),
            step: self.step,
            detail,
        }
    }

    /// Applies `row -= rate · grad` after checking loss and gradient.
    fn apply(&mut self, policy: &mut ToyJudgePolicy, context: usize, loss: f64, grad: &[f64], rate: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(self.non_finite(format!("loss {loss} in context {context}")));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(self.non_finite(format!("gradient {grad:?} in context {context}")));
        }
        let row = policy.row_mut(context)?;
        for (z, g) in row.iter_mut().zip(grad) {
            *z -= rate * g;
        }
        if row.iter().any(|z| !z.is_finite()) {
            return Err(self.non_finite(format!("logits diverged in context {context}")));
        }
        self.step += 1;
        Ok(())
    }

    fn order(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.rng);
        idx
    }
}

fn sft_items(policy: &ToyJudgePolicy, data: &[EvaluationInstance]) -> Result<Vec<SftItem>> {
    data.iter()
        .map(|inst| {
            inst.validate()?;
            let context = policy.context_id(inst);
            let target = policy.output_for_gold(context, inst.gold)?.ok_or_else(|| {
                Error::Validation(format!("instance {}: gold {:?} is outside the output space", inst.id, inst.gold))
            })?;
            Ok(SftItem { context, target })
        })
        .collect()
}

fn dpo_items(policy: &ToyJudgePolicy, pairs: &[PreferencePair]) -> Result<Vec<DpoItem>> {
    let opts = ParseOptions {
        strict: false,
        ..ParseOptions::default()
    };
    pairs
        .iter()
        .map(|p| {
            let context = policy.context_id(&p.input);
            let parse = |text: &str, which: &str| {
                policy.parse_output(context, text, opts)?.ok_or_else(|| {
                    Error::Validation(format!("pair {}: {which} completion has no parseable decision", p.id))
                })
            };
            let chosen = parse(&p.chosen, "chosen")?;
            let rejected = parse(&p.rejected, "rejected")?;
            if chosen == rejected {
                return Err(Error::Validation(format!("pair {}: chosen and rejected decide alike", p.id)));
            }
            Ok(DpoItem {
                context,
                chosen,
                rejected,
            })
        })
        .collect()
}

fn check_stage_data(stage: Stage, epochs: usize, len: usize) -> Result<()> {
    if epochs > 0 && len == 0 {
        return Err(Error::Usage(format!("{} stage is scheduled but has no data", stage.as_str())));
    }
    Ok(())
}

/// Runs the scheduled stages from `init`. Held-out snapshots are taken before
/// training and after every stage when `heldout` is given.
pub fn train_curriculum(
    init: &ToyJudgePolicy,
    data: &TrainingData,
    cfg: &TrainConfig,
    heldout: Option<&[CrossModePair]>,
) -> Result<(ToyJudgePolicy, TrainReport)> {
    cfg.validate()?;
    let s = cfg.schedule;
    check_stage_data(Stage::Sft, s.sft, data.sft.len())?;
    check_stage_data(Stage::Dpo, s.dpo, data.dpo.len())?;
    check_stage_data(Stage::Grpo, s.grpo, data.grpo.len())?;

    let sft = sft_items(init, &data.sft)?;
    let dpo = dpo_items(init, &data.dpo)?;
    for g in &data.grpo {
        g.instance.validate()?;
    }

    let snapshot = |p: &ToyJudgePolicy| heldout.map(|h| evaluate_policy(p, h)).transpose();
    let mut policy = init.clone();
    let mut t = Trainer {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        stage: Stage::Sft,
        step: 0,
    };
    let mut report = TrainReport {
        config: *cfg,
        baseline: snapshot(&policy)?,
        stages: Vec::new(),
    };

    for stage in [Stage::Sft, Stage::Dpo, Stage::Grpo] {
        let epochs = s.epochs(stage);
        let reference = match cfg.ref_refresh {
            RefRefresh::PerStage => policy.clone(),
            RefRefresh::Never => init.clone(),
        };
        t.stage = stage;
        t.step = 0;
        let mut loss_curve = Vec::with_capacity(epochs);
        let mut reward_curve = Vec::new();
        for _ in 0..epochs {
            let (loss, reward) = match stage {
                Stage::Sft => (sft_epoch(&mut t, &mut policy, &sft)?, None),
                Stage::Dpo => (dpo_epoch(&mut t, &mut policy, &reference, &dpo)?, None),
                Stage::Grpo => {
                    let (l, r) = grpo_epoch(&mut t, &mut policy, &reference, &data.grpo)?;
                    (l, Some(r))
                }
            };
            loss_curve.push(loss);
            reward_curve.extend(reward);
            log::debug!("{} epoch {}: loss {loss:.6}", stage.as_str(), loss_curve.len());
        }
        report.stages.push(StageReport {
            stage,
            epochs,
            steps: t.step,
            loss_curve,
            reward_curve,
            heldout: snapshot(&policy)?,
        });
    }
    Ok((policy, report))
}

fn sft_epoch(t: &mut Trainer<'_>, policy: &mut ToyJudgePolicy, items: &[SftItem]) -> Result<f64> {
    let rate = t.cfg.learning_rate;
    let mut total = 0.0;
    for i in t.order(items.len()) {
        let it = &items[i];
        let (loss, grad) = sft_row(policy.row(it.context)?, it.target)?;
        t.apply(policy, it.context, loss, &grad, rate)?;
        total += loss;
    }
    Ok(total / items.len() as f64)
}

fn dpo_epoch(t: &mut Trainer<'_>, policy: &mut ToyJudgePolicy, reference: &ToyJudgePolicy, items: &[DpoItem]) -> Result<f64> {
    let rate = t.cfg.learning_rate * t.cfg.weights.lambda_dpo;
    let mut total = 0.0;
    for i in t.order(items.len()) {
        let it = &items[i];
        let ref_lp = log_softmax(reference.row(it.context)?);
        let (loss, grad) = dpo_row(policy.row(it.context)?, &ref_lp, it.chosen, it.rejected, t.cfg.beta)?;
        t.apply(policy, it.context, loss, &grad, rate)?;
        total += loss;
    }
    Ok(total / items.len() as f64)
}

fn grpo_epoch(
    t: &mut Trainer<'_>,
    policy: &mut ToyJudgePolicy,
    reference: &ToyJudgePolicy,
    queries: &[GrpoQuery],
) -> Result<(f64, f64)> {
    let rate = t.cfg.learning_rate * t.cfg.weights.lambda_grpo;
    let opts = RewardOptions { parse: t.cfg.parse };
    let mut total = 0.0;
    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;
    for i in t.order(queries.len()) {
        let query = &queries[i];
        let context = policy.context_id(&query.instance);
        let outputs = sample_with(reference, context, t.cfg.group_size, &mut t.rng)?;
        let mut rewards = Vec::with_capacity(outputs.len());
        for &o in &outputs {
            let completion = reference.render(context, o, t.cfg.parse.mode)?;
            let r = consistency_reward(&completion, query.task, &query.g1, query.g2, opts)?;
            rewards.push(r.value);
        }
        reward_sum += rewards.iter().sum::<f64>();
        reward_count += rewards.len();
        let ref_lp = log_softmax(reference.row(context)?);
        let (loss, grad) = grpo_row(
            policy.row(context)?,
            &ref_lp,
            &outputs,
            &rewards,
            t.cfg.epsilon,
            t.cfg.lambda_kl,
        )
        .map_err(|e| match e {
            Error::Numeric(detail) => t.non_finite(detail),
            other => other,
        })?;
        t.apply(policy, context, loss, &grad, rate)?;
        total += loss;
    }
    Ok((total / queries.len() as f64, reward_sum / reward_count as f64))
}
