use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use judgekit_core::metrics::{
    agreement, consistency_score, length_preference_rate, macro_f1, position_flip_rate, BiasReport, ConfusionTable,
    CrossModeItem, MacroScores,
};
use judgekit_core::parser::extract_judgment;
use judgekit_core::pipeline::{
    make_crossmode_pair, make_dpo_pairs, record_id, stratified_sample, tag_records, CrossModePair, PairBatch,
    Perturbation, PreferencePair, Sidecar, TagOptions,
};
use judgekit_core::policy::{
    finite_diff_grad_check, predict_pairs, random_case, train_curriculum, LossKind, ToyJudgePolicy, TrainingData,
};
use judgekit_core::records::{load_records, read_jsonl, read_jsonl_strict, write_jsonl, Loaded};
use judgekit_core::reward::{score_batch, RewardOptions, RewardRequest};
use judgekit_core::{EvaluationInstance, JudgmentLabel, ParseOptions, SourceRecord, TaggedRecord, TaggingRules, Winner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{Command, EvalArgs, GlobalArgs, LosscheckArgs, MakeDpoArgs, TagArgs, TrainArgs};
use crate::config::RunConfig;
use crate::manifest::{sidecar_path, write_json, Manifest};
use crate::usage;

pub fn run(command: Command, global: &GlobalArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(global)?;
    let output = global.output.as_deref().ok_or_else(|| usage("--output is required"))?;
    let input = match (&command, global.input.as_deref()) {
        (_, Some(p)) => Some(p),
        (Command::Losscheck(_), None) => None,
        _ => return Err(usage("--input is required")),
    };
    let mut ctx = Ctx { cfg, input, output };
    let manifest = match command {
        Command::Tag(a) => ctx.tag(&a)?,
        Command::Sample => ctx.sample()?,
        Command::MakeDpo(a) => ctx.make_dpo(&a)?,
        Command::MakeCrossmode => ctx.make_crossmode()?,
        Command::ScoreRewards => ctx.score_rewards()?,
        Command::Train(a) => ctx.train(&a)?,
        Command::Eval(a) => ctx.eval(&a)?,
        Command::Consistency => ctx.consistency()?,
        Command::Bias => ctx.bias()?,
        Command::Losscheck(a) => ctx.losscheck(&a)?,
    };
    let path = manifest.write_beside(output)?;
    log::info!("wrote {}", path.display());
    if let Some(false) = manifest.summary.get("passed").and_then(|v| v.as_bool()) {
        anyhow::bail!("gradient check failed; see {}", output.display());
    }
    Ok(())
}

struct Ctx<'a> {
    cfg: RunConfig,
    input: Option<&'a Path>,
    output: &'a Path,
}

/// A source record that may carry an id (tagged records do).
#[derive(Debug, Deserialize)]
struct KeyedLine {
    #[serde(default)]
    id: Option<String>,
    #[serde(flatten)]
    record: SourceRecord,
}

fn load_keyed(path: &Path, rules: &TaggingRules) -> anyhow::Result<Vec<(String, SourceRecord)>> {
    let Loaded { items, skipped } = read_jsonl::<KeyedLine>(path)?;
    let mut out = Vec::with_capacity(items.len());
    for (i, line) in items.into_iter().enumerate() {
        if let Err(e) = line.record.validate(&rules.score_range) {
            log::warn!("{}: skipping record {}: {e}", path.display(), i + 1);
            continue;
        }
        out.push((line.id.unwrap_or_else(|| record_id(i)), line.record));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed line(s)", path.display());
    }
    Ok(out)
}

fn crossmode_pairs(records: &[(String, SourceRecord)], rules: &TaggingRules) -> anyhow::Result<Vec<CrossModePair>> {
    let mut out = Vec::with_capacity(records.len());
    for (id, rec) in records {
        if let Some(p) = make_crossmode_pair(rec, id, rules)? {
            out.push(p);
        }
    }
    Ok(out)
}

fn count_by<T, K: Ord + ToString>(items: &[T], key: impl Fn(&T) -> K) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for it in items {
        *m.entry(key(it).to_string()).or_insert(0) += 1;
    }
    m
}

impl Ctx<'_> {
    fn input(&self) -> &Path {
        self.input.expect("input checked in run")
    }

    fn manifest(&self, command: &'static str) -> anyhow::Result<Manifest> {
        let mut m = Manifest::new(command, self.cfg.clone());
        if let Some(p) = self.input {
            m.input("input", p)?;
        }
        m.output(self.output);
        Ok(m)
    }

    fn tag(&mut self, a: &TagArgs) -> anyhow::Result<Manifest> {
        let seed = self.cfg.ensure_seed();
        let rules = self.cfg.rules();
        let records = load_records(self.input(), &rules.score_range)?;
        let sidecar = match &a.embeddings {
            Some(p) => Some(Sidecar::load(p, self.cfg.embedding_dim)?),
            None => None,
        };
        let opts = TagOptions {
            rules,
            k: self.cfg.k,
            dim: self.cfg.embedding_dim,
            seed,
        };
        let tagged = tag_records(&records.items, &opts, sidecar.as_ref())?;
        write_jsonl(self.output, &tagged)?;
        let mut m = self.manifest("tag")?;
        if let Some(p) = &a.embeddings {
            m.input("embeddings", p)?;
        }
        m.summary = json!({
            "records": tagged.len(),
            "skipped": records.skipped,
            "winner": count_by(&tagged, |t| t.tags.winner.as_str()),
            "difficulty": count_by(&tagged, |t| t.tags.difficulty.as_str()),
            "clusters": count_by(&tagged, |t| format!("{:03}", t.tags.cluster_id)),
        });
        Ok(m)
    }

    fn sample(&mut self) -> anyhow::Result<Manifest> {
        let n = self.cfg.n.ok_or_else(|| usage("sample requires --n"))?;
        let seed = self.cfg.ensure_seed();
        let tagged: Vec<TaggedRecord> = read_jsonl_strict(self.input())?;
        let outcome = stratified_sample(&tagged, n, seed)?;
        write_jsonl(self.output, &outcome.records)?;
        let report = sidecar_path(self.output, "report.json");
        write_json(&report, &outcome.report)?;
        let mut m = self.manifest("sample")?;
        m.output(&report);
        m.summary = json!({
            "selected": outcome.report.selected,
            "excluded_both_bad": outcome.report.excluded_both_bad,
        });
        Ok(m)
    }

    fn make_dpo(&mut self, a: &MakeDpoArgs) -> anyhow::Result<Manifest> {
        let seed = self.cfg.ensure_seed();
        if let Some(names) = &a.perturbations {
            self.cfg.perturbations = names
                .iter()
                .map(|s| s.parse::<Perturbation>())
                .collect::<Result<_, _>>()?;
        }
        let rules = self.cfg.rules();
        let records = load_keyed(self.input(), &rules)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch = PairBatch::default();
        let mut both_bad = 0;
        for (id, rec) in &records {
            let label = match rules.derive_winner(rec.score_a, rec.score_b)? {
                Winner::BothBad => {
                    both_bad += 1;
                    continue;
                }
                w => w.label().expect("labelled winner"),
            };
            let inst = EvaluationInstance::pairwise(id.as_str(), &rec.question, &rec.answer_a, &rec.answer_b, label);
            batch.extend(make_dpo_pairs(&inst, &self.cfg.perturbations, rng.random())?);
        }
        write_jsonl(self.output, &batch.pairs)?;
        let mut m = self.manifest("make-dpo")?;
        m.summary = json!({
            "pairs": batch.pairs.len(),
            "by_perturbation": count_by(&batch.pairs, |p| p.perturbation.as_str()),
            "excluded_both_bad": both_bad,
            "skipped": batch.skipped,
        });
        Ok(m)
    }

    fn make_crossmode(&mut self) -> anyhow::Result<Manifest> {
        let rules = self.cfg.rules();
        let records = load_keyed(self.input(), &rules)?;
        let pairs = crossmode_pairs(&records, &rules)?;
        write_jsonl(self.output, &pairs)?;
        let mut m = self.manifest("make-crossmode")?;
        m.summary = json!({
            "pairs": pairs.len(),
            "excluded_both_bad": records.len() - pairs.len(),
        });
        Ok(m)
    }

    fn score_rewards(&mut self) -> anyhow::Result<Manifest> {
        let requests: Vec<RewardRequest> = read_jsonl_strict(self.input())?;
        let scored = score_batch(
            requests,
            RewardOptions {
                parse: self.cfg.parse_options(),
            },
        )?;
        write_jsonl(self.output, &scored)?;
        let total: f64 = scored.iter().map(|s| s.reward).sum();
        let mut m = self.manifest("score-rewards")?;
        m.summary = json!({
            "items": scored.len(),
            "parse_failures": scored.iter().filter(|s| !s.parse_ok).count(),
            "mean_reward": if scored.is_empty() { 0.0 } else { total / scored.len() as f64 },
        });
        Ok(m)
    }

    fn train(&mut self, a: &TrainArgs) -> anyhow::Result<Manifest> {
        let seed = self.cfg.ensure_seed();
        if let Some(e) = &a.epochs {
            let parts: Vec<usize> = e
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| usage(format!("--epochs {e:?} is not SFT,DPO,GRPO")))?;
            let [sft, dpo, grpo] = parts[..] else {
                return Err(usage(format!("--epochs {e:?} is not SFT,DPO,GRPO")));
            };
            self.cfg.train.schedule.sft = sft;
            self.cfg.train.schedule.dpo = dpo;
            self.cfg.train.schedule.grpo = grpo;
        }
        self.cfg.train.seed = seed;
        let rules = self.cfg.rules();
        let pairs = crossmode_pairs(&load_keyed(self.input(), &rules)?, &rules)?;
        let dpo: Vec<PreferencePair> = match &a.dpo {
            Some(p) => read_jsonl_strict(p)?,
            None => Vec::new(),
        };
        let heldout = match &a.heldout {
            Some(p) => Some(crossmode_pairs(&load_keyed(p, &rules)?, &rules)?),
            None => None,
        };
        let data = TrainingData::from_crossmode(&pairs, dpo);
        let init = ToyJudgePolicy::new(self.cfg.features.clone(), self.cfg.score_range)?;
        let (policy, report) = train_curriculum(&init, &data, &self.cfg.train, heldout.as_deref())?;
        policy.save(self.output)?;
        let report_path = sidecar_path(self.output, "report.json");
        write_json(&report_path, &report)?;
        let mut m = self.manifest("train")?;
        if let Some(p) = &a.dpo {
            m.input("dpo", p)?;
        }
        if let Some(p) = &a.heldout {
            m.input("heldout", p)?;
        }
        m.output(&report_path);
        m.summary = json!({
            "sft_instances": data.sft.len(),
            "dpo_pairs": data.dpo.len(),
            "grpo_queries": data.grpo.len(),
        });
        Ok(m)
    }

    fn eval(&mut self, a: &EvalArgs) -> anyhow::Result<Manifest> {
        let opts = self.cfg.parse_options();
        let lines = match &a.checkpoint {
            Some(ckpt) => {
                let policy = ToyJudgePolicy::load(ckpt)?;
                let rules = self.cfg.rules();
                let pairs = crossmode_pairs(&load_keyed(self.input(), &rules)?, &rules)?;
                predict_pairs(&policy, &pairs)?
                    .into_iter()
                    .map(|p| EvalLine {
                        id: Some(p.id),
                        pred: Some(p.pred.to_string()),
                        gold: Some(p.gold.to_string()),
                        pred_swapped: Some(p.pred_swapped.to_string()),
                        length_a: Some(p.length_a),
                        length_b: Some(p.length_b),
                        score_a: Some(p.score_a),
                        score_b: Some(p.score_b),
                        label: None,
                    })
                    .collect()
            }
            None => read_jsonl_strict::<EvalLine>(self.input())?,
        };
        let lines = match &a.gold {
            Some(p) => with_gold(lines, read_jsonl_strict(p)?)?,
            None => lines,
        };
        let report = eval_report(&lines, opts)?;
        write_json(self.output, &report)?;
        let mut m = self.manifest("eval")?;
        if let Some(p) = &a.checkpoint {
            m.input("checkpoint", p)?;
        }
        if let Some(p) = &a.gold {
            m.input("gold", p)?;
        }
        if let Some(csv_path) = &a.csv {
            write_csv(csv_path, &lines, opts)?;
            m.output(csv_path);
        }
        m.summary = json!({ "items": report.items, "agreement": report.agreement });
        Ok(m)
    }

    fn consistency(&mut self) -> anyhow::Result<Manifest> {
        let opts = self.cfg.parse_options();
        let lines: Vec<EvalLine> = read_jsonl_strict(self.input())?;
        let items: Vec<CrossModeItem> = lines.iter().map(|l| l.crossmode(opts)).collect();
        let report = json!({
            "items": items.len(),
            "consistent": items.iter().filter(|i| i.is_consistent()).count(),
            "consistency": consistency_score(&items)?,
        });
        write_json(self.output, &report)?;
        let mut m = self.manifest("consistency")?;
        m.summary = report;
        Ok(m)
    }

    fn bias(&mut self) -> anyhow::Result<Manifest> {
        let opts = self.cfg.parse_options();
        let lines: Vec<EvalLine> = read_jsonl_strict(self.input())?;
        let report = bias_report(&lines, opts)?;
        write_json(self.output, &report)?;
        self.manifest("bias")
    }

    fn losscheck(&mut self, a: &LosscheckArgs) -> anyhow::Result<Manifest> {
        let seed = self.cfg.ensure_seed();
        let n = self.cfg.n.unwrap_or(100);
        let kinds = a.kinds.clone().unwrap_or_else(|| vec![LossKind::Sft, LossKind::Dpo, LossKind::Grpo]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = ToyJudgePolicy::new(self.cfg.features.clone(), self.cfg.score_range)?;
        let mut results = Vec::new();
        for kind in kinds {
            let mut worst = LossSummary {
                kind,
                checked: 0,
                failed: 0,
                max_rel_error: 0.0,
                max_abs_error: 0.0,
            };
            for _ in 0..n {
                let datum = random_case(kind, &mut policy, &mut rng)?;
                let r = finite_diff_grad_check(kind, &policy, &datum, a.step, a.tol)?;
                worst.checked += 1;
                worst.failed += (!r.passed) as usize;
                worst.max_rel_error = worst.max_rel_error.max(r.max_rel_error);
                worst.max_abs_error = worst.max_abs_error.max(r.max_abs_error);
            }
            results.push(worst);
        }
        let passed = results.iter().all(|r| r.failed == 0);
        let report = json!({ "step": a.step, "tol": a.tol, "passed": passed, "objectives": results });
        write_json(self.output, &report)?;
        let mut m = self.manifest("losscheck")?;
        m.summary = json!({ "passed": passed });
        Ok(m)
    }

}

#[derive(Debug, Serialize)]
struct LossSummary {
    kind: LossKind,
    checked: usize,
    failed: usize,
    max_rel_error: f64,
    max_abs_error: f64,
}

/// One judged item. `pred` may be a bare label or a full completion;
/// `label` is accepted as an alias for the pairwise prediction.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalLine {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub pred: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub gold: Option<String>,
    #[serde(default)]
    pub pred_swapped: Option<String>,
    #[serde(default)]
    pub length_a: Option<usize>,
    #[serde(default)]
    pub length_b: Option<usize>,
    #[serde(default)]
    pub score_a: Option<i64>,
    #[serde(default)]
    pub score_b: Option<i64>,
}

pub fn parse_label(text: &str, opts: ParseOptions) -> Option<JudgmentLabel> {
    text.parse().ok().or_else(|| extract_judgment(text, opts).ok())
}

impl EvalLine {
    fn prediction(&self, opts: ParseOptions) -> Option<JudgmentLabel> {
        self.pred.as_deref().or(self.label.as_deref()).and_then(|t| parse_label(t, opts))
    }

    fn crossmode(&self, opts: ParseOptions) -> CrossModeItem {
        CrossModeItem {
            score_a: self.score_a,
            score_b: self.score_b,
            label: self.prediction(opts),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub items: usize,
    pub unparseable: u64,
    pub agreement: f64,
    #[serde(flatten)]
    pub scores: MacroScores,
    pub confusion: ConfusionTable,
    pub consistency: Option<f64>,
    pub bias: BiasReport,
}

fn with_gold(mut lines: Vec<EvalLine>, gold: Vec<EvalLine>) -> anyhow::Result<Vec<EvalLine>> {
    if lines.len() != gold.len() {
        return Err(usage(format!("{} predictions but {} gold lines", lines.len(), gold.len())));
    }
    for (l, g) in lines.iter_mut().zip(gold) {
        l.gold = g.gold.or(g.pred).or(g.label);
    }
    Ok(lines)
}

fn golds(lines: &[EvalLine]) -> anyhow::Result<Vec<JudgmentLabel>> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let g = l.gold.as_deref().ok_or_else(|| usage(format!("item {} has no gold label", i + 1)))?;
            g.parse::<JudgmentLabel>().map_err(|e| usage(format!("item {}: {e}", i + 1)))
        })
        .collect()
}

pub fn eval_report(lines: &[EvalLine], opts: ParseOptions) -> anyhow::Result<EvalReport> {
    if lines.is_empty() {
        return Err(usage("no items to evaluate"));
    }
    let golds = golds(lines)?;
    let preds: Vec<Option<JudgmentLabel>> = lines.iter().map(|l| l.prediction(opts)).collect();
    let table = ConfusionTable::from_predictions(&preds, &golds)?;
    let has_scores = lines.iter().any(|l| l.score_a.is_some() || l.score_b.is_some());
    let consistency = if has_scores {
        let items: Vec<CrossModeItem> = lines.iter().map(|l| l.crossmode(opts)).collect();
        Some(consistency_score(&items)?)
    } else {
        None
    };
    Ok(EvalReport {
        items: lines.len(),
        unparseable: table.unparseable_total(),
        agreement: agreement(&preds, &golds)?,
        scores: macro_f1(&table),
        confusion: table,
        consistency,
        bias: bias_report(lines, opts)?,
    })
}

pub fn bias_report(lines: &[EvalLine], opts: ParseOptions) -> anyhow::Result<BiasReport> {
    let swapped: Vec<&EvalLine> = lines.iter().filter(|l| l.pred_swapped.is_some()).collect();
    let position_flip_rate = if swapped.is_empty() {
        None
    } else {
        let orig: Vec<_> = swapped.iter().map(|l| l.prediction(opts)).collect();
        let swp: Vec<_> = swapped
            .iter()
            .map(|l| l.pred_swapped.as_deref().and_then(|t| parse_label(t, opts)))
            .collect();
        Some(position_flip_rate(&orig, &swp)?)
    };
    let sized: Vec<&EvalLine> = lines.iter().filter(|l| l.length_a.is_some() && l.length_b.is_some()).collect();
    let length = if sized.is_empty() {
        None
    } else {
        let preds: Vec<_> = sized.iter().map(|l| l.prediction(opts)).collect();
        let golds: Option<Vec<JudgmentLabel>> =
            sized.iter().map(|l| l.gold.as_deref().and_then(|g| g.parse().ok())).collect();
        let la: Vec<usize> = sized.iter().map(|l| l.length_a.unwrap_or_default()).collect();
        let lb: Vec<usize> = sized.iter().map(|l| l.length_b.unwrap_or_default()).collect();
        Some(length_preference_rate(&preds, golds.as_deref(), &la, &lb)?)
    };
    Ok(BiasReport {
        position_flip_rate,
        position_items: swapped.len(),
        length,
    })
}

fn write_csv(path: &PathBuf, lines: &[EvalLine], opts: ParseOptions) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["id", "gold", "pred", "correct", "pred_swapped", "score_a", "score_b", "consistent"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for (i, l) in lines.iter().enumerate() {
        let pred = l.prediction(opts);
        let gold: Option<JudgmentLabel> = l.gold.as_deref().and_then(|g| g.parse().ok());
        w.write_record([
            l.id.clone().unwrap_or_else(|| (i + 1).to_string()),
            opt(gold.map(|g| g.to_string())),
            opt(pred.map(|p| p.to_string())),
            (pred.is_some() && pred == gold).to_string(),
            opt(l.pred_swapped.as_deref().and_then(|t| parse_label(t, opts)).map(|p| p.to_string())),
            opt(l.score_a.map(|s| s.to_string())),
            opt(l.score_b.map(|s| s.to_string())),
            l.crossmode(opts).is_consistent().to_string(),
        ])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(pred: &str, gold: &str) -> EvalLine {
        EvalLine {
            pred: Some(pred.into()),
            gold: Some(gold.into()),
            ..EvalLine::default()
        }
    }

    #[test]
    fn identical_predictions_agree_fully() {
        let lines = vec![line("A_win", "A_win"), line("tie", "tie"), line("B_win", "B_win")];
        let r = eval_report(&lines, ParseOptions::default()).unwrap();
        assert_eq!(r.agreement, 1.0);
        assert_eq!(r.scores.macro_f1, 1.0);
        assert!(r.consistency.is_none() && r.bias.length.is_none());
    }

    #[test]
    fn completions_are_parsed_and_failures_counted() {
        let lines = vec![line("### Judgement\nB_win", "B_win"), line("no idea", "A_win")];
        let r = eval_report(&lines, ParseOptions::default()).unwrap();
        assert_eq!(r.agreement, 0.5);
        assert_eq!(r.unparseable, 1);
    }

    #[test]
    fn missing_gold_is_usage() {
        let lines = vec![EvalLine {
            pred: Some("tie".into()),
            ..EvalLine::default()
        }];
        let e = eval_report(&lines, ParseOptions::default()).unwrap_err();
        assert!(e.downcast_ref::<crate::UsageError>().is_some());
    }

    #[test]
    fn bias_counts_flips() {
        let mut a = line("A_win", "A_win");
        a.pred_swapped = Some("A_win".into());
        let mut b = line("B_win", "B_win");
        b.pred_swapped = Some("A_win".into());
        let r = bias_report(&[a, b], ParseOptions::default()).unwrap();
        assert_eq!(r.position_flip_rate, Some(0.5));
        assert_eq!(r.position_items, 2);
    }
}
