//! The hybrid consistency reward, bounded in `[0, 2]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::{self, ExtractMode, ParseOptions};
use crate::records::JudgmentLabel;

pub const MAX_REWARD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    /// Pairwise preference checked against pointwise ground-truth scores.
    #[serde(rename = "pp")]
    Pp,
    /// Scalar point regression: fast-mode score vs full-mode score.
    #[serde(rename = "sp_point")]
    SpPoint,
    /// Exact match of a fast-mode label against the full-mode label.
    #[serde(rename = "sp_pair")]
    SpPair,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Pp => "pp",
            TaskType::SpPoint => "sp_point",
            TaskType::SpPair => "sp_pair",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pp" => Ok(TaskType::Pp),
            "sp_point" => Ok(TaskType::SpPoint),
            "sp_pair" => Ok(TaskType::SpPair),
            other => Err(Error::Usage(format!("unknown task type {other:?}"))),
        }
    }
}

/// First ground truth: an integer score for `pp`/`sp_point`, a label text for `sp_pair`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Int(i64),
    Text(String),
}

impl GroundTruth {
    fn as_int(&self) -> Option<i64> {
        match self {
            GroundTruth::Int(v) => Some(*v),
            GroundTruth::Text(t) => t.trim().parse().ok(),
        }
    }

    fn as_text(&self) -> String {
        match self {
            GroundTruth::Int(v) => v.to_string(),
            GroundTruth::Text(t) => t.clone(),
        }
    }
}

impl From<i64> for GroundTruth {
    fn from(v: i64) -> Self {
        GroundTruth::Int(v)
    }
}

impl From<&str> for GroundTruth {
    fn from(v: &str) -> Self {
        GroundTruth::Text(v.to_owned())
    }
}

impl From<JudgmentLabel> for GroundTruth {
    fn from(v: JudgmentLabel) -> Self {
        GroundTruth::Text(v.as_str().to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResult {
    pub value: f64,
    pub parse_ok: bool,
    pub detail: String,
}

impl RewardResult {
    fn ok(value: f64, detail: impl Into<String>) -> Self {
        RewardResult {
            value,
            parse_ok: true,
            detail: detail.into(),
        }
    }

    fn parse_failed(detail: impl fmt::Display) -> Self {
        RewardResult {
            value: 0.0,
            parse_ok: false,
            detail: detail.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RewardOptions {
    /// Parsing options for `pp` labels and `sp_point` integers.
    pub parse: ParseOptions,
}

impl RewardOptions {
    pub fn with_mode(mode: ExtractMode) -> Self {
        RewardOptions {
            parse: ParseOptions {
                mode,
                ..ParseOptions::default()
            },
        }
    }
}

/// `(A_win ∧ g1>g2) ∨ (B_win ∧ g2>g1) ∨ (tie ∧ g1=g2)`.
pub fn consistent_predicate(label: JudgmentLabel, g1: i64, g2: i64) -> bool {
    match label {
        JudgmentLabel::AWin => g1 > g2,
        JudgmentLabel::BWin => g2 > g1,
        JudgmentLabel::Tie => g1 == g2,
    }
}

/// Scores one completion. Parse failures yield `0.0` with `parse_ok = false`;
/// a missing `g2` for `pp` (or a non-integer `g1` where one is needed) is a
/// usage error instead.
pub fn consistency_reward(
    completion: &str,
    task: TaskType,
    g1: &GroundTruth,
    g2: Option<i64>,
    opts: RewardOptions,
) -> Result<RewardResult> {
    match task {
        TaskType::Pp => {
            let g2 = g2.ok_or_else(|| Error::Usage("pp reward requires g2".into()))?;
            let g1 = int_truth(g1, task)?;
            Ok(match parser::extract_judgment(completion, opts.parse) {
                Ok(label) => {
                    let hit = consistent_predicate(label, g1, g2);
                    RewardResult::ok(
                        if hit { MAX_REWARD } else { 0.0 },
                        format!("label {label} vs ({g1}, {g2})"),
                    )
                }
                Err(e) => RewardResult::parse_failed(e),
            })
        }
        TaskType::SpPoint => {
            let g1 = int_truth(g1, task)?;
            Ok(match parser::extract_point_score(completion, opts.parse.mode) {
                Ok(v) => {
                    // i128 keeps |g1 - v| exact for saturated parses
                    let dev = (g1 as i128 - v as i128).unsigned_abs();
                    let value = if dev >= 2 { 0.0 } else { MAX_REWARD - dev as f64 };
                    RewardResult::ok(value, format!("score {v} vs {g1}"))
                }
                Err(e) => RewardResult::parse_failed(e),
            })
        }
        TaskType::SpPair => {
            let want = g1.as_text();
            let hit = completion.trim() == want.trim();
            Ok(RewardResult::ok(
                if hit { MAX_REWARD } else { 0.0 },
                if hit { "exact match" } else { "mismatch" },
            ))
        }
    }
}

fn int_truth(g: &GroundTruth, task: TaskType) -> Result<i64> {
    g.as_int()
        .ok_or_else(|| Error::Usage(format!("{task} reward requires an integer g1, got {g:?}")))
}

/// One line of the batch scoring format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRequest {
    pub completion: String,
    pub task_type: String,
    pub g1: GroundTruth,
    #[serde(default)]
    pub g2: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRequest {
    #[serde(flatten)]
    pub request: RewardRequest,
    pub reward: f64,
    pub parse_ok: bool,
}

/// Scores a batch. Unknown task types take the reward's "otherwise" branch
/// (0.0); usage errors abort with the offending index.
pub fn score_batch(requests: Vec<RewardRequest>, opts: RewardOptions) -> Result<Vec<ScoredRequest>> {
    requests
        .into_iter()
        .enumerate()
        .map(|(i, request)| {
            let (reward, parse_ok) = match request.task_type.parse::<TaskType>() {
                Ok(task) => {
                    let r = consistency_reward(&request.completion, task, &request.g1, request.g2, opts)
                        .map_err(|e| Error::Usage(format!("request {}: {e}", i + 1)))?;
                    (r.value, r.parse_ok)
                }
                Err(_) => (0.0, false),
            };
            Ok(ScoredRequest {
                request,
                reward,
                parse_ok,
            })
        })
        .collect()
}
