//! Judge-training toolkit: record handling, completion parsing, consistency
//! rewards, preference and policy-gradient losses, data construction, a toy
//! judge policy with a staged trainer, and evaluation metrics.

pub mod error;
pub mod losses;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod policy;
pub mod records;
pub mod reward;
pub mod synth;

pub use error::{Error, Result};
pub use parser::{ExtractMode, ParseFailure, ParseOptions};
pub use records::{
    Difficulty, EvalMode, EvaluationInstance, Gold, JudgmentLabel, ScoreRange, SourceRecord, TaggedRecord,
    TaggingRules, Winner,
};
pub use reward::{consistency_reward, consistent_predicate, GroundTruth, RewardOptions, RewardResult, TaskType};
