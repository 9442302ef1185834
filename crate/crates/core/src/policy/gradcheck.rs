//! Central-difference checks of the analytic row gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::objectives::{dpo_row, grpo_row, sft_row};
use super::ToyJudgePolicy;
use crate::error::{Error, Result};

/// Gradient entries whose magnitude is below this are compared absolutely.
/// Central-difference roundoff is about 1e-11 at step 1e-5, so smaller
/// denominators would measure noise rather than the gradient.
pub const REL_FLOOR: f64 = 1e-5;

/// Random GRPO cases keep every importance ratio at least this far from the
/// clip boundaries, where the objective has a kink.
pub const CLIP_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Sft,
    Dpo,
    Grpo,
}

/// One training datum for a single context. Reference rows are given as
/// logits and normalized internally.
#[derive(Debug, Clone, PartialEq)]
pub enum GradDatum {
    Sft {
        context: usize,
        target: usize,
    },
    Dpo {
        context: usize,
        chosen: usize,
        rejected: usize,
        reference: Vec<f64>,
        beta: f64,
    },
    Grpo {
        context: usize,
        outputs: Vec<usize>,
        rewards: Vec<f64>,
        reference: Vec<f64>,
        epsilon: f64,
        lambda_kl: f64,
    },
}

impl GradDatum {
    pub fn kind(&self) -> LossKind {
        match self {
            GradDatum::Sft { .. } => LossKind::Sft,
            GradDatum::Dpo { .. } => LossKind::Dpo,
            GradDatum::Grpo { .. } => LossKind::Grpo,
        }
    }

    pub fn context(&self) -> usize {
        match self {
            GradDatum::Sft { context, .. } | GradDatum::Dpo { context, .. } | GradDatum::Grpo { context, .. } => *context,
        }
    }

    /// Loss and analytic gradient at the given row.
    pub fn evaluate(&self, row: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            GradDatum::Sft { target, .. } => sft_row(row, *target),
            GradDatum::Dpo {
                chosen,
                rejected,
                reference,
                beta,
                ..
            } => dpo_row(row, &super::log_softmax(reference), *chosen, *rejected, *beta),
            GradDatum::Grpo {
                outputs,
                rewards,
                reference,
                epsilon,
                lambda_kl,
                ..
            } => grpo_row(row, &super::log_softmax(reference), outputs, rewards, *epsilon, *lambda_kl),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub kind: Option<LossKind>,
    pub touched: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `loss` around `row`.
/// The relative error of an entry is `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn compare_gradient(
    row: &[f64],
    analytic: &[f64],
    loss: impl Fn(&[f64]) -> Result<f64>,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Usage(format!("finite-difference step must be positive, got {step}")));
    }
    if analytic.len() != row.len() {
        return Err(Error::Usage("gradient and row widths differ".into()));
    }
    let mut x = row.to_vec();
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for k in 0..row.len() {
        x[k] = row[k] + step;
        let up = loss(&x)?;
        x[k] = row[k] - step;
        let down = loss(&x)?;
        x[k] = row[k];
        let numeric = (up - down) / (2.0 * step);
        let diff = (analytic[k] - numeric).abs();
        max_abs = max_abs.max(diff);
        max_rel = max_rel.max(diff / analytic[k].abs().max(numeric.abs()).max(REL_FLOOR));
    }
    Ok(GradCheckReport {
        kind: None,
        touched: row.len(),
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        tol,
        passed: max_rel < tol,
    })
}

/// Checks the trainer's analytic gradient for `datum` at the policy's current
/// logits. Every logit of the datum's context row is touched.
pub fn finite_diff_grad_check(
    kind: LossKind,
    policy: &ToyJudgePolicy,
    datum: &GradDatum,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if datum.kind() != kind {
        return Err(Error::Usage(format!("{kind:?} check given a {:?} datum", datum.kind())));
    }
    let row = policy.row(datum.context())?;
    let (_, analytic) = datum.evaluate(row)?;
    let mut report = compare_gradient(row, &analytic, |x| Ok(datum.evaluate(x)?.0), step, tol)?;
    report.kind = Some(kind);
    Ok(report)
}

fn random_logits(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Sets a random context row of `policy` to random logits and returns a
/// random datum of `kind` for it. GRPO references are perturbations of the
/// row, so some ratios fall inside the clip interval and some outside.
pub fn random_case(kind: LossKind, policy: &mut ToyJudgePolicy, rng: &mut impl Rng) -> Result<GradDatum> {
    let context = rng.random_range(0..policy.num_contexts());
    let n = policy.num_outputs(context)?;
    let row = random_logits(rng, n, 3.0);
    policy.set_row(context, &row)?;
    let distinct = |rng: &mut dyn rand::RngCore| {
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        (a, b)
    };
    Ok(match kind {
        LossKind::Sft => GradDatum::Sft {
            context,
            target: rng.random_range(0..n),
        },
        LossKind::Dpo => {
            let (chosen, rejected) = distinct(rng);
            GradDatum::Dpo {
                context,
                chosen,
                rejected,
                reference: random_logits(rng, n, 3.0),
                beta: rng.random_range(0.05..2.0),
            }
        }
        LossKind::Grpo => {
            let m = rng.random_range(2..=16);
            let epsilon = rng.random_range(0.1..0.3);
            let lp = super::log_softmax(&row);
            let reference = loop {
                let noise = random_logits(rng, n, 0.4);
                let reference: Vec<f64> = row.iter().zip(noise).map(|(r, e)| r + e).collect();
                let lq = super::log_softmax(&reference);
                let clear = lp.iter().zip(&lq).all(|(a, b)| {
                    let ratio = (a - b).exp();
                    (ratio - (1.0 - epsilon)).abs() > CLIP_MARGIN && (ratio - (1.0 + epsilon)).abs() > CLIP_MARGIN
                });
                if clear {
                    break reference;
                }
            };
            GradDatum::Grpo {
                context,
                outputs: (0..m).map(|_| rng.random_range(0..n)).collect(),
                rewards: (0..m).map(|_| rng.random_range(0.0..2.0)).collect(),
                reference,
                epsilon,
                lambda_kl: rng.random_range(0.0..0.2),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::FeatureConfig;
    use crate::records::{EvaluationInstance, JudgmentLabel, ScoreRange};

    fn setup() -> (ToyJudgePolicy, usize) {
        let mut p = ToyJudgePolicy::new(FeatureConfig::default(), ScoreRange::default()).unwrap();
        let c = p.context_id(&EvaluationInstance::pairwise("i", "t", "a", "b", JudgmentLabel::AWin));
        p.set_row(c, &[0.4, -1.1, 0.7]).unwrap();
        (p, c)
    }

    #[test]
    fn sft_passes() {
        let (p, c) = setup();
        let d = GradDatum::Sft { context: c, target: 2 };
        let r = finite_diff_grad_check(LossKind::Sft, &p, &d, 1e-5, 1e-4).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.touched, 3);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let (p, c) = setup();
        let d = GradDatum::Sft { context: c, target: 0 };
        let row = p.row(c).unwrap();
        let (_, mut g) = d.evaluate(row).unwrap();
        g[1] *= 1.5;
        let r = compare_gradient(row, &g, |x| Ok(d.evaluate(x)?.0), 1e-5, 1e-4).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn zero_advantage_grpo_has_zero_gradient() {
        let (p, c) = setup();
        let d = GradDatum::Grpo {
            context: c,
            outputs: vec![0, 1, 2, 0],
            rewards: vec![2.0; 4],
            reference: p.row(c).unwrap().to_vec(),
            epsilon: 0.2,
            lambda_kl: 0.1,
        };
        let (_, g) = d.evaluate(p.row(c).unwrap()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let r = finite_diff_grad_check(LossKind::Grpo, &p, &d, 1e-5, 1e-4).unwrap();
        assert!(r.passed && r.max_abs_error < 1e-9, "{r:?}");
    }

    #[test]
    fn random_cases_pass() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p = ToyJudgePolicy::new(FeatureConfig::default(), crate::records::ScoreRange::default()).unwrap();
        for kind in [LossKind::Sft, LossKind::Dpo, LossKind::Grpo] {
            for _ in 0..20 {
                let d = random_case(kind, &mut p, &mut rng).unwrap();
                let r = finite_diff_grad_check(kind, &p, &d, 1e-5, 1e-4).unwrap();
                assert!(r.passed, "{d:?} {r:?}");
            }
        }
    }

    #[test]
    fn kind_mismatch_and_bad_step() {
        let (p, c) = setup();
        let d = GradDatum::Sft { context: c, target: 0 };
        assert!(finite_diff_grad_check(LossKind::Dpo, &p, &d, 1e-5, 1e-4).is_err());
        assert!(finite_diff_grad_check(LossKind::Sft, &p, &d, 0.0, 1e-4).is_err());
    }
}
