//! SFT, DPO and GRPO objective kernels over supplied log-probabilities, with
//! analytic gradients with respect to the policy log-probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{name} is not finite ({v})")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoExample {
    pub logp_pol_chosen: f64,
    pub logp_pol_rejected: f64,
    pub logp_ref_chosen: f64,
    pub logp_ref_rejected: f64,
    pub beta: f64,
}

impl DpoExample {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("logp_pol_chosen", self.logp_pol_chosen)?;
        ensure_finite("logp_pol_rejected", self.logp_pol_rejected)?;
        ensure_finite("logp_ref_chosen", self.logp_ref_chosen)?;
        ensure_finite("logp_ref_rejected", self.logp_ref_rejected)?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Numeric(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    /// `β·[(log π(y⁺) − log π(y⁻)) − (log π_ref(y⁺) − log π_ref(y⁻))]`.
    pub fn scaled_margin(&self) -> f64 {
        self.beta
            * ((self.logp_pol_chosen - self.logp_pol_rejected)
                - (self.logp_ref_chosen - self.logp_ref_rejected))
    }

    /// The same comparison with chosen and rejected exchanged.
    pub fn swapped(&self) -> Self {
        DpoExample {
            logp_pol_chosen: self.logp_pol_rejected,
            logp_pol_rejected: self.logp_pol_chosen,
            logp_ref_chosen: self.logp_ref_rejected,
            logp_ref_rejected: self.logp_ref_chosen,
            beta: self.beta,
        }
    }
}

pub fn dpo_preference_prob(ex: &DpoExample) -> Result<f64> {
    ex.validate()?;
    Ok(sigmoid(ex.scaled_margin()))
}

/// Mean of `−ln p(y⁺ ≻ y⁻)` over the batch, evaluated as `softplus(−βm)`.
pub fn dpo_loss(batch: &[DpoExample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("dpo_loss on an empty batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        ex.validate()?;
        total += softplus(-ex.scaled_margin());
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of `dpo_loss(&[ex])` with respect to
/// `(logp_pol_chosen, logp_pol_rejected)`.
pub fn dpo_loss_grad(ex: &DpoExample) -> Result<(f64, f64)> {
    ex.validate()?;
    let g = ex.beta * sigmoid(-ex.scaled_margin());
    Ok((-g, g))
}

/// `Ã_j = (r_j − μ)/σ` with the population standard deviation; a group with
/// zero spread gets all-zero advantages.
pub fn grpo_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.iter().all(|r| *r == rewards[0]) {
        // summing m copies of r and dividing by m need not give r back exactly
        return vec![0.0; rewards.len()];
    }
    let m = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / m;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / m;
    let std = var.sqrt();
    // spread below f64 resolution of the mean is treated as none
    if std <= f64::EPSILON * mean.abs().max(1.0) {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoGroup {
    pub rewards: Vec<f64>,
    pub logp_pol: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub epsilon: f64,
    pub lambda_kl: f64,
}

impl GrpoGroup {
    pub fn new(
        rewards: Vec<f64>,
        logp_pol: Vec<f64>,
        logp_ref: Vec<f64>,
        epsilon: f64,
        lambda_kl: f64,
    ) -> Result<Self> {
        let g = GrpoGroup {
            rewards,
            logp_pol,
            logp_ref,
            epsilon,
            lambda_kl,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.rewards.len();
        if m == 0 {
            return Err(Error::Usage("GRPO group must have at least one sample".into()));
        }
        if self.logp_pol.len() != m || self.logp_ref.len() != m {
            return Err(Error::Usage(format!(
                "GRPO group length mismatch: {} rewards, {} policy, {} reference log-probs",
                m,
                self.logp_pol.len(),
                self.logp_ref.len()
            )));
        }
        if let Some(r) = self.rewards.iter().find(|r| !(0.0..=2.0).contains(*r)) {
            return Err(Error::Usage(format!("reward {r} outside [0, 2]")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Usage(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(self.lambda_kl >= 0.0 && self.lambda_kl.is_finite()) {
            return Err(Error::Usage(format!("lambda_kl {} must be >= 0", self.lambda_kl)));
        }
        Ok(())
    }
}

/// `(1/M) Σ min(ϱ_j Ã_j, clip(ϱ_j, 1−ε, 1+ε) Ã_j)` without the KL term.
/// `epsilon` may be `f64::INFINITY` to disable clipping.
pub fn clipped_surrogate(logp_pol: &[f64], logp_ref: &[f64], advantages: &[f64], epsilon: f64) -> Result<f64> {
    let terms = surrogate_terms(logp_pol, logp_ref, advantages, epsilon)?;
    Ok(terms.iter().map(|t| t.value).sum::<f64>() / terms.len() as f64)
}

struct Term {
    value: f64,
    /// d value / d logp_pol
    slope: f64,
}

fn surrogate_terms(logp_pol: &[f64], logp_ref: &[f64], advantages: &[f64], epsilon: f64) -> Result<Vec<Term>> {
    let m = advantages.len();
    if m == 0 || logp_pol.len() != m || logp_ref.len() != m {
        return Err(Error::Usage(format!(
            "surrogate needs equal non-empty lengths, got {} / {} / {}",
            logp_pol.len(),
            logp_ref.len(),
            m
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Usage(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let ratio = (logp_pol[j] - logp_ref[j]).exp();
        if !ratio.is_finite() {
            return Err(Error::Numeric(format!(
                "importance ratio at index {j} is not finite (log-ratio {})",
                logp_pol[j] - logp_ref[j]
            )));
        }
        let adv = advantages[j];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
        out.push(if unclipped <= clipped {
            // dϱ/dlogp = ϱ
            Term {
                value: unclipped,
                slope: adv * ratio,
            }
        } else {
            Term {
                value: clipped,
                slope: 0.0,
            }
        });
    }
    Ok(out)
}

/// The GRPO objective to maximize: clipped surrogate minus `λ·kl`, where `kl`
/// is the externally computed `D_KL(π‖π_ref)` for the query.
pub fn grpo_surrogate(group: &GrpoGroup, advantages: &[f64], kl: f64) -> Result<f64> {
    group.validate()?;
    if advantages.len() != group.len() {
        return Err(Error::Usage(format!(
            "{} advantages for a group of {}",
            advantages.len(),
            group.len()
        )));
    }
    if kl.is_nan() || kl < 0.0 {
        return Err(Error::Usage(format!("kl must be >= 0, got {kl}")));
    }
    let s = clipped_surrogate(&group.logp_pol, &group.logp_ref, advantages, group.epsilon)?;
    Ok(s - group.lambda_kl * kl)
}

/// Gradient of the clipped surrogate (KL excluded) with respect to each
/// `logp_pol[j]`. Clipped terms contribute zero.
pub fn grpo_surrogate_grad(group: &GrpoGroup, advantages: &[f64]) -> Result<Vec<f64>> {
    group.validate()?;
    let terms = surrogate_terms(&group.logp_pol, &group.logp_ref, advantages, group.epsilon)?;
    let m = terms.len() as f64;
    Ok(terms.into_iter().map(|t| t.slope / m).collect())
}

const SUM_TOL: f64 = 1e-9;

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(format!("{name} has invalid entry {v}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::Domain(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// `Σ p log(p/q)` with `0·log 0 = 0`.
pub fn exact_kl(policy: &[f64], reference: &[f64]) -> Result<f64> {
    if policy.len() != reference.len() {
        return Err(Error::Domain(format!(
            "distribution lengths differ: {} vs {}",
            policy.len(),
            reference.len()
        )));
    }
    check_distribution("policy", policy)?;
    check_distribution("reference", reference)?;
    let mut kl = 0.0;
    for (i, (&p, &q)) in policy.iter().zip(reference).enumerate() {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Err(Error::Domain(format!(
                "support mismatch at index {i}: policy mass {p} where reference is 0"
            )));
        }
        kl += p * (p / q).ln();
    }
    // rounding can leave a tiny negative value for near-identical inputs
    Ok(kl.max(0.0))
}

/// Per-sample KL estimate `e^{d} − 1 − d` with `d = log π_ref(y) − log π(y)`,
/// for `y ~ π`. Unbiased and non-negative; used where the output space is too
/// large to sum.
pub fn kl_estimate(logp_pol: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_pol;
    d.exp_m1() - d
}

pub fn sft_loss(logp_targets: &[f64]) -> Result<f64> {
    if logp_targets.is_empty() {
        return Err(Error::Usage("sft_loss on an empty target list".into()));
    }
    Ok(-logp_targets.iter().sum::<f64>() / logp_targets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumWeights {
    pub lambda_dpo: f64,
    pub lambda_grpo: f64,
}

impl Default for CurriculumWeights {
    fn default() -> Self {
        CurriculumWeights {
            lambda_dpo: 1.0,
            lambda_grpo: 1.0,
        }
    }
}

impl CurriculumWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_dpo", self.lambda_dpo), ("lambda_grpo", self.lambda_grpo)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Usage(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `L_SFT + λ_DPO·L_DPO + λ_GRPO·(−J_GRPO)`; the GRPO objective is negated
/// because it is a quantity to maximize.
pub fn combined_loss(sft: f64, dpo: f64, grpo_objective: f64, w: CurriculumWeights) -> f64 {
    sft + w.lambda_dpo * dpo - w.lambda_grpo * grpo_objective
}
