//! Per-row losses and their gradients with respect to the row's logits.
//!
//! Each function returns `(loss, d loss / d logits)`; GRPO returns the negated
//! objective so that every stage is a minimization.

use crate::error::{Error, Result};
use crate::losses::{dpo_loss, dpo_loss_grad, exact_kl, grpo_advantages, grpo_surrogate, grpo_surrogate_grad, sft_loss};
use crate::losses::{DpoExample, GrpoGroup};

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

fn check_index(name: &str, i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::Usage(format!("{name} index {i} out of range for {n} outputs")));
    }
    Ok(())
}

/// Cross-entropy of one target.
pub fn sft_row(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    check_index("target", target, logits.len())?;
    let lp = log_softmax(logits);
    let loss = sft_loss(&[lp[target]])?;
    let mut grad: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// DPO loss of one chosen/rejected pair against fixed reference log-probabilities.
pub fn dpo_row(logits: &[f64], ref_logp: &[f64], chosen: usize, rejected: usize, beta: f64) -> Result<(f64, Vec<f64>)> {
    check_index("chosen", chosen, logits.len())?;
    check_index("rejected", rejected, logits.len())?;
    if chosen == rejected {
        return Err(Error::Usage("chosen and rejected outputs coincide".into()));
    }
    let lp = log_softmax(logits);
    let ex = DpoExample {
        logp_pol_chosen: lp[chosen],
        logp_pol_rejected: lp[rejected],
        logp_ref_chosen: ref_logp[chosen],
        logp_ref_rejected: ref_logp[rejected],
        beta,
    };
    let loss = dpo_loss(&[ex])?;
    let (dc, dr) = dpo_loss_grad(&ex)?;
    // d logp_y / d z_k = [k = y] − p_k
    let grad = lp
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let p = l.exp();
            dc * ((k == chosen) as u8 as f64 - p) + dr * ((k == rejected) as u8 as f64 - p)
        })
        .collect();
    Ok((loss, grad))
}

/// Negated GRPO objective for a group of `outputs` sampled from the reference
/// distribution, with the exact KL to the reference over the row.
pub fn grpo_row(
    logits: &[f64],
    ref_logp: &[f64],
    outputs: &[usize],
    rewards: &[f64],
    epsilon: f64,
    lambda_kl: f64,
) -> Result<(f64, Vec<f64>)> {
    if outputs.len() != rewards.len() {
        return Err(Error::Usage(format!(
            "{} outputs but {} rewards",
            outputs.len(),
            rewards.len()
        )));
    }
    if ref_logp.len() != logits.len() {
        return Err(Error::Usage("reference row has a different width".into()));
    }
    for &o in outputs {
        check_index("sampled output", o, logits.len())?;
    }
    let lp = log_softmax(logits);
    let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
    let q: Vec<f64> = ref_logp.iter().map(|l| l.exp()).collect();
    let group = GrpoGroup::new(
        rewards.to_vec(),
        outputs.iter().map(|&o| lp[o]).collect(),
        outputs.iter().map(|&o| ref_logp[o]).collect(),
        epsilon,
        lambda_kl,
    )?;
    let adv = grpo_advantages(rewards);
    let kl = exact_kl(&p, &q)?;
    let objective = grpo_surrogate(&group, &adv, kl)?;
    let slopes = grpo_surrogate_grad(&group, &adv)?;

    let n = logits.len();
    let mut grad = vec![0.0; n];
    for (&o, s) in outputs.iter().zip(&slopes) {
        if *s == 0.0 {
            continue;
        }
        for k in 0..n {
            grad[k] += s * ((k == o) as u8 as f64 - p[k]);
        }
    }
    if lambda_kl != 0.0 {
        // d KL(p‖q) / d z_k = p_k (log p_k − log q_k − KL)
        for k in 0..n {
            grad[k] -= lambda_kl * p[k] * (lp[k] - ref_logp[k] - kl);
        }
    }
    Ok((-objective, grad.into_iter().map(|g| -g).collect()))
}
