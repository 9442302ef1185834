//! Stratified sampling over (cluster, difficulty, winner) strata.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{Difficulty, TaggedRecord, Winner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumKey {
    pub cluster_id: usize,
    pub difficulty: Difficulty,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCount {
    #[serde(flatten)]
    pub key: StratumKey,
    pub available: usize,
    pub selected: usize,
}

/// Counts and percentages of a categorical tag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagDistribution {
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub percentages: BTreeMap<String, f64>,
}

impl TagDistribution {
    fn from_tags<'a>(tags: impl Iterator<Item = &'a str>, all: &[&str]) -> Self {
        let mut counts: BTreeMap<String, usize> = all.iter().map(|t| (t.to_string(), 0)).collect();
        let mut total = 0;
        for t in tags {
            *counts.entry(t.to_string()).or_default() += 1;
            total += 1;
        }
        let percentages = counts
            .iter()
            .map(|(k, &c)| {
                let pct = if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
                (k.clone(), pct)
            })
            .collect();
        TagDistribution {
            total,
            counts,
            percentages,
        }
    }

    pub fn percentage(&self, tag: &str) -> f64 {
        self.percentages.get(tag).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub target: usize,
    pub selected: usize,
    pub excluded_both_bad: usize,
    pub strata: Vec<StratumCount>,
    pub winner_before: TagDistribution,
    pub winner_after: TagDistribution,
    pub difficulty_before: TagDistribution,
    pub difficulty_after: TagDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    /// Selected records in input order.
    pub records: Vec<TaggedRecord>,
    pub report: SampleReport,
}

/// Splits `n` across strata of the given sizes as evenly as possible.
///
/// Strata no larger than the current equal share are taken whole and the
/// share is recomputed over the rest; the final remainder goes one unit at a
/// time to the largest strata, lower index first on ties. Quotas never exceed
/// stratum sizes, and sum to `min(n, total)`.
pub fn allocate_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let mut quotas = vec![0; sizes.len()];
    let mut remaining = n.min(sizes.iter().sum());
    let mut active: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] > 0).collect();

    loop {
        if active.is_empty() || remaining == 0 {
            return quotas;
        }
        // size <= remaining / len, compared without division
        let (small, large): (Vec<usize>, Vec<usize>) =
            active.iter().partition(|&&i| sizes[i] * active.len() <= remaining);
        if small.is_empty() {
            break;
        }
        for i in small {
            quotas[i] = sizes[i];
            remaining -= sizes[i];
        }
        active = large;
    }

    let base = remaining / active.len();
    let extra = remaining % active.len();
    for &i in &active {
        quotas[i] = base;
    }
    let mut order = active.clone();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    for &i in order.iter().take(extra) {
        quotas[i] += 1;
    }
    quotas
}

/// Draws a balanced subset of about `n` records, never selecting `BothBad`.
pub fn stratified_sample(records: &[TaggedRecord], n: usize, seed: u64) -> Result<SampleOutcome> {
    if n == 0 {
        return Err(Error::Usage("sample size must be at least 1".into()));
    }
    let mut strata: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    let mut both_bad = 0;
    for (i, r) in records.iter().enumerate() {
        if r.tags.winner == Winner::BothBad {
            both_bad += 1;
            continue;
        }
        let key = StratumKey {
            cluster_id: r.tags.cluster_id,
            difficulty: r.tags.difficulty,
            winner: r.tags.winner,
        };
        strata.entry(key).or_default().push(i);
    }
    if strata.is_empty() {
        return Err(Error::Validation(
            "no sampleable records: every record is both_bad (or the input is empty)".into(),
        ));
    }

    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let quotas = allocate_quotas(&sizes, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    let mut counts = Vec::with_capacity(strata.len());
    for ((key, members), &q) in strata.iter().zip(&quotas) {
        let picks = rand::seq::index::sample(&mut rng, members.len(), q);
        chosen.extend(picks.iter().map(|j| members[j]));
        counts.push(StratumCount {
            key: *key,
            available: members.len(),
            selected: q,
        });
    }
    chosen.sort_unstable();
    let selected: Vec<TaggedRecord> = chosen.iter().map(|&i| records[i].clone()).collect();

    let winners: Vec<&str> = Winner::ALL.iter().map(|w| w.as_str()).collect();
    let difficulties: Vec<&str> = Difficulty::ALL.iter().map(|d| d.as_str()).collect();
    let report = SampleReport {
        target: n,
        selected: selected.len(),
        excluded_both_bad: both_bad,
        strata: counts,
        winner_before: TagDistribution::from_tags(records.iter().map(|r| r.tags.winner.as_str()), &winners),
        winner_after: TagDistribution::from_tags(selected.iter().map(|r| r.tags.winner.as_str()), &winners),
        difficulty_before: TagDistribution::from_tags(
            records.iter().map(|r| r.tags.difficulty.as_str()),
            &difficulties,
        ),
        difficulty_after: TagDistribution::from_tags(
            selected.iter().map(|r| r.tags.difficulty.as_str()),
            &difficulties,
        ),
    };
    Ok(SampleOutcome {
        records: selected,
        report,
    })
}
