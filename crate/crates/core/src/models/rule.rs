//! Symbolic baselines: a noisy-or co-occurrence scorer and a class-frequency prior.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ActionScores;
use crate::error::{Error, Result};
use crate::relation::AbductionExample;

/// Add-one smoothed `P(a | o present)` per object category, plus `P(a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleModel {
    pub n_actions: usize,
    /// category → smoothed conditional per action
    pub conditional: BTreeMap<usize, Vec<f64>>,
    pub prior: Vec<f64>,
}

/// Count co-occurrences of actions with present categories (each category
/// counted once per example).
pub fn rule_fit(train: &[AbductionExample], n_actions: usize) -> Result<RuleModel> {
    if train.is_empty() {
        return Err(Error::EmptySet { op: "rule_fit" });
    }
    let mut seen: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    let mut action_counts = vec![0usize; n_actions];
    for ex in train {
        let target = ex.target.indices();
        for &a in &target {
            action_counts[a] += 1;
        }
        let present: BTreeSet<usize> = ex.snapshot.categories().into_iter().collect();
        for o in present {
            let entry = seen.entry(o).or_insert_with(|| (0, vec![0; n_actions]));
            entry.0 += 1;
            for &a in &target {
                entry.1[a] += 1;
            }
        }
    }
    let smooth = |hits: usize, total: usize| (hits as f64 + 1.0) / (total as f64 + 2.0);
    Ok(RuleModel {
        n_actions,
        conditional: seen
            .into_iter()
            .map(|(o, (n_o, hits))| (o, hits.into_iter().map(|h| smooth(h, n_o)).collect()))
            .collect(),
        prior: action_counts.into_iter().map(|h| smooth(h, train.len())).collect(),
    })
}

/// `score(a) = 1 − Π_{o present} (1 − P(a|o))`; unseen categories use `P(a)`.
pub fn rule_predict(model: &RuleModel, categories: &[usize]) -> ActionScores {
    let present: BTreeSet<usize> = categories.iter().copied().collect();
    let mut miss = vec![1.0; model.n_actions];
    for o in present {
        let p = model.conditional.get(&o).unwrap_or(&model.prior);
        for (m, pa) in miss.iter_mut().zip(p) {
            *m *= 1.0 - pa;
        }
    }
    ActionScores {
        logits: miss.into_iter().map(|m| 1.0 - m).collect(),
    }
}

/// Scores every example with the training-set frequency of each class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPrior {
    pub frequency: Vec<f64>,
}

impl FrequencyPrior {
    pub fn fit(train: &[AbductionExample], n_actions: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySet { op: "FrequencyPrior::fit" });
        }
        let mut frequency = vec![0.0; n_actions];
        for ex in train {
            for a in ex.target.indices() {
                frequency[a] += 1.0;
            }
        }
        let n = train.len() as f64;
        frequency.iter_mut().for_each(|f| *f /= n);
        Ok(FrequencyPrior { frequency })
    }

    pub fn scores(&self) -> ActionScores {
        ActionScores {
            logits: self.frequency.clone(),
        }
    }
}
