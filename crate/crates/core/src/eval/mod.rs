//! Mean average precision, evaluation reports, top-k reports and the
//! ablation grid.

mod ablation;
mod ap;

#[cfg(test)]
mod tests;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ablation::{ablation_csv, ablation_suite, AblationGrid, AblationRow, EmbeddingVariant};
pub use ap::{average_precision, map_from_per_class, mean_ap, per_class_ap};

use crate::error::{Error, Result};
use crate::models::rule::{rule_predict, FrequencyPrior, RuleModel};
use crate::models::{Model, ModelKind};
use crate::relation::{ActionSet, Setup};
use crate::train::Prepared;

/// Anything that maps a prepared example to `|A|` scores.
pub trait Scorer: Sync {
    fn n_actions(&self) -> usize;
    fn score(&self, ex: &Prepared) -> Result<Vec<f64>>;
}

impl Scorer for Model {
    fn n_actions(&self) -> usize {
        self.net.dims.n_actions
    }

    fn score(&self, ex: &Prepared) -> Result<Vec<f64>> {
        Ok(self.scores(&ex.set)?.logits)
    }
}

impl Scorer for RuleModel {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn score(&self, ex: &Prepared) -> Result<Vec<f64>> {
        Ok(rule_predict(self, &ex.set.categories).logits)
    }
}

impl Scorer for FrequencyPrior {
    fn n_actions(&self) -> usize {
        self.frequency.len()
    }

    fn score(&self, _ex: &Prepared) -> Result<Vec<f64>> {
        Ok(self.scores().logits)
    }
}

/// Eval-mode scores for every example, in order.
pub fn predict(scorer: &dyn Scorer, data: &[Prepared]) -> Result<Vec<Vec<f64>>> {
    if let Some(bad) = data.iter().find(|e| e.target.width() != scorer.n_actions()) {
        return Err(Error::Config(format!(
            "scorer has {} actions, example of `{}` has {}",
            scorer.n_actions(),
            bad.video_id,
            bad.target.width()
        )));
    }
    data.par_iter().map(|e| scorer.score(e)).collect()
}

pub fn mean_ap_of(scorer: &dyn Scorer, data: &[Prepared]) -> Result<f64> {
    let labels: Vec<ActionSet> = data.iter().map(|e| e.target.clone()).collect();
    mean_ap(&predict(scorer, data)?, &labels)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    All,
    LastSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub setup: Setup,
    pub mode: EvalMode,
    pub n_examples: usize,
    /// `null` for classes without a positive example.
    pub per_class_ap: Vec<Option<f64>>,
    pub absent_classes: Vec<usize>,
    /// Percent, over classes with positives.
    pub map: f64,
}

impl EvalReport {
    /// `all_past`, `last_two` or `last_snapshot_only`.
    pub fn tag(&self) -> String {
        match self.mode {
            EvalMode::All => self.setup.to_string(),
            EvalMode::LastSnapshot => "last_snapshot_only".into(),
        }
    }

    /// Human-readable per-class table.
    pub fn to_table(&self, action_names: &[String]) -> String {
        let mut out = format!(
            "model {} | {} | {} examples\n{:<24} {:>8}\n",
            self.model,
            self.tag(),
            self.n_examples,
            "class",
            "AP"
        );
        for (c, ap) in self.per_class_ap.iter().enumerate() {
            let name = action_names.get(c).cloned().unwrap_or_else(|| format!("#{c}"));
            match ap {
                Some(v) => out.push_str(&format!("{name:<24} {:>8.2}\n", 100.0 * v)),
                None => out.push_str(&format!("{name:<24} {:>8}\n", "absent")),
            }
        }
        out.push_str(&format!("{:<24} {:>8.2}\n", "mAP", self.map));
        out
    }
}

pub fn evaluate(
    scorer: &dyn Scorer,
    model_id: &str,
    seed: u64,
    setup: Setup,
    data: &[Prepared],
    mode: EvalMode,
) -> Result<EvalReport> {
    let selected: Vec<Prepared> = match mode {
        EvalMode::All => data.to_vec(),
        EvalMode::LastSnapshot => data.iter().filter(|e| e.is_last).cloned().collect(),
    };
    let labels: Vec<ActionSet> = selected.iter().map(|e| e.target.clone()).collect();
    let per_class = per_class_ap(&predict(scorer, &selected)?, &labels)?;
    Ok(EvalReport {
        model: model_id.to_string(),
        seed,
        setup,
        mode,
        n_examples: selected.len(),
        absent_classes: per_class
            .iter()
            .enumerate()
            .filter_map(|(c, ap)| ap.is_none().then_some(c))
            .collect(),
        map: map_from_per_class(&per_class)?,
        per_class_ap: per_class,
    })
}

/// The `k` highest-scoring class indices; ties go to the lower index.
pub fn topk(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Parameter(format!("k = {k} with {} classes", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopkReport {
    pub video_id: String,
    pub predicted: Vec<String>,
    pub ground_truth: Vec<String>,
}

/// Top-`k` predictions next to the ground truth, with `k = |ground truth|`
/// unless given.
pub fn topk_report(scorer: &dyn Scorer, ex: &Prepared, k: Option<usize>, action_names: &[String]) -> Result<TopkReport> {
    let truth = ex.target.indices();
    let k = k.unwrap_or(truth.len());
    let name = |i: usize| action_names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
    Ok(TopkReport {
        video_id: ex.video_id.clone(),
        predicted: topk(&scorer.score(ex)?, k)?.into_iter().map(name).collect(),
        ground_truth: truth.into_iter().map(name).collect(),
    })
}

pub fn display_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Rule => "Rule-based inference",
        ModelKind::Mlp => "MLP",
        ModelKind::Transformer => "Transformer",
        ModelKind::Gnned => "GNNED",
        ModelKind::Rbp => "RBP",
        ModelKind::Biged => "BiGED",
    }
}

/// Two-column "Model | Mean Average Precision" table.
pub fn results_table(rows: &[(String, f64)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  Mean Average Precision\n", "Model");
    out.push_str(&format!("{}\n", "-".repeat(width + 24)));
    for (name, map) in rows {
        out.push_str(&format!("{name:<width$}  {map:.2}\n"));
    }
    out
}
