use crate::error::{Error, Result};
use crate::relation::ActionSet;

/// Non-interpolated average precision of one class.
///
/// Examples are ranked by descending score with ties kept in input order;
/// the result is the mean, over positives, of precision at each positive's
/// rank. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), labels.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| total / hits as f64)
}

/// Per-class AP over an `n × K` score matrix; `None` marks classes without positives.
pub fn per_class_ap(scores: &[Vec<f64>], labels: &[ActionSet]) -> Result<Vec<Option<f64>>> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation(format!("{} score rows for {} label rows", scores.len(), labels.len())));
    }
    let k = labels.first().map_or(0, ActionSet::width);
    if let Some(bad) = scores.iter().find(|s| s.len() != k) {
        return Err(Error::Evaluation(format!("score row has {} classes, labels have {k}", bad.len())));
    }
    if let Some(bad) = scores.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("score {bad}")));
    }
    Ok((0..k)
        .map(|c| {
            let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
            let lab: Vec<bool> = labels.iter().map(|l| l.contains(c)).collect();
            average_precision(&col, &lab)
        })
        .collect())
}

/// Mean AP in percent over classes having at least one positive.
pub fn mean_ap(scores: &[Vec<f64>], labels: &[ActionSet]) -> Result<f64> {
    map_from_per_class(&per_class_ap(scores, labels)?)
}

pub fn map_from_per_class(per_class: &[Option<f64>]) -> Result<f64> {
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Evaluation("no class has a positive example".into()));
    }
    Ok(100.0 * valid.iter().sum::<f64>() / valid.len() as f64)
}
