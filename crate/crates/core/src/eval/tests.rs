use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::relation::RelationSet;

/// Rank-counting AP: each example's rank is one plus the number of examples
/// scored strictly higher or equal and earlier.
fn brute_force_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let rank = |i: usize| 1 + (0..scores.len()).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let total: f64 = positives
        .iter()
        .map(|&i| {
            let r = rank(i);
            positives.iter().filter(|&&j| rank(j) <= r).count() as f64 / r as f64
        })
        .sum();
    Some(total / positives.len() as f64)
}

fn brute_force_map(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Option<f64> {
    let k = labels[0].len();
    let aps: Vec<f64> = (0..k)
        .filter_map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[c]).collect();
            brute_force_ap(&s, &l)
        })
        .collect();
    (!aps.is_empty()).then(|| 100.0 * aps.iter().sum::<f64>() / aps.len() as f64)
}

#[test]
fn ap_worked_examples() {
    assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
    assert_eq!(average_precision(&[0.9, 0.1], &[false, true]), Some(0.5));
    let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    assert_eq!(average_precision(&[0.3, 0.2], &[false, false]), None);
}

#[test]
fn map_worked_examples() {
    let labels = vec![
        ActionSet::from_indices(2, &[0, 1]).unwrap(),
        ActionSet::from_indices(2, &[]).unwrap(),
    ];
    assert_eq!(mean_ap(&[vec![1.0, 1.0], vec![0.0, 0.0]], &labels).unwrap(), 100.0);
    assert_eq!(map_from_per_class(&[Some(0.5), Some(1.0), None]).unwrap(), 75.0);
    assert!(matches!(map_from_per_class(&[None]), Err(Error::Evaluation(_))));
}

#[test]
fn mean_ap_matches_the_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(1..=20);
        let k = rng.random_range(1..=8);
        // Coarse scores so ties are common.
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(0..5) as f64 / 4.0).collect()).collect();
        let labels: Vec<Vec<bool>> = (0..n).map(|_| (0..k).map(|_| rng.random_bool(0.3)).collect()).collect();
        let Some(want) = brute_force_map(&scores, &labels) else { continue };
        let sets: Vec<ActionSet> = labels
            .iter()
            .map(|l| ActionSet::from_indices(k, &(0..k).filter(|&c| l[c]).collect::<Vec<_>>()).unwrap())
            .collect();
        let got = mean_ap(&scores, &sets).unwrap();
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        checked += 1;
    }
}

proptest! {
    #[test]
    fn ap_is_invariant_to_monotone_transforms(
        raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 1..20)
    ) {
        let scores: Vec<f64> = raw.iter().map(|r| r.0).collect();
        let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
        let moved: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        let a = average_precision(&scores, &labels);
        prop_assert_eq!(a, average_precision(&moved, &labels));
        if let Some(v) = a {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn topk_ranks_with_index_tie_breaks() {
    assert_eq!(topk(&[0.1, 0.9, 0.9, 0.0], 4).unwrap(), vec![1, 2, 0, 3]);
    assert_eq!(topk(&[0.0, 1.0, 0.0], 1).unwrap(), vec![1]);
    assert!(matches!(topk(&[0.0], 2), Err(Error::Parameter(_))));
    assert!(topk(&[0.0], 0).is_err());
}

struct Fixed(Vec<f64>);

impl Scorer for Fixed {
    fn n_actions(&self) -> usize {
        self.0.len()
    }
    fn score(&self, _ex: &Prepared) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

fn prepared(video: &str, target: &[usize], is_last: bool) -> Prepared {
    Prepared {
        video_id: video.into(),
        set: RelationSet::random(1, 2, 1, &mut ChaCha8Rng::seed_from_u64(0)),
        target: ActionSet::from_indices(3, target).unwrap(),
        is_last,
    }
}

#[test]
fn last_snapshot_mode_keeps_one_example_per_video() {
    let mut data = Vec::new();
    for v in 0..5 {
        data.push(prepared(&format!("v{v}"), &[0], false));
        data.push(prepared(&format!("v{v}"), &[0, 1], true));
    }
    let s = Fixed(vec![0.3, 0.2, 0.1]);
    let all = evaluate(&s, "fixed", 0, Setup::AllPast, &data, EvalMode::All).unwrap();
    let last = evaluate(&s, "fixed", 0, Setup::AllPast, &data, EvalMode::LastSnapshot).unwrap();
    assert_eq!((all.n_examples, last.n_examples), (10, 5));
    assert_eq!(last.absent_classes, vec![2]);
    assert_eq!(last.tag(), "last_snapshot_only");
    assert_eq!(all, evaluate(&s, "fixed", 0, Setup::AllPast, &data, EvalMode::All).unwrap());
    // Extra non-final snapshots do not move the last-snapshot report.
    data.push(prepared("v0", &[2], false));
    assert_eq!(last, evaluate(&s, "fixed", 0, Setup::AllPast, &data, EvalMode::LastSnapshot).unwrap());
    let wide = Fixed(vec![0.0; 4]);
    assert!(matches!(evaluate(&wide, "w", 0, Setup::AllPast, &data, EvalMode::All), Err(Error::Config(_))));
}

#[test]
fn topk_report_pairs_predictions_with_ground_truth() {
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let ex = prepared("v", &[0, 2], true);
    let r = topk_report(&Fixed(vec![0.1, 0.9, 0.5]), &ex, None, &names).unwrap();
    assert_eq!(r.predicted, vec!["b", "c"]);
    assert_eq!(r.ground_truth, vec!["a", "c"]);
}

#[test]
fn ablation_csv_has_the_documented_columns() {
    let row = AblationRow {
        model: ModelKind::Mlp,
        semantics: true,
        scheduler: false,
        pooling: crate::models::Pooling::Max,
        embedding: "onehot".into(),
        map_mean: 50.0,
        map_std: 1.5,
    };
    let csv = ablation_csv(std::slice::from_ref(&row));
    assert_eq!(
        csv,
        "model,semantics,scheduler,pooling,embedding,map_mean,map_std\nmlp,true,false,max,onehot,50.0000,1.5000\n"
    );
    assert_eq!(row.label(), "MLP (visual + semantic)");
    assert_eq!(AblationGrid::full(vec![]).cells(), 0);
}
