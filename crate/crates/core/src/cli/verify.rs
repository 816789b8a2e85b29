//! The property suite behind `abduction verify`: finite-difference checks of
//! every differentiable op and every model, permutation invariance, the AP
//! oracle, dataset-construction fixtures and a handful of cheap invariants.

use std::time::Instant;

use itertools::Itertools;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::diffmath::{self, grad_check_with, probe_kinks, Mode};
use crate::error::{Error, Result};
use crate::eval::mean_ap;
use crate::models::gradcheck::{model_grad_check, toy_config, KINK_MARGIN, MODEL_CHECK_STEP};
use crate::models::{checkpoint, Model, ModelKind, Network, Pooling};
use crate::params::{ParamId, ParamStore};
use crate::relation::{build_abduction_dataset, ActionSet, ObjectObservation, RelationSet, Setup, SnapshotRecord};
use crate::seed::{derive_seed, rng};
use crate::synthworld::{generate_episodes, generate_world, Oracle, WorldOverrides};
use crate::tensor::Tensor2;

/// Relative error bound for every finite-difference check.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Absolute logit difference allowed between permutations of one set.
pub const PERMUTATION_TOLERANCE: f64 = 1e-9;
/// Library AP vs the brute-force reference.
pub const AP_TOLERANCE: f64 = 1e-9;
pub const CHECKPOINT_TOLERANCE: f64 = 1e-5;

pub const GRAD_SEEDS: u64 = 100;
pub const PERMUTATION_SEEDS: u64 = 50;
pub const AP_INSTANCES: u64 = 200;

/// Deliberate faults, so tests can confirm the suite catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negate the Jaccard-affinity input gradient.
    FlipJaccardBackward,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Run only checks whose name starts with one of these prefixes.
    pub only: Vec<String>,
    pub fault: Option<Fault>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Wall time of every check whose name starts with `prefix`.
    pub fn seconds(&self, prefix: &str) -> f64 {
        self.checks.iter().filter(|c| c.name.starts_with(prefix)).map(|c| c.seconds).sum()
    }

    /// Whether every check whose name starts with `prefix` passed (and at least one ran).
    pub fn group_passed(&self, prefix: &str) -> bool {
        let mut group = self.checks.iter().filter(|c| c.name.starts_with(prefix)).peekable();
        group.peek().is_some() && group.all(|c| c.passed)
    }
}

/// Outcome of one check body: pass/fail plus a one-line summary.
struct Outcome {
    passed: bool,
    detail: String,
}

type CheckFn = Box<dyn Fn(&VerifyOptions) -> Result<Outcome>>;

fn catalogue() -> Vec<(String, CheckFn)> {
    let mut out: Vec<(String, CheckFn)> = Vec::new();
    for op in OpCase::ALL {
        out.push((format!("grad.op.{}", op.name()), Box::new(move |o| op_suite(op, o.fault))));
    }
    for kind in ModelKind::NEURAL {
        out.push((format!("grad.model.{kind}"), Box::new(move |_| model_suite(kind))));
    }
    for kind in ModelKind::NEURAL {
        out.push((format!("invariance.permutation.{kind}"), Box::new(move |_| permutation_suite(kind))));
    }
    out.push(("map.oracle".into(), Box::new(|_| ap_oracle_suite())));
    out.push(("setup.fixtures".into(), Box::new(|_| setup_fixtures())));
    out.push(("invariant.dropout_eval_identity".into(), Box::new(|_| dropout_identity())));
    out.push(("invariant.singleton_pooling".into(), Box::new(|_| singleton_pooling())));
    out.push(("invariant.checkpoint_roundtrip".into(), Box::new(|_| checkpoint_roundtrip())));
    out.push(("invariant.noiseless_oracle_binary".into(), Box::new(|_| noiseless_oracle_binary())));
    out
}

/// Names of every check, in run order.
pub fn check_names() -> Vec<String> {
    catalogue().into_iter().map(|(n, _)| n).collect()
}

/// Run the suite. `on_check` sees each result as soon as it is available.
pub fn run_suite(opts: &VerifyOptions, mut on_check: impl FnMut(&CheckResult)) -> VerifyReport {
    let mut checks = Vec::new();
    for (name, f) in catalogue() {
        if !opts.only.is_empty() && !opts.only.iter().any(|p| name.starts_with(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match f(opts) {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let result = CheckResult {
            name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_check(&result);
        checks.push(result);
    }
    VerifyReport { checks }
}

// ---- op-level gradients --------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OpCase {
    Linear,
    Relu,
    JaccardAffinity,
    JaccardCross,
    LayerNorm,
    Dropout,
    Softmax,
    Bilinear,
    MaxPool,
    MeanPool,
}

impl OpCase {
    const ALL: [OpCase; 10] = [
        OpCase::Linear,
        OpCase::Relu,
        OpCase::JaccardAffinity,
        OpCase::JaccardCross,
        OpCase::LayerNorm,
        OpCase::Dropout,
        OpCase::Softmax,
        OpCase::Bilinear,
        OpCase::MaxPool,
        OpCase::MeanPool,
    ];

    fn name(self) -> &'static str {
        match self {
            OpCase::Linear => "linear",
            OpCase::Relu => "relu",
            OpCase::JaccardAffinity => "jaccard_affinity",
            OpCase::JaccardCross => "jaccard_cross",
            OpCase::LayerNorm => "layer_norm",
            OpCase::Dropout => "dropout",
            OpCase::Softmax => "softmax_rows",
            OpCase::Bilinear => "bilinear_form",
            OpCase::MaxPool => "max_pool_set",
            OpCase::MeanPool => "mean_pool_set",
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor2::from_raw(rows, cols, data)
}

fn weighted_sum(out: &Tensor2, w: &Tensor2) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// One op instance: its inputs as parameters, and an objective `Σ w ⊙ op(inputs)`.
struct OpInstance {
    ps: ParamStore,
    ids: Vec<ParamId>,
    weights: Tensor2,
    mask: diffmath::DropMask,
}

fn op_instance(op: OpCase, rng: &mut ChaCha8Rng) -> Result<OpInstance> {
    let n = rng.random_range(1..=4);
    let d = rng.random_range(1..=8);
    let mut ps = ParamStore::new();
    let add = |ps: &mut ParamStore, name: &str, t: Tensor2| ps.add(name, t.shape().to_vec(), t);
    let (ids, out_shape) = match op {
        OpCase::Linear => {
            let d_out = rng.random_range(1..=8);
            let ids = vec![
                add(&mut ps, "x", gauss(rng, n, d))?,
                add(&mut ps, "w", gauss(rng, d, d_out))?,
                add(&mut ps, "b", gauss(rng, 1, d_out))?,
            ];
            (ids, (n, d_out))
        }
        OpCase::Relu | OpCase::Dropout | OpCase::Softmax => (vec![add(&mut ps, "x", gauss(rng, n, d))?], (n, d)),
        OpCase::JaccardAffinity => (vec![add(&mut ps, "r", gauss(rng, n, d))?], (n, n)),
        OpCase::JaccardCross => {
            let m = rng.random_range(1..=4);
            let ids = vec![add(&mut ps, "a", gauss(rng, m, d))?, add(&mut ps, "b", gauss(rng, n, d))?];
            (ids, (m, n))
        }
        OpCase::LayerNorm => {
            let d = d.max(2);
            let ids = vec![
                add(&mut ps, "x", gauss(rng, n, d))?,
                add(&mut ps, "gain", gauss(rng, 1, d))?,
                add(&mut ps, "shift", gauss(rng, 1, d))?,
            ];
            (ids, (n, d))
        }
        OpCase::Bilinear => {
            let ids = vec![
                add(&mut ps, "h", gauss(rng, 1, d))?,
                add(&mut ps, "wb", gauss(rng, d * d, d))?,
                add(&mut ps, "o", gauss(rng, n, d))?,
            ];
            (ids, (n, d))
        }
        OpCase::MaxPool | OpCase::MeanPool => (vec![add(&mut ps, "x", gauss(rng, n, d))?], (1, d)),
    };
    let weights = gauss(rng, out_shape.0, out_shape.1);
    let mask = if op == OpCase::Dropout {
        let x = ps.value(ids[0]).clone();
        diffmath::dropout(&x, 0.3, Mode::Train, rng)?.1
    } else {
        None
    };
    Ok(OpInstance { ps, ids, weights, mask })
}

/// Forward value of the op and, with `want`, its analytic input gradients.
fn op_eval(op: OpCase, inst: &OpInstance, ps: &mut ParamStore, want: bool, fault: Option<Fault>) -> Result<f64> {
    let ids = &inst.ids;
    let w = &inst.weights;
    let v = |ps: &ParamStore, i: usize| ps.value(ids[i]).clone();
    let out = match op {
        OpCase::Linear => {
            let (x, wt, b) = (v(ps, 0), v(ps, 1), v(ps, 2));
            let out = diffmath::linear(&x, &wt, &b)?;
            if want {
                let g = diffmath::linear_backward(&x, &wt, w);
                ps.accumulate(ids[0], &g.dx);
                ps.accumulate(ids[1], &g.dw);
                ps.accumulate(ids[2], &g.db);
            }
            out
        }
        OpCase::Relu => {
            let x = v(ps, 0);
            let out = diffmath::relu(&x);
            if want {
                ps.accumulate(ids[0], &diffmath::relu_backward(&x, w));
            }
            out
        }
        OpCase::JaccardAffinity => {
            let r = v(ps, 0);
            let out = diffmath::jaccard_affinity(&r);
            if want {
                let mut g = diffmath::jaccard_affinity_backward(&r, w);
                if fault == Some(Fault::FlipJaccardBackward) {
                    g = g.scale(-1.0);
                }
                ps.accumulate(ids[0], &g);
            }
            out
        }
        OpCase::JaccardCross => {
            let (a, b) = (v(ps, 0), v(ps, 1));
            let out = diffmath::jaccard_cross(&a, &b)?;
            if want {
                let (da, db) = diffmath::jaccard_cross_backward(&a, &b, w);
                ps.accumulate(ids[0], &da);
                ps.accumulate(ids[1], &db);
            }
            out
        }
        OpCase::LayerNorm => {
            let (x, g, s) = (v(ps, 0), v(ps, 1), v(ps, 2));
            let (out, cache) = diffmath::layer_norm(&x, &g, &s)?;
            if want {
                let (dx, dg, ds) = diffmath::layer_norm_backward(&cache, &g, w);
                ps.accumulate(ids[0], &dx);
                ps.accumulate(ids[1], &dg);
                ps.accumulate(ids[2], &ds);
            }
            out
        }
        OpCase::Dropout => {
            // A fixed mask makes dropout a deterministic linear map.
            let x = v(ps, 0);
            let mask = inst.mask.as_ref().expect("dropout instance has a mask");
            let data = x.data().iter().zip(mask).map(|(a, m)| a * m).collect();
            if want {
                ps.accumulate(ids[0], &diffmath::dropout_backward(&inst.mask, w));
            }
            Tensor2::from_raw(x.rows(), x.cols(), data)
        }
        OpCase::Softmax => {
            let y = diffmath::softmax_rows(&v(ps, 0));
            if want {
                ps.accumulate(ids[0], &diffmath::softmax_rows_backward(&y, w));
            }
            y
        }
        OpCase::Bilinear => {
            let (h, wb, o) = (v(ps, 0), v(ps, 1), v(ps, 2));
            let out = diffmath::bilinear_form(&h, &wb, &o)?;
            if want {
                let (dh, dw, d_o) = diffmath::bilinear_form_backward(&h, &wb, &o, w);
                ps.accumulate(ids[0], &dh);
                ps.accumulate(ids[1], &dw);
                ps.accumulate(ids[2], &d_o);
            }
            out
        }
        OpCase::MaxPool => {
            let x = v(ps, 0);
            let (out, arg) = diffmath::max_pool_set(&x)?;
            if want {
                ps.accumulate(ids[0], &diffmath::max_pool_backward(&arg, x.rows(), w));
            }
            out
        }
        OpCase::MeanPool => {
            let x = v(ps, 0);
            let out = diffmath::mean_pool_set(&x)?;
            if want {
                ps.accumulate(ids[0], &diffmath::mean_pool_backward(x.rows(), w));
            }
            out
        }
    };
    Ok(weighted_sum(&out, w))
}

/// Check one random instance per seed; inputs near a kink are redrawn, as for models.
fn op_suite(op: OpCase, fault: Option<Fault>) -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut coords = 0;
    for seed in 0..GRAD_SEEDS {
        let mut checked = false;
        for draw in 0..64 {
            let mut r = rng(derive_seed(derive_seed(seed, op as u64), draw));
            let inst = op_instance(op, &mut r)?;
            let mut ps = inst.ps.clone();
            let (base, probe) = probe_kinks(|| op_eval(op, &inst, &mut ps.clone(), false, None));
            base?;
            if probe.distance < KINK_MARGIN {
                continue;
            }
            let report = grad_check_with(&mut ps, MODEL_CHECK_STEP, true, |ps, want| {
                let (v, p) = probe_kinks(|| op_eval(op, &inst, ps, want, fault));
                if p.signature != probe.signature {
                    return Err(Error::Numeric("kink crossed".into()));
                }
                v
            });
            let report = match report {
                Ok(r) => r,
                Err(Error::Numeric(m)) if m == "kink crossed" => continue,
                Err(e) => return Err(e),
            };
            coords += report.coordinates;
            if report.max_rel_err > worst {
                worst = report.max_rel_err;
                worst_at = format!("seed {seed}, {}", report.worst.map(|(n, k)| format!("{n}[{k}]")).unwrap_or_default());
            }
            checked = true;
            break;
        }
        if !checked {
            return Ok(Outcome {
                passed: false,
                detail: format!("seed {seed}: no kink-free draw"),
            });
        }
    }
    Ok(Outcome {
        passed: worst <= GRAD_TOLERANCE,
        detail: format!("{GRAD_SEEDS} seeds, {coords} coordinates, max rel err {worst:.2e} ({worst_at})"),
    })
}

// ---- model-level gradients -----------------------------------------------------

fn model_suite(kind: ModelKind) -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut coords = 0;
    for seed in 0..GRAD_SEEDS {
        let pooling = if seed % 2 == 0 { Pooling::Max } else { Pooling::Mean };
        let (cfg, dims) = toy_config(kind, pooling);
        let n = 1 + (seed % 4) as usize;
        let r = model_grad_check(&cfg, dims, n, seed)?;
        coords += r.coordinates;
        if r.max_rel_err > worst {
            worst = r.max_rel_err;
            worst_at = format!("seed {seed}, {}", r.worst.map(|(n, k)| format!("{n}[{k}]")).unwrap_or_default());
        }
    }
    Ok(Outcome {
        passed: worst <= GRAD_TOLERANCE,
        detail: format!("{GRAD_SEEDS} seeds, {coords} coordinates, max rel err {worst:.2e} ({worst_at})"),
    })
}

// ---- permutation invariance ----------------------------------------------------

/// Seed `s` draws a set of `1 + s mod 8` relations and compares the logits of
/// every ordering of it against the original order.
fn permutation_suite(kind: ModelKind) -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut orderings = 0usize;
    for seed in 0..PERMUTATION_SEEDS {
        let pooling = if seed % 2 == 0 { Pooling::Max } else { Pooling::Mean };
        let (cfg, dims) = toy_config(kind, pooling);
        let (net, ps) = Network::new(&cfg, dims, seed)?;
        let n = 1 + (seed % 8) as usize;
        let set = RelationSet::random(n, dims.d_raw, dims.d_emb, &mut rng(derive_seed(seed, 1)));
        let base = net.scores(&ps, &set)?.logits;
        for perm in (0..n).permutations(n) {
            let logits = net.scores(&ps, &set.permuted(&perm))?.logits;
            let diff = base.iter().zip(&logits).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff);
            orderings += 1;
        }
    }
    Ok(Outcome {
        passed: worst <= PERMUTATION_TOLERANCE,
        detail: format!("{PERMUTATION_SEEDS} seeds, {orderings} orderings, max |Δlogit| {worst:.2e}"),
    })
}

// ---- AP oracle -----------------------------------------------------------------

/// AP by direct counting: for each positive, precision over every example
/// ranked at or above it (higher score, or equal score and earlier index).
fn reference_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let above = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let total: f64 = positives
        .iter()
        .map(|&i| {
            let ranked = (0..scores.len()).filter(|&j| above(i, j)).count();
            let hits = positives.iter().filter(|&&j| above(i, j)).count();
            hits as f64 / ranked as f64
        })
        .sum();
    Some(total / positives.len() as f64)
}

fn ap_oracle_suite() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for inst in 0..AP_INSTANCES {
        let mut r = rng(derive_seed(0xa9, inst));
        let n = r.random_range(1..=20);
        let k = r.random_range(1..=8);
        // Coarse scores so ties are common.
        let coarse = r.random_bool(0.5);
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..k)
                    .map(|_| if coarse { r.random_range(0..4) as f64 } else { r.random::<f64>() })
                    .collect()
            })
            .collect();
        let labels: Vec<ActionSet> = (0..n)
            .map(|_| {
                let idx: Vec<usize> = (0..k).filter(|_| r.random_bool(0.4)).collect();
                ActionSet::from_indices(k, &idx)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<f64> = (0..k)
            .filter_map(|c| {
                let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
                let lab: Vec<bool> = labels.iter().map(|l| l.contains(c)).collect();
                reference_ap(&col, &lab)
            })
            .collect();
        match mean_ap(&scores, &labels) {
            Ok(m) => {
                let expect = 100.0 * refs.iter().sum::<f64>() / refs.len() as f64;
                worst = worst.max((m - expect).abs() / 100.0);
            }
            Err(_) if refs.is_empty() => {}
            Err(e) => return Err(e),
        }
    }
    Ok(Outcome {
        passed: worst <= AP_TOLERANCE,
        detail: format!("{AP_INSTANCES} instances, max |Δ| {worst:.2e}"),
    })
}

// ---- dataset construction ------------------------------------------------------

fn fixture(video: &str, t: usize, actions: &[usize]) -> SnapshotRecord {
    SnapshotRecord {
        video_id: video.into(),
        snapshot_index: t,
        human_feature: vec![0.0; 2],
        objects: vec![ObjectObservation {
            category: 0,
            feature: vec![0.0; 2],
            union: vec![0.0; 2],
            predicate: None,
        }],
        actions: actions.to_vec(),
    }
}

fn setup_fixtures() -> Result<Outcome> {
    let video = vec![fixture("v", 0, &[1]), fixture("v", 1, &[2]), fixture("v", 2, &[3])];
    let targets = |setup| -> Result<Vec<Vec<usize>>> {
        Ok(build_abduction_dataset(std::slice::from_ref(&video), setup, 4)?
            .iter()
            .map(|e| e.target.indices())
            .collect())
    };
    let mut failures = Vec::new();
    if targets(Setup::AllPast)? != vec![vec![1], vec![1, 2], vec![1, 2, 3]] {
        failures.push("all_past cumulative targets");
    }
    if targets(Setup::LastTwo)? != vec![vec![1, 2], vec![2, 3]] {
        failures.push("last_two pairwise targets");
    }
    let single = build_abduction_dataset(&[vec![fixture("s", 0, &[0])]], Setup::AllPast, 4)?;
    if !single.is_empty() {
        failures.push("single-snapshot video dropped");
    }
    let both = build_abduction_dataset(&[video.clone(), vec![fixture("s", 0, &[0])]], Setup::AllPast, 4)?;
    let last: Vec<bool> = both.iter().map(|e| e.is_last_snapshot).collect();
    if last != [false, false, true] {
        failures.push("is_last_snapshot on the final example only");
    }
    let monotone = both.windows(2).all(|w| w[0].target.is_subset(&w[1].target));
    if !monotone {
        failures.push("all_past monotone");
    }
    Ok(Outcome {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "5 fixtures".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    })
}

// ---- cheap invariants ----------------------------------------------------------

fn dropout_identity() -> Result<Outcome> {
    let mut r = rng(17);
    let mut ok = true;
    for _ in 0..50 {
        let x = gauss(&mut r, 4, 5);
        let (y, _) = diffmath::dropout(&x, r.random_range(0.0..0.9), Mode::Eval, &mut r)?;
        ok &= y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    Ok(Outcome {
        passed: ok,
        detail: "eval-mode dropout is the bitwise identity".into(),
    })
}

fn singleton_pooling() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for kind in ModelKind::NEURAL {
        for seed in 0..5 {
            let (cfg, dims) = toy_config(kind, Pooling::Max);
            let mean_cfg = crate::models::ModelConfig {
                pooling: Pooling::Mean,
                ..cfg.clone()
            };
            let (a, pa) = Network::new(&cfg, dims, seed)?;
            let (b, pb) = Network::new(&mean_cfg, dims, seed)?;
            let set = RelationSet::random(1, dims.d_raw, dims.d_emb, &mut rng(seed));
            let (la, lb) = (a.scores(&pa, &set)?.logits, b.scores(&pb, &set)?.logits);
            worst = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
        }
    }
    Ok(Outcome {
        passed: worst == 0.0,
        detail: format!("n = 1: max and mean pooling agree (max |Δ| {worst:.1e})"),
    })
}

fn checkpoint_roundtrip() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for kind in ModelKind::NEURAL {
        let (cfg, dims) = toy_config(kind, Pooling::Max);
        let model = Model::new(&cfg, dims, 3)?;
        let bytes = checkpoint::to_bytes(&model)?;
        let back = checkpoint::from_bytes(&bytes)?;
        if checkpoint::to_bytes(&back)? != bytes {
            return Ok(Outcome {
                passed: false,
                detail: format!("{kind}: re-saved checkpoint differs"),
            });
        }
        let set = RelationSet::random(3, dims.d_raw, dims.d_emb, &mut rng(5));
        let (a, b) = (model.scores(&set)?.logits, back.scores(&set)?.logits);
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    Ok(Outcome {
        passed: worst <= CHECKPOINT_TOLERANCE,
        detail: format!("f32 round-trip max |Δlogit| {worst:.2e}"),
    })
}

fn noiseless_oracle_binary() -> Result<Outcome> {
    let world = generate_world(11, &WorldOverrides::noiseless())?;
    let episodes = generate_episodes(&world, 12, 20, "v")?;
    let oracle = Oracle::new(&world)?;
    let mut worst = 0.0f64;
    for ep in &episodes {
        for (t, s) in ep.snapshots.iter().enumerate() {
            for p in oracle.posterior(&s.relations, t)? {
                worst = worst.max(p.min(1.0 - p));
            }
        }
    }
    Ok(Outcome {
        passed: worst <= 1e-12,
        detail: format!("noiseless marginals are 0/1 (max distance {worst:.1e})"),
    })
}
