//! Per-video training with a max-margin loss, AdamW, plateau scheduling and
//! gradient clipping.

mod optim;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use optim::{clip_gradients, margin_loss, optim_step, OptimState, Plateau, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use crate::error::{Error, Result};
use crate::eval;
use crate::layers::Ctx;
use crate::models::{InputDims, Model, ModelConfig};
use crate::relation::{AbductionExample, ActionSet, RelationSet, SemanticLookup};
use crate::seed::{derive_seed, rng};
use crate::tensor::Tensor2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub lr_factor: f64,
    /// Multiplies both `lr_init` and `lr_min`; small synthetic models use 100.
    pub lr_scale: f64,
    pub clip_norm: f64,
    pub margin: f64,
    pub weight_decay: f64,
    pub runs: usize,
    /// Plateau scheduler on/off.
    pub scheduler: bool,
    /// Training examples scored each epoch for `map_train_subset`.
    pub map_subset: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr_init: 1e-5,
            lr_min: 1e-7,
            lr_factor: 0.5,
            lr_scale: 1.0,
            clip_norm: 5.0,
            margin: 1.0,
            weight_decay: 0.01,
            runs: 3,
            scheduler: true,
            map_subset: 64,
        }
    }
}

impl TrainConfig {
    /// The documented override for small synthetic models: lr ×100.
    pub fn toy() -> Self {
        TrainConfig {
            lr_scale: 100.0,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!("lr_factor {} outside (0, 1)", self.lr_factor));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm {} must be positive", self.clip_norm));
        }
        if !(self.lr_init > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr_init && self.lr_scale > 0.0) {
            return bad("need 0 < lr_min ≤ lr_init and lr_scale > 0".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        Ok(())
    }
}

/// One example with its relation set materialized.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub video_id: String,
    pub set: RelationSet,
    pub target: ActionSet,
    pub is_last: bool,
}

pub fn prepare(ds: &[AbductionExample], lookup: &SemanticLookup, use_semantics: bool) -> Result<Vec<Prepared>> {
    ds.iter()
        .map(|e| {
            Ok(Prepared {
                video_id: e.video_id.clone(),
                set: RelationSet::from_snapshot(&e.snapshot, lookup, use_semantics)?,
                target: e.target.clone(),
                is_last: e.is_last_snapshot,
            })
        })
        .collect()
}

fn video_batches(data: &[Prepared]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=data.len() {
        if i == data.len() || data[i].video_id != data[start].video_id {
            out.push(start..i);
            start = i;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    /// Learning rate after the scheduler has seen this epoch.
    pub lr: f64,
    pub map_train_subset: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<EpochMetrics>,
}

/// Train one model. A pure function of its arguments: the seed fixes the
/// initialization, the per-epoch video order and the dropout stream.
///
/// Examples whose target is empty or covers every class carry no ranking
/// signal for the margin loss and are skipped.
pub fn train_model(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    dims: InputDims,
    train: &[Prepared],
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if let Some(bad) = train.iter().find(|e| e.target.width() != dims.n_actions) {
        return Err(Error::Config(format!(
            "example of `{}` has {} actions, model expects {}",
            bad.video_id,
            bad.target.width(),
            dims.n_actions
        )));
    }
    let mut model = Model::new(model_cfg, dims, derive_seed(seed, 0))?;
    let mut order_rng = rng(derive_seed(seed, 1));
    let mut ctx = Ctx::train(rng(derive_seed(seed, 2)));
    let mut state = OptimState::new(&model.params, cfg.lr_init * cfg.lr_scale, cfg.weight_decay);
    let mut plateau = Plateau::new(cfg.lr_factor, cfg.lr_min * cfg.lr_scale);
    let batches = video_batches(train);
    let subset = &train[..cfg.map_subset.min(train.len())];
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..batches.len()).collect();
        order.shuffle(&mut order_rng);
        let (mut total, mut counted) = (0.0, 0usize);
        for &b in &order {
            let video = &train[batches[b].clone()];
            let usable: Vec<&Prepared> = video
                .iter()
                .filter(|e| !e.target.is_empty() && !e.target.is_full())
                .collect();
            if usable.is_empty() {
                continue;
            }
            let diverged = || Error::Diverged {
                epoch,
                video_id: video[0].video_id.clone(),
                lr: state.lr,
            };
            model.params.zero_grads();
            let weight = 1.0 / usable.len() as f64;
            let mut video_loss = 0.0;
            for ex in usable {
                let (logits, cache) = model.net.forward(&model.params, &ex.set, &mut ctx).map_err(|e| match e {
                    Error::Numeric(_) => diverged(),
                    other => other,
                })?;
                let (loss, grad) = margin_loss(logits.data(), &ex.target, cfg.margin)?;
                video_loss += weight * loss;
                let dlogits = Tensor2::from_vec(1, grad.len(), grad.into_iter().map(|g| g * weight).collect())?;
                model.net.backward(&mut model.params, &cache, &dlogits);
            }
            if !video_loss.is_finite() || !model.params.grad_norm().is_finite() {
                return Err(diverged());
            }
            clip_gradients(&mut model.params, cfg.clip_norm)?;
            optim_step(&mut model.params, &mut state)?;
            total += video_loss;
            counted += 1;
        }
        let loss = if counted > 0 { total / counted as f64 } else { 0.0 };
        if cfg.scheduler {
            state.lr = plateau.step(loss, state.lr);
        }
        let map_train_subset = eval::mean_ap_of(&model, subset).ok();
        log::info!("epoch {epoch}: loss {loss:.6} lr {:.3e}", state.lr);
        curve.push(EpochMetrics {
            epoch,
            loss,
            lr: state.lr,
            map_train_subset,
        });
    }
    Ok(TrainOutcome { model, curve })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub map_mean: f64,
    /// Sample standard deviation across runs (0 for a single run).
    pub map_std: f64,
    pub runs: usize,
    pub config_hash: String,
}

/// SHA-256 of the canonical JSON of both configs.
pub fn config_hash(model_cfg: &ModelConfig, cfg: &TrainConfig) -> String {
    let text = serde_json::to_string(&(model_cfg, cfg)).expect("configs serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Train `cfg.runs` replicas (run `r` uses `derive_seed(seed, r)`) and score
/// each on `test`.
pub fn train_runs(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    dims: InputDims,
    train: &[Prepared],
    test: &[Prepared],
    seed: u64,
) -> Result<(Vec<TrainOutcome>, Vec<f64>, RunSummary)> {
    cfg.validate()?;
    let outcomes = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| train_model(model_cfg, cfg, dims, train, derive_seed(seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let maps = outcomes
        .iter()
        .map(|o| eval::mean_ap_of(&o.model, test))
        .collect::<Result<Vec<_>>>()?;
    let (map_mean, map_std) = mean_std(&maps);
    let summary = RunSummary {
        map_mean,
        map_std,
        runs: cfg.runs,
        config_hash: config_hash(model_cfg, cfg),
    };
    Ok((outcomes, maps, summary))
}
