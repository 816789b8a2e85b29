use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{InputDims, ModelConfig, ModelKind, Pooling};
use crate::relation::{AbductionExample, SemanticLookup};
use crate::train::{prepare, train_runs, TrainConfig};

/// A named embedding table resolved against the vocabulary.
#[derive(Clone, Debug)]
pub struct EmbeddingVariant {
    pub name: String,
    pub lookup: SemanticLookup,
}

/// Axes of the ablation cross-product.
#[derive(Clone, Debug)]
pub struct AblationGrid {
    pub semantics: Vec<bool>,
    pub scheduler: Vec<bool>,
    pub pooling: Vec<Pooling>,
    pub embeddings: Vec<EmbeddingVariant>,
}

impl AblationGrid {
    /// semantics × scheduler × pooling (× embeddings).
    pub fn full(embeddings: Vec<EmbeddingVariant>) -> Self {
        AblationGrid {
            semantics: vec![false, true],
            scheduler: vec![false, true],
            pooling: vec![Pooling::Max, Pooling::Mean],
            embeddings,
        }
    }

    pub fn cells(&self) -> usize {
        self.semantics.len() * self.scheduler.len() * self.pooling.len() * self.embeddings.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: ModelKind,
    pub semantics: bool,
    pub scheduler: bool,
    pub pooling: Pooling,
    pub embedding: String,
    pub map_mean: f64,
    pub map_std: f64,
}

impl AblationRow {
    /// Label in the style "MLP (visual + semantic + scheduler)".
    pub fn label(&self) -> String {
        let mut parts = vec!["visual"];
        if self.semantics {
            parts.push("semantic");
        }
        if self.scheduler {
            parts.push("scheduler");
        }
        format!("{} ({})", super::display_name(self.model), parts.join(" + "))
    }
}

/// Train and score every grid cell for every model, `train_cfg.runs` seeds each.
/// Every cell reuses the same run seeds, so cells differ only in configuration.
pub fn ablation_suite(
    kinds: &[ModelKind],
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    grid: &AblationGrid,
    d_raw: usize,
    n_actions: usize,
    train: &[AbductionExample],
    test: &[AbductionExample],
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if grid.cells() == 0 {
        return Err(Error::Config("ablation grid has an empty axis".into()));
    }
    let mut rows = Vec::new();
    for &model in kinds {
        if !model.is_neural() {
            return Err(Error::Config(format!("`{model}` has no trainable configuration to ablate")));
        }
        for emb in &grid.embeddings {
            let dims = InputDims {
                d_raw,
                d_emb: emb.lookup.dim(),
                n_actions,
            };
            for &semantics in &grid.semantics {
                let train_p = prepare(train, &emb.lookup, semantics)?;
                let test_p = prepare(test, &emb.lookup, semantics)?;
                for &scheduler in &grid.scheduler {
                    for &pooling in &grid.pooling {
                        let cfg = ModelConfig {
                            model_kind: model,
                            use_semantics: semantics,
                            pooling,
                            ..base.clone()
                        };
                        let tc = TrainConfig {
                            scheduler,
                            ..train_cfg.clone()
                        };
                        let (_, _, summary) = train_runs(&cfg, &tc, dims, &train_p, &test_p, seed)?;
                        log::info!(
                            "ablation {model} semantics={semantics} scheduler={scheduler} pooling={pooling} embedding={}: {:.2}",
                            emb.name,
                            summary.map_mean
                        );
                        rows.push(AblationRow {
                            model,
                            semantics,
                            scheduler,
                            pooling,
                            embedding: emb.name.clone(),
                            map_mean: summary.map_mean,
                            map_std: summary.map_std,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("model,semantics,scheduler,pooling,embedding,map_mean,map_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.4},{:.4}\n",
            r.model, r.semantics, r.scheduler, r.pooling, r.embedding, r.map_mean, r.map_std
        ));
    }
    out
}
