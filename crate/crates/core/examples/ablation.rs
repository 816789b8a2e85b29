//! A small ablation grid: semantics on/off × max/mean pooling for the MLP.

use abduction::eval::{ablation_csv, ablation_suite, AblationGrid, EmbeddingVariant};
use abduction::models::{ModelConfig, ModelKind, Pooling};
use abduction::relation::{SemanticLookup, Setup};
use abduction::synthworld::{SyntheticSplits, WorldOverrides};
use abduction::train::TrainConfig;

fn main() -> abduction::Result<()> {
    let o = WorldOverrides {
        feature_noise_sigma: Some(2.0),
        ..Default::default()
    };
    let splits = SyntheticSplits::generate(0, &o, 200, 50)?;
    let world = &splits.world;
    let vocab = world.vocabulary();
    let grid = AblationGrid {
        semantics: vec![false, true],
        scheduler: vec![true],
        pooling: vec![Pooling::Max, Pooling::Mean],
        embeddings: vec![
            EmbeddingVariant {
                name: "onehot".into(),
                lookup: SemanticLookup::new(&vocab, &world.onehot_embeddings())?,
            },
            EmbeddingVariant {
                name: "random".into(),
                lookup: SemanticLookup::new(&vocab, &world.random_embeddings(16, 9))?,
            },
        ],
    };
    let base = ModelConfig {
        d_model: 32,
        ..ModelConfig::with_kind(ModelKind::Mlp)
    };
    let train_cfg = TrainConfig {
        runs: 2,
        ..TrainConfig::toy()
    };
    let rows = ablation_suite(
        &[ModelKind::Mlp],
        &base,
        &train_cfg,
        &grid,
        world.d_raw,
        world.n_actions,
        &splits.dataset(&splits.train, Setup::AllPast)?,
        &splits.dataset(&splits.test, Setup::AllPast)?,
        0,
    )?;
    for r in &rows {
        println!("{:<40} {:<5} {:<7} {:.2} ± {:.2}", r.label(), r.pooling, r.embedding, r.map_mean, r.map_std);
    }
    println!("\n{}", ablation_csv(&rows));
    Ok(())
}
