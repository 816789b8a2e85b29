//! Save a trained model as an f32 checkpoint, reload it, and compare logits.

use abduction::eval::Scorer;
use abduction::models::{checkpoint, InputDims, ModelConfig, ModelKind};
use abduction::relation::{SemanticLookup, Setup};
use abduction::synthworld::{SyntheticSplits, WorldOverrides};
use abduction::train::{prepare, train_model, TrainConfig};

fn main() -> abduction::Result<()> {
    let splits = SyntheticSplits::generate(0, &WorldOverrides::default(), 60, 20)?;
    let world = &splits.world;
    let lookup = SemanticLookup::new(&world.vocabulary(), &world.onehot_embeddings())?;
    let train = prepare(&splits.dataset(&splits.train, Setup::AllPast)?, &lookup, true)?;
    let test = prepare(&splits.dataset(&splits.test, Setup::AllPast)?, &lookup, true)?;
    let dims = InputDims {
        d_raw: world.d_raw,
        d_emb: lookup.dim(),
        n_actions: world.n_actions,
    };
    let cfg = ModelConfig {
        d_model: 32,
        d_bilinear: 32,
        ..ModelConfig::with_kind(ModelKind::Biged)
    };
    let tc = TrainConfig {
        epochs: 2,
        ..TrainConfig::toy()
    };
    let model = train_model(&cfg, &tc, dims, &train, 0)?.model;

    let dir = tempfile::tempdir().map_err(|e| abduction::Error::io(std::env::temp_dir(), e))?;
    let path = dir.path().join("checkpoint.bin");
    checkpoint::save(&model, &path)?;
    let size = std::fs::metadata(&path).map_err(|e| abduction::Error::io(&path, e))?.len();
    let reloaded = checkpoint::load(&path)?;

    let mut worst = 0.0f64;
    for ex in &test {
        for (a, b) in model.score(ex)?.iter().zip(reloaded.score(ex)?) {
            worst = worst.max((a - b).abs());
        }
    }
    println!("{size} bytes; max |logit difference| over {} examples: {worst:.2e}", test.len());
    Ok(())
}
