//! Train one model on a generated world, then score it on every test
//! snapshot and on last snapshots only.
//!
//! ```text
//! cargo run --release --example train_and_evaluate -- rbp
//! ```

use abduction::eval::{evaluate, topk_report, EvalMode};
use abduction::models::{ModelConfig, ModelKind};
use abduction::relation::Setup;
use abduction::synthworld::{SyntheticSplits, WorldOverrides};
use abduction::train::{prepare, train_model, TrainConfig};

fn main() -> abduction::Result<()> {
    let kind: ModelKind = std::env::args().nth(1).as_deref().unwrap_or("rbp").parse()?;
    let splits = SyntheticSplits::generate(0, &WorldOverrides::default(), 200, 50)?;
    let world = &splits.world;
    let vocab = world.vocabulary();
    let lookup = abduction::relation::SemanticLookup::new(&vocab, &world.onehot_embeddings())?;
    let train = prepare(&splits.dataset(&splits.train, Setup::AllPast)?, &lookup, true)?;
    let test = prepare(&splits.dataset(&splits.test, Setup::AllPast)?, &lookup, true)?;

    let cfg = ModelConfig {
        d_model: 32,
        d_bilinear: 32,
        ..ModelConfig::with_kind(kind)
    };
    let dims = abduction::models::InputDims {
        d_raw: world.d_raw,
        d_emb: lookup.dim(),
        n_actions: world.n_actions,
    };
    let outcome = train_model(&cfg, &TrainConfig::toy(), dims, &train, 1)?;
    for m in &outcome.curve {
        println!("epoch {:>2}  loss {:.4}  lr {:.1e}", m.epoch, m.loss, m.lr);
    }
    for mode in [EvalMode::All, EvalMode::LastSnapshot] {
        let report = evaluate(&outcome.model, kind.name(), 1, Setup::AllPast, &test, mode)?;
        println!("\n{} ({} examples): mAP {:.2}", report.tag(), report.n_examples, report.map);
        print!("{}", report.to_table(&vocab.actions));
    }
    let top = topk_report(&outcome.model, &test[0], None, &vocab.actions)?;
    println!("\n{}: predicted {:?}, truth {:?}", top.video_id, top.predicted, top.ground_truth);
    Ok(())
}
