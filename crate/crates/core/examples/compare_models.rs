//! Rule baseline, frequency prior, Bayes oracle and every neural model on
//! one generated world, printed as a results table.
//!
//! ```text
//! cargo run --release --example compare_models
//! ```

use abduction::eval::{display_name, mean_ap_of, results_table};
use abduction::models::rule::{rule_fit, FrequencyPrior};
use abduction::models::{InputDims, ModelConfig, ModelKind};
use abduction::relation::{SemanticLookup, Setup};
use abduction::synthworld::{oracle_map, SyntheticSplits, WorldOverrides};
use abduction::train::{prepare, train_model, TrainConfig};

fn main() -> abduction::Result<()> {
    let splits = SyntheticSplits::generate(0, &WorldOverrides::default(), 200, 50)?;
    let world = &splits.world;
    let lookup = SemanticLookup::new(&world.vocabulary(), &world.onehot_embeddings())?;
    let train_ex = splits.dataset(&splits.train, Setup::AllPast)?;
    let train = prepare(&train_ex, &lookup, true)?;
    let test = prepare(&splits.dataset(&splits.test, Setup::AllPast)?, &lookup, true)?;
    let dims = InputDims {
        d_raw: world.d_raw,
        d_emb: lookup.dim(),
        n_actions: world.n_actions,
    };

    let mut rows = vec![(
        display_name(ModelKind::Rule).to_string(),
        mean_ap_of(&rule_fit(&train_ex, world.n_actions)?, &test)?,
    )];
    for kind in ModelKind::NEURAL {
        let cfg = ModelConfig {
            d_model: 32,
            d_bilinear: 32,
            ..ModelConfig::with_kind(kind)
        };
        let o = train_model(&cfg, &TrainConfig::toy(), dims, &train, 0)?;
        rows.push((display_name(kind).to_string(), mean_ap_of(&o.model, &test)?));
    }
    print!("{}", results_table(&rows));
    println!(
        "frequency prior {:.2}, oracle {:.2}",
        mean_ap_of(&FrequencyPrior::fit(&train_ex, world.n_actions)?, &test)?,
        oracle_map(world, &splits.test)?
    );
    Ok(())
}
