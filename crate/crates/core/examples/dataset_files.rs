//! Write a generated dataset in the on-disk JSON-lines format, then drive
//! the same commands the CLI uses from a config that points at the files.

use abduction::cli::{cmd_eval, cmd_generate, cmd_train, Baseline, DataPaths, EvalSource, RunConfig};
use abduction::models::ModelKind;
use abduction::train::TrainConfig;

fn main() -> abduction::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| abduction::Error::io(std::env::temp_dir(), e))?;
    let mut cfg = RunConfig {
        out: dir.path().join("data"),
        ..RunConfig::default()
    };
    cfg.episodes.train = 100;
    cfg.episodes.test = 30;
    let summary = cmd_generate(&cfg)?;
    println!("wrote {} train / {} test episodes, oracle mAP {:?}", summary.train_episodes, summary.test_episodes, summary.oracle_test_map);
    for entry in std::fs::read_dir(&cfg.out).map_err(|e| abduction::Error::io(&cfg.out, e))?.flatten() {
        println!("  {}", entry.file_name().to_string_lossy());
    }

    let from_files = RunConfig {
        world: None,
        data: Some(DataPaths::from_dir(&cfg.out)),
        out: dir.path().join("runs"),
        train: TrainConfig {
            epochs: 3,
            runs: 1,
            ..TrainConfig::toy()
        },
        ..cfg.clone()
    };
    let mut mlp = from_files.clone();
    mlp.model.model_kind = ModelKind::Mlp;
    let s = cmd_train(&mlp)?;
    println!("MLP test mAP {:.2}", s.map_mean);

    let (report, _, _) = cmd_eval(&from_files, &EvalSource::Baseline(Baseline::Rule), None)?;
    println!("rule baseline mAP {:.2} on {} examples", report.map, report.n_examples);
    Ok(())
}
