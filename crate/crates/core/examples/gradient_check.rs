//! Finite-difference check of every model's hand-written backward pass.

use abduction::models::gradcheck::{model_grad_check, toy_config};
use abduction::models::{ModelKind, Pooling};

fn main() -> abduction::Result<()> {
    for kind in ModelKind::NEURAL {
        for pooling in [Pooling::Max, Pooling::Mean] {
            let (cfg, dims) = toy_config(kind, pooling);
            let r = model_grad_check(&cfg, dims, 3, 42)?;
            println!(
                "{kind:<12} {pooling:<4} {:>5} coordinates  max rel err {:.2e}",
                r.coordinates, r.max_rel_err
            );
        }
    }
    Ok(())
}
