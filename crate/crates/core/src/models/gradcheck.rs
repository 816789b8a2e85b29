//! End-to-end finite-difference checks of whole models.

use std::cell::Cell;

use super::{InputDims, ModelConfig, ModelKind, Network, Pooling};
use crate::diffmath::{grad_check_with, probe_kinks};
use crate::error::{Error, Result};
use crate::layers::Ctx;
use crate::relation::RelationSet;
use crate::seed::{derive_seed, rng};
use crate::tensor::Tensor2;

/// Finite-difference step; the check extrapolates from `h` and `2h`.
pub const MODEL_CHECK_STEP: f64 = 1e-3;
/// Inputs whose forward pass comes closer than this to a ReLU or max-pool
/// kink are redrawn before checking.
pub const KINK_MARGIN: f64 = 2e-3;
const MAX_DRAWS: u64 = 64;

/// A toy configuration: `d_model = 8`, `d_vis = 4`, `d_b = 4`, two heads,
/// one encoder and one decoder layer.
pub fn toy_config(kind: ModelKind, pooling: Pooling) -> (ModelConfig, InputDims) {
    let cfg = ModelConfig {
        model_kind: kind,
        d_vis: 4,
        d_model: 8,
        n_enc: 1,
        n_dec: 1,
        n_heads: 2,
        d_bilinear: 4,
        pooling,
        dropout: 0.1,
        use_semantics: true,
    };
    let dims = InputDims {
        d_raw: 5,
        d_emb: 3,
        n_actions: 4,
    };
    (cfg, dims)
}

#[derive(Clone, Debug)]
pub struct ModelGradCheck {
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
    /// Input sets drawn before one was far enough from every kink.
    pub draws: u64,
}

/// Check the analytic gradient of `sum(logits)` (eval mode) for a model
/// initialized from `seed` on a random set of `n` relations.
///
/// Piecewise-linear units make the objective non-differentiable on a
/// measure-zero set; a central difference straddling such a point is not a
/// derivative estimate. The input set is therefore redrawn until the
/// unperturbed pass keeps [`KINK_MARGIN`] from every kink and every
/// perturbed pass takes the same branch.
pub fn model_grad_check(cfg: &ModelConfig, dims: InputDims, n: usize, seed: u64) -> Result<ModelGradCheck> {
    let (net, params) = Network::new(cfg, dims, seed)?;
    for draw in 0..MAX_DRAWS {
        let set = RelationSet::random(n, dims.d_raw, dims.d_emb, &mut rng(derive_seed(seed, draw)));
        let (base, probe) = probe_kinks(|| net.forward(&params, &set, &mut Ctx::eval()).map(|r| r.0));
        base?;
        if probe.distance < KINK_MARGIN {
            continue;
        }
        let crossed = Cell::new(false);
        let mut ps = params.clone();
        let report = grad_check_with(&mut ps, MODEL_CHECK_STEP, true, |ps, want| {
            let (out, p) = probe_kinks(|| net.forward(ps, &set, &mut Ctx::eval()));
            let (logits, cache) = out?;
            if p.signature != probe.signature {
                crossed.set(true);
                return Err(Error::Numeric("finite-difference step crosses a kink".into()));
            }
            if want {
                net.backward(ps, &cache, &Tensor2::filled(1, logits.cols(), 1.0));
            }
            Ok(logits.sum())
        });
        match report {
            Err(_) if crossed.get() => continue,
            Err(e) => return Err(e),
            Ok(r) => {
                return Ok(ModelGradCheck {
                    max_rel_err: r.max_rel_err,
                    worst: r.worst,
                    coordinates: r.coordinates,
                    draws: draw + 1,
                })
            }
        }
    }
    Err(Error::Numeric(format!(
        "{}: no kink-free input among {MAX_DRAWS} draws (seed {seed})",
        cfg.model_kind
    )))
}
