//! Abduction models. Every neural model maps a snapshot's relation set to
//! `|A|` logits: relation encoder → per-relation body → set pooling →
//! linear head. The rule-based baseline lives in [`rule`].
//!
//! Parameter counts, with `L(a,b) = a·b + b`, `s = d_vis + d_emb`,
//! `r = 3·d_vis + 2·d_emb`, `K = |A|`, `d = d_model`, `d_b = d_bilinear`:
//!
//! | part | count |
//! |---|---|
//! | relation encoder | `3·L(D_raw, d_vis)` |
//! | feed-forward (width w) | `L(w, 2w) + L(2w, w)` |
//! | stack (width w, input a) | `L(a, w) + n_enc·(mix + 4w + ffn) + n_dec·(mix + cross + 6w + ffn)` |
//! | attention | `mix = cross = 4·L(w, w) − w` (no key bias) |
//! | graph | `mix = 2·L(w, w)`, `cross = L(w, w)` |
//! | bilinear combine | `d_b³ + L(2d_b, d_b) + L(2d_b, d)` |
//! | MLP | `L(r, d) + L(d, d) + L(d, K)` |
//! | Transformer, GNNED | `stack(r → d) + L(d, K)` |
//! | RBP | `2·L(s, d_b) + combine + L(d + d_vis, K)` |
//! | BiGED | `stack(s → d_b) + L(s, d_b) + combine + stack(2s → d) + L(2d + d_vis, K)` |

pub mod bilinear;
pub mod checkpoint;
pub mod gradcheck;
pub mod mixer;
pub mod mlp;
pub mod rule;
pub mod stack;


use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use self::bilinear::{graph_stack, graph_stack_param_count, BigedBody, BigedCache, BigedShape, GraphStack, GraphStackCache, RbpBody, RbpCache};
use self::mixer::MultiHeadAttention;
use self::mlp::{MlpBody, MlpCache};
use self::stack::{EncDecStack, StackCache, StackShape};
use crate::diffmath;
use crate::error::{Error, Result};
use crate::layers::{Ctx, Linear};
use crate::params::ParamStore;
use crate::relation::{EncodedGrads, EncodedSet, RelationEncoder, RelationSet};
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rule,
    Mlp,
    Transformer,
    Gnned,
    Rbp,
    Biged,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Rule,
        ModelKind::Mlp,
        ModelKind::Transformer,
        ModelKind::Gnned,
        ModelKind::Rbp,
        ModelKind::Biged,
    ];
    pub const NEURAL: [ModelKind; 5] = [
        ModelKind::Mlp,
        ModelKind::Transformer,
        ModelKind::Gnned,
        ModelKind::Rbp,
        ModelKind::Biged,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rule => "rule",
            ModelKind::Mlp => "mlp",
            ModelKind::Transformer => "transformer",
            ModelKind::Gnned => "gnned",
            ModelKind::Rbp => "rbp",
            ModelKind::Biged => "biged",
        }
    }

    pub fn is_neural(self) -> bool {
        self != ModelKind::Rule
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Max,
    Mean,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Pooling::Max => "max",
            Pooling::Mean => "mean",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_kind: ModelKind,
    /// Width of each projected visual slot.
    pub d_vis: usize,
    pub d_model: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub n_heads: usize,
    pub d_bilinear: usize,
    pub pooling: Pooling,
    pub dropout: f64,
    pub use_semantics: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model_kind: ModelKind::Biged,
            d_vis: 32,
            d_model: 64,
            n_enc: 1,
            n_dec: 3,
            n_heads: 8,
            d_bilinear: 64,
            pooling: Pooling::Max,
            dropout: 0.1,
            use_semantics: true,
        }
    }
}

impl ModelConfig {
    pub fn with_kind(model_kind: ModelKind) -> Self {
        ModelConfig {
            model_kind,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.d_vis == 0 {
            return bad("d_model and d_vis must be positive".into());
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.d_bilinear == 0 {
            return bad("d_bilinear must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Widths fixed by the data rather than the architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDims {
    pub d_raw: usize,
    pub d_emb: usize,
    pub n_actions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionScores {
    pub logits: Vec<f64>,
}

enum Body {
    Mlp(MlpBody),
    Transformer(EncDecStack<MultiHeadAttention, MultiHeadAttention>),
    Gnned(GraphStack),
    Rbp(RbpBody),
    Biged(BigedBody),
}

enum BodyCache {
    Mlp(MlpCache),
    Transformer(StackCache<MultiHeadAttention, MultiHeadAttention>),
    Gnned(GraphStackCache),
    Rbp(RbpCache),
    Biged(BigedCache),
}

enum PoolCache {
    Max(Vec<usize>),
    Mean,
}

/// Everything [`Network::backward`] needs from a forward pass.
pub struct ForwardCache {
    set: RelationSet,
    encoded: EncodedSet,
    body: BodyCache,
    rows: usize,
    pool: PoolCache,
    pooled: Tensor2,
}

/// Architecture of a neural model; parameters live in a separate store.
pub struct Network {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub encoder: RelationEncoder,
    body: Body,
    pub head: Linear,
}

impl Network {
    pub fn new(config: &ModelConfig, dims: InputDims, seed: u64) -> Result<(Network, ParamStore)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let c = config;
        let encoder = RelationEncoder::new(&mut ps, dims.d_raw, c.d_vis, dims.d_emb, &mut rng)?;
        let r = encoder.relation_dim();
        let s = c.d_vis + dims.d_emb;
        let d = c.d_model;
        let stack = |d_in| StackShape {
            d_in,
            width: d,
            n_enc: c.n_enc,
            n_dec: c.n_dec,
            dropout: c.dropout,
        };
        let body = match c.model_kind {
            ModelKind::Rule => return Err(Error::Config("the rule baseline has no network; use models::rule".into())),
            ModelKind::Mlp => Body::Mlp(MlpBody::new(&mut ps, r, d, &mut rng)?),
            ModelKind::Transformer => {
                let heads = c.n_heads;
                Body::Transformer(EncDecStack::new(
                    &mut ps,
                    "transformer",
                    &stack(r),
                    &mut rng,
                    |ps, n, rng| MultiHeadAttention::new(ps, n, d, heads, rng),
                    |ps, n, rng| MultiHeadAttention::new(ps, n, d, heads, rng),
                )?)
            }
            ModelKind::Gnned => Body::Gnned(graph_stack(&mut ps, "gnned", &stack(r), &mut rng)?),
            ModelKind::Rbp => Body::Rbp(RbpBody::new(&mut ps, s, c.d_bilinear, d, &mut rng)?),
            ModelKind::Biged => Body::Biged(BigedBody::new(&mut ps, &Self::biged_shape(c, dims), &mut rng)?),
        };
        let head = Linear::new(&mut ps, "head", Self::pooled_width(c), dims.n_actions, &mut rng)?;
        Ok((
            Network {
                config: config.clone(),
                dims,
                encoder,
                body,
                head,
            },
            ps,
        ))
    }

    fn biged_shape(c: &ModelConfig, dims: InputDims) -> BigedShape {
        BigedShape {
            d_slot: c.d_vis + dims.d_emb,
            d_b: c.d_bilinear,
            d: c.d_model,
            n_enc: c.n_enc,
            n_dec: c.n_dec,
            dropout: c.dropout,
        }
    }

    /// Width of a relation's final feature, i.e. the head's input.
    pub fn pooled_width(c: &ModelConfig) -> usize {
        match c.model_kind {
            ModelKind::Rbp => c.d_model + c.d_vis,
            ModelKind::Biged => 2 * c.d_model + c.d_vis,
            _ => c.d_model,
        }
    }

    /// Closed-form parameter count (see the module docs).
    pub fn param_count(c: &ModelConfig, dims: InputDims) -> usize {
        let lin = Linear::param_count;
        let r = 3 * c.d_vis + 2 * dims.d_emb;
        let s = c.d_vis + dims.d_emb;
        let d = c.d_model;
        let stack = StackShape {
            d_in: r,
            width: d,
            n_enc: c.n_enc,
            n_dec: c.n_dec,
            dropout: c.dropout,
        };
        let body = match c.model_kind {
            ModelKind::Rule => 0,
            ModelKind::Mlp => MlpBody::param_count(r, d),
            ModelKind::Transformer => {
                let mha = MultiHeadAttention::param_count(d);
                EncDecStack::<MultiHeadAttention, MultiHeadAttention>::param_count(&stack, mha, mha)
            }
            ModelKind::Gnned => graph_stack_param_count(&stack),
            ModelKind::Rbp => RbpBody::param_count(s, c.d_bilinear, d),
            ModelKind::Biged => BigedBody::param_count(&Self::biged_shape(c, dims)),
        };
        RelationEncoder::param_count(dims.d_raw, c.d_vis) + body + lin(Self::pooled_width(c), dims.n_actions)
    }

    /// Per-relation features before pooling (n × pooled width).
    pub fn relation_outputs(&self, ps: &ParamStore, set: &RelationSet, ctx: &mut Ctx) -> Result<Tensor2> {
        let enc = self.encoder.forward(ps, set)?;
        Ok(self.body_forward(ps, &enc, ctx)?.0)
    }

    fn body_forward(&self, ps: &ParamStore, enc: &EncodedSet, ctx: &mut Ctx) -> Result<(Tensor2, BodyCache)> {
        Ok(match &self.body {
            Body::Mlp(b) => {
                let (y, c) = b.forward(ps, &enc.relation_matrix())?;
                (y, BodyCache::Mlp(c))
            }
            Body::Transformer(b) => {
                let (y, c) = b.forward(ps, &enc.relation_matrix(), ctx)?;
                (y, BodyCache::Transformer(c))
            }
            Body::Gnned(b) => {
                let (y, c) = b.forward(ps, &enc.relation_matrix(), ctx)?;
                (y, BodyCache::Gnned(c))
            }
            Body::Rbp(b) => {
                let (rb, c) = b.forward(ps, &enc.human_slot(), &enc.object_slot())?;
                (Tensor2::hcat(&[&rb, &enc.xu])?, BodyCache::Rbp(c))
            }
            Body::Biged(b) => {
                let (rbj, c) = b.forward(ps, &enc.human_slot(), &enc.object_slot(), ctx)?;
                (Tensor2::hcat(&[&rbj, &enc.xu])?, BodyCache::Biged(c))
            }
        })
    }

    fn body_backward(&self, ps: &mut ParamStore, cache: &BodyCache, dy: &Tensor2, grads: &mut EncodedGrads) {
        let (d_vis, d_emb) = (self.config.d_vis, self.dims.d_emb);
        let with_union = |dy: &Tensor2, grads: &mut EncodedGrads| {
            let rest = dy.cols() - d_vis;
            let parts = dy.split_cols(&[rest, d_vis]).expect("union split");
            grads.xu.add_assign(&parts[1]).expect("xu");
            parts.into_iter().next().expect("two parts")
        };
        match (&self.body, cache) {
            (Body::Mlp(b), BodyCache::Mlp(c)) => grads.add_relation_grad(d_vis, d_emb, &b.backward(ps, c, dy)),
            (Body::Transformer(b), BodyCache::Transformer(c)) => {
                grads.add_relation_grad(d_vis, d_emb, &b.backward(ps, c, dy))
            }
            (Body::Gnned(b), BodyCache::Gnned(c)) => grads.add_relation_grad(d_vis, d_emb, &b.backward(ps, c, dy)),
            (Body::Rbp(b), BodyCache::Rbp(c)) => {
                let drb = with_union(dy, grads);
                let (dh, d_o) = b.backward(ps, c, &drb);
                grads.add_human_slot_grad(d_vis, d_emb, &dh);
                grads.add_object_slot_grad(d_vis, d_emb, &d_o);
            }
            (Body::Biged(b), BodyCache::Biged(c)) => {
                let drbj = with_union(dy, grads);
                let (dh, d_o) = b.backward(ps, c, &drbj);
                grads.add_human_slot_grad(d_vis, d_emb, &dh);
                grads.add_object_slot_grad(d_vis, d_emb, &d_o);
            }
            _ => unreachable!("cache produced by a different body"),
        }
    }

    pub fn forward(&self, ps: &ParamStore, set: &RelationSet, ctx: &mut Ctx) -> Result<(Tensor2, ForwardCache)> {
        let encoded = self.encoder.forward(ps, set)?;
        let (rows_out, body) = self.body_forward(ps, &encoded, ctx)?;
        let (pooled, pool) = match self.config.pooling {
            Pooling::Max => {
                let (p, arg) = diffmath::max_pool_set(&rows_out)?;
                (p, PoolCache::Max(arg))
            }
            Pooling::Mean => (diffmath::mean_pool_set(&rows_out)?, PoolCache::Mean),
        };
        let logits = self.head.forward(ps, &pooled)?;
        logits.ensure_finite("model logits")?;
        Ok((
            logits,
            ForwardCache {
                set: set.clone(),
                encoded,
                body,
                rows: rows_out.rows(),
                pool,
                pooled,
            },
        ))
    }

    /// Accumulate parameter gradients for `dlogits` (1 × K).
    pub fn backward(&self, ps: &mut ParamStore, cache: &ForwardCache, dlogits: &Tensor2) {
        let dpooled = self.head.backward(ps, &cache.pooled, dlogits);
        let dy = match &cache.pool {
            PoolCache::Max(arg) => diffmath::max_pool_backward(arg, cache.rows, &dpooled),
            PoolCache::Mean => diffmath::mean_pool_backward(cache.rows, &dpooled),
        };
        let mut grads = EncodedGrads::zeros(&cache.encoded);
        self.body_backward(ps, &cache.body, &dy, &mut grads);
        self.encoder.backward(ps, &cache.set, &grads);
    }

    /// Eval-mode logits.
    pub fn scores(&self, ps: &ParamStore, set: &RelationSet) -> Result<ActionScores> {
        let (logits, _) = self.forward(ps, set, &mut Ctx::eval())?;
        Ok(ActionScores {
            logits: logits.into_data(),
        })
    }
}

/// A network together with its parameters.
pub struct Model {
    pub net: Network,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: &ModelConfig, dims: InputDims, seed: u64) -> Result<Model> {
        let (net, params) = Network::new(config, dims, seed)?;
        Ok(Model { net, params })
    }

    pub fn kind(&self) -> ModelKind {
        self.net.config.model_kind
    }

    pub fn scores(&self, set: &RelationSet) -> Result<ActionScores> {
        self.net.scores(&self.params, set)
    }
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.net.config)
            .field("dims", &self.net.dims)
            .field("params", &self.params.numel())
            .finish()
    }
}
