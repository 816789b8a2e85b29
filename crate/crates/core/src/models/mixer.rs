//! Set-mixing sublayers: multi-head attention and the Jaccard graph modules.

use rand::Rng;

use crate::diffmath;
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor2;

/// A sublayer that mixes a query set `q` (n×d) with a context set `kv` (m×d)
/// into n×d outputs. Self-mixing passes the same tensor twice.
pub trait Mixer {
    type Cache;

    fn forward(&self, ps: &ParamStore, q: &Tensor2, kv: &Tensor2) -> Result<(Tensor2, Self::Cache)>;

    /// Returns `(dq, dkv)`.
    fn backward(&self, ps: &mut ParamStore, cache: &Self::Cache, dout: &Tensor2) -> (Tensor2, Tensor2);
}

/// Multi-head scaled dot-product attention, no positional encoding.
///
/// The key map has no bias: a key bias only shifts every score in a row by
/// the same amount, which softmax cancels, so it would be a parameter with an
/// identically zero gradient.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: ParamId,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
}

pub struct AttentionCache {
    q_in: Tensor2,
    kv_in: Tensor2,
    q: Vec<Tensor2>,
    k: Vec<Tensor2>,
    v: Vec<Tensor2>,
    /// Row-stochastic attention weights, one n×m matrix per head.
    pub weights: Vec<Tensor2>,
    concat: Tensor2,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(ps, &format!("{name}.q"), d, d, rng)?,
            key: ps.add_glorot(format!("{name}.k.w"), d, d, rng)?,
            value: Linear::new(ps, &format!("{name}.v"), d, d, rng)?,
            out: Linear::new(ps, &format!("{name}.o"), d, d, rng)?,
            heads,
        })
    }

    pub fn param_count(d: usize) -> usize {
        4 * Linear::param_count(d, d) - d
    }
}

impl Mixer for MultiHeadAttention {
    type Cache = AttentionCache;

    fn forward(&self, ps: &ParamStore, q_in: &Tensor2, kv_in: &Tensor2) -> Result<(Tensor2, AttentionCache)> {
        let d = q_in.cols();
        let dh = d / self.heads;
        let widths = vec![dh; self.heads];
        let q = self.query.forward(ps, q_in)?.split_cols(&widths)?;
        let k = kv_in.matmul(ps.value(self.key))?.split_cols(&widths)?;
        let v = self.value.forward(ps, kv_in)?.split_cols(&widths)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut weights = Vec::with_capacity(self.heads);
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let a = diffmath::softmax_rows(&q[h].matmul_t(&k[h])?.scale(scale));
            outs.push(a.matmul(&v[h])?);
            weights.push(a);
        }
        let concat = Tensor2::hcat(&outs.iter().collect::<Vec<_>>())?;
        let out = self.out.forward(ps, &concat)?;
        Ok((
            out,
            AttentionCache {
                q_in: q_in.clone(),
                kv_in: kv_in.clone(),
                q,
                k,
                v,
                weights,
                concat,
            },
        ))
    }

    fn backward(&self, ps: &mut ParamStore, c: &AttentionCache, dout: &Tensor2) -> (Tensor2, Tensor2) {
        let dh = c.q[0].cols();
        let scale = 1.0 / (dh as f64).sqrt();
        let dconcat = self.out.backward(ps, &c.concat, dout);
        let parts = dconcat.split_cols(&vec![dh; self.heads]).expect("head split");
        let mut dq = Vec::with_capacity(self.heads);
        let mut dk = Vec::with_capacity(self.heads);
        let mut dv = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let a = &c.weights[h];
            let da = parts[h].matmul_t(&c.v[h]).expect("dA");
            dv.push(a.t_matmul(&parts[h]).expect("dV"));
            let ds = diffmath::softmax_rows_backward(a, &da).scale(scale);
            dq.push(ds.matmul(&c.k[h]).expect("dQ"));
            dk.push(ds.t_matmul(&c.q[h]).expect("dK"));
        }
        let cat = |xs: &[Tensor2]| Tensor2::hcat(&xs.iter().collect::<Vec<_>>()).expect("head concat");
        let dq_in = self.query.backward(ps, &c.q_in, &cat(&dq));
        let dk = cat(&dk);
        ps.accumulate(self.key, &c.kv_in.t_matmul(&dk).expect("dW_k"));
        let mut dkv = dk.matmul_t(ps.value(self.key)).expect("dkv");
        dkv.add_assign(&self.value.backward(ps, &c.kv_in, &cat(&dv))).expect("dkv");
        (dq_in, dkv)
    }
}

/// Graph module: `R' = R·W_l + b_l`, `W_A = JVS(R', R')`,
/// `G_e = ReLU((W_A·R')·W_g + b_g)`. Ignores `kv`.
#[derive(Clone, Debug)]
pub struct GraphModule {
    pub project: Linear,
    pub mix: Linear,
}

pub struct GraphCache {
    x: Tensor2,
    projected: Tensor2,
    /// Affinity matrix `W_A`.
    pub affinity: Tensor2,
    mixed: Tensor2,
    pre: Tensor2,
}

impl GraphModule {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d_in: usize, d: usize, rng: &mut R) -> Result<Self> {
        Ok(GraphModule {
            project: Linear::new(ps, &format!("{name}.l"), d_in, d, rng)?,
            mix: Linear::new(ps, &format!("{name}.g"), d, d, rng)?,
        })
    }

    pub fn param_count(d_in: usize, d: usize) -> usize {
        Linear::param_count(d_in, d) + Linear::param_count(d, d)
    }

    pub fn apply(&self, ps: &ParamStore, x: &Tensor2) -> Result<(Tensor2, GraphCache)> {
        if x.rows() == 0 {
            return Err(Error::EmptySet { op: "graph_module" });
        }
        let projected = self.project.forward(ps, x)?;
        let affinity = diffmath::jaccard_affinity(&projected);
        let mixed = affinity.matmul(&projected)?;
        let pre = self.mix.forward(ps, &mixed)?;
        Ok((
            diffmath::relu(&pre),
            GraphCache {
                x: x.clone(),
                projected,
                affinity,
                mixed,
                pre,
            },
        ))
    }

    pub fn apply_backward(&self, ps: &mut ParamStore, c: &GraphCache, dout: &Tensor2) -> Tensor2 {
        let dpre = diffmath::relu_backward(&c.pre, dout);
        let dmixed = self.mix.backward(ps, &c.mixed, &dpre);
        let daff = dmixed.matmul_t(&c.projected).expect("dW_A");
        let mut dproj = c.affinity.t_matmul(&dmixed).expect("dR'");
        dproj
            .add_assign(&diffmath::jaccard_affinity_backward(&c.projected, &daff))
            .expect("dR'");
        self.project.backward(ps, &c.x, &dproj)
    }
}

impl Mixer for GraphModule {
    type Cache = GraphCache;

    fn forward(&self, ps: &ParamStore, q: &Tensor2, _kv: &Tensor2) -> Result<(Tensor2, GraphCache)> {
        self.apply(ps, q)
    }

    fn backward(&self, ps: &mut ParamStore, c: &GraphCache, dout: &Tensor2) -> (Tensor2, Tensor2) {
        let dq = self.apply_backward(ps, c, dout);
        let dkv = Tensor2::zeros(dq.rows(), dq.cols());
        (dq, dkv)
    }
}

/// Decoder-to-memory mixing: `Ŵ = JVS(q_i, kv_j)`, `ReLU((Ŵ·kv)·W + b)`.
#[derive(Clone, Debug)]
pub struct CrossGraph {
    pub mix: Linear,
}

pub struct CrossGraphCache {
    q: Tensor2,
    kv: Tensor2,
    pub affinity: Tensor2,
    mixed: Tensor2,
    pre: Tensor2,
}

impl CrossGraph {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Result<Self> {
        Ok(CrossGraph {
            mix: Linear::new(ps, &format!("{name}.g"), d, d, rng)?,
        })
    }

    pub fn param_count(d: usize) -> usize {
        Linear::param_count(d, d)
    }
}

impl Mixer for CrossGraph {
    type Cache = CrossGraphCache;

    fn forward(&self, ps: &ParamStore, q: &Tensor2, kv: &Tensor2) -> Result<(Tensor2, CrossGraphCache)> {
        let affinity = diffmath::jaccard_cross(q, kv)?;
        let mixed = affinity.matmul(kv)?;
        let pre = self.mix.forward(ps, &mixed)?;
        Ok((
            diffmath::relu(&pre),
            CrossGraphCache {
                q: q.clone(),
                kv: kv.clone(),
                affinity,
                mixed,
                pre,
            },
        ))
    }

    fn backward(&self, ps: &mut ParamStore, c: &CrossGraphCache, dout: &Tensor2) -> (Tensor2, Tensor2) {
        let dpre = diffmath::relu_backward(&c.pre, dout);
        let dmixed = self.mix.backward(ps, &c.mixed, &dpre);
        let daff = dmixed.matmul_t(&c.kv).expect("dŴ");
        let (dq, mut dkv) = diffmath::jaccard_cross_backward(&c.q, &c.kv, &daff);
        dkv.add_assign(&c.affinity.t_matmul(&dmixed).expect("dkv")).expect("dkv");
        (dq, dkv)
    }
}
