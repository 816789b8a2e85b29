//! Parameterized building blocks shared by the relation encoder and the models.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{self, DropMask, LayerNormCache, Mode};
use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor2;

/// Forward-pass context: train/eval mode plus the dropout stream.
pub struct Ctx {
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn eval() -> Self {
        use rand::SeedableRng;
        Ctx {
            mode: Mode::Eval,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn train(rng: ChaCha8Rng) -> Self {
        Ctx { mode: Mode::Train, rng }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        Ok(Linear {
            w: ps.add_glorot(format!("{name}.w"), d_in, d_out, rng)?,
            b: ps.add_const(format!("{name}.b"), 1, d_out, 0.0)?,
        })
    }

    pub fn param_count(d_in: usize, d_out: usize) -> usize {
        d_in * d_out + d_out
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor2) -> Result<Tensor2> {
        diffmath::linear(x, ps.value(self.w), ps.value(self.b))
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&self, ps: &mut ParamStore, x: &Tensor2, dout: &Tensor2) -> Tensor2 {
        let g = diffmath::linear_backward(x, ps.value(self.w), dout);
        ps.accumulate(self.w, &g.dw);
        ps.accumulate(self.b, &g.db);
        g.dx
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: ps.add_const(format!("{name}.gain"), 1, d, 1.0)?,
            shift: ps.add_const(format!("{name}.shift"), 1, d, 0.0)?,
        })
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor2) -> Result<(Tensor2, LayerNormCache)> {
        diffmath::layer_norm(x, ps.value(self.gain), ps.value(self.shift))
    }

    pub fn backward(&self, ps: &mut ParamStore, cache: &LayerNormCache, dout: &Tensor2) -> Tensor2 {
        let (dx, dg, ds) = diffmath::layer_norm_backward(cache, ps.value(self.gain), dout);
        ps.accumulate(self.gain, &dg);
        ps.accumulate(self.shift, &ds);
        dx
    }
}

/// Position-wise `linear → ReLU → linear`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

pub struct FeedForwardCache {
    x: Tensor2,
    pre: Tensor2,
    act: Tensor2,
}

impl FeedForward {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d: usize, hidden: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(ps, &format!("{name}.up"), d, hidden, rng)?,
            down: Linear::new(ps, &format!("{name}.down"), hidden, d_out, rng)?,
        })
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor2) -> Result<(Tensor2, FeedForwardCache)> {
        let pre = self.up.forward(ps, x)?;
        let act = diffmath::relu(&pre);
        let out = self.down.forward(ps, &act)?;
        Ok((
            out,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
            },
        ))
    }

    pub fn backward(&self, ps: &mut ParamStore, cache: &FeedForwardCache, dout: &Tensor2) -> Tensor2 {
        let dact = self.down.backward(ps, &cache.act, dout);
        let dpre = diffmath::relu_backward(&cache.pre, &dact);
        self.up.backward(ps, &cache.x, &dpre)
    }
}

/// Thin wrapper so layers can hold a rate and thread the context's stream.
#[derive(Clone, Copy, Debug)]
pub struct Dropout(pub f64);

impl Dropout {
    pub fn forward(&self, x: &Tensor2, ctx: &mut Ctx) -> Result<(Tensor2, DropMask)> {
        diffmath::dropout(x, self.0, ctx.mode, &mut ctx.rng)
    }
}
