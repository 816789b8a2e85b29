//! Post-norm encoder/decoder layers over relation sets, generic in the
//! mixing sublayer. With [`MultiHeadAttention`](super::mixer::MultiHeadAttention)
//! this is the set-summarizing Transformer; with the graph modules it is GNNED.
//!
//! Encoder layer: `x1 = LN(x + drop(mix(x, x)))`, `x2 = LN(x1 + drop(ffn(x1)))`.
//! Decoder layer: self-mix, then cross-mix against the encoder memory, then
//! the feed-forward block, each followed by dropout, residual and LN. The
//! decoder input is the projected relation set itself, so the stack keeps one
//! output row per relation.

use rand::Rng;

use super::mixer::Mixer;
use crate::diffmath::{self, DropMask, LayerNormCache};
use crate::error::Result;
use crate::layers::{Ctx, Dropout, FeedForward, FeedForwardCache, LayerNorm, Linear};
use crate::params::ParamStore;
use crate::tensor::Tensor2;

pub fn ffn_hidden(d: usize) -> usize {
    2 * d
}

pub fn ffn_param_count(d: usize) -> usize {
    Linear::param_count(d, ffn_hidden(d)) + Linear::param_count(ffn_hidden(d), d)
}

pub struct EncoderLayer<M> {
    pub mixer: M,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
    pub dropout: Dropout,
}

pub struct EncoderCache<C> {
    pub mix: C,
    drop1: DropMask,
    norm1: LayerNormCache,
    ffn: FeedForwardCache,
    drop2: DropMask,
    norm2: LayerNormCache,
}

fn residual(x: &Tensor2, y: &Tensor2) -> Tensor2 {
    x.add(y).expect("residual shapes agree")
}

impl<M: Mixer> EncoderLayer<M> {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d: usize, dropout: f64, mixer: M, rng: &mut R) -> Result<Self> {
        Ok(EncoderLayer {
            mixer,
            norm1: LayerNorm::new(ps, &format!("{name}.ln1"), d)?,
            ffn: FeedForward::new(ps, &format!("{name}.ffn"), d, ffn_hidden(d), d, rng)?,
            norm2: LayerNorm::new(ps, &format!("{name}.ln2"), d)?,
            dropout: Dropout(dropout),
        })
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor2, ctx: &mut Ctx) -> Result<(Tensor2, EncoderCache<M::Cache>)> {
        let (a, mix) = self.mixer.forward(ps, x, x)?;
        let (a, drop1) = self.dropout.forward(&a, ctx)?;
        let (x1, norm1) = self.norm1.forward(ps, &residual(x, &a))?;
        let (f, ffn) = self.ffn.forward(ps, &x1)?;
        let (f, drop2) = self.dropout.forward(&f, ctx)?;
        let (x2, norm2) = self.norm2.forward(ps, &residual(&x1, &f))?;
        Ok((
            x2,
            EncoderCache {
                mix,
                drop1,
                norm1,
                ffn,
                drop2,
                norm2,
            },
        ))
    }

    pub fn backward(&self, ps: &mut ParamStore, c: &EncoderCache<M::Cache>, dout: &Tensor2) -> Tensor2 {
        let ds2 = self.norm2.backward(ps, &c.norm2, dout);
        let mut dx1 = self.ffn.backward(ps, &c.ffn, &diffmath::dropout_backward(&c.drop2, &ds2));
        dx1.add_assign(&ds2).expect("dx1");
        let ds1 = self.norm1.backward(ps, &c.norm1, &dx1);
        let (dq, dkv) = self.mixer.backward(ps, &c.mix, &diffmath::dropout_backward(&c.drop1, &ds1));
        let mut dx = ds1;
        dx.add_assign(&dq).expect("dx");
        dx.add_assign(&dkv).expect("dx");
        dx
    }
}

pub struct DecoderLayer<S, C> {
    pub self_mixer: S,
    pub norm1: LayerNorm,
    pub cross_mixer: C,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
    pub dropout: Dropout,
}

pub struct DecoderCache<SC, CC> {
    pub self_mix: SC,
    drop1: DropMask,
    norm1: LayerNormCache,
    pub cross_mix: CC,
    drop2: DropMask,
    norm2: LayerNormCache,
    ffn: FeedForwardCache,
    drop3: DropMask,
    norm3: LayerNormCache,
}

impl<S: Mixer, C: Mixer> DecoderLayer<S, C> {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d: usize, dropout: f64, self_mixer: S, cross_mixer: C, rng: &mut R) -> Result<Self> {
        Ok(DecoderLayer {
            self_mixer,
            norm1: LayerNorm::new(ps, &format!("{name}.ln1"), d)?,
            cross_mixer,
            norm2: LayerNorm::new(ps, &format!("{name}.ln2"), d)?,
            ffn: FeedForward::new(ps, &format!("{name}.ffn"), d, ffn_hidden(d), d, rng)?,
            norm3: LayerNorm::new(ps, &format!("{name}.ln3"), d)?,
            dropout: Dropout(dropout),
        })
    }

    pub fn forward(&self, ps: &ParamStore, y: &Tensor2, memory: &Tensor2, ctx: &mut Ctx) -> Result<(Tensor2, DecoderCache<S::Cache, C::Cache>)> {
        let (s, self_mix) = self.self_mixer.forward(ps, y, y)?;
        let (s, drop1) = self.dropout.forward(&s, ctx)?;
        let (y1, norm1) = self.norm1.forward(ps, &residual(y, &s))?;
        let (c, cross_mix) = self.cross_mixer.forward(ps, &y1, memory)?;
        let (c, drop2) = self.dropout.forward(&c, ctx)?;
        let (y2, norm2) = self.norm2.forward(ps, &residual(&y1, &c))?;
        let (f, ffn) = self.ffn.forward(ps, &y2)?;
        let (f, drop3) = self.dropout.forward(&f, ctx)?;
        let (y3, norm3) = self.norm3.forward(ps, &residual(&y2, &f))?;
        Ok((
            y3,
            DecoderCache {
                self_mix,
                drop1,
                norm1,
                cross_mix,
                drop2,
                norm2,
                ffn,
                drop3,
                norm3,
            },
        ))
    }

    /// Returns `(dy, dmemory)`.
    pub fn backward(&self, ps: &mut ParamStore, c: &DecoderCache<S::Cache, C::Cache>, dout: &Tensor2) -> (Tensor2, Tensor2) {
        let ds3 = self.norm3.backward(ps, &c.norm3, dout);
        let mut dy2 = self.ffn.backward(ps, &c.ffn, &diffmath::dropout_backward(&c.drop3, &ds3));
        dy2.add_assign(&ds3).expect("dy2");
        let ds2 = self.norm2.backward(ps, &c.norm2, &dy2);
        let (dq, dmem) = self
            .cross_mixer
            .backward(ps, &c.cross_mix, &diffmath::dropout_backward(&c.drop2, &ds2));
        let mut dy1 = ds2;
        dy1.add_assign(&dq).expect("dy1");
        let ds1 = self.norm1.backward(ps, &c.norm1, &dy1);
        let (dq, dkv) = self
            .self_mixer
            .backward(ps, &c.self_mix, &diffmath::dropout_backward(&c.drop1, &ds1));
        let mut dy = ds1;
        dy.add_assign(&dq).expect("dy");
        dy.add_assign(&dkv).expect("dy");
        (dy, dmem)
    }
}

/// Input projection, `n_enc` encoder layers, `n_dec` decoder layers.
pub struct EncDecStack<S, C> {
    pub input: Linear,
    pub encoders: Vec<EncoderLayer<S>>,
    pub decoders: Vec<DecoderLayer<S, C>>,
}

pub struct StackCache<S: Mixer, C: Mixer> {
    x: Tensor2,
    pub encoders: Vec<EncoderCache<S::Cache>>,
    pub decoders: Vec<DecoderCache<S::Cache, C::Cache>>,
}

pub struct StackShape {
    pub d_in: usize,
    pub width: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub dropout: f64,
}

impl<S: Mixer, C: Mixer> EncDecStack<S, C> {
    pub fn new<R: Rng>(
        ps: &mut ParamStore,
        name: &str,
        shape: &StackShape,
        rng: &mut R,
        mut make_self: impl FnMut(&mut ParamStore, &str, &mut R) -> Result<S>,
        mut make_cross: impl FnMut(&mut ParamStore, &str, &mut R) -> Result<C>,
    ) -> Result<Self> {
        let d = shape.width;
        let input = Linear::new(ps, &format!("{name}.input"), shape.d_in, d, rng)?;
        let mut encoders = Vec::with_capacity(shape.n_enc);
        for i in 0..shape.n_enc {
            let lname = format!("{name}.enc{i}");
            let mixer = make_self(ps, &format!("{lname}.mix"), rng)?;
            encoders.push(EncoderLayer::new(ps, &lname, d, shape.dropout, mixer, rng)?);
        }
        let mut decoders = Vec::with_capacity(shape.n_dec);
        for i in 0..shape.n_dec {
            let lname = format!("{name}.dec{i}");
            let s = make_self(ps, &format!("{lname}.self"), rng)?;
            let c = make_cross(ps, &format!("{lname}.cross"), rng)?;
            decoders.push(DecoderLayer::new(ps, &lname, d, shape.dropout, s, c, rng)?);
        }
        Ok(EncDecStack { input, encoders, decoders })
    }

    /// Closed-form parameter count given per-mixer counts.
    pub fn param_count(shape: &StackShape, self_mixer: usize, cross_mixer: usize) -> usize {
        let d = shape.width;
        let enc = self_mixer + 2 * 2 * d + ffn_param_count(d);
        let dec = self_mixer + cross_mixer + 3 * 2 * d + ffn_param_count(d);
        Linear::param_count(shape.d_in, d) + shape.n_enc * enc + shape.n_dec * dec
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor2, ctx: &mut Ctx) -> Result<(Tensor2, StackCache<S, C>)> {
        let x0 = self.input.forward(ps, x)?;
        let mut memory = x0.clone();
        let mut enc_caches = Vec::with_capacity(self.encoders.len());
        for layer in &self.encoders {
            let (h, c) = layer.forward(ps, &memory, ctx)?;
            memory = h;
            enc_caches.push(c);
        }
        let mut y = x0;
        let mut dec_caches = Vec::with_capacity(self.decoders.len());
        for layer in &self.decoders {
            let (h, c) = layer.forward(ps, &y, &memory, ctx)?;
            y = h;
            dec_caches.push(c);
        }
        Ok((
            y,
            StackCache {
                x: x.clone(),
                encoders: enc_caches,
                decoders: dec_caches,
            },
        ))
    }

    pub fn backward(&self, ps: &mut ParamStore, c: &StackCache<S, C>, dout: &Tensor2) -> Tensor2 {
        let mut dy = dout.clone();
        let mut dmem = Tensor2::zeros(dout.rows(), dout.cols());
        for (layer, cache) in self.decoders.iter().zip(&c.decoders).rev() {
            let (d_in, d_m) = layer.backward(ps, cache, &dy);
            dy = d_in;
            dmem.add_assign(&d_m).expect("dmem");
        }
        for (layer, cache) in self.encoders.iter().zip(&c.encoders).rev() {
            dmem = layer.backward(ps, cache, &dmem);
        }
        dy.add_assign(&dmem).expect("dx0");
        self.input.backward(ps, &c.x, &dy)
    }
}
