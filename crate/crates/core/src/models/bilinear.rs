//! Relational bilinear pooling (RBP) and its graph-encoded variant (BiGED).

use rand::Rng;

use super::mixer::{CrossGraph, GraphModule};
use super::stack::{EncDecStack, StackCache, StackShape};
use crate::diffmath;
use crate::error::Result;
use crate::layers::{Ctx, Linear};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor2;

pub type GraphStack = EncDecStack<GraphModule, CrossGraph>;
pub type GraphStackCache = StackCache<GraphModule, CrossGraph>;

/// `r_b = ReLU([h'·W_b·o' ; [h'; o']·W_bl + b_bl])·W_jb + b_jb` for one `h'`
/// (1×d_b) and every row of `o'` (n×d_b).
#[derive(Clone, Debug)]
pub struct BilinearCombine {
    pub wb: ParamId,
    pub bl: Linear,
    pub jb: Linear,
    pub d_b: usize,
}

pub struct CombineCache {
    h: Tensor2,
    o: Tensor2,
    pair: Tensor2,
    pre: Tensor2,
    act: Tensor2,
}

impl BilinearCombine {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, d_b: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let limit = (6.0 / (2 * d_b) as f64).sqrt();
        let data = (0..d_b * d_b * d_b).map(|_| rng.random_range(-limit..limit)).collect();
        let wb = ps.add(format!("{name}.wb"), vec![d_b, d_b, d_b], Tensor2::from_vec(d_b * d_b, d_b, data)?)?;
        Ok(BilinearCombine {
            wb,
            bl: Linear::new(ps, &format!("{name}.bl"), 2 * d_b, d_b, rng)?,
            jb: Linear::new(ps, &format!("{name}.jb"), 2 * d_b, d_out, rng)?,
            d_b,
        })
    }

    pub fn param_count(d_b: usize, d_out: usize) -> usize {
        d_b * d_b * d_b + Linear::param_count(2 * d_b, d_b) + Linear::param_count(2 * d_b, d_out)
    }

    pub fn forward(&self, ps: &ParamStore, h: &Tensor2, o: &Tensor2) -> Result<(Tensor2, CombineCache)> {
        let bil = diffmath::bilinear_form(h, ps.value(self.wb), o)?;
        let pair = Tensor2::hcat(&[&h.broadcast_rows(o.rows())?, o])?;
        let lin = self.bl.forward(ps, &pair)?;
        let pre = Tensor2::hcat(&[&bil, &lin])?;
        let act = diffmath::relu(&pre);
        let out = self.jb.forward(ps, &act)?;
        Ok((
            out,
            CombineCache {
                h: h.clone(),
                o: o.clone(),
                pair,
                pre,
                act,
            },
        ))
    }

    /// Returns `(dh, do)`.
    pub fn backward(&self, ps: &mut ParamStore, c: &CombineCache, dout: &Tensor2) -> (Tensor2, Tensor2) {
        let dact = self.jb.backward(ps, &c.act, dout);
        let dpre = diffmath::relu_backward(&c.pre, &dact);
        let parts = dpre.split_cols(&[self.d_b, self.d_b]).expect("combine split");
        let (mut dh, dw, mut d_o) = diffmath::bilinear_form_backward(&c.h, ps.value(self.wb), &c.o, &parts[0]);
        ps.accumulate(self.wb, &dw);
        let dpair = self.bl.backward(ps, &c.pair, &parts[1]);
        let halves = dpair.split_cols(&[self.d_b, self.d_b]).expect("pair split");
        dh.add_assign(&halves[0].sum_rows()).expect("dh");
        d_o.add_assign(&halves[1]).expect("do");
        (dh, d_o)
    }
}

/// `o' = ReLU(x_o·W_o + b_o)`, `h' = ReLU(x_h·W_h + b_h)`, bilinear combine.
#[derive(Clone, Debug)]
pub struct RbpBody {
    pub object: Linear,
    pub human: Linear,
    pub combine: BilinearCombine,
}

pub struct RbpCache {
    xo: Tensor2,
    xh: Tensor2,
    o_pre: Tensor2,
    h_pre: Tensor2,
    combine: CombineCache,
}

impl RbpBody {
    pub fn new<R: Rng>(ps: &mut ParamStore, d_slot: usize, d_b: usize, d: usize, rng: &mut R) -> Result<Self> {
        Ok(RbpBody {
            object: Linear::new(ps, "rbp.object", d_slot, d_b, rng)?,
            human: Linear::new(ps, "rbp.human", d_slot, d_b, rng)?,
            combine: BilinearCombine::new(ps, "rbp.combine", d_b, d, rng)?,
        })
    }

    pub fn param_count(d_slot: usize, d_b: usize, d: usize) -> usize {
        2 * Linear::param_count(d_slot, d_b) + BilinearCombine::param_count(d_b, d)
    }

    /// `xh` is the 1-row human slot, `xo` the n-row object slots; returns `r_b` (n×d).
    pub fn forward(&self, ps: &ParamStore, xh: &Tensor2, xo: &Tensor2) -> Result<(Tensor2, RbpCache)> {
        let o_pre = self.object.forward(ps, xo)?;
        let h_pre = self.human.forward(ps, xh)?;
        let (out, combine) = self
            .combine
            .forward(ps, &diffmath::relu(&h_pre), &diffmath::relu(&o_pre))?;
        Ok((
            out,
            RbpCache {
                xo: xo.clone(),
                xh: xh.clone(),
                o_pre,
                h_pre,
                combine,
            },
        ))
    }

    /// Returns `(dxh, dxo)`.
    pub fn backward(&self, ps: &mut ParamStore, c: &RbpCache, dout: &Tensor2) -> (Tensor2, Tensor2) {
        let (dh, d_o) = self.combine.backward(ps, &c.combine, dout);
        let dxo = self.object.backward(ps, &c.xo, &diffmath::relu_backward(&c.o_pre, &d_o));
        let dxh = self.human.backward(ps, &c.xh, &diffmath::relu_backward(&c.h_pre, &dh));
        (dxh, dxo)
    }
}

/// Branch A: GNNED over object slots replaces the object projection before
/// the bilinear combine. Branch B: GNNED over joint `[x_h; x_o]` rows.
pub struct BigedBody {
    pub objects: GraphStack,
    pub human: Linear,
    pub combine: BilinearCombine,
    pub joint: GraphStack,
}

pub struct BigedCache {
    xh: Tensor2,
    objects: GraphStackCache,
    h_pre: Tensor2,
    combine: CombineCache,
    joint: GraphStackCache,
    d: usize,
}

pub struct BigedShape {
    pub d_slot: usize,
    pub d_b: usize,
    pub d: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub dropout: f64,
}

impl BigedShape {
    fn object_stack(&self) -> StackShape {
        StackShape {
            d_in: self.d_slot,
            width: self.d_b,
            n_enc: self.n_enc,
            n_dec: self.n_dec,
            dropout: self.dropout,
        }
    }

    fn joint_stack(&self) -> StackShape {
        StackShape {
            d_in: 2 * self.d_slot,
            width: self.d,
            n_enc: self.n_enc,
            n_dec: self.n_dec,
            dropout: self.dropout,
        }
    }
}

pub fn graph_stack<R: Rng>(ps: &mut ParamStore, name: &str, shape: &StackShape, rng: &mut R) -> Result<GraphStack> {
    let d = shape.width;
    EncDecStack::new(
        ps,
        name,
        shape,
        rng,
        |ps, n, rng| GraphModule::new(ps, n, d, d, rng),
        |ps, n, rng| CrossGraph::new(ps, n, d, rng),
    )
}

pub fn graph_stack_param_count(shape: &StackShape) -> usize {
    let d = shape.width;
    GraphStack::param_count(shape, GraphModule::param_count(d, d), CrossGraph::param_count(d))
}

impl BigedBody {
    pub fn new<R: Rng>(ps: &mut ParamStore, shape: &BigedShape, rng: &mut R) -> Result<Self> {
        Ok(BigedBody {
            objects: graph_stack(ps, "biged.objects", &shape.object_stack(), rng)?,
            human: Linear::new(ps, "biged.human", shape.d_slot, shape.d_b, rng)?,
            combine: BilinearCombine::new(ps, "biged.combine", shape.d_b, shape.d, rng)?,
            joint: graph_stack(ps, "biged.joint", &shape.joint_stack(), rng)?,
        })
    }

    pub fn param_count(shape: &BigedShape) -> usize {
        graph_stack_param_count(&shape.object_stack())
            + Linear::param_count(shape.d_slot, shape.d_b)
            + BilinearCombine::param_count(shape.d_b, shape.d)
            + graph_stack_param_count(&shape.joint_stack())
    }

    /// Returns `[r_b, J]` (n × 2d).
    pub fn forward(&self, ps: &ParamStore, xh: &Tensor2, xo: &Tensor2, ctx: &mut Ctx) -> Result<(Tensor2, BigedCache)> {
        let (o, objects) = self.objects.forward(ps, xo, ctx)?;
        let h_pre = self.human.forward(ps, xh)?;
        let (rb, combine) = self.combine.forward(ps, &diffmath::relu(&h_pre), &o)?;
        let joint_in = Tensor2::hcat(&[&xh.broadcast_rows(xo.rows())?, xo])?;
        let (j, joint) = self.joint.forward(ps, &joint_in, ctx)?;
        let d = rb.cols();
        Ok((
            Tensor2::hcat(&[&rb, &j])?,
            BigedCache {
                xh: xh.clone(),
                objects,
                h_pre,
                combine,
                joint,
                d,
            },
        ))
    }

    /// Returns `(dxh, dxo)`.
    pub fn backward(&self, ps: &mut ParamStore, c: &BigedCache, dout: &Tensor2) -> (Tensor2, Tensor2) {
        let parts = dout.split_cols(&[c.d, dout.cols() - c.d]).expect("biged split");
        let (dh, d_o) = self.combine.backward(ps, &c.combine, &parts[0]);
        let mut dxh = self.human.backward(ps, &c.xh, &diffmath::relu_backward(&c.h_pre, &dh));
        let mut dxo = self.objects.backward(ps, &c.objects, &d_o);
        let djoint = self.joint.backward(ps, &c.joint, &parts[1]);
        let slot = c.xh.cols();
        let halves = djoint.split_cols(&[slot, slot]).expect("joint split");
        dxh.add_assign(&halves[0].sum_rows()).expect("dxh");
        dxo.add_assign(&halves[1]).expect("dxo");
        (dxh, dxo)
    }
}
