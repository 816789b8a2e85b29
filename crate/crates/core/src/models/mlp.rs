use rand::Rng;

use crate::diffmath;
use crate::error::Result;
use crate::layers::Linear;
use crate::params::ParamStore;
use crate::tensor::Tensor2;

/// Per-relation `linear → ReLU → linear`, width `d`.
#[derive(Clone, Debug)]
pub struct MlpBody {
    pub first: Linear,
    pub second: Linear,
}

pub struct MlpCache {
    x: Tensor2,
    pre: Tensor2,
    act: Tensor2,
}

impl MlpBody {
    pub fn new<R: Rng>(ps: &mut ParamStore, d_in: usize, d: usize, rng: &mut R) -> Result<Self> {
        Ok(MlpBody {
            first: Linear::new(ps, "mlp.l1", d_in, d, rng)?,
            second: Linear::new(ps, "mlp.l2", d, d, rng)?,
        })
    }

    pub fn param_count(d_in: usize, d: usize) -> usize {
        Linear::param_count(d_in, d) + Linear::param_count(d, d)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
        let pre = self.first.forward(ps, x)?;
        let act = diffmath::relu(&pre);
        let out = self.second.forward(ps, &act)?;
        Ok((out, MlpCache { x: x.clone(), pre, act }))
    }

    pub fn backward(&self, ps: &mut ParamStore, c: &MlpCache, dout: &Tensor2) -> Tensor2 {
        let dact = self.second.backward(ps, &c.act, dout);
        let dpre = diffmath::relu_backward(&c.pre, &dact);
        self.first.backward(ps, &c.x, &dpre)
    }
}
