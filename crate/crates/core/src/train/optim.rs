//! Loss, optimizer, scheduler and clipping.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::relation::ActionSet;
use crate::tensor::Tensor2;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Max-margin multi-label loss
/// `L = (1/|A|) Σ_{p∈Y} Σ_{n∉Y} max(0, margin − (s_p − s_n))` and its
/// subgradient (zero at the hinge point).
pub fn margin_loss(logits: &[f64], target: &ActionSet, margin: f64) -> Result<(f64, Vec<f64>)> {
    let k = logits.len();
    if target.width() != k {
        return Err(Error::dims("margin_loss", &[k], &[target.width()]));
    }
    if target.is_empty() || target.is_full() {
        return Err(Error::DegenerateTarget(format!(
            "{} of {k} classes positive; the margin loss needs both positives and negatives",
            target.count()
        )));
    }
    let labels = target.to_labels();
    let scale = 1.0 / k as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    for p in (0..k).filter(|&i| labels[i]) {
        for n in (0..k).filter(|&i| !labels[i]) {
            let slack = margin - (logits[p] - logits[n]);
            if slack > 0.0 {
                loss += slack;
                grad[p] -= scale;
                grad[n] += scale;
            }
        }
    }
    Ok((loss * scale, grad))
}

/// AdamW state: bias-corrected moments plus decoupled weight decay.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub step: u64,
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
    pub lr: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(ps: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros = || ps.iter().map(|p| Tensor2::zeros(p.value.rows(), p.value.cols())).collect();
        OptimState {
            step: 0,
            m: zeros(),
            v: zeros(),
            lr,
            weight_decay,
        }
    }
}

/// One AdamW update from the gradients stored in `ps`.
pub fn optim_step(ps: &mut ParamStore, state: &mut OptimState) -> Result<()> {
    if let Some(bad) = ps.iter().find(|p| !p.grad.is_finite()) {
        return Err(Error::Numeric(format!("gradient of `{}`", bad.name)));
    }
    if state.m.len() != ps.len() {
        return Err(Error::dims("optim_step", &[state.m.len()], &[ps.len()]));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let (lr, decay) = (state.lr, 1.0 - state.lr * state.weight_decay);
    for (p, (m, v)) in ps.iter_mut().zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let w = p.value.data_mut();
        let g = p.grad.data();
        for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *w *= decay;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Halve-on-plateau: when the monitored loss fails to improve by a relative
/// `threshold` for `patience` consecutive epochs, `lr ← max(lr·factor, min)`.
#[derive(Clone, Debug)]
pub struct Plateau {
    pub factor: f64,
    pub min_lr: f64,
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    pub fn new(factor: f64, min_lr: f64) -> Self {
        Plateau {
            factor,
            min_lr,
            patience: 1,
            threshold: 1e-4,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Returns the (possibly reduced) learning rate.
    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) || self.best.is_infinite() {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor).max(self.min_lr);
        }
        lr
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_gradients(ps: &mut ParamStore, max_norm: f64) -> Result<f64> {
    if max_norm <= 0.0 || !max_norm.is_finite() {
        return Err(Error::Parameter(format!("clip norm {max_norm} must be positive")));
    }
    let norm = ps.grad_norm();
    if norm > max_norm {
        ps.scale_grads(max_norm / norm);
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(k: usize, idx: &[usize]) -> ActionSet {
        ActionSet::from_indices(k, idx).unwrap()
    }

    #[test]
    fn margin_loss_worked_examples() {
        let (l, _) = margin_loss(&[2.0, 0.5, 2.0], &set(3, &[0, 2]), 1.0).unwrap();
        assert_eq!(l, 0.0);
        let (l, g) = margin_loss(&[0.0, 0.0], &set(2, &[0]), 1.0).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![-0.5, 0.5]);
        let (l, g) = margin_loss(&[1.0, 0.0, -1.0], &set(3, &[0]), 1.0).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0; 3]));
        assert!(matches!(margin_loss(&[0.0, 0.0], &set(2, &[]), 1.0), Err(Error::DegenerateTarget(_))));
        assert!(matches!(margin_loss(&[0.0, 0.0], &set(2, &[0, 1]), 1.0), Err(Error::DegenerateTarget(_))));
    }

    #[test]
    fn margin_loss_gradient_matches_finite_differences_off_hinges() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k = rng.random_range(2..7);
            let s: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut pos: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
            if pos.is_empty() {
                pos.push(0);
            }
            if pos.len() == k {
                pos.pop();
            }
            let y = set(k, &pos);
            // Skip inputs within 1e-3 of a hinge.
            let near = pos.iter().any(|&p| (0..k).any(|n| !y.contains(n) && (1.0 - (s[p] - s[n])).abs() < 1e-3));
            if near {
                continue;
            }
            let (l, g) = margin_loss(&s, &y, 1.0).unwrap();
            assert!(l >= 0.0);
            for i in 0..k {
                let h = 1e-6;
                let mut sp = s.clone();
                sp[i] += h;
                let mut sm = s.clone();
                sm[i] -= h;
                let fd = (margin_loss(&sp, &y, 1.0).unwrap().0 - margin_loss(&sm, &y, 1.0).unwrap().0) / (2.0 * h);
                assert!((fd - g[i]).abs() / (fd.abs() + g[i].abs()).max(1e-8) <= 1e-4);
            }
        }
    }

    fn scalar(w: f64, g: f64) -> ParamStore {
        let mut ps = ParamStore::new();
        let id = ps.add_const("w", 1, 1, w).unwrap();
        ps.accumulate(id, &Tensor2::filled(1, 1, g));
        ps
    }

    #[test]
    fn adamw_worked_examples() {
        let mut ps = scalar(1.0, 0.0);
        let mut st = OptimState::new(&ps, 0.1, 0.0);
        optim_step(&mut ps, &mut st).unwrap();
        assert_eq!(ps.iter().next().unwrap().value.data(), [1.0]);

        let mut ps = scalar(1.0, 1.0);
        let mut st = OptimState::new(&ps, 0.1, 0.0);
        optim_step(&mut ps, &mut st).unwrap();
        let w = ps.iter().next().unwrap().value.data()[0];
        assert!((w - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);

        let mut ps = scalar(2.0, 0.0);
        let mut st = OptimState::new(&ps, 0.1, 0.5);
        optim_step(&mut ps, &mut st).unwrap();
        assert!((ps.iter().next().unwrap().value.data()[0] - 2.0 * 0.95).abs() < 1e-15);

        let mut ps = scalar(1.5, 3.0);
        let mut st = OptimState::new(&ps, 0.0, 0.01);
        optim_step(&mut ps, &mut st).unwrap();
        assert_eq!(ps.iter().next().unwrap().value.data(), [1.5]);

        let mut ps = scalar(1.0, f64::NAN);
        let mut st = OptimState::new(&ps, 0.1, 0.0);
        let err = optim_step(&mut ps, &mut st).unwrap_err();
        assert!(err.to_string().contains("`w`"));
    }

    #[test]
    fn plateau_worked_examples() {
        let mut p = Plateau::new(0.5, 1e-7);
        let mut lr = 1e-5;
        for e in 0..10 {
            lr = p.step(10.0 - e as f64, lr);
            assert_eq!(lr, 1e-5);
        }
        let mut p = Plateau::new(0.5, 1e-7);
        let mut lr = 1e-5;
        let mut seq = Vec::new();
        for _ in 0..10 {
            lr = p.step(1.0, lr);
            seq.push(lr);
        }
        assert_eq!(&seq[..3], &[1e-5, 5e-6, 2.5e-6]);
        assert_eq!(*seq.last().unwrap(), 1e-7);
        assert_eq!(p.step(1.0, 1e-7), 1e-7);
    }

    #[test]
    fn clipping_worked_examples() {
        let mut ps = ParamStore::new();
        let id = ps.add_const("g", 1, 2, 0.0).unwrap();
        ps.accumulate(id, &Tensor2::row_vector(&[6.0, 8.0]).unwrap());
        assert_eq!(clip_gradients(&mut ps, 5.0).unwrap(), 10.0);
        assert_eq!(ps.grad(id).data(), [3.0, 4.0]);
        assert!(ps.grad_norm() <= 5.0 + 1e-9);
        ps.zero_grads();
        ps.accumulate(id, &Tensor2::row_vector(&[1.8, 2.4]).unwrap());
        assert_eq!(clip_gradients(&mut ps, 5.0).unwrap(), 3.0);
        assert_eq!(ps.grad(id).data(), [1.8, 2.4]);
        ps.zero_grads();
        assert_eq!(clip_gradients(&mut ps, 5.0).unwrap(), 0.0);
    }
}
