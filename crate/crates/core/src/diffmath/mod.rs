//! Differentiable primitives with hand-derived backward passes.
//!
//! Every forward op has a matching `*_backward` function that maps the
//! upstream gradient to gradients of its inputs. Composite models chain
//! these by hand; there is no tape.

mod gradcheck;

pub use gradcheck::{grad_check, grad_check_with, push_off_kinks, GradCheckReport};

use std::cell::Cell;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Denominator floor for the Jaccard vector similarity.
pub const JACCARD_EPS: f64 = 1e-8;
/// Variance epsilon used by [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub struct LinearGrads {
    pub dx: Tensor2,
    pub dw: Tensor2,
    pub db: Tensor2,
}

/// `x · w + b`, with `b` broadcast over rows.
pub fn linear(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if x.cols() != w.rows() {
        return Err(Error::dims("linear", &x.shape(), &w.shape()));
    }
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::dims("linear(bias)", &w.shape(), &b.shape()));
    }
    let mut out = x.matmul(w)?;
    for r in 0..out.rows() {
        for (o, bv) in out.row_mut(r).iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    Ok(out)
}

pub fn linear_backward(x: &Tensor2, w: &Tensor2, dout: &Tensor2) -> LinearGrads {
    LinearGrads {
        dx: dout.matmul_t(w).expect("linear_backward: dx"),
        dw: x.t_matmul(dout).expect("linear_backward: dw"),
        db: dout.sum_rows(),
    }
}

/// What [`probe_kinks`] observed while running a closure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinkProbe {
    /// Smallest `|x|` fed to [`relu`] and smallest winner/runner-up gap in
    /// any [`max_pool_set`] column.
    pub distance: f64,
    /// Hash of every ReLU on/off pattern and max-pool argmax, in call order.
    /// Two evaluations with equal signatures took the same smooth branch.
    pub signature: u64,
}

thread_local! {
    static KINK_PROBE: Cell<Option<KinkProbe>> = const { Cell::new(None) };
}

fn note_kink(distance: impl FnOnce() -> f64, pattern: impl FnOnce() -> u64) {
    KINK_PROBE.with(|p| {
        if let Some(k) = p.get() {
            p.set(Some(KinkProbe {
                distance: k.distance.min(distance()),
                signature: (k.signature.rotate_left(5) ^ pattern()).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            }));
        }
    });
}

fn mix_pattern(items: impl Iterator<Item = u64>) -> u64 {
    items.fold(0xcbf2_9ce4_8422_2325, |h, v| (h ^ v).wrapping_mul(0x0100_0000_01b3))
}

/// Run `f` on this thread and report how close it came to a
/// non-differentiable point, plus a signature of the branch it took.
/// Finite differences are only meaningful when every perturbed evaluation
/// reproduces the unperturbed signature.
pub fn probe_kinks<T>(f: impl FnOnce() -> T) -> (T, KinkProbe) {
    let fresh = KinkProbe {
        distance: f64::INFINITY,
        signature: 0,
    };
    let outer = KINK_PROBE.with(|p| p.replace(Some(fresh)));
    let out = f();
    let probe = KINK_PROBE.with(|p| p.replace(outer)).unwrap_or(fresh);
    (out, probe)
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    note_kink(
        || x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())),
        || mix_pattern(x.data().iter().map(|&v| (v > 0.0) as u64)),
    );
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Subgradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor2, dout: &Tensor2) -> Tensor2 {
    let data = x
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor2::from_raw(x.rows(), x.cols(), data)
}

fn row_sq_norms(x: &Tensor2) -> Vec<f64> {
    (0..x.rows())
        .map(|r| x.row(r).iter().map(|v| v * v).sum())
        .collect()
}

/// Pairwise Jaccard vector similarity `2·a·b / (a·a + b·b)` between the rows
/// of `a` (m×d) and `b` (n×d). The denominator is floored at
/// [`JACCARD_EPS`], so two zero vectors have similarity 0.
pub fn jaccard_cross(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    let dots = a.matmul_t(b).map_err(|_| Error::dims("jaccard", &a.shape(), &b.shape()))?;
    let na = row_sq_norms(a);
    let nb = row_sq_norms(b);
    let mut out = dots;
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = 2.0 * *v / (na[i] + nb[j]).max(JACCARD_EPS);
        }
    }
    Ok(out)
}

/// Gradients of [`jaccard_cross`] with respect to `a` and `b`.
pub fn jaccard_cross_backward(a: &Tensor2, b: &Tensor2, dout: &Tensor2) -> (Tensor2, Tensor2) {
    let na = row_sq_norms(a);
    let nb = row_sq_norms(b);
    let w = jaccard_cross(a, b).expect("jaccard_cross_backward: shapes checked in forward");
    let (m, n) = (a.rows(), b.rows());
    // c = dout * 2/D; cw = c * W where the denominator is not clamped.
    let mut c = Tensor2::zeros(m, n);
    let mut cw = Tensor2::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let denom = na[i] + nb[j];
            let (scale, active) = if denom > JACCARD_EPS {
                (2.0 / denom, 1.0)
            } else {
                (2.0 / JACCARD_EPS, 0.0)
            };
            let cij = dout.get(i, j) * scale;
            c.set(i, j, cij);
            cw.set(i, j, cij * w.get(i, j) * active);
        }
    }
    let mut da = c.matmul(b).expect("jaccard da");
    let mut db = c.t_matmul(a).expect("jaccard db");
    for i in 0..m {
        let k: f64 = cw.row(i).iter().sum();
        for (g, x) in da.row_mut(i).iter_mut().zip(a.row(i)) {
            *g -= k * x;
        }
    }
    let col = cw.sum_rows();
    for j in 0..n {
        let k = col.data()[j];
        for (g, x) in db.row_mut(j).iter_mut().zip(b.row(j)) {
            *g -= k * x;
        }
    }
    (da, db)
}

/// Affinity matrix `W_A` among the rows of `r` (n×d → n×n).
pub fn jaccard_affinity(r: &Tensor2) -> Tensor2 {
    jaccard_cross(r, r).expect("self affinity always conforms")
}

pub fn jaccard_affinity_backward(r: &Tensor2, dout: &Tensor2) -> Tensor2 {
    let (mut da, db) = jaccard_cross_backward(r, r, dout);
    da.add_assign(&db).expect("same shape");
    da
}

pub struct LayerNormCache {
    xhat: Tensor2,
    inv_std: Vec<f64>,
}

/// Row-wise normalization to zero mean and unit variance followed by an
/// elementwise affine map.
pub fn layer_norm(x: &Tensor2, gain: &Tensor2, shift: &Tensor2) -> Result<(Tensor2, LayerNormCache)> {
    let d = x.cols();
    if d == 0 || gain.shape() != [1, d] || shift.shape() != [1, d] {
        return Err(Error::dims("layer_norm", &x.shape(), &gain.shape()));
    }
    let mut xhat = Tensor2::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        inv_std.push(is);
    }
    let mut out = xhat.clone();
    for r in 0..out.rows() {
        for ((o, g), s) in out.row_mut(r).iter_mut().zip(gain.data()).zip(shift.data()) {
            *o = *o * g + s;
        }
    }
    Ok((out, LayerNormCache { xhat, inv_std }))
}

/// Returns `(dx, dgain, dshift)`.
pub fn layer_norm_backward(cache: &LayerNormCache, gain: &Tensor2, dout: &Tensor2) -> (Tensor2, Tensor2, Tensor2) {
    let (n, d) = (dout.rows(), dout.cols());
    let mut dx = Tensor2::zeros(n, d);
    let mut dgain = vec![0.0; d];
    for r in 0..n {
        let xh = cache.xhat.row(r);
        let go = dout.row(r);
        let dxhat: Vec<f64> = go.iter().zip(gain.data()).map(|(g, w)| g * w).collect();
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for (k, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = cache.inv_std[r] * (dxhat[k] - mean_d - xh[k] * mean_dx);
        }
        for (k, dg) in dgain.iter_mut().enumerate() {
            *dg += go[k] * xh[k];
        }
    }
    (dx, Tensor2::from_raw(1, d, dgain), dout.sum_rows())
}

/// Inverted-dropout keep mask, already scaled by `1/(1-p)`. `None` means identity.
pub type DropMask = Option<Vec<f64>>;

pub fn dropout<R: Rng>(x: &Tensor2, p: f64, mode: Mode, rng: &mut R) -> Result<(Tensor2, DropMask)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout rate {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.data().len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor2::from_raw(x.rows(), x.cols(), data), Some(mask)))
}

pub fn dropout_backward(mask: &DropMask, dout: &Tensor2) -> Tensor2 {
    match mask {
        None => dout.clone(),
        Some(m) => {
            let data = dout.data().iter().zip(m).map(|(g, k)| g * k).collect();
            Tensor2::from_raw(dout.rows(), dout.cols(), data)
        }
    }
}

/// Numerically stable row softmax.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Backward of [`softmax_rows`] given its output `y`.
pub fn softmax_rows_backward(y: &Tensor2, dout: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = dout.row(r);
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (k, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = yr[k] * (gr[k] - dot);
        }
    }
    dx
}

/// Contract the bilinear tensor with `h` to the `d×d` matrix `Σ_i h[i]·W[i]`.
fn contract_first(h: &Tensor2, wb: &Tensor2, d: usize) -> Tensor2 {
    let mut m = Tensor2::zeros(d, d);
    for (i, &hi) in h.data().iter().enumerate() {
        if hi == 0.0 {
            continue;
        }
        let block = &wb.data()[i * d * d..(i + 1) * d * d];
        for (o, w) in m.data_mut().iter_mut().zip(block) {
            *o += hi * w;
        }
    }
    m
}

fn bilinear_dim(h: &Tensor2, wb: &Tensor2, o: &Tensor2) -> Result<usize> {
    let d = h.cols();
    if h.rows() != 1 || o.cols() != d || wb.rows() != d * d || wb.cols() != d {
        return Err(Error::Dimension {
            op: "bilinear_form",
            left: vec![h.rows(), h.cols(), o.rows(), o.cols()],
            right: wb.shape().to_vec(),
        });
    }
    Ok(d)
}

/// `out[m][k] = Σ_i Σ_j h[i]·W[i][j][k]·o[m][j]` for a single `h` (1×d) and
/// a set of `o` rows (n×d). `wb` holds the d×d×d tensor as a (d·d)×d matrix
/// indexed by `(i·d + j, k)`.
pub fn bilinear_form(h: &Tensor2, wb: &Tensor2, o: &Tensor2) -> Result<Tensor2> {
    let d = bilinear_dim(h, wb, o)?;
    o.matmul(&contract_first(h, wb, d))
}

/// Returns `(dh, dW, do)`.
pub fn bilinear_form_backward(h: &Tensor2, wb: &Tensor2, o: &Tensor2, dout: &Tensor2) -> (Tensor2, Tensor2, Tensor2) {
    let d = h.cols();
    let m = contract_first(h, wb, d);
    let d_o = dout.matmul_t(&m).expect("bilinear do");
    let dm = o.t_matmul(dout).expect("bilinear dM");
    let mut dh = vec![0.0; d];
    let mut dw = Tensor2::zeros(d * d, d);
    for (i, dhi) in dh.iter_mut().enumerate() {
        let block = &wb.data()[i * d * d..(i + 1) * d * d];
        *dhi = block.iter().zip(dm.data()).map(|(w, g)| w * g).sum();
        let hi = h.data()[i];
        for (o, g) in dw.data_mut()[i * d * d..(i + 1) * d * d].iter_mut().zip(dm.data()) {
            *o = hi * g;
        }
    }
    (Tensor2::from_raw(1, d, dh), dw, d_o)
}

/// Column-wise max over the rows of a set. Ties go to the lowest row index.
pub fn max_pool_set(x: &Tensor2) -> Result<(Tensor2, Vec<usize>)> {
    if x.rows() == 0 {
        return Err(Error::EmptySet { op: "max_pool_set" });
    }
    let mut best = x.row(0).to_vec();
    let mut arg = vec![0; x.cols()];
    for r in 1..x.rows() {
        for (c, v) in x.row(r).iter().enumerate() {
            if *v > best[c] {
                best[c] = *v;
                arg[c] = r;
            }
        }
    }
    note_kink(
        || {
            let mut gap = f64::INFINITY;
            for r in 0..x.rows() {
                for (c, v) in x.row(r).iter().enumerate() {
                    if r != arg[c] {
                        gap = gap.min(best[c] - v);
                    }
                }
            }
            gap
        },
        || mix_pattern(arg.iter().map(|&a| a as u64)),
    );
    Ok((Tensor2::from_raw(1, x.cols(), best), arg))
}

pub fn max_pool_backward(argmax: &[usize], rows: usize, dout: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(rows, argmax.len());
    for (c, &r) in argmax.iter().enumerate() {
        dx.set(r, c, dout.data()[c]);
    }
    dx
}

pub fn mean_pool_set(x: &Tensor2) -> Result<Tensor2> {
    if x.rows() == 0 {
        return Err(Error::EmptySet { op: "mean_pool_set" });
    }
    Ok(x.sum_rows().scale(1.0 / x.rows() as f64))
}

pub fn mean_pool_backward(rows: usize, dout: &Tensor2) -> Tensor2 {
    dout.scale(1.0 / rows as f64)
        .broadcast_rows(rows)
        .expect("pooled gradient is a single row")
}

#[cfg(test)]
mod tests;
