use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor2;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `max |g_fd − g_an| / max(1e-8, |g_fd| + |g_an|)` over all coordinates.
    pub max_rel_err: f64,
    /// Parameter name and flat coordinate of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Central finite-difference check of every coordinate in `params`.
///
/// `objective(params, want_grad)` must return the scalar loss and, when
/// `want_grad` is set, accumulate its analytic gradient into `params`.
/// It must be deterministic.
pub fn grad_check<F>(params: &mut ParamStore, h: f64, objective: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    grad_check_with(params, h, false, objective)
}

/// As [`grad_check`]; with `richardson` set, each coordinate uses the
/// extrapolated central difference `(4·D(h) − D(2h)) / 3`, whose truncation
/// error is O(h⁴). That permits a larger `h`, which keeps round-off from
/// swamping very small gradient entries of deep compositions.
pub fn grad_check_with<F>(params: &mut ParamStore, h: f64, richardson: bool, mut objective: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    params.zero_grads();
    let base = objective(params, true)?;
    if !base.is_finite() {
        return Err(Error::Numeric("grad_check: objective".into()));
    }
    let analytic: Vec<Tensor2> = params.iter().map(|p| p.grad.clone()).collect();
    let ids: Vec<_> = params.ids().collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (id, an) in ids.into_iter().zip(&analytic) {
        for k in 0..an.data().len() {
            let mut central = |step: f64| -> Result<f64> {
                let orig = params.value(id).data()[k];
                params.value_mut(id).data_mut()[k] = orig + step;
                let plus = objective(params, false);
                params.value_mut(id).data_mut()[k] = orig - step;
                let minus = objective(params, false);
                params.value_mut(id).data_mut()[k] = orig;
                Ok((plus? - minus?) / (2.0 * step))
            };
            let fd = if richardson {
                (4.0 * central(h)? - central(2.0 * h)?) / 3.0
            } else {
                central(h)?
            };
            let g = an.data()[k];
            if !fd.is_finite() || !g.is_finite() {
                return Err(Error::Numeric(format!("grad_check: `{}`[{k}]", params.param(id).name)));
            }
            let rel = (fd - g).abs() / (fd.abs() + g.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((params.param(id).name.clone(), k));
            }
        }
    }
    params.zero_grads();
    Ok(report)
}

/// Move entries closer than `margin` to zero out to `±margin`, so a
/// finite-difference step cannot straddle a ReLU or max kink at 0.
pub fn push_off_kinks(t: &mut Tensor2, margin: f64) {
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin } else { margin };
        }
    }
}
