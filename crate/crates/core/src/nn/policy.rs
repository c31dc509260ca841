//! Tanh-squashed diagonal Gaussian head.
//!
//! The network emits `[mean | log_std]`. A sample is
//! `a = tanh(mean + exp(log_std) * eps)` and its log-density includes the
//! change-of-variables term `-sum log(1 - a^2)`.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::NnError;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln(1 - tanh(u)^2)` evaluated without forming `1 - a^2`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Samples one squashed action given the standard-normal draw `noise`.
pub fn gaussian_tanh_sample(
    mean: &[f64],
    log_std: &[f64],
    noise: &[f64],
) -> Result<(Vec<f64>, f64), NnError> {
    let k = mean.len();
    for (what, len) in [("log_std", log_std.len()), ("noise", noise.len())] {
        if len != k {
            return Err(NnError::Shape { what, expected: k, got: len });
        }
    }
    if mean.iter().chain(log_std).chain(noise).any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("gaussian_tanh_sample"));
    }
    let mut action = Vec::with_capacity(k);
    let mut log_prob = 0.0;
    for j in 0..k {
        let ls = log_std[j].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = mean[j] + ls.exp() * noise[j];
        action.push(u.tanh());
        log_prob += -0.5 * noise[j] * noise[j] - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
    }
    Ok((action, log_prob))
}

/// A batch of reparameterized samples, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SquashedBatch {
    pub actions: Array2<f64>,
    pub log_prob: Array1<f64>,
    noise: Array2<f64>,
    std: Array2<f64>,
    /// Whether the raw log-std was inside the clamp range (gradient passes).
    ls_active: Array2<bool>,
}

impl SquashedBatch {
    /// `head` has `2k` columns: means then raw log-stds.
    pub fn sample(head: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<Self, NnError> {
        let k = head.ncols() / 2;
        if head.ncols() != 2 * k || noise.ncols() != k || noise.nrows() != head.nrows() {
            return Err(NnError::Shape { what: "policy head", expected: 2 * noise.ncols(), got: head.ncols() });
        }
        let b = head.nrows();
        let mean = head.slice(s![.., ..k]);
        let raw_ls = head.slice(s![.., k..]);
        let ls_active = raw_ls.mapv(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
        let std = raw_ls.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX).exp());
        let mut actions = Array2::zeros((b, k));
        let mut log_prob = Array1::zeros(b);
        for i in 0..b {
            let mut lp = 0.0;
            for j in 0..k {
                let e = noise[[i, j]];
                let u = mean[[i, j]] + std[[i, j]] * e;
                actions[[i, j]] = u.tanh();
                lp += -0.5 * e * e - std[[i, j]].ln() - HALF_LN_2PI - log_one_minus_tanh_sq(u);
            }
            log_prob[i] = lp;
        }
        Ok(Self { actions, log_prob, noise: noise.to_owned(), std, ls_active })
    }

    /// Chain rule back to the head outputs given `dL/da` and `dL/dlogp`.
    pub fn backward(&self, grad_action: ArrayView2<f64>, grad_log_prob: &Array1<f64>) -> Array2<f64> {
        let (b, k) = self.actions.dim();
        let mut out = Array2::zeros((b, 2 * k));
        for i in 0..b {
            let gl = grad_log_prob[i];
            for j in 0..k {
                let a = self.actions[[i, j]];
                let sd = self.std[[i, j]];
                let e = self.noise[[i, j]];
                let dadu = 1.0 - a * a;
                // d logp / du = 2 tanh(u) from the squashing correction.
                let gu = grad_action[[i, j]] * dadu + gl * 2.0 * a;
                out[[i, j]] = gu;
                out[[i, k + j]] = if self.ls_active[[i, j]] { gu * sd * e - gl } else { 0.0 };
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn deterministic_limit() {
        let (a, _) = gaussian_tanh_sample(&[0.3, -1.2], &[-20.0, -30.0], &[2.5, -1.0]).unwrap();
        assert!((a[0] - 0.3f64.tanh()).abs() < 1e-8);
        assert!((a[1] - (-1.2f64).tanh()).abs() < 1e-8);
    }

    #[test]
    fn actions_stay_open_interval() {
        let (a, lp) = gaussian_tanh_sample(&[2.0, -2.0, 0.0], &[0.5, 0.5, 0.5], &[1.0, -1.0, 0.0]).unwrap();
        assert!(a.iter().all(|x| x.abs() < 1.0));
        assert!(lp.is_finite());
        // Far in the tail tanh rounds to exactly 1 but the density stays finite.
        let (a, lp) = gaussian_tanh_sample(&[5.0, -5.0], &[2.0, 2.0], &[3.0, -3.0]).unwrap();
        assert!(a.iter().all(|x| x.abs() <= 1.0));
        assert!(lp.is_finite());
        let (a, lp) = gaussian_tanh_sample(&[30.0], &[0.0], &[0.0]).unwrap();
        assert!(a[0] <= 1.0);
        assert!(lp.is_finite());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(gaussian_tanh_sample(&[0.0], &[0.0, 0.0], &[0.0]).is_err());
        assert!(gaussian_tanh_sample(&[f64::NAN], &[0.0], &[0.0]).is_err());
    }

    /// Integrates exp(log_prob) over (-1, 1) after substituting a = tanh(u),
    /// da = (1 - tanh(u)^2) du; the density must integrate to one.
    #[test]
    fn density_integrates_to_one() {
        for &(mean, ls) in &[(0.0, 0.0), (0.7, -0.5), (-1.5, 0.8), (2.0, 1.5)] {
            let sd: f64 = f64::exp(ls);
            let n = 200_000;
            let (lo, hi) = (mean - 12.0 * sd, mean + 12.0 * sd);
            let du = (hi - lo) / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                let u: f64 = lo + (i as f64 + 0.5) * du;
                let e = (u - mean) / sd;
                let (_, lp) = gaussian_tanh_sample(&[mean], &[ls], &[e]).unwrap();
                let jac = 1.0 / u.cosh().powi(2);
                total += lp.exp() * jac * du;
            }
            assert!((total - 1.0).abs() < 1e-3, "mean {mean} ls {ls}: {total}");
        }
    }

    #[test]
    fn batch_matches_single() {
        let head = array![[0.2, -0.4, 0.1, -1.0], [1.0, 0.5, 3.0, -25.0]];
        let noise = array![[0.3, -0.7], [1.2, 0.4]];
        let batch = SquashedBatch::sample(head.view(), noise.view()).unwrap();
        for i in 0..2 {
            let (a, lp) = gaussian_tanh_sample(
                &head.row(i).to_vec()[..2],
                &head.row(i).to_vec()[2..],
                &noise.row(i).to_vec(),
            )
            .unwrap();
            assert!((batch.log_prob[i] - lp).abs() < 1e-12);
            for j in 0..2 {
                assert!((batch.actions[[i, j]] - a[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let head = array![[0.2, -0.4, 0.1, -1.0], [0.8, 0.5, 1.5, 0.3]];
        let noise = array![[0.3, -0.7], [1.2, 0.4]];
        let ga = array![[0.5, -1.0], [0.25, 2.0]];
        let gl = array![0.2, -0.3];
        let loss = |h: &Array2<f64>| {
            let b = SquashedBatch::sample(h.view(), noise.view()).unwrap();
            (&b.actions * &ga).sum() + (&b.log_prob * &gl).sum()
        };
        let b = SquashedBatch::sample(head.view(), noise.view()).unwrap();
        let analytic = b.backward(ga.view(), &gl);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..4 {
                let mut p = head.clone();
                p[[i, j]] += h;
                let mut m = head.clone();
                m[[i, j]] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - analytic[[i, j]]).abs() < 1e-7, "{i},{j}: {fd} vs {}", analytic[[i, j]]);
            }
        }
    }
}
