use serde::{Deserialize, Serialize};

use super::{Mlp, NnError, Tensors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// One bias-corrected Adam update over flat slices. `step` is the 1-based
/// index of this update.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    let n = params.len();
    for (what, len) in [("gradient", grads.len()), ("first moment", m.len()), ("second moment", v.len())] {
        if len != n {
            return Err(NnError::Shape { what, expected: n, got: len });
        }
    }
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..n {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam moments for every tensor of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub m: Tensors,
    pub v: Tensors,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        Self { cfg, m: net.params.zeros_like(), v: net.params.zeros_like(), step: 0 }
    }

    /// Applies one update to `net` given gradients of the loss being minimized.
    pub fn step(&mut self, net: &mut Mlp, grads: &Tensors) -> Result<(), NnError> {
        let sizes: Vec<usize> = net.params.slices().iter().map(|s| s.len()).collect();
        let gsizes: Vec<usize> = grads.slices().iter().map(|s| s.len()).collect();
        if sizes != gsizes {
            return Err(NnError::Shape {
                what: "gradient tensors",
                expected: sizes.iter().sum(),
                got: gsizes.iter().sum(),
            });
        }
        self.step += 1;
        let step = self.step;
        let cfg = self.cfg;
        for (((p, g), m), v) in net
            .params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            adam_update(p, g, m, v, step, &cfg)?;
        }
        Ok(())
    }
}

/// Adam for a single scalar parameter (e.g. the log-temperature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarAdam {
    pub cfg: AdamConfig,
    pub m: f64,
    pub v: f64,
    pub step: u64,
}

impl ScalarAdam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, m: 0.0, v: 0.0, step: 0 }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.step += 1;
        let mut p = [*param];
        let mut m = [self.m];
        let mut v = [self.v];
        adam_update(&mut p, &[grad], &mut m, &mut v, self.step, &self.cfg).expect("scalar shapes");
        *param = p[0];
        self.m = m[0];
        self.v = v[0];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_leave_params() {
        let mut net = Mlp::zeros([2, 3, 3, 1]).unwrap();
        net.params.w[0].fill(0.5);
        let before = net.clone();
        let mut opt = AdamState::new(&net, AdamConfig::default());
        let zeros = net.params.zeros_like();
        opt.step(&mut net, &zeros).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut theta = 1.0;
        let mut opt = ScalarAdam::new(AdamConfig::default());
        opt.step(&mut theta, 1.0);
        let expect = -3e-4 / (1.0 + 1e-8);
        assert!(((theta - 1.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut theta = 0.0;
        let mut prev = theta;
        let mut opt = ScalarAdam::new(AdamConfig::with_lr(1e-2));
        for _ in 0..100 {
            opt.step(&mut theta, 2.0);
            assert!(theta < prev);
            prev = theta;
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = [0.0; 3];
        let mut m = [0.0; 3];
        let mut v = [0.0; 3];
        assert!(adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &AdamConfig::default()).is_err());
        let mut net = Mlp::zeros([2, 3, 3, 1]).unwrap();
        let mut opt = AdamState::new(&net, AdamConfig::default());
        let other = Mlp::zeros([2, 4, 3, 1]).unwrap();
        assert!(opt.step(&mut net, &other.params).is_err());
    }
}
