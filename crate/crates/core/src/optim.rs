//! Cross-entropy loss, Adam with decoupled weight decay, and the
//! plateau-driven learning-rate and early-stop controllers.

use crate::error::{data_err, Error, Result};
use crate::model::ModelParams;
use crate::tensor::{Scalar, Tensor4};

/// Mean pixel-wise categorical cross-entropy over `(n, h, w)` and its
/// gradient `(softmax - onehot) / pixels`.
///
/// `target` holds one class index per pixel in `(n, h, w)` order.
pub fn ce_loss<T: Scalar>(logits: &Tensor4<T>, target: &[u8]) -> Result<(f64, Tensor4<T>)> {
    let s = logits.shape();
    let (classes, plane) = (s.c, s.plane());
    let pixels = s.n * plane;
    if target.len() != pixels {
        return Err(data_err!(
            "target has {} pixels, logits {}",
            target.len(),
            logits.shape()
        ));
    }
    if let Some(bad) = target.iter().find(|&&t| usize::from(t) >= classes) {
        return Err(data_err!("target class {bad} out of range for {classes} classes"));
    }
    let mut grad = Tensor4::zeros(s);
    let scale = T::one() / T::from_usize(pixels).expect("pixel count fits");
    let mut total = 0.0f64;
    let src = logits.data();
    let dst = grad.data_mut();
    let mut probs = vec![T::zero(); classes];
    for n in 0..s.n {
        let base = n * classes * plane;
        for i in 0..plane {
            let at = |k: usize| base + k * plane + i;
            let mut m = T::neg_infinity();
            for k in 0..classes {
                m = m.max(src[at(k)]);
            }
            let mut z = T::zero();
            for (k, p) in probs.iter_mut().enumerate() {
                *p = (src[at(k)] - m).exp();
                z += *p;
            }
            let t = usize::from(target[n * plane + i]);
            // log-softmax of the true class
            let log_p = src[at(t)] - m - z.ln();
            total -= log_p.to_f64_lossy();
            for (k, &p) in probs.iter().enumerate() {
                let onehot = if k == t { T::one() } else { T::zero() };
                dst[at(k)] = (p / z - onehot) * scale;
            }
        }
    }
    Ok((total / pixels as f64, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub weight_decay: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams<f32>,
    pub v: ModelParams<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One Adam step. Weight decay is decoupled: `θ ← θ − lr·wd·θ` is applied
/// before the bias-corrected Adam update.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &ModelParams<f32>,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = params.params().len();
    if grads.params().len() != n || state.m.params().len() != n {
        return Err(Error::Internal("adam: parameter lists differ in length".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = cfg.lr * cfg.weight_decay;
    for (i, p) in params.params_mut().iter_mut().enumerate() {
        let g = &grads.params()[i].tensor;
        let m = &mut state.m.params_mut()[i].tensor;
        if g.shape() != p.tensor.shape() || m.shape() != p.tensor.shape() {
            return Err(Error::Internal(format!("adam: shape mismatch on {}", p.name)));
        }
        let v = &mut state.v.params_mut()[i].tensor;
        let (m, v) = (m.data_mut(), v.data_mut());
        for (k, theta) in p.tensor.data_mut().iter_mut().enumerate() {
            let gk = g.data()[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *theta -= decay * *theta;
            *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` once the monitored metric
/// (higher is better) has gone `patience` epochs without improving on its
/// best by more than `min_delta`. Never goes below `min_lr`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f32,
    pub factor: f32,
    pub patience: usize,
    pub min_delta: f64,
    pub min_lr: f32,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f32, factor: f32, patience: usize, min_delta: f64, min_lr: f32) -> Self {
        assert!(factor > 0.0 && factor < 1.0, "plateau factor must be in (0, 1)");
        PlateauScheduler {
            lr,
            factor,
            patience,
            min_delta,
            min_lr,
            best: f64::NEG_INFINITY,
            wait: 0,
        }
    }

    /// Feed one epoch's metric; returns the learning rate for the next epoch.
    pub fn step(&mut self, metric: f64) -> f32 {
        if metric > self.best + self.min_delta {
            self.best = metric;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Signals a stop after `patience` epochs without improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: f64::NEG_INFINITY,
            wait: 0,
        }
    }

    /// Returns `true` when training should stop.
    pub fn step(&mut self, metric: f64) -> bool {
        if metric > self.best + self.min_delta {
            self.best = metric;
            self.wait = 0;
            false
        } else {
            self.wait += 1;
            self.wait >= self.patience
        }
    }
}
