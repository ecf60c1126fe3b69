use crate::error::Error;
use crate::Result;

use super::tensor::{ParamStore, Scalar, Tensor};

/// Optimizer hyperparameters: decoupled weight decay, global-norm gradient
/// clipping, linear warmup followed by cosine decay to zero.
#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub warmup_frac: f64,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub clip_threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            warmup_frac: 0.05,
            total_steps: 1000,
            weight_decay: 1e-3,
            clip_threshold: 10.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    /// Learning rate for a 1-based step index.
    pub fn lr_at(&self, step: usize) -> f64 {
        let total = self.total_steps.max(1);
        let warmup = ((self.warmup_frac * total as f64).ceil() as usize).max(1);
        if step <= warmup {
            self.base_lr * step as f64 / warmup as f64
        } else if step >= total {
            0.0
        } else {
            let t = (step - warmup) as f64 / (total - warmup) as f64;
            0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: usize,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>, config: OptimizerConfig) -> Self {
        let m = params
            .ids()
            .map(|id| {
                let t = params.get(id);
                Tensor::zeros(t.rows(), t.cols())
            })
            .collect::<Vec<_>>();
        let v = m.clone();
        Self {
            config,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update. Clips the global gradient norm first (direction is
    /// preserved exactly), then applies the moment update and decoupled
    /// weight decay at the scheduled learning rate.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        self.step_masked(params, grads, None)
    }

    /// One update restricted to parameters whose mask entry is true; masked-out
    /// parameters are left bit-identical (no moments, no decay).
    pub fn step_masked(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &[Tensor<T>],
        mask: Option<&[bool]>,
    ) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Argument(format!(
                "got {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if !g.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    params.name(id)
                )));
            }
        }
        self.step += 1;
        let lr: T = Scalar::from_f64(self.config.lr_at(self.step));
        let wd: T = Scalar::from_f64(self.config.weight_decay);
        let b1: T = Scalar::from_f64(self.config.beta1);
        let b2: T = Scalar::from_f64(self.config.beta2);
        let eps: T = Scalar::from_f64(self.config.eps);
        let clip: T = Scalar::from_f64(self.config.clip_threshold);

        if let Some(m) = mask {
            if m.len() != grads.len() {
                return Err(Error::Argument(format!(
                    "mask of {} entries for {} parameters",
                    m.len(),
                    grads.len()
                )));
            }
        }
        let active = |i: usize| mask.map_or(true, |m| m[i]);
        let sq_norm: T = grads
            .iter()
            .enumerate()
            .filter(|(i, _)| active(*i))
            .flat_map(|(_, g)| g.data().iter())
            .map(|&v| v * v)
            .fold(T::zero(), |a, v| a + v);
        let norm = sq_norm.sqrt();
        let rescale = if norm > clip { clip / norm } else { T::one() };

        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);

        for (i, id) in params.ids().enumerate() {
            if !active(i) {
                continue;
            }
            let p = params.get_mut(id);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.len() {
                let g = grads[i].data()[j] * rescale;
                let mj = b1 * m.data()[j] + (T::one() - b1) * g;
                let vj = b2 * v.data()[j] + (T::one() - b2) * g * g;
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                let m_hat = mj / bc1;
                let v_hat = vj / bc2;
                let pj = p.data()[j];
                p.data_mut()[j] = pj - lr * (m_hat / (v_hat.sqrt() + eps)) - lr * wd * pj;
            }
        }
        Ok(())
    }
}
