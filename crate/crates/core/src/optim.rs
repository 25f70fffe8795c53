//! Adam and momentum SGD with checkpointable state, plus global-norm clipping.

use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::scalar_f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Adam { beta1: f64, beta2: f64, eps: f64, weight_decay: f64 },
    Sgd { momentum: f64, weight_decay: f64 },
}

impl OptimizerSpec {
    pub fn adam() -> Self {
        OptimizerSpec::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }

    pub fn sgd_momentum() -> Self {
        OptimizerSpec::Sgd { momentum: 0.9, weight_decay: 0.0 }
    }

    pub fn is_sgd(&self) -> bool {
        matches!(self, OptimizerSpec::Sgd { .. })
    }
}

struct Slot {
    name: String,
    var: Var,
    /// First moment (Adam) or momentum buffer (SGD).
    m: Tensor,
    /// Second moment; unused for SGD.
    v: Tensor,
}

/// One optimizer over a named parameter group.
pub struct Optimizer {
    spec: OptimizerSpec,
    lr: f64,
    step: u64,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, params: Vec<(String, Var)>, lr: f64) -> Result<Self> {
        let slots = params
            .into_iter()
            .map(|(name, var)| {
                let z = var.zeros_like()?;
                Ok(Slot { name, m: z.clone(), v: z, var })
            })
            .collect::<Result<_>>()?;
        Ok(Self { spec, lr, step: 0, slots })
    }

    pub fn spec(&self) -> OptimizerSpec {
        self.spec
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn vars(&self) -> Vec<Var> {
        self.slots.iter().map(|s| s.var.clone()).collect()
    }

    /// Applies one update; parameters without a gradient are left untouched.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        for slot in &mut self.slots {
            let Some(g) = grads.get(&slot.var) else { continue };
            // Moment buffers must not keep the autograd graph of this step alive.
            let g = &g.detach();
            let p = &slot.var.as_tensor().detach();
            match self.spec {
                OptimizerSpec::Adam { beta1, beta2, eps, weight_decay } => {
                    let g = if weight_decay > 0.0 { (g + (p * weight_decay)?)? } else { g.clone() };
                    slot.m = ((&slot.m * beta1)? + (&g * (1.0 - beta1))?)?;
                    slot.v = ((&slot.v * beta2)? + (g.sqr()? * (1.0 - beta2))?)?;
                    let mhat = (&slot.m / (1.0 - beta1.powi(t)))?;
                    let vhat = (&slot.v / (1.0 - beta2.powi(t)))?;
                    let upd = (mhat / (vhat.sqrt()? + eps)?)?;
                    slot.var.set(&(p - (upd * self.lr)?)?)?;
                }
                OptimizerSpec::Sgd { momentum, weight_decay } => {
                    let g = if weight_decay > 0.0 { (g + (p * weight_decay)?)? } else { g.clone() };
                    slot.m = ((&slot.m * momentum)? + g)?;
                    slot.var.set(&(p - (&slot.m * self.lr)?)?)?;
                }
            }
        }
        Ok(())
    }

    /// State tensors keyed `<prefix>.<param>.m|v` plus `<prefix>.step`.
    pub fn state_tensors(&self, prefix: &str) -> Result<Vec<(String, Tensor)>> {
        let mut out = Vec::with_capacity(2 * self.slots.len() + 1);
        for s in &self.slots {
            out.push((format!("{prefix}.{}.m", s.name), s.m.clone()));
            if !self.spec.is_sgd() {
                out.push((format!("{prefix}.{}.v", s.name), s.v.clone()));
            }
        }
        let step = Tensor::new(&[self.step as f64], &candle_core::Device::Cpu)?;
        out.push((format!("{prefix}.step"), step));
        Ok(out)
    }

    pub fn load_state(&mut self, prefix: &str, lookup: &dyn Fn(&str) -> Option<Tensor>) -> Result<()> {
        let fetch = |key: String, like: &Tensor| -> Result<Tensor> {
            let t = lookup(&key).ok_or_else(|| Error::Checkpoint(format!("missing `{key}`")))?;
            if t.dims() != like.dims() || t.dtype() != like.dtype() {
                return Err(Error::Checkpoint(format!("`{key}` has wrong shape or dtype")));
            }
            Ok(t)
        };
        for s in &mut self.slots {
            s.m = fetch(format!("{prefix}.{}.m", s.name), &s.m)?;
            if !self.spec.is_sgd() {
                s.v = fetch(format!("{prefix}.{}.v", s.name), &s.v)?;
            }
        }
        let key = format!("{prefix}.step");
        let step = lookup(&key).ok_or_else(|| Error::Checkpoint(format!("missing `{key}`")))?;
        self.step = scalar_f64(&step.to_dtype(DType::F64)?.reshape(())?)? as u64;
        Ok(())
    }
}

/// Scales the gradients of `vars` so their joint L2 norm is at most `max_norm`.
///
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut GradStore, vars: &[Var], max_norm: f64) -> Result<f64> {
    let mut total = 0f64;
    for v in vars {
        if let Some(g) = grads.get(v) {
            total += scalar_f64(&g.to_dtype(DType::F64)?.sqr()?.sum_all()?)?;
        }
    }
    let norm = total.sqrt();
    if norm.is_finite() && norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for v in vars {
            if let Some(g) = grads.get(v) {
                let scaled = (g * scale)?;
                grads.insert(v, scaled);
            }
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn quad_grads(x: &Var) -> GradStore {
        // d/dx of sum(x^2) = 2x
        x.as_tensor().sqr().unwrap().sum_all().unwrap().backward().unwrap()
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let x = Var::new(&[1.0f64, -2.0, 0.5], &Device::Cpu).unwrap();
        let mut opt = Optimizer::new(OptimizerSpec::adam(), vec![("x".into(), x.clone())], 0.1).unwrap();
        opt.step(&quad_grads(&x)).unwrap();
        let v = x.as_tensor().to_vec1::<f64>().unwrap();
        // bias-corrected first step is lr * sign(g)
        for (a, b) in v.iter().zip([0.9, -1.9, 0.4]) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn sgd_momentum_matches_hand_recurrence() {
        let x = Var::new(&[1.0f64], &Device::Cpu).unwrap();
        let mut opt = Optimizer::new(OptimizerSpec::sgd_momentum(), vec![("x".into(), x.clone())], 0.1).unwrap();
        let (mut xr, mut buf) = (1.0f64, 0.0f64);
        for _ in 0..5 {
            opt.step(&quad_grads(&x)).unwrap();
            buf = 0.9 * buf + 2.0 * xr;
            xr -= 0.1 * buf;
        }
        let got = x.as_tensor().to_vec1::<f64>().unwrap()[0];
        assert!((got - xr).abs() < 1e-12);
    }

    #[test]
    fn state_round_trip() {
        let x = Var::new(&[1.0f64, 2.0], &Device::Cpu).unwrap();
        let mut a = Optimizer::new(OptimizerSpec::adam(), vec![("x".into(), x.clone())], 0.1).unwrap();
        a.step(&quad_grads(&x)).unwrap();
        let state = a.state_tensors("opt").unwrap();
        let y = Var::new(&[1.0f64, 2.0], &Device::Cpu).unwrap();
        let mut b = Optimizer::new(OptimizerSpec::adam(), vec![("x".into(), y)], 0.1).unwrap();
        b.load_state("opt", &|k| state.iter().find(|(n, _)| n == k).map(|(_, t)| t.clone())).unwrap();
        assert_eq!(b.steps_taken(), 1);
    }

    #[test]
    fn clipping_caps_norm() {
        let x = Var::new(&[3.0f64, 4.0], &Device::Cpu).unwrap();
        let mut g = quad_grads(&x);
        let n = clip_grad_norm(&mut g, &[x.clone()], 1.0).unwrap();
        assert!((n - 10.0).abs() < 1e-12);
        let after = g.get(&x).unwrap().sqr().unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap().sqrt();
        assert!((after - 1.0).abs() < 1e-6);
    }
}
