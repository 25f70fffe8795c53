use candle_core::{Tensor, Var};
use rand::Rng;

use super::{Builder, Ctx, Init};
use crate::error::{Error, Result};
use crate::nn::ops::tensor_from_f64;

fn param(v: &Var, frozen: bool) -> Tensor {
    if frozen {
        v.as_tensor().detach()
    } else {
        v.as_tensor().clone()
    }
}

pub struct Linear {
    weight: Var,
    bias: Option<Var>,
}

impl Linear {
    pub fn new(b: &mut Builder, in_dim: usize, out_dim: usize, bias: bool) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = b.param("weight", (out_dim, in_dim), Init::Uniform { bound })?;
        let bias = if bias {
            Some(b.param("bias", out_dim, Init::Uniform { bound })?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with(x, false)
    }

    /// `frozen` reads detached copies of the parameters, so no gradient reaches them.
    pub fn forward_with(&self, x: &Tensor, frozen: bool) -> Result<Tensor> {
        let y = x.matmul(&param(&self.weight, frozen).t()?)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&param(b, frozen))?,
            None => y,
        })
    }
}

pub struct Conv2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        b: &mut Builder,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
    ) -> Result<Self> {
        let weight = b.param("weight", (out_c, in_c, kernel, kernel), init)?;
        let bias = b.param("bias", out_c, Init::Const(0.0))?;
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with(x, false)
    }

    pub fn forward_with(&self, x: &Tensor, frozen: bool) -> Result<Tensor> {
        let y = x.conv2d(&param(&self.weight, frozen), self.padding, self.stride, 1, 1)?;
        Ok(y.broadcast_add(&param(&self.bias, frozen).reshape((1, (), 1, 1))?)?)
    }

    pub fn weight(&self) -> &Var {
        &self.weight
    }
}

pub struct ConvTranspose2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        b: &mut Builder,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
    ) -> Result<Self> {
        let weight = b.param("weight", (in_c, out_c, kernel, kernel), init)?;
        let bias = b.param("bias", out_c, Init::Const(0.0))?;
        Ok(ConvTranspose2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

/// Batch normalisation over `[B, C]` or `[B, C, H, W]` inputs.
pub struct BatchNorm {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm {
    pub fn new(b: &mut Builder, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: b.param("gamma", channels, Init::Const(1.0))?,
            beta: b.param("beta", channels, Init::Const(0.0))?,
            running_mean: b.buffer("running_mean", channels, Init::Const(0.0))?,
            running_var: b.buffer("running_var", channels, Init::Const(1.0))?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    /// In train mode the running statistics are updated as a side effect.
    pub fn forward(&self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let rank = x.rank();
        let c = x.dim(1)?;
        let bshape: Vec<usize> = (0..rank).map(|i| if i == 1 { c } else { 1 }).collect();
        let (mean, var) = if ctx.is_train() {
            // [C, N] view with channels leading
            let cols = x.transpose(0, 1)?.flatten_from(1)?;
            let n = cols.dim(1)?;
            let mean = cols.mean_keepdim(1)?;
            let var = cols.broadcast_sub(&mean)?.sqr()?.mean_keepdim(1)?;
            let mean = mean.flatten_all()?;
            let var = var.flatten_all()?;
            let unbiased = if n > 1 {
                (var.detach() * (n as f64 / (n as f64 - 1.0)))?
            } else {
                var.detach()
            };
            let m = self.momentum;
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach() * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased * m)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().clone(),
                self.running_var.as_tensor().clone(),
            )
        };
        let mean = mean.reshape(bshape.as_slice())?;
        let inv = (var + self.eps)?.sqrt()?.recip()?.reshape(bshape.as_slice())?;
        let xhat = x.broadcast_sub(&mean)?.broadcast_mul(&inv)?;
        let g = self.gamma.reshape(bshape.as_slice())?;
        let bt = self.beta.reshape(bshape.as_slice())?;
        Ok(xhat.broadcast_mul(&g)?.broadcast_add(&bt)?)
    }
}

/// Parameter-free instance normalisation over the spatial dims of `[B, C, H, W]`.
pub struct InstanceNorm {
    eps: f64,
}

impl Default for InstanceNorm {
    fn default() -> Self {
        InstanceNorm { eps: 1e-5 }
    }
}

impl InstanceNorm {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let flat = x.reshape((b, c, h * w))?;
        let mean = flat.mean_keepdim(2)?;
        let centered = flat.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(2)?;
        let y = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(y.reshape((b, c, h, w))?)
    }
}

/// Inverted dropout; masks come from the context stream.
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} not in [0,1)")));
        }
        Ok(Dropout { p })
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        if !ctx.is_train() || self.p == 0.0 {
            return Ok(x.clone());
        }
        let Some(rng) = ctx.rng() else {
            return Ok(x.clone());
        };
        let keep = 1.0 - self.p;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..x.elem_count())
            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let mask = tensor_from_f64(mask, x.dims(), x.dtype())?;
        Ok((x * mask)?)
    }
}
