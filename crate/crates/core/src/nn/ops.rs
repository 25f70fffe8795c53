//! Differentiable tensor helpers composed from `candle-core` primitives.

use candle_core::{DType, Device, Tensor, D};

use crate::error::Result;

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    // relu(x) - slope * relu(-x)
    let neg = x.neg()?.relu()?;
    Ok((x.relu()? - (neg * slope)?)?)
}

/// Logistic function, computed as `(tanh(x/2) + 1) / 2` for stability.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(((x * 0.5)?.tanh()? + 1.0)?.affine(0.5, 0.0)?)
}

/// Log-softmax over the last dimension with max-subtraction.
pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Max over every spatial position: `[B, C, H, W] -> [B, C]`.
pub fn global_max_pool(x: &Tensor) -> Result<Tensor> {
    Ok(x.flatten_from(2)?.max(2)?)
}

/// Mean absolute difference over every element.
pub fn mean_abs_diff(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((a - b)?.abs()?.mean_all()?)
}

/// Builds a tensor of the requested dtype from `f64` values.
pub fn tensor_from_f64(values: Vec<f64>, shape: &[usize], dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

/// Reads any float tensor back as a flat `f64` vector.
pub fn to_f64_vec(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

pub fn scalar_f64(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
