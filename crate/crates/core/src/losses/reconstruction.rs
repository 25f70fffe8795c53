use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::ops::mean_abs_diff;

fn check(target: &Tensor, generated: &Tensor) -> Result<()> {
    if target.dims() != generated.dims() {
        return Err(Error::InvalidArgument(format!(
            "generated {:?} vs target {:?}",
            generated.dims(),
            target.dims()
        )));
    }
    Ok(())
}

/// Identity-shuffling loss over the four `(i, j) ∈ {a, p}²` generations.
///
/// `recon[2*i + j]` is `G(φ_R(I_j) ⊕ φ_U(I_i))` and is compared against `I_i`.
/// Each term is the mean absolute error over pixels and channels.
pub fn identity_shuffle_loss(anchor: &Tensor, positive: &Tensor, recon: &[Tensor; 4]) -> Result<Tensor> {
    let targets = [anchor, anchor, positive, positive];
    let mut total: Option<Tensor> = None;
    for (t, g) in targets.into_iter().zip(recon) {
        check(t, g)?;
        let term = mean_abs_diff(t, g)?;
        total = Some(match total {
            Some(acc) => (acc + term)?,
            None => term,
        });
    }
    Ok(total.expect("four terms"))
}

/// Part-level shuffling loss over the two ordered pairs `(a, p)` and `(p, a)`.
///
/// `shuffled[0]` is `G(S(φ_R(I_a), φ_R(I_p)) ⊕ φ_U(I_a))`, `shuffled[1]` the mirror.
pub fn part_shuffle_loss(anchor: &Tensor, positive: &Tensor, shuffled: &[Tensor; 2]) -> Result<Tensor> {
    check(anchor, &shuffled[0])?;
    check(positive, &shuffled[1])?;
    Ok((mean_abs_diff(anchor, &shuffled[0])? + mean_abs_diff(positive, &shuffled[1])?)?)
}
