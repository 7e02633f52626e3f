use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Largest `|analytic − numeric| / max(1, |analytic|)` over the coordinates of `x`.
///
/// `f` builds a scalar on the given tape from the leaf it is handed. The numeric side uses
/// central differences with step `h`; stop-gradient and straight-through values are held at
/// their base-point values so both sides differentiate the same surrogate function.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::recording();
    let leaf = tape.leaf(x.clone(), true)?;
    let out = f(&mut tape, leaf)?;
    let base = tape.value(out).item()?;
    if !base.is_finite() {
        return Err(Error::NonFinite("grad_check"));
    }
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(leaf)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    let frozen = tape.take_recorded();

    let eval = |xp: Tensor| -> Result<f64> {
        let mut t = Tape::replaying(frozen.clone());
        let l = t.leaf(xp, true)?;
        let o = f(&mut t, l)?;
        t.value(o).item()
    };

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
