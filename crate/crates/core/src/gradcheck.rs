//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates the forward pass, so it is
//! independent of every backward rule it checks.

use alloc::vec::Vec;

use crate::{Matrix, Result, Tape, Var};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Worst relative error over `params`: for each tensor,
/// `max |ad − fd| / max(1e-7, max |ad| + max |fd|)` with maxima over its
/// coordinates, where `ad` is the reverse-mode gradient and
/// `fd = (f(p + h) − f(p − h)) / 2h`.
///
/// Normalizing by the tensor's largest gradient keeps coordinates whose
/// gradient is tiny (where the O(h²) truncation error of the central
/// difference dominates) from masking as failures, while any wrong backward
/// rule still shows up at order one.
///
/// `f` builds a scalar from leaves holding `params`, in order.
pub fn finite_difference_check<F>(mut f: F, params: &[Matrix], h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = gradients(&mut f, params)?;
    let mut worst: f64 = 0.0;
    let mut probe: Vec<Matrix> = params.to_vec();
    for (p, grad) in analytic.iter().enumerate() {
        let (mut gap, mut ad_max, mut fd_max) = (0.0f64, 0.0f64, 0.0f64);
        for c in 0..params[p].len() {
            let orig = params[p].as_slice()[c];
            probe[p].as_mut_slice()[c] = orig + h;
            let up = evaluate(&mut f, &probe)?;
            probe[p].as_mut_slice()[c] = orig - h;
            let down = evaluate(&mut f, &probe)?;
            probe[p].as_mut_slice()[c] = orig;
            let fd = (up - down) / (2.0 * h);
            let ad = grad.as_slice()[c];
            gap = gap.max((ad - fd).abs());
            ad_max = ad_max.max(ad.abs());
            fd_max = fd_max.max(fd.abs());
        }
        worst = worst.max(gap / (ad_max + fd_max).max(1e-7));
    }
    Ok(worst)
}

/// Scalar value of `f` at `params`.
pub fn evaluate<F>(f: &mut F, params: &[Matrix]) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar(&tape, out)
}

/// Reverse-mode gradients of `f` with respect to each of `params`.
pub fn gradients<F>(f: &mut F, params: &[Matrix]) -> Result<Vec<Matrix>>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    Ok(vars.iter().map(|&v| tape.grad(v).expect("swept")).collect())
}

fn scalar(tape: &Tape, v: Var) -> Result<f64> {
    let m = tape.value(v);
    m.item().ok_or(crate::Error::dim("finite_difference_check", m.shape(), (1, 1)))
}
