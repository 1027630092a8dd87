use candle_core::{DType, Tensor, Var};

use super::KanLayer;
use crate::error::{validation, Result};

/// Outcome of comparing backprop gradients with central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Relative errors use `max(|analytic|, |numeric|, FLOOR)` as denominator.
const FLOOR: f64 = 1e-6;

/// Checks coefficient, base-weight and input gradients of `layer` at `x`
/// against central finite differences with step `h`.
///
/// The scalar loss is `Σ y ⊙ r` for a fixed probe `r`, so every output
/// contributes. Works in f64 regardless of the layer's dtype.
pub fn kan_gradient_check(layer: &KanLayer, x: &Tensor, probe: &Tensor, h: f64) -> Result<GradCheckReport> {
    if layer.in_dim() > 8 || layer.out_dim() > 8 {
        return Err(validation!("gradient check is meant for layers of at most 8×8"));
    }
    let coeffs = layer.coeffs().to_dtype(DType::F64)?;
    let base = layer.base_weight().to_dtype(DType::F64)?;
    let x = x.to_dtype(DType::F64)?;
    let probe = probe.to_dtype(DType::F64)?;
    let grid = *layer.grid();

    let loss = |c: &Tensor, b: &Tensor, x: &Tensor| -> Result<Tensor> {
        let l = KanLayer::from_parts(grid, c.clone(), b.clone())?;
        Ok((l.forward(x)? * &probe)?.sum_all()?)
    };

    let cv = Var::from_tensor(&coeffs)?;
    let bv = Var::from_tensor(&base)?;
    let xv = Var::from_tensor(&x)?;
    let grads = loss(cv.as_tensor(), bv.as_tensor(), xv.as_tensor())?.backward()?;
    let analytic = |v: &Var| -> Result<Vec<f64>> {
        match grads.get(v) {
            Some(g) => Ok(g.flatten_all()?.to_vec1()?),
            None => Ok(vec![0.0; v.elem_count()]),
        }
    };
    let g_c = analytic(&cv)?;
    let g_b = analytic(&bv)?;
    let g_x = analytic(&xv)?;

    let scalar = |t: Tensor| -> Result<f64> { Ok(t.to_scalar::<f64>()?) };
    let perturb = |t: &Tensor, i: usize, delta: f64| -> Result<Tensor> {
        let mut v: Vec<f64> = t.flatten_all()?.to_vec1()?;
        v[i] += delta;
        Ok(Tensor::from_vec(v, t.shape(), t.device())?)
    };

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut compare = |a: f64, n: f64| {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(FLOOR);
        max_rel = max_rel.max(rel);
        checked += 1;
    };

    for (i, &a) in g_c.iter().enumerate() {
        let up = scalar(loss(&perturb(&coeffs, i, h)?, &base, &x)?)?;
        let down = scalar(loss(&perturb(&coeffs, i, -h)?, &base, &x)?)?;
        compare(a, (up - down) / (2.0 * h));
    }
    for (i, &a) in g_b.iter().enumerate() {
        let up = scalar(loss(&coeffs, &perturb(&base, i, h)?, &x)?)?;
        let down = scalar(loss(&coeffs, &perturb(&base, i, -h)?, &x)?)?;
        compare(a, (up - down) / (2.0 * h));
    }
    for (i, &a) in g_x.iter().enumerate() {
        let up = scalar(loss(&coeffs, &base, &perturb(&x, i, h)?)?)?;
        let down = scalar(loss(&coeffs, &base, &perturb(&x, i, -h)?)?)?;
        compare(a, (up - down) / (2.0 * h));
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked,
    })
}
