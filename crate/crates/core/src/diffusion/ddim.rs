use candle_core::Tensor;

use super::{ConditioningBundle, DiffusionSchedule};
use crate::error::{validation, Result};

/// Predicts the injected noise for `x_t` at timestep `t`.
pub trait Denoiser {
    fn predict_noise(&self, x_t: &Tensor, t: usize, cond: &ConditioningBundle) -> Result<Tensor>;
}

/// Clean-sample estimate `(x_t − √(1 − ᾱ_t)·ε̂) / √ᾱ_t`, unclamped.
pub fn predict_x0(x_t: &Tensor, eps: &Tensor, t: usize, sched: &DiffusionSchedule) -> Result<Tensor> {
    let ab = sched.alpha_bar(t);
    Ok(((x_t - (eps * (1.0 - ab).sqrt())?)? / ab.sqrt())?)
}

/// Deterministic DDIM update from `t` to `t_prev` (`None` = clean sample).
///
/// The clean estimate is clamped to [-1, 1] before re-noising.
pub fn ddim_step(
    x_t: &Tensor,
    eps: &Tensor,
    t: usize,
    t_prev: Option<usize>,
    sched: &DiffusionSchedule,
) -> Result<Tensor> {
    if t >= sched.train_steps() {
        return Err(validation!("timestep {t} outside schedule of {}", sched.train_steps()));
    }
    if let Some(p) = t_prev {
        if p >= t {
            return Err(validation!("DDIM target step {p} must precede {t}"));
        }
    }
    let x0 = predict_x0(x_t, eps, t, sched)?.clamp(-1.0, 1.0)?;
    let ab_prev = sched.alpha_bar_or_clean(t_prev);
    Ok(((x0 * ab_prev.sqrt())? + (eps * (1.0 - ab_prev).sqrt())?)?)
}

/// Runs the inference chain from `init` (noised at the largest inference
/// step) and maps the result from [-1, 1] to [0, 1].
pub fn denoise_sequence(
    init: &Tensor,
    cond: &ConditioningBundle,
    sched: &DiffusionSchedule,
    model: &dyn Denoiser,
) -> Result<Tensor> {
    let mut x = init.clone();
    for (t, t_prev) in sched.inference_pairs() {
        let eps = model.predict_noise(&x, t, cond)?;
        x = ddim_step(&x, &eps, t, t_prev, sched)?;
    }
    Ok(((x.clamp(-1.0, 1.0)? + 1.0)? * 0.5)?)
}
