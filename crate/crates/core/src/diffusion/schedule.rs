use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BetaSchedule {
    Linear { start: f64, end: f64 },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Linear {
            start: 1e-4,
            end: 0.02,
        }
    }
}

/// Noise levels for `T` training steps plus the strided inference subset.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    inference_steps: Vec<usize>,
}

impl DiffusionSchedule {
    /// Linear betas and `n_inference` evenly strided timesteps, largest first,
    /// ending at 0.
    pub fn new(train_steps: usize, n_inference: usize, beta: BetaSchedule) -> Result<Self> {
        if train_steps == 0 || n_inference == 0 {
            return Err(validation!("schedule needs at least one training and one inference step"));
        }
        if n_inference > train_steps {
            return Err(validation!(
                "{n_inference} inference steps exceed {train_steps} training steps"
            ));
        }
        let betas: Vec<f64> = match beta {
            BetaSchedule::Linear { start, end } => {
                if !(0.0 < start && start <= end && end < 1.0) {
                    return Err(validation!("linear betas need 0 < start <= end < 1"));
                }
                let n = train_steps;
                (0..n)
                    .map(|i| {
                        if n == 1 {
                            start
                        } else {
                            start + (end - start) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect()
            }
        };
        let alpha_bars = betas
            .iter()
            .scan(1.0f64, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        let stride = train_steps / n_inference;
        let inference_steps = (0..n_inference).rev().map(|i| i * stride).collect();
        Ok(Self {
            betas,
            alpha_bars,
            inference_steps,
        })
    }

    pub fn train_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Strictly decreasing timesteps visited at inference.
    pub fn inference_steps(&self) -> &[usize] {
        &self.inference_steps
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// `ᾱ` of a reverse-step target; `None` is the clean sample (`ᾱ = 1`).
    pub fn alpha_bar_or_clean(&self, t: Option<usize>) -> f64 {
        t.map_or(1.0, |t| self.alpha_bars[t])
    }

    /// `(t, t_prev)` pairs of the inference chain; the last target is clean.
    pub fn inference_pairs(&self) -> Vec<(usize, Option<usize>)> {
        let s = &self.inference_steps;
        (0..s.len()).map(|i| (s[i], s.get(i + 1).copied())).collect()
    }

    pub fn largest_inference_step(&self) -> usize {
        self.inference_steps[0]
    }
}

/// What the raw U-Net output stands for. Either way the model's prediction
/// is a noise estimate; `Velocity` reads the output as `v` and returns
/// `√ᾱ_t·v + √(1 − ᾱ_t)·x_t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    #[default]
    Epsilon,
    Velocity,
}

impl Parameterization {
    /// `t` holds one timestep per batch row of `x_t`.
    pub fn to_noise(self, out: Tensor, x_t: &Tensor, t: &[usize], sched: &DiffusionSchedule) -> Result<Tensor> {
        match self {
            Parameterization::Epsilon => Ok(out),
            Parameterization::Velocity => {
                let b = x_t.dim(0)?;
                if t.len() != b {
                    return Err(validation!("{} timesteps for a batch of {b}", t.len()));
                }
                let mut shape = vec![1usize; x_t.rank()];
                shape[0] = b;
                let column = |f: &dyn Fn(f64) -> f64| -> Result<Tensor> {
                    let v: Vec<f64> = t.iter().map(|&s| f(sched.alpha_bar(s))).collect();
                    Ok(Tensor::from_vec(v, shape.as_slice(), x_t.device())?.to_dtype(x_t.dtype())?)
                };
                let signal = column(&|ab| ab.sqrt())?;
                let noise = column(&|ab| (1.0 - ab).sqrt())?;
                Ok((out.broadcast_mul(&signal)? + x_t.broadcast_mul(&noise)?)?)
            }
        }
    }
}
