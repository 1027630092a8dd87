use candle_core::{Module, Tensor};
use candle_nn::{linear, Linear, VarBuilder};

use crate::error::Result;

/// Two-layer ReLU perceptron with the same call contract as the KAN head.
/// Used as the baseline head in ablations.
#[derive(Debug, Clone)]
pub struct MlpHead {
    hidden: Linear,
    out: Linear,
    dims: (usize, usize, usize),
}

impl MlpHead {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            hidden: linear(in_dim, hidden, vb.pp("hidden"))?,
            out: linear(hidden, out_dim, vb.pp("out"))?,
            dims: (in_dim, hidden, out_dim),
        })
    }

    pub fn from_layers(hidden: Linear, out: Linear) -> Self {
        let (h, i) = hidden.weight().dims2().unwrap_or((0, 0));
        let (o, _) = out.weight().dims2().unwrap_or((0, 0));
        Self {
            hidden,
            out,
            dims: (i, h, o),
        }
    }

    /// `in·hidden + hidden + hidden·out + out`
    pub fn param_count(&self) -> usize {
        let (i, h, o) = self.dims;
        i * h + h + h * o + o
    }
}

impl Module for MlpHead {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        self.out.forward(&self.hidden.forward(x)?.relu()?)
    }
}
