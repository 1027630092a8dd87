//! Kolmogorov–Arnold network layers.
//!
//! Every edge `(i → o)` carries a learnable activation made of a SiLU base
//! term and a cubic B-spline on a fixed uniform grid:
//!
//! `y[n, o] = Σ_i base[o, i]·silu(x[n, i]) + Σ_i Σ_k coeff[o, i, k]·B_k(clamp(x[n, i]))`
//!
//! The spline argument is clamped to the grid range so that inputs outside
//! it see the boundary value instead of a polynomial extrapolation.

mod gradcheck;
mod mlp;

pub use gradcheck::{kan_gradient_check, GradCheckReport};
pub use mlp::MlpHead;

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{Init, VarBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Cubic splines throughout.
pub const SPLINE_DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Number of uniform intervals covering `[lo, hi]`.
    pub intervals: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            intervals: 8,
            lo: -1.0,
            hi: 1.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(validation!("KAN grid needs at least one interval"));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(validation!("KAN grid range [{}, {}] is empty", self.lo, self.hi));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.intervals as f64
    }

    /// Number of B-spline basis functions per edge.
    pub fn basis_len(&self) -> usize {
        self.intervals + SPLINE_DEGREE
    }

    /// Uniform knot vector extended by `SPLINE_DEGREE` knots on each side.
    pub fn knots(&self) -> Vec<f64> {
        let h = self.step();
        (0..=self.intervals + 2 * SPLINE_DEGREE)
            .map(|j| self.lo + (j as f64 - SPLINE_DEGREE as f64) * h)
            .collect()
    }
}

/// One KAN layer.
#[derive(Debug, Clone)]
pub struct KanLayer {
    in_dim: usize,
    out_dim: usize,
    grid: GridConfig,
    /// `(out, in, basis_len)`
    coeffs: Tensor,
    /// `(out, in)`
    base_weight: Tensor,
}

impl KanLayer {
    pub fn new(in_dim: usize, out_dim: usize, grid: GridConfig, vb: VarBuilder) -> Result<Self> {
        grid.validate()?;
        let bound = 1.0 / (in_dim as f64).sqrt();
        let coeffs = vb.get_with_hints(
            (out_dim, in_dim, grid.basis_len()),
            "coeffs",
            Init::Randn {
                mean: 0.0,
                stdev: 0.1 * bound,
            },
        )?;
        let base_weight = vb.get_with_hints(
            (out_dim, in_dim),
            "base_weight",
            Init::Uniform {
                lo: -bound,
                up: bound,
            },
        )?;
        Self::from_parts(grid, coeffs, base_weight)
    }

    /// Builds a layer from explicit parameter tensors.
    pub fn from_parts(grid: GridConfig, coeffs: Tensor, base_weight: Tensor) -> Result<Self> {
        grid.validate()?;
        let (out_dim, in_dim, k) = coeffs.dims3()?;
        if k != grid.basis_len() {
            return Err(validation!(
                "coefficient tensor has {k} basis functions, grid needs {}",
                grid.basis_len()
            ));
        }
        if base_weight.dims() != [out_dim, in_dim] {
            return Err(validation!(
                "base weight {:?} does not match ({out_dim}, {in_dim})",
                base_weight.dims()
            ));
        }
        if !all_finite(&coeffs)? || !all_finite(&base_weight)? {
            return Err(validation!("KAN parameters must be finite"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            grid,
            coeffs,
            base_weight,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn coeffs(&self) -> &Tensor {
        &self.coeffs
    }

    pub fn base_weight(&self) -> &Tensor {
        &self.base_weight
    }

    pub fn param_count(&self) -> usize {
        self.coeffs.elem_count() + self.base_weight.elem_count()
    }

    /// B-spline basis values `(N, in, basis_len)` of the clamped input.
    pub fn basis(&self, x: &Tensor) -> Result<Tensor> {
        bspline_basis(x, &self.grid)
    }

    /// Spline term only, `(N, out)`.
    pub fn spline_term(&self, x: &Tensor) -> Result<Tensor> {
        let (n, in_dim) = x.dims2()?;
        let k = self.grid.basis_len();
        let bases = self.basis(x)?.reshape((n, in_dim * k))?;
        let coeffs = self.coeffs.reshape((self.out_dim, in_dim * k))?;
        Ok(bases.matmul(&coeffs.t()?)?)
    }

    /// Base term only, `(N, out)`.
    pub fn base_term(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::silu(x)?.matmul(&self.base_weight.t()?)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, in_dim) = x.dims2()?;
        if in_dim != self.in_dim {
            return Err(validation!("KAN layer expects {} inputs, got {in_dim}", self.in_dim));
        }
        if !all_finite(x)? {
            return Err(validation!("KAN input contains non-finite values"));
        }
        Ok((self.base_term(x)? + self.spline_term(x)?)?)
    }
}

// NaN and ±inf both turn x·0 into NaN.
fn all_finite(x: &Tensor) -> Result<bool> {
    let probe = (x * 0.0)?.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()?;
    Ok(probe == 0.0)
}

/// Cox–de Boor recursion on the extended uniform knot vector, vectorized
/// over `(N, in)` inputs. Returns `(N, in, intervals + 3)`.
pub fn bspline_basis(x: &Tensor, grid: &GridConfig) -> Result<Tensor> {
    let (n, in_dim) = x.dims2()?;
    let dtype = x.dtype();
    let device = x.device();
    let knots = grid.knots();
    let nk = knots.len();
    let h = grid.step();

    let xc = x.clamp(grid.lo, grid.hi)?.unsqueeze(2)?;
    let knot_t = |range: std::ops::Range<usize>| -> Result<Tensor> {
        let len = range.len();
        Ok(Tensor::from_vec(knots[range].to_vec(), (1, 1, len), &Device::Cpu)?
            .to_device(device)?
            .to_dtype(dtype)?)
    };

    // degree 0: indicator of [t_j, t_{j+1})
    let lower = xc.broadcast_ge(&knot_t(0..nk - 1)?)?.to_dtype(dtype)?;
    let upper = xc.broadcast_lt(&knot_t(1..nk)?)?.to_dtype(dtype)?;
    let mut bases = (lower * upper)?;

    for d in 1..=SPLINE_DEGREE {
        let count = nk - 1 - d;
        let denom = d as f64 * h;
        let left = (xc.broadcast_sub(&knot_t(0..count)?)? / denom)?
            .broadcast_mul(&bases.narrow(2, 0, count)?)?;
        let right = (knot_t(d + 1..d + 1 + count)?.broadcast_sub(&xc)? / denom)?
            .broadcast_mul(&bases.narrow(2, 1, count)?)?;
        bases = (left + right)?;
    }
    debug_assert_eq!(bases.dims(), &[n, in_dim, grid.basis_len()]);
    Ok(bases)
}

/// A stack of [`KanLayer`]s, e.g. `[in, hidden, out]`.
#[derive(Debug, Clone)]
pub struct Kan {
    layers: Vec<KanLayer>,
}

impl Kan {
    pub fn new(widths: &[usize], grid: GridConfig, vb: VarBuilder) -> Result<Self> {
        if widths.len() < 2 {
            return Err(validation!("a KAN needs at least an input and an output width"));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| KanLayer::new(w[0], w[1], grid, vb.pp(format!("layer{i}"))))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(KanLayer::param_count).sum()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.layers.iter().try_fold(x.clone(), |x, l| l.forward(&x))
    }
}

/// Which per-frame prediction head KFusion ends with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Kan,
    Mlp,
}

/// Drop-in prediction head: `(N, in) → (N, out)`.
#[derive(Debug, Clone)]
pub enum PredictionHead {
    Kan(Kan),
    Mlp(MlpHead),
}

impl PredictionHead {
    pub fn new(
        kind: HeadKind,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        grid: GridConfig,
        vb: VarBuilder,
    ) -> Result<Self> {
        Ok(match kind {
            HeadKind::Kan => PredictionHead::Kan(Kan::new(&[in_dim, hidden, out_dim], grid, vb.pp("kan"))?),
            HeadKind::Mlp => PredictionHead::Mlp(MlpHead::new(in_dim, hidden, out_dim, vb.pp("mlp"))?),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            PredictionHead::Kan(k) => k.forward(x),
            PredictionHead::Mlp(m) => Ok(m.forward(x)?),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            PredictionHead::Kan(k) => k.param_count(),
            PredictionHead::Mlp(m) => m.param_count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_nn::VarMap;
    use rand::{Rng, SeedableRng};

    fn f64_layer(in_dim: usize, out_dim: usize, seed: u64) -> KanLayer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = GridConfig::default();
        let k = grid.basis_len();
        let c: Vec<f64> = (0..out_dim * in_dim * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..out_dim * in_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        KanLayer::from_parts(
            grid,
            Tensor::from_vec(c, (out_dim, in_dim, k), &Device::Cpu).unwrap(),
            Tensor::from_vec(b, (out_dim, in_dim), &Device::Cpu).unwrap(),
        )
        .unwrap()
    }

    fn column(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec(), (v.len(), 1), &Device::Cpu).unwrap()
    }

    #[test]
    fn knots_are_strictly_increasing() {
        let k = GridConfig::default().knots();
        assert_eq!(k.len(), 15);
        assert!(k.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(k[3], -1.0);
        assert_eq!(k[11], 1.0);
    }

    #[test]
    fn partition_of_unity_including_endpoints() {
        let grid = GridConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut xs: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..=1.0)).collect();
        xs.extend([-1.0, 1.0, 0.0, 0.25]);
        let b = bspline_basis(&column(&xs), &grid).unwrap();
        let sums: Vec<f64> = b.sum(2).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        for (x, s) in xs.iter().zip(sums) {
            assert!((s - 1.0).abs() < 1e-10, "x={x} sum={s}");
        }
    }

    #[test]
    fn zero_coeffs_identity_base_gives_silu() {
        let grid = GridConfig::default();
        let layer = KanLayer::from_parts(
            grid,
            Tensor::zeros((1, 1, grid.basis_len()), DType::F64, &Device::Cpu).unwrap(),
            Tensor::ones((1, 1), DType::F64, &Device::Cpu).unwrap(),
        )
        .unwrap();
        let xs = [-3.0, -0.5, 0.0, 0.7, 2.5];
        let y: Vec<f64> = layer.forward(&column(&xs)).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        for (x, y) in xs.iter().zip(y) {
            let silu = x / (1.0 + (-x).exp());
            assert!((y - silu).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_is_linear_in_coefficients() {
        let a = f64_layer(3, 2, 1);
        let b = f64_layer(3, 2, 2);
        let sum = KanLayer::from_parts(
            *a.grid(),
            (a.coeffs() + b.coeffs()).unwrap(),
            a.base_weight().clone(),
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.3, -0.8, 0.95, -0.1, 0.5, 0.0], (2, 3), &Device::Cpu).unwrap();
        let base = a.base_term(&x).unwrap();
        let lhs = (sum.forward(&x).unwrap() - &base).unwrap();
        let rhs = ((a.forward(&x).unwrap() - &base).unwrap() + b.spline_term(&x).unwrap()).unwrap();
        let diff: f64 = (lhs - rhs).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap();
        assert!(diff < 1e-10);
    }

    #[test]
    fn out_of_range_inputs_take_boundary_value() {
        let layer = f64_layer(1, 1, 3);
        let s = |v: f64| -> f64 {
            layer.spline_term(&column(&[v])).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap()[0]
        };
        assert_eq!(s(5.0), s(1.0));
        assert_eq!(s(-1e6), s(-1.0));
        assert!(s(1e30).is_finite());
    }

    #[test]
    fn rejects_non_finite_input() {
        let layer = f64_layer(2, 1, 4);
        let x = Tensor::from_vec(vec![0.0, f64::NAN], (1, 2), &Device::Cpu).unwrap();
        assert!(matches!(layer.forward(&x), Err(crate::Error::Validation(_))));
        let x = Tensor::from_vec(vec![f64::INFINITY, 0.0], (1, 2), &Device::Cpu).unwrap();
        assert!(layer.forward(&x).is_err());
    }

    #[test]
    fn network_shapes_and_param_count() {
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
        let kan = Kan::new(&[6, 4, 2], GridConfig::default(), vb).unwrap();
        assert_eq!(kan.param_count(), 4 * 6 * 11 + 24 + 2 * 4 * 11 + 8);
        let x = Tensor::zeros((5, 6), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(kan.forward(&x).unwrap().dims(), &[5, 2]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn basis_is_a_partition_of_unity(
                intervals in 1usize..12,
                lo in -3.0f64..0.0,
                width in 0.1f64..4.0,
                u in 0.0f64..=1.0,
            ) {
                let grid = GridConfig { intervals, lo, hi: lo + width };
                let b = bspline_basis(&column(&[lo + u * width]), &grid).unwrap();
                let v: Vec<f64> = b.flatten_all().unwrap().to_vec1().unwrap();
                prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!(v.iter().all(|&x| x >= -1e-12));
                prop_assert!(v.iter().filter(|&&x| x > 0.0).count() <= SPLINE_DEGREE + 1);
            }

            #[test]
            fn spline_of_constant_coefficients_is_constant(c in -2.0f64..2.0, x in -1.5f64..1.5) {
                let grid = GridConfig::default();
                let coeffs = Tensor::full(c, (1, 1, grid.basis_len()), &Device::Cpu).unwrap();
                let base = Tensor::zeros((1, 1), DType::F64, &Device::Cpu).unwrap();
                let layer = KanLayer::from_parts(grid, coeffs, base).unwrap();
                let y: f64 = layer.forward(&column(&[x])).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap()[0];
                prop_assert!((y - c).abs() < 1e-10);
            }
        }
    }
}
