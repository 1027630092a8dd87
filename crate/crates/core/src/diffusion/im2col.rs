//! 3×3×3 im2col with zero padding 1, as a tensor op with a col2im backward.

use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor, WithDType};

/// Columns for output frames `start..start + frames` of a contiguous
/// `(B, C, F, H, W)` input: `(B, 27·C, frames·H·W)`, row `tap·C + c`,
/// taps ordered `(dt, dh, dw)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Im2Col3 {
    pub start: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    b: usize,
    c: usize,
    f: usize,
    h: usize,
    w: usize,
}

/// Source offset of tap `(dt, dh, dw)` at output `(t, y, x)`, if in range.
#[inline]
fn source(d: Dims, t: usize, y: usize, x: usize, dt: usize, dh: usize, dw: usize) -> Option<usize> {
    let (st, sy, sx) = ((t + dt).checked_sub(1)?, (y + dh).checked_sub(1)?, (x + dw).checked_sub(1)?);
    (st < d.f && sy < d.h && sx < d.w).then(|| (st * d.h + sy) * d.w + sx)
}

fn im2col<T: WithDType>(src: &[T], d: Dims, start: usize, frames: usize) -> Vec<T> {
    let (vol, plane) = (d.f * d.h * d.w, frames * d.h * d.w);
    let mut out = vec![T::zero(); d.b * 27 * d.c * plane];
    for b in 0..d.b {
        for tap in 0..27 {
            let (dt, dh, dw) = (tap / 9, (tap / 3) % 3, tap % 3);
            for c in 0..d.c {
                let input = &src[(b * d.c + c) * vol..][..vol];
                let row = &mut out[((b * 27 + tap) * d.c + c) * plane..][..plane];
                for t in 0..frames {
                    for y in 0..d.h {
                        for x in 0..d.w {
                            if let Some(s) = source(d, start + t, y, x, dt, dh, dw) {
                                row[(t * d.h + y) * d.w + x] = input[s];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn col2im<T: WithDType>(cols: &[T], d: Dims, start: usize, frames: usize) -> Vec<T> {
    let (vol, plane) = (d.f * d.h * d.w, frames * d.h * d.w);
    let mut out = vec![T::zero(); d.b * d.c * vol];
    for b in 0..d.b {
        for tap in 0..27 {
            let (dt, dh, dw) = (tap / 9, (tap / 3) % 3, tap % 3);
            for c in 0..d.c {
                let grad = &mut out[(b * d.c + c) * vol..][..vol];
                let row = &cols[((b * 27 + tap) * d.c + c) * plane..][..plane];
                for t in 0..frames {
                    for y in 0..d.h {
                        for x in 0..d.w {
                            if let Some(s) = source(d, start + t, y, x, dt, dh, dw) {
                                grad[s] += row[(t * d.h + y) * d.w + x];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn contiguous<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => candle_core::bail!("im2col needs a contiguous input"),
    }
}

impl CustomOp1 for Im2Col3 {
    fn name(&self) -> &'static str {
        "im2col3"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let (b, c, f, h, w) = layout.shape().dims5()?;
        if self.start + self.frames > f {
            candle_core::bail!("im2col frames {}..{} exceed {f}", self.start, self.start + self.frames);
        }
        let d = Dims { b, c, f, h, w };
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(im2col(contiguous(v, layout)?, d, self.start, self.frames)),
            CpuStorage::F64(v) => CpuStorage::F64(im2col(contiguous(v, layout)?, d, self.start, self.frames)),
            _ => candle_core::bail!("im2col supports f32 and f64 only"),
        };
        Ok((out, Shape::from((b, 27 * c, self.frames * h * w))))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let (b, c, f, h, w) = arg.dims5()?;
        let op = Col2Im3 {
            dims: Dims { b, c, f, h, w },
            start: self.start,
            frames: self.frames,
        };
        Ok(Some(grad.contiguous()?.apply_op1_no_bwd(&op)?))
    }
}

/// Adjoint of [`Im2Col3`]: scatters column gradients back onto the input.
struct Col2Im3 {
    dims: Dims,
    start: usize,
    frames: usize,
}

impl CustomOp1 for Col2Im3 {
    fn name(&self) -> &'static str {
        "col2im3"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let d = self.dims;
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(col2im(contiguous(v, layout)?, d, self.start, self.frames)),
            CpuStorage::F64(v) => CpuStorage::F64(col2im(contiguous(v, layout)?, d, self.start, self.frames)),
            _ => candle_core::bail!("col2im supports f32 and f64 only"),
        };
        Ok((out, Shape::from((d.b, d.c, d.f, d.h, d.w))))
    }
}

/// `x (B, C, F, H, W)` to columns for frames `start..start + frames`.
pub(crate) fn im2col3(x: &Tensor, start: usize, frames: usize) -> candle_core::Result<Tensor> {
    if !matches!(x.dtype(), DType::F32 | DType::F64) {
        candle_core::bail!("im2col needs f32 or f64, got {:?}", x.dtype());
    }
    x.contiguous()?.apply_op1(Im2Col3 { start, frames })
}
