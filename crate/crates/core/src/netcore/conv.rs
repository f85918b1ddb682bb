//! Convolution kernels (im2col + GEMM) shared by the tape's forward and
//! backward passes.


use crate::scalar::{MatMut, MatRef, Real};

/// Geometry of one square-kernel convolution over a `[C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_cells(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// 1x1 stride-1 convolutions read the input directly as the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds `x` into a `[C*k*k, Ho*Wo]` column matrix.
pub fn im2col<T: Real>(g: &ConvGeom, x: &[T]) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let cells = ho * wo;
    let mut cols = vec![T::zero(); g.patch_len() * cells];
    let k = g.kernel;
    for c in 0..g.in_channels {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * cells..(row + 1) * cells];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            *o = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatters a column-matrix gradient back onto the input grid.
pub fn col2im<T: Real>(g: &ConvGeom, cols: &[T]) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let cells = ho * wo;
    let mut dx = vec![T::zero(); g.in_channels * g.in_h * g.in_w];
    let k = g.kernel;
    for c in 0..g.in_channels {
        let plane = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * cells..(row + 1) * cells];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, &v) in src[oy * wo..(oy + 1) * wo].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `out[O, cells] = W[O, patch] * cols[patch, cells] + b`.
pub fn conv_forward<T: Real>(g: &ConvGeom, cols: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let cells = g.out_cells();
    let mut out = vec![T::zero(); g.out_channels * cells];
    for (o, &bias) in out.chunks_exact_mut(cells).zip(b) {
        o.iter_mut().for_each(|v| *v = bias);
    }
    T::gemm(
        g.out_channels,
        g.patch_len(),
        cells,
        T::one(),
        MatRef::row_major(w, g.patch_len()),
        MatRef::row_major(cols, cells),
        T::one(),
        MatMut::row_major(&mut out, cells),
    );
    out
}

/// Accumulates weight and bias gradients; returns the column-matrix gradient.
pub fn conv_backward<T: Real>(
    g: &ConvGeom,
    cols: &[T],
    w: &[T],
    dout: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_input_grad: bool,
) -> Option<Vec<T>> {
    let cells = g.out_cells();
    let patch = g.patch_len();
    // dW += dOut * cols^T
    T::gemm(
        g.out_channels,
        cells,
        patch,
        T::one(),
        MatRef::row_major(dout, cells),
        MatRef::transposed(cols, cells),
        T::one(),
        MatMut::row_major(dw, patch),
    );
    for (d, row) in db.iter_mut().zip(dout.chunks_exact(cells)) {
        *d += row.iter().copied().sum::<T>();
    }
    if !need_input_grad {
        return None;
    }
    // dcols = W^T * dOut
    let mut dcols = vec![T::zero(); patch * cells];
    T::gemm(
        patch,
        g.out_channels,
        cells,
        T::one(),
        MatRef::transposed(w, patch),
        MatRef::row_major(dout, cells),
        T::zero(),
        MatMut::row_major(&mut dcols, cells),
    );
    Some(dcols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let (ho, wo, k) = (g.out_h(), g.out_w(), g.kernel);
        let mut out = vec![0.0; g.out_channels * ho * wo];
        for o in 0..g.out_channels {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[o];
                    for c in 0..g.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.in_h as isize || ix >= g.in_w as isize {
                                    continue;
                                }
                                acc += w[((o * g.in_channels + c) * k + ky) * k + kx]
                                    * x[(c * g.in_h + iy as usize) * g.in_w + ix as usize];
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        for (stride, h, w) in [(1, 5, 7), (2, 5, 7), (2, 8, 12)] {
            let g = ConvGeom {
                in_channels: 3,
                in_h: h,
                in_w: w,
                out_channels: 4,
                kernel: 3,
                stride,
                pad: 1,
            };
            let x: Vec<f64> = (0..3 * h * w).map(|i| ((i * 7 % 13) as f64 - 6.0) / 5.0).collect();
            let wt: Vec<f64> = (0..4 * 27).map(|i| ((i * 5 % 11) as f64 - 5.0) / 7.0).collect();
            let b = vec![0.1, -0.2, 0.3, 0.0];
            let got = conv_forward(&g, &im2col(&g, &x), &wt, &b);
            let want = direct_conv(&g, &x, &wt, &b);
            assert_eq!(got.len(), want.len());
            for (a, e) in got.iter().zip(&want) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom { in_channels: 2, in_h: 5, in_w: 6, out_channels: 1, kernel: 3, stride: 2, pad: 1 };
        let x: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..g.patch_len() * g.out_cells()).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs: f64 = im2col(&g, &x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&g, &y)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
