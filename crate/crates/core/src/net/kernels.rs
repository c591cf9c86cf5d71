//! Per-sample convolution, pooling and batchnorm kernels on flattened rows.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::Scalar;

/// Variance floor inside batchnorm.
pub const BN_EPS: f64 = 1e-5;
/// Weight of the previous running statistic in the moving average.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn patches(&self) -> usize {
        self.oh * self.ow
    }

    pub fn patch_len(&self) -> usize {
        self.c * self.k * self.k
    }

    /// Unfolds one `[c, h, w]` image into `[patches, c*k*k]`.
    pub fn im2col<S: Scalar>(&self, x: &[S], cols: &mut Array2<S>) {
        let k = self.k;
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let mut row = cols.row_mut(oy * self.ow + ox);
                for ci in 0..self.c {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            let col = (ci * k + ky) * k + kx;
                            row[col] = if iy >= 0
                                && ix >= 0
                                && (iy as usize) < self.h
                                && (ix as usize) < self.w
                            {
                                x[(ci * self.h + iy as usize) * self.w + ix as usize]
                            } else {
                                S::zero()
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatters patch gradients back into `dx`.
    pub fn col2im<S: Scalar>(&self, dcols: ArrayView2<S>, dx: &mut [S]) {
        let k = self.k;
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = dcols.row(oy * self.ow + ox);
                for ci in 0..self.c {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix as usize >= self.w {
                                continue;
                            }
                            dx[(ci * self.h + iy as usize) * self.w + ix as usize] +=
                                row[(ci * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub size: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
}

impl PoolGeom {
    /// Writes window maxima to `out` and the winning input offsets to `arg`.
    /// Ties resolve to the first offset in row-major window order.
    pub fn forward<S: Scalar>(&self, x: &[S], out: &mut [S], arg: &mut [usize]) {
        for ci in 0..self.c {
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    let mut best = usize::MAX;
                    let mut best_v = S::neg_infinity();
                    for ky in 0..self.size {
                        for kx in 0..self.size {
                            let idx = (ci * self.h + oy * self.stride + ky) * self.w
                                + ox * self.stride
                                + kx;
                            if best == usize::MAX || x[idx] > best_v {
                                best = idx;
                                best_v = x[idx];
                            }
                        }
                    }
                    let o = (ci * self.oh + oy) * self.ow + ox;
                    out[o] = best_v;
                    arg[o] = best;
                }
            }
        }
    }
}

/// Per-channel statistics layout of a `[n, features]` activation block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BnLayout {
    pub channels: usize,
    pub spatial: usize,
}

impl BnLayout {
    pub fn from_shape(shape: &[usize]) -> Self {
        match *shape {
            [c, h, w] => BnLayout {
                channels: c,
                spatial: h * w,
            },
            _ => BnLayout {
                channels: shape.iter().product(),
                spatial: 1,
            },
        }
    }

    /// Biased per-channel mean and variance over samples and spatial positions.
    pub fn moments<S: Scalar>(&self, x: ArrayView2<S>) -> (Array1<S>, Array1<S>) {
        let m = S::of((x.nrows() * self.spatial) as f64);
        let mut mean = Array1::<S>::zeros(self.channels);
        for row in x.axis_iter(Axis(0)) {
            for (j, &v) in row.iter().enumerate() {
                mean[j / self.spatial] += v;
            }
        }
        mean.mapv_inplace(|s| s / m);
        let mut var = Array1::<S>::zeros(self.channels);
        for row in x.axis_iter(Axis(0)) {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j / self.spatial];
                var[j / self.spatial] += d * d;
            }
        }
        var.mapv_inplace(|s| s / m);
        (mean, var)
    }

    /// Per-channel sums of `a` and of `a * b`.
    pub fn channel_sums<S: Scalar>(&self, a: ArrayView2<S>, b: ArrayView2<S>) -> (Array1<S>, Array1<S>) {
        let mut sa = Array1::<S>::zeros(self.channels);
        let mut sab = Array1::<S>::zeros(self.channels);
        for (ra, rb) in a.axis_iter(Axis(0)).zip(b.axis_iter(Axis(0))) {
            for (j, (&va, &vb)) in ra.iter().zip(rb.iter()).enumerate() {
                let c = j / self.spatial;
                sa[c] += va;
                sab[c] += va * vb;
            }
        }
        (sa, sab)
    }
}
