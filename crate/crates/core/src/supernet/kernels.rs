//! Forward and backward kernels for the layer types of the backbone.
//!
//! Kernels are generic over the float type so that gradient checks can run
//! the exact same code in f64. Weight tensors are addressed through a row
//! stride so a kernel can read the leading slice of a wider shared tensor.

use std::ops::AddAssign;

use num_traits::Float;

pub trait Scalar: Float + AddAssign + Send + Sync + std::fmt::Debug + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Geometry of one (possibly sliced) convolution with same padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Input-channel extent of the stored kernel tensor, `>= in_channels`.
    pub weight_in_stride: usize,
}

impl ConvGeom {
    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    pub fn input_len(&self) -> usize {
        self.batch * self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.out_channels * self.out_h * self.out_w
    }

    fn weight_index(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.weight_in_stride + ci) * self.kernel + ky) * self.kernel + kx
    }
}

/// Output positions `o` with `0 <= o * stride + offset < in_len`.
fn valid_range(offset: isize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let last_in = in_len as isize - 1 - offset;
    let hi = if last_in < 0 { 0 } else { (last_in / s + 1).min(out_len as isize) };
    (lo as usize, hi.max(lo) as usize)
}

pub fn conv_forward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(input.len(), g.input_len());
    debug_assert_eq!(out.len(), g.output_len());
    let (in_plane, out_plane) = (g.in_h * g.in_w, g.out_h * g.out_w);
    let pad = g.pad();
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let o_base = (n * g.out_channels + co) * out_plane;
            let oplane = &mut out[o_base..o_base + out_plane];
            oplane.fill(bias[co]);
            for ci in 0..g.in_channels {
                let i_base = (n * g.in_channels + ci) * in_plane;
                let iplane = &input[i_base..i_base + in_plane];
                for ky in 0..g.kernel {
                    let dy = ky as isize - pad;
                    let (oy_lo, oy_hi) = valid_range(dy, g.stride, g.in_h, g.out_h);
                    for kx in 0..g.kernel {
                        let dx = kx as isize - pad;
                        let (ox_lo, ox_hi) = valid_range(dx, g.stride, g.in_w, g.out_w);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let wv = weight[g.weight_index(co, ci, ky, kx)];
                        for oy in oy_lo..oy_hi {
                            let iy = (oy * g.stride) as isize + dy;
                            let irow = &iplane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                            let orow = &mut oplane[oy * g.out_w + ox_lo..oy * g.out_w + ox_hi];
                            let ix0 = ((ox_lo * g.stride) as isize + dx) as usize;
                            if g.stride == 1 {
                                for (o, &i) in orow.iter_mut().zip(&irow[ix0..]) {
                                    *o += wv * i;
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o += wv * irow[ix0 + j * g.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates kernel and bias gradients into `dweight`/`dbias` (same layout
/// as the forward weights) and, when requested, writes the input gradient.
pub fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dinput: Option<&mut [T]>,
) {
    let (in_plane, out_plane) = (g.in_h * g.in_w, g.out_h * g.out_w);
    let pad = g.pad();
    if let Some(di) = dinput.as_deref_mut() {
        di.fill(T::zero());
    }
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let o_base = (n * g.out_channels + co) * out_plane;
            let gplane = &dout[o_base..o_base + out_plane];
            let mut bsum = T::zero();
            for &v in gplane {
                bsum += v;
            }
            dbias[co] += bsum;
            for ci in 0..g.in_channels {
                let i_base = (n * g.in_channels + ci) * in_plane;
                let iplane = &input[i_base..i_base + in_plane];
                for ky in 0..g.kernel {
                    let dy = ky as isize - pad;
                    let (oy_lo, oy_hi) = valid_range(dy, g.stride, g.in_h, g.out_h);
                    for kx in 0..g.kernel {
                        let dx = kx as isize - pad;
                        let (ox_lo, ox_hi) = valid_range(dx, g.stride, g.in_w, g.out_w);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let widx = g.weight_index(co, ci, ky, kx);
                        let wv = weight[widx];
                        let ix0 = ((ox_lo * g.stride) as isize + dx) as usize;
                        let mut wsum = T::zero();
                        for oy in oy_lo..oy_hi {
                            let iy = (oy * g.stride) as isize + dy;
                            let irow_start = iy as usize * g.in_w;
                            let grow = &gplane[oy * g.out_w + ox_lo..oy * g.out_w + ox_hi];
                            let irow = &iplane[irow_start..irow_start + g.in_w];
                            if g.stride == 1 {
                                for (&gv, &iv) in grow.iter().zip(&irow[ix0..]) {
                                    wsum += gv * iv;
                                }
                            } else {
                                for (j, &gv) in grow.iter().enumerate() {
                                    wsum += gv * irow[ix0 + j * g.stride];
                                }
                            }
                            if let Some(di) = dinput.as_deref_mut() {
                                let drow = &mut di[i_base + irow_start..i_base + irow_start + g.in_w];
                                if g.stride == 1 {
                                    for (d, &gv) in drow[ix0..].iter_mut().zip(grow) {
                                        *d += wv * gv;
                                    }
                                } else {
                                    for (j, &gv) in grow.iter().enumerate() {
                                        drow[ix0 + j * g.stride] += wv * gv;
                                    }
                                }
                            }
                        }
                        dweight[widx] += wsum;
                    }
                }
            }
        }
    }
}

pub fn relu_forward<T: Scalar>(input: &[T], out: &mut [T]) {
    for (o, &x) in out.iter_mut().zip(input) {
        *o = if x > T::zero() { x } else { T::zero() };
    }
}

pub fn relu_backward<T: Scalar>(input: &[T], dout: &[T], dinput: &mut [T]) {
    for ((d, &x), &g) in dinput.iter_mut().zip(input).zip(dout) {
        *d = if x > T::zero() { g } else { T::zero() };
    }
}

/// `[N, C, H, W] -> [N, C]` mean over the spatial plane.
pub fn gap_forward<T: Scalar>(input: &[T], batch: usize, channels: usize, plane: usize, out: &mut [T]) {
    let inv = T::one() / T::from(plane).unwrap();
    for nc in 0..batch * channels {
        let mut sum = T::zero();
        for &v in &input[nc * plane..(nc + 1) * plane] {
            sum += v;
        }
        out[nc] = sum * inv;
    }
}

pub fn gap_backward<T: Scalar>(dout: &[T], batch: usize, channels: usize, plane: usize, dinput: &mut [T]) {
    let inv = T::one() / T::from(plane).unwrap();
    for nc in 0..batch * channels {
        let g = dout[nc] * inv;
        dinput[nc * plane..(nc + 1) * plane].fill(g);
    }
}

/// `logits[n, j] = sum_f x[n, f] * W[f, j] + b[j]`, using the first
/// `features` rows of `W` (stored `[max_features, classes]`).
pub fn linear_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    features: usize,
    classes: usize,
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    for n in 0..batch {
        let orow = &mut out[n * classes..(n + 1) * classes];
        orow.copy_from_slice(&bias[..classes]);
        for f in 0..features {
            let xv = x[n * features + f];
            for (o, &w) in orow.iter_mut().zip(&weight[f * classes..(f + 1) * classes]) {
                *o += xv * w;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    x: &[T],
    batch: usize,
    features: usize,
    classes: usize,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dx: &mut [T],
) {
    for n in 0..batch {
        let grow = &dout[n * classes..(n + 1) * classes];
        for (b, &g) in dbias.iter_mut().zip(grow) {
            *b += g;
        }
        for f in 0..features {
            let xv = x[n * features + f];
            let wrow = &weight[f * classes..(f + 1) * classes];
            let mut acc = T::zero();
            for ((dw, &w), &g) in dweight[f * classes..(f + 1) * classes]
                .iter_mut()
                .zip(wrow)
                .zip(grow)
            {
                *dw += xv * g;
                acc += w * g;
            }
            dx[n * features + f] = acc;
        }
    }
}

/// Mean softmax cross-entropy over the batch, accumulated in f64. Returns the
/// loss and writes `d loss / d logits`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
    dlogits: &mut [T],
) -> f64 {
    let batch = labels.len();
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0f64;
    let mut probs = vec![0.0f64; classes];
    for (n, &label) in labels.iter().enumerate() {
        let row = &logits[n * classes..(n + 1) * classes];
        let max = row
            .iter()
            .map(|v| v.to_f64().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (p, v) in probs.iter_mut().zip(row) {
            *p = (v.to_f64().unwrap() - max).exp();
            denom += *p;
        }
        loss += denom.ln() + max - row[label].to_f64().unwrap();
        for (j, p) in probs.iter().enumerate() {
            let target = if j == label { 1.0 } else { 0.0 };
            dlogits[n * classes + j] = T::from((p / denom - target) * scale).unwrap();
        }
    }
    loss * scale
}
