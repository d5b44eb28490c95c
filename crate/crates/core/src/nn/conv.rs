//! 2-D convolution and transposed convolution via im2col and GEMM.
//!
//! Layouts: activations `[N, C, H, W]`; convolution weights `[C_out, C_in, k, k]`;
//! transposed-convolution weights `[C_in, C_out, k, k]`. With those layouts a
//! transposed convolution is exactly the adjoint of the convolution sharing
//! its weight buffer.

use super::tensor::{mat, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/cols appended to a transposed convolution's output.
    pub output_padding: usize,
}

impl ConvGeometry {
    pub const fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            output_padding: 0,
        }
    }

    pub const fn with_output_padding(mut self, output_padding: usize) -> Self {
        self.output_padding = output_padding;
        self
    }

    fn validate(&self, op: &str) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::domain(format!("{op}: kernel and stride must be >= 1")));
        }
        Ok(())
    }

    /// `floor((in + 2p - k) / s) + 1`
    pub fn conv_out(&self, input: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::domain(format!(
                "conv: kernel {} larger than padded input {padded}",
                self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// `(in - 1) * s - 2p + k + output_padding`
    pub fn transposed_out(&self, input: usize) -> Result<usize> {
        if self.output_padding >= self.stride {
            return Err(Error::domain(format!(
                "transposed conv: output_padding {} must be < stride {}",
                self.output_padding, self.stride
            )));
        }
        let full = (input - 1) * self.stride + self.kernel + self.output_padding;
        if full <= 2 * self.padding {
            return Err(Error::domain(format!(
                "transposed conv: padding {} crops the whole output",
                self.padding
            )));
        }
        Ok(full - 2 * self.padding)
    }
}

/// Plane sizes shared by im2col and col2im: an image of `h x w` scanned by
/// the kernel at `oh x ow` positions.
#[derive(Clone, Copy)]
struct Scan {
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    k: usize,
    s: usize,
    p: usize,
}

impl Scan {
    fn is_identity(&self) -> bool {
        self.k == 1 && self.s == 1 && self.p == 0 && self.oh == self.h && self.ow == self.w
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Output columns `lo..hi` whose input column `ox*s + kx - p` is inside the image.
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let (s, off) = (self.s as isize, kx as isize - self.p as isize);
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let last = self.w as isize - 1 - off;
        let hi = if last < 0 { 0 } else { (last / s + 1).min(self.ow as isize) };
        (lo as usize, hi.max(lo) as usize)
    }

    /// Unfolds one image into columns `off..off + oh*ow` of a row-major
    /// matrix with leading dimension `ld`.
    fn im2col<T: Scalar>(&self, img: &[T], cols: &mut [T], ld: usize, off: usize) {
        let p = self.p as isize;
        for c in 0..self.c {
            let plane = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let (lo, hi) = self.ox_range(kx);
                    let ix0 = (lo * self.s + kx) as isize - p;
                    let base = row * ld + off;
                    for oy in 0..self.oh {
                        let iy = (oy * self.s + ky) as isize - p;
                        let line = &mut cols[base + oy * self.ow..base + (oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize || lo == hi {
                            line.fill(T::zero());
                            continue;
                        }
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        let src = &plane[iy as usize * self.w + ix0 as usize..(iy as usize + 1) * self.w];
                        if self.s == 1 {
                            line[lo..hi].copy_from_slice(&src[..hi - lo]);
                        } else {
                            for (d, &v) in line[lo..hi].iter_mut().zip(src.iter().step_by(self.s)) {
                                *d = v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds columns `off..off + oh*ow` back onto the image.
    fn col2im<T: Scalar>(&self, cols: &[T], ld: usize, off: usize, img: &mut [T]) {
        let p = self.p as isize;
        for c in 0..self.c {
            let plane = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let (lo, hi) = self.ox_range(kx);
                    if lo == hi {
                        continue;
                    }
                    let ix0 = (lo * self.s + kx) as isize - p;
                    let base = row * ld + off;
                    for oy in 0..self.oh {
                        let iy = (oy * self.s + ky) as isize - p;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let vals = &cols[base + oy * self.ow + lo..base + oy * self.ow + hi];
                        let line = &mut plane[iy as usize * self.w + ix0 as usize..(iy as usize + 1) * self.w];
                        for (d, &v) in line.iter_mut().step_by(self.s).zip(vals) {
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

/// Upper bound on the elements of one unfolded chunk of the batch.
const CHUNK_ELEMS: usize = 1 << 22;

/// Batch items processed per GEMM so the unfolded matrix stays bounded.
fn chunk_items(n: usize, per_item: usize) -> usize {
    (CHUNK_ELEMS / per_item.max(1)).clamp(1, n.max(1))
}

/// `[b, c, p]` items to a `[c, b*p]` matrix.
fn gather<T: Scalar>(items: &[T], c: usize, p: usize, out: &mut [T]) {
    let b = items.len() / (c * p);
    for (j, item) in items.chunks_exact(c * p).enumerate() {
        for ch in 0..c {
            out[ch * b * p + j * p..ch * b * p + (j + 1) * p].copy_from_slice(&item[ch * p..(ch + 1) * p]);
        }
    }
}

/// Inverse of [`gather`], optionally adding a per-channel bias.
fn scatter<T: Scalar>(mat: &[T], c: usize, p: usize, bias: Option<&[T]>, items: &mut [T]) {
    let b = items.len() / (c * p);
    for (j, item) in items.chunks_exact_mut(c * p).enumerate() {
        for ch in 0..c {
            let dst = &mut item[ch * p..(ch + 1) * p];
            dst.copy_from_slice(&mat[ch * b * p + j * p..ch * b * p + (j + 1) * p]);
            if let Some(bias) = bias {
                let bv = bias[ch];
                dst.iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
}

fn dims4<T: Scalar>(x: &Tensor<T>, op: &'static str) -> Result<[usize; 4]> {
    x.expect_rank(4, op)?;
    Ok([x.dim(0), x.dim(1), x.dim(2), x.dim(3)])
}

#[allow(clippy::too_many_arguments)]
fn check_weight<T: Scalar>(
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    in_ch: usize,
    in_axis: usize,
    out_axis: usize,
    geom: &ConvGeometry,
    x_shape: &[usize],
    op: &'static str,
) -> Result<usize> {
    weight.expect_rank(4, op)?;
    let w = weight.shape();
    if w[in_axis] != in_ch || w[2] != geom.kernel || w[3] != geom.kernel {
        return Err(Error::Shape {
            op,
            left: x_shape.to_vec(),
            right: w.to_vec(),
        });
    }
    let out_ch = w[out_axis];
    if let Some(b) = bias {
        b.expect_shape(&[out_ch], op)?;
    }
    Ok(out_ch)
}

fn bias_grad<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = [grad_out.dim(0), grad_out.dim(1), grad_out.dim(2), grad_out.dim(3)];
    let plane = h * w;
    let mut gb = vec![T::zero(); c];
    for i in 0..n {
        let item = grad_out.item(i);
        for (ch, g) in gb.iter_mut().enumerate() {
            *g = *g + item[ch * plane..(ch + 1) * plane].iter().copied().sum::<T>();
        }
    }
    Tensor::new(&[c], gb).expect("bias shape")
}

/// Unfolds items `start..start+b` of `x` into `[rows, b*P]`.
fn unfold<T: Scalar>(scan: &Scan, x: &Tensor<T>, start: usize, b: usize, cols: &mut [T]) {
    let per = x.len() / x.dim(0);
    let items = &x.data()[start * per..(start + b) * per];
    if scan.is_identity() {
        gather(items, scan.c, scan.cols(), cols);
    } else {
        let np = b * scan.cols();
        for (j, item) in items.chunks_exact(per).enumerate() {
            scan.im2col(item, cols, np, j * scan.cols());
        }
    }
}

/// Folds `[rows, b*P]` columns onto items `start..start+b` of `y`
/// (overwriting), then adds `bias`.
fn fold<T: Scalar>(scan: &Scan, cols: &[T], y: &mut Tensor<T>, start: usize, b: usize, bias: Option<&[T]>) {
    let per = y.len() / y.dim(0);
    let items = &mut y.data_mut()[start * per..(start + b) * per];
    if scan.is_identity() {
        scatter(cols, scan.c, scan.cols(), bias, items);
        return;
    }
    items.fill(T::zero());
    let np = b * scan.cols();
    let plane = scan.h * scan.w;
    for (j, item) in items.chunks_exact_mut(per).enumerate() {
        scan.col2im(cols, np, j * scan.cols(), item);
        if let Some(bias) = bias {
            for (ch, &bv) in bias.iter().enumerate() {
                item[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
}

fn item_range<T: Scalar>(t: &Tensor<T>, start: usize, b: usize) -> std::ops::Range<usize> {
    let per = t.len() / t.dim(0);
    start * per..(start + b) * per
}

/// Cross-correlation with zero padding.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: &ConvGeometry,
) -> Result<Tensor<T>> {
    geom.validate("conv2d")?;
    let [n, c, h, w] = dims4(x, "conv2d")?;
    let co = check_weight(weight, bias, c, 1, 0, geom, x.shape(), "conv2d")?;
    let scan = Scan {
        c,
        h,
        w,
        oh: geom.conv_out(h)?,
        ow: geom.conv_out(w)?,
        k: geom.kernel,
        s: geom.stride,
        p: geom.padding,
    };
    let (r, pp) = (scan.rows(), scan.cols());
    let mut y = Tensor::zeros(&[n, co, scan.oh, scan.ow]);
    let g = chunk_items(n, r.max(co) * pp);
    let mut cols = vec![T::zero(); r * g * pp];
    let mut out = vec![T::zero(); co * g * pp];
    for start in (0..n).step_by(g) {
        let b = g.min(n - start);
        let np = b * pp;
        unfold(&scan, x, start, b, &mut cols[..r * np]);
        mat::mm(co, r, np, weight.data(), &cols[..r * np], &mut out[..co * np], false);
        let range = item_range(&y, start, b);
        scatter(&out[..co * np], co, pp, bias.map(|t| t.data()), &mut y.data_mut()[range]);
    }
    Ok(y)
}

/// Gradients of [`conv2d_forward`]: `(grad_x, grad_weight, grad_bias)`.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    geom: &ConvGeometry,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = dims4(x, "conv2d_backward")?;
    let co = check_weight(weight, None, c, 1, 0, geom, x.shape(), "conv2d_backward")?;
    let scan = Scan {
        c,
        h,
        w,
        oh: geom.conv_out(h)?,
        ow: geom.conv_out(w)?,
        k: geom.kernel,
        s: geom.stride,
        p: geom.padding,
    };
    grad_out.expect_shape(&[n, co, scan.oh, scan.ow], "conv2d_backward")?;
    let (r, pp) = (scan.rows(), scan.cols());
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let g = chunk_items(n, r.max(co) * pp);
    let mut cols = vec![T::zero(); r * g * pp];
    let mut gt = vec![T::zero(); co * g * pp];
    for start in (0..n).step_by(g) {
        let b = g.min(n - start);
        let np = b * pp;
        gather(&grad_out.data()[item_range(grad_out, start, b)], co, pp, &mut gt[..co * np]);
        unfold(&scan, x, start, b, &mut cols[..r * np]);
        mat::mmt(co, np, r, &gt[..co * np], &cols[..r * np], gw.data_mut(), true);
        mat::mtm(r, co, np, weight.data(), &gt[..co * np], &mut cols[..r * np], false);
        fold(&scan, &cols[..r * np], &mut gx, start, b, None);
    }
    Ok((gx, gw, bias_grad(grad_out)))
}

/// Transposed convolution (fractionally strided), the adjoint of
/// [`conv2d_forward`] for the same geometry.
pub fn conv_transpose2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: &ConvGeometry,
) -> Result<Tensor<T>> {
    geom.validate("conv_transpose2d")?;
    let [n, ci, hi, wi] = dims4(x, "conv_transpose2d")?;
    let co = check_weight(weight, bias, ci, 0, 1, geom, x.shape(), "conv_transpose2d")?;
    let (ho, wo) = (geom.transposed_out(hi)?, geom.transposed_out(wi)?);
    let scan = Scan {
        c: co,
        h: ho,
        w: wo,
        oh: hi,
        ow: wi,
        k: geom.kernel,
        s: geom.stride,
        p: geom.padding,
    };
    let (r, pp) = (scan.rows(), scan.cols());
    let mut y = Tensor::zeros(&[n, co, ho, wo]);
    let g = chunk_items(n, r.max(ci) * pp);
    let mut xt = vec![T::zero(); ci * g * pp];
    let mut cols = vec![T::zero(); r * g * pp];
    for start in (0..n).step_by(g) {
        let b = g.min(n - start);
        let np = b * pp;
        gather(&x.data()[item_range(x, start, b)], ci, pp, &mut xt[..ci * np]);
        mat::mtm(r, ci, np, weight.data(), &xt[..ci * np], &mut cols[..r * np], false);
        fold(&scan, &cols[..r * np], &mut y, start, b, bias.map(|t| t.data()));
    }
    Ok(y)
}

/// Gradients of [`conv_transpose2d_forward`]: `(grad_x, grad_weight, grad_bias)`.
pub fn conv_transpose2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    geom: &ConvGeometry,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, ci, hi, wi] = dims4(x, "conv_transpose2d_backward")?;
    let co = check_weight(weight, None, ci, 0, 1, geom, x.shape(), "conv_transpose2d_backward")?;
    let (ho, wo) = (geom.transposed_out(hi)?, geom.transposed_out(wi)?);
    grad_out.expect_shape(&[n, co, ho, wo], "conv_transpose2d_backward")?;
    let scan = Scan {
        c: co,
        h: ho,
        w: wo,
        oh: hi,
        ow: wi,
        k: geom.kernel,
        s: geom.stride,
        p: geom.padding,
    };
    let (r, pp) = (scan.rows(), scan.cols());
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let g = chunk_items(n, r.max(ci) * pp);
    let mut cols = vec![T::zero(); r * g * pp];
    let mut xt = vec![T::zero(); ci * g * pp];
    for start in (0..n).step_by(g) {
        let b = g.min(n - start);
        let np = b * pp;
        unfold(&scan, grad_out, start, b, &mut cols[..r * np]);
        gather(&x.data()[item_range(x, start, b)], ci, pp, &mut xt[..ci * np]);
        mat::mmt(ci, np, r, &xt[..ci * np], &cols[..r * np], gw.data_mut(), true);
        mat::mm(ci, r, np, weight.data(), &cols[..r * np], &mut xt[..ci * np], false);
        let range = item_range(&gx, start, b);
        scatter(&xt[..ci * np], ci, pp, None, &mut gx.data_mut()[range]);
    }
    Ok((gx, gw, bias_grad(grad_out)))
}
