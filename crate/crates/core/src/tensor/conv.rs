//! 2-D convolution and transpose convolution.
//!
//! Both directions are expressed as im2col/col2im plus small matmuls. The
//! gather (`im2col`) and scatter-add (`col2im`) kernels are exact adjoints,
//! so each op's backward reuses the other direction's machinery. With the
//! `rayon` feature, work parallelizes over batch items into disjoint output
//! slices and per-item weight-gradient partials are reduced in index order,
//! keeping results bit-identical at any thread count.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{BackwardOp, Tensor};
use crate::error::{arg_err, dim_err, Result};

#[cfg(feature = "rayon")]
use rayon::prelude::*;

/// `a [m x k] * b [k x n]`, accumulated into `out` (callers pre-fill bias).
fn matmul_acc(a: &[f32], m: usize, k: usize, b: &[f32], n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `a [m x k] * b^T` where `b` is `[n x k]`; plain row-dot products.
fn matmul_abt(a: &[f32], m: usize, k: usize, b: &[f32], n: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * n + j] += acc;
        }
    }
}

/// `a^T * b` where `a` is `[k x m]`, `b` is `[k x n]`.
fn matmul_atb(a: &[f32], k: usize, m: usize, b: &[f32], n: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a_row[i];
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

struct Geom {
    ch: usize,
    ih: usize,
    iw: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gh: usize,
    gw: usize,
}

/// Gather patches of `img [ch, ih, iw]` into `col [ch*k*k, gh*gw]`; grid
/// position (gy, gx) samples pixel (gy*stride + ky - pad, gx*stride + kx - pad),
/// zero outside.
fn im2col(img: &[f32], g: &Geom, col: &mut [f32]) {
    debug_assert_eq!(col.len(), g.ch * g.k * g.k * g.gh * g.gw);
    let grid = g.gh * g.gw;
    col.fill(0.0);
    for c in 0..g.ch {
        let img_c = &img[c * g.ih * g.iw..(c + 1) * g.ih * g.iw];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((c * g.k + ky) * g.k + kx) * grid;
                for gy in 0..g.gh {
                    let iy = (gy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.ih as isize {
                        continue;
                    }
                    let img_row = iy as usize * g.iw;
                    let col_row = row + gy * g.gw;
                    for gx in 0..g.gw {
                        let ix = (gx * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.iw as isize {
                            col[col_row + gx] = img_c[img_row + ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `col` back onto `img [ch, ih, iw]`.
fn col2im(col: &[f32], g: &Geom, img: &mut [f32]) {
    debug_assert_eq!(img.len(), g.ch * g.ih * g.iw);
    let grid = g.gh * g.gw;
    for c in 0..g.ch {
        let img_c = &mut img[c * g.ih * g.iw..(c + 1) * g.ih * g.iw];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((c * g.k + ky) * g.k + kx) * grid;
                for gy in 0..g.gh {
                    let iy = (gy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.ih as isize {
                        continue;
                    }
                    let img_row = iy as usize * g.iw;
                    let col_row = row + gy * g.gw;
                    for gx in 0..g.gw {
                        let ix = (gx * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.iw as isize {
                            img_c[img_row + ix as usize] += col[col_row + gx];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(feature = "rayon")]
fn for_each_item<F: Fn(usize, &mut [f32]) + Sync>(out: &mut [f32], per: usize, f: F) {
    out.par_chunks_mut(per).enumerate().for_each(|(b, chunk)| f(b, chunk));
}

#[cfg(not(feature = "rayon"))]
fn for_each_item<F: Fn(usize, &mut [f32]) + Sync>(out: &mut [f32], per: usize, f: F) {
    for (b, chunk) in out.chunks_mut(per).enumerate() {
        f(b, chunk);
    }
}

#[cfg(feature = "rayon")]
fn map_items<F: Fn(usize) -> Vec<f32> + Send + Sync>(batch: usize, f: F) -> Vec<Vec<f32>> {
    (0..batch).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "rayon"))]
fn map_items<F: Fn(usize) -> Vec<f32> + Send + Sync>(batch: usize, f: F) -> Vec<Vec<f32>> {
    (0..batch).map(f).collect()
}

/// Sum per-item partials in index order (order-fixed for determinism).
fn reduce_partials(partials: Vec<Vec<f32>>, len: usize) -> Vec<f32> {
    let mut total = vec![0.0f32; len];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

// ---------------------------------------------------------------------------
// conv2d

struct Conv2dOp {
    parents: [Tensor; 3],
    stride: usize,
    pad: usize,
}

impl Conv2dOp {
    fn geom(&self) -> Result<(usize, Geom, usize)> {
        let (batch, c, h, w) = self.parents[0].dims4()?;
        let (o, _, k, _) = self.parents[1].dims4()?;
        let gh = (h + 2 * self.pad - k) / self.stride + 1;
        let gw = (w + 2 * self.pad - k) / self.stride + 1;
        Ok((batch, Geom { ch: c, ih: h, iw: w, k, stride: self.stride, pad: self.pad, gh, gw }, o))
    }
}

impl BackwardOp for Conv2dOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let (x, w, b) = (&self.parents[0], &self.parents[1], &self.parents[2]);
        let (batch, g, o) = self.geom()?;
        let grid = g.gh * g.gw;
        let ckk = g.ch * g.k * g.k;
        let x_guard = x.data();
        let x_data: &[f32] = &x_guard;
        let w_guard = w.data();
        let w_data: &[f32] = &w_guard;

        if b.requires_grad() {
            let mut gb = vec![0.0f32; o];
            for bi in 0..batch {
                for (oc, gb_oc) in gb.iter_mut().enumerate() {
                    let base = (bi * o + oc) * grid;
                    *gb_oc += grad_out[base..base + grid].iter().sum::<f32>();
                }
            }
            b.accumulate_grad(&gb);
        }

        if w.requires_grad() {
            let partials = map_items(batch, |bi| {
                let mut col = vec![0.0f32; ckk * grid];
                im2col(&x_data[bi * g.ch * g.ih * g.iw..], &g, &mut col);
                let mut part = vec![0.0f32; o * ckk];
                matmul_abt(&grad_out[bi * o * grid..(bi + 1) * o * grid], o, grid, &col, ckk, &mut part);
                part
            });
            w.accumulate_grad(&reduce_partials(partials, o * ckk));
        }

        if x.requires_grad() {
            let mut gx = vec![0.0f32; x.numel()];
            let per = g.ch * g.ih * g.iw;
            for_each_item(&mut gx, per, |bi, chunk| {
                let mut gcol = vec![0.0f32; ckk * grid];
                matmul_atb(w_data, o, ckk, &grad_out[bi * o * grid..(bi + 1) * o * grid], grid, &mut gcol);
                col2im(&gcol, &g, chunk);
            });
            x.accumulate_grad(&gx);
        }
        Ok(())
    }
}

/// Cross-correlation with square kernel: `weight [O, C, K, K]` applied to
/// `input [B, C, H, W]` giving `[B, O, H', W']` with
/// `H' = (H + 2*pad - K)/stride + 1`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    if stride < 1 {
        return Err(arg_err("conv2d: stride must be >= 1"));
    }
    let (batch, c, h, w) = input.dims4()?;
    let (o, wc, k, k2) = weight.dims4()?;
    if k != k2 {
        return Err(dim_err("conv2d: kernel must be square"));
    }
    if wc != c {
        return Err(dim_err(format!(
            "conv2d: input has {c} channels, weight expects {wc}"
        )));
    }
    if bias.shape() != [o] {
        return Err(dim_err("conv2d: bias length must equal output channels"));
    }
    if k > h + 2 * pad || k > w + 2 * pad {
        return Err(dim_err("conv2d: kernel larger than padded input"));
    }
    let g = Geom { ch: c, ih: h, iw: w, k, stride, pad, gh: (h + 2 * pad - k) / stride + 1, gw: (w + 2 * pad - k) / stride + 1 };
    let grid = g.gh * g.gw;
    let ckk = c * k * k;
    let mut out = vec![0.0f32; batch * o * grid];
    {
        let x_guard = input.data();
        let x_data: &[f32] = &x_guard;
        let w_guard = weight.data();
        let w_data: &[f32] = &w_guard;
        let b_guard = bias.data();
        let b_data: &[f32] = &b_guard;
        for_each_item(&mut out, o * grid, |bi, chunk| {
            for (oc, &bv) in b_data.iter().enumerate() {
                chunk[oc * grid..(oc + 1) * grid].fill(bv);
            }
            let mut col = vec![0.0f32; ckk * grid];
            im2col(&x_data[bi * c * h * w..], &g, &mut col);
            matmul_acc(w_data, o, ckk, &col, grid, chunk);
        });
    }
    Ok(Tensor::from_op(
        &[batch, o, g.gh, g.gw],
        out,
        Box::new(Conv2dOp {
            parents: [input.clone(), weight.clone(), bias.clone()],
            stride,
            pad,
        }),
    ))
}

// ---------------------------------------------------------------------------
// conv_transpose2d

struct ConvTranspose2dOp {
    parents: [Tensor; 3],
    stride: usize,
    pad: usize,
}

impl ConvTranspose2dOp {
    /// Geometry with the *output* as the image and the input as the grid.
    fn geom(&self) -> Result<(usize, usize, Geom, usize)> {
        let (batch, c, h, w) = self.parents[0].dims4()?;
        let (_, o, k, _) = self.parents[1].dims4()?;
        let oh = (h - 1) * self.stride + k - 2 * self.pad;
        let ow = (w - 1) * self.stride + k - 2 * self.pad;
        Ok((batch, c, Geom { ch: o, ih: oh, iw: ow, k, stride: self.stride, pad: self.pad, gh: h, gw: w }, o))
    }
}

impl BackwardOp for ConvTranspose2dOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let (x, w, b) = (&self.parents[0], &self.parents[1], &self.parents[2]);
        let (batch, c, g, o) = self.geom()?;
        let grid = g.gh * g.gw; // input spatial positions
        let okk = o * g.k * g.k;
        let out_hw = g.ih * g.iw;
        let x_guard = x.data();
        let x_data: &[f32] = &x_guard;
        let w_guard = w.data();
        let w_data: &[f32] = &w_guard;

        if b.requires_grad() {
            let mut gb = vec![0.0f32; o];
            for bi in 0..batch {
                for (oc, gb_oc) in gb.iter_mut().enumerate() {
                    let base = (bi * o + oc) * out_hw;
                    *gb_oc += grad_out[base..base + out_hw].iter().sum::<f32>();
                }
            }
            b.accumulate_grad(&gb);
        }

        if w.requires_grad() {
            let partials = map_items(batch, |bi| {
                let mut col = vec![0.0f32; okk * grid];
                im2col(&grad_out[bi * o * out_hw..], &g, &mut col);
                let mut part = vec![0.0f32; c * okk];
                matmul_abt(&x_data[bi * c * grid..(bi + 1) * c * grid], c, grid, &col, okk, &mut part);
                part
            });
            w.accumulate_grad(&reduce_partials(partials, c * okk));
        }

        if x.requires_grad() {
            // gradient w.r.t. input is a forward conv of grad_out with the
            // same weight
            let mut gx = vec![0.0f32; x.numel()];
            for_each_item(&mut gx, c * grid, |bi, chunk| {
                let mut col = vec![0.0f32; okk * grid];
                im2col(&grad_out[bi * o * out_hw..], &g, &mut col);
                matmul_acc(w_data, c, okk, &col, grid, chunk);
            });
            x.accumulate_grad(&gx);
        }
        Ok(())
    }
}

/// Transpose convolution: `weight [C, O, K, K]` spreads `input [B, C, H, W]`
/// onto `[B, O, H', W']` with `H' = (H-1)*stride - 2*pad + K`.
pub fn conv_transpose2d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    if stride < 1 {
        return Err(arg_err("conv_transpose2d: stride must be >= 1"));
    }
    let (batch, c, h, w) = input.dims4()?;
    let (wc, o, k, k2) = weight.dims4()?;
    if k != k2 {
        return Err(dim_err("conv_transpose2d: kernel must be square"));
    }
    if wc != c {
        return Err(dim_err(format!(
            "conv_transpose2d: input has {c} channels, weight expects {wc}"
        )));
    }
    if bias.shape() != [o] {
        return Err(dim_err("conv_transpose2d: bias length must equal output channels"));
    }
    if (h - 1) * stride + k <= 2 * pad || (w - 1) * stride + k <= 2 * pad {
        return Err(dim_err("conv_transpose2d: padding consumes the whole output"));
    }
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (w - 1) * stride + k - 2 * pad;
    let g = Geom { ch: o, ih: oh, iw: ow, k, stride, pad, gh: h, gw: w };
    let grid = h * w;
    let okk = o * k * k;
    let mut out = vec![0.0f32; batch * o * oh * ow];
    {
        let x_guard = input.data();
        let x_data: &[f32] = &x_guard;
        let w_guard = weight.data();
        let w_data: &[f32] = &w_guard;
        let b_guard = bias.data();
        let b_data: &[f32] = &b_guard;
        for_each_item(&mut out, o * oh * ow, |bi, chunk| {
            let mut gcol = vec![0.0f32; okk * grid];
            matmul_atb(w_data, c, okk, &x_data[bi * c * grid..(bi + 1) * c * grid], grid, &mut gcol);
            for (oc, &bv) in b_data.iter().enumerate() {
                chunk[oc * oh * ow..(oc + 1) * oh * ow].fill(bv);
            }
            col2im(&gcol, &g, chunk);
        });
    }
    Ok(Tensor::from_op(
        &[batch, o, oh, ow],
        out,
        Box::new(ConvTranspose2dOp {
            parents: [input.clone(), weight.clone(), bias.clone()],
            stride,
            pad,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    /// Direct nested-loop convolution, the reference for conv2d.
    fn oracle_conv2d(
        x: &[f32], (b, c, h, w): (usize, usize, usize, usize),
        wt: &[f32], (o, k): (usize, usize),
        bias: &[f32], stride: usize, pad: usize,
    ) -> (Vec<f32>, usize, usize) {
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0f32; b * o * oh * ow];
        for bi in 0..b {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += x[((bi * c + ic) * h + iy as usize) * w + ix as usize]
                                        * wt[((oc * c + ic) * k + ky) * k + kx];
                                }
                            }
                        }
                        out[((bi * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        (out, oh, ow)
    }

    /// Direct scatter-add transpose convolution, the reference for
    /// conv_transpose2d.
    fn oracle_conv_transpose2d(
        x: &[f32], (b, c, h, w): (usize, usize, usize, usize),
        wt: &[f32], (o, k): (usize, usize),
        bias: &[f32], stride: usize, pad: usize,
    ) -> (Vec<f32>, usize, usize) {
        let oh = (h - 1) * stride + k - 2 * pad;
        let ow = (w - 1) * stride + k - 2 * pad;
        let mut out = vec![0.0f32; b * o * oh * ow];
        for bi in 0..b {
            for oc in 0..o {
                let base = (bi * o + oc) * oh * ow;
                for v in &mut out[base..base + oh * ow] {
                    *v = bias[oc];
                }
            }
            for ic in 0..c {
                for iy in 0..h {
                    for ix in 0..w {
                        let xv = x[((bi * c + ic) * h + iy) * w + ix];
                        for oc in 0..o {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let ty = (iy * stride + ky) as isize - pad as isize;
                                    let tx = (ix * stride + kx) as isize - pad as isize;
                                    if ty < 0 || tx < 0 || ty >= oh as isize || tx >= ow as isize {
                                        continue;
                                    }
                                    out[((bi * o + oc) * oh + ty as usize) * ow + tx as usize] +=
                                        xv * wt[((ic * o + oc) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        (out, oh, ow)
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let x = t(&[1, 1, 3, 3], &[1.0; 9]);
        let w = t(&[1, 1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn ones_kernel_counts_overlap() {
        // 3x3 ones input, 3x3 ones kernel, pad 1: each output counts the
        // in-bounds taps -> center 9, edge-centers 6, corners 4.
        let x = t(&[1, 1, 3, 3], &[1.0; 9]);
        let w = t(&[1, 1, 3, 3], &[1.0; 9]);
        let b = t(&[1], &[0.0]);
        let y = conv2d(&x, &w, &b, 1, 1).unwrap();
        #[rustfmt::skip]
        let expect = vec![
            4.0, 6.0, 4.0,
            6.0, 9.0, 6.0,
            4.0, 6.0, 4.0,
        ];
        assert_eq!(y.to_vec(), expect);
        let (oracle, _, _) = oracle_conv2d(&[1.0; 9], (1, 1, 3, 3), &[1.0; 9], (1, 3), &[0.0], 1, 1);
        assert_eq!(y.to_vec(), oracle);
    }

    #[test]
    fn stride_two_shape_halves() {
        let x = t(&[1, 1, 4, 4], &[0.5; 16]);
        let w = t(&[1, 1, 4, 4], &[0.1; 16]);
        let b = t(&[1], &[0.0]);
        let y = conv2d(&x, &w, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn conv2d_matches_oracle_on_random_input() {
        let mut rng = crate::rng::seed_rng(11);
        let x: Vec<f32> = crate::tensor::randn_vec(&mut rng, 2 * 3 * 6 * 5, 1.0);
        let w: Vec<f32> = crate::tensor::randn_vec(&mut rng, 4 * 3 * 3 * 3, 0.5);
        let b: Vec<f32> = crate::tensor::randn_vec(&mut rng, 4, 0.5);
        let y = conv2d(
            &t(&[2, 3, 6, 5], &x),
            &t(&[4, 3, 3, 3], &w),
            &t(&[4], &b),
            2,
            1,
        )
        .unwrap();
        let (oracle, oh, ow) = oracle_conv2d(&x, (2, 3, 6, 5), &w, (4, 3), &b, 2, 1);
        assert_eq!(y.shape(), &[2, 4, oh, ow]);
        for (a, o) in y.to_vec().iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-4, "{a} vs {o}");
        }
    }

    #[test]
    fn channel_mismatch_is_a_dimension_error() {
        let x = t(&[1, 2, 4, 4], &[0.0; 32]);
        let w = t(&[1, 3, 3, 3], &[0.0; 27]);
        let b = t(&[1], &[0.0]);
        assert!(matches!(conv2d(&x, &w, &b, 1, 1), Err(crate::Error::DimMismatch(_))));
        let wt = t(&[3, 1, 2, 2], &[0.0; 12]);
        let bt = t(&[1], &[0.0]);
        assert!(conv_transpose2d(&x, &wt, &bt, 1, 0).is_err());
    }

    #[test]
    fn transpose_shapes_follow_formula() {
        let x = t(&[1, 1, 2, 2], &[1.0; 4]);
        let w = t(&[1, 1, 4, 4], &[0.2; 16]);
        let b = t(&[1], &[0.0]);
        let y = conv_transpose2d(&x, &w, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
    }

    #[test]
    fn single_tap_spreads_kernel() {
        let x = t(&[1, 1, 1, 1], &[1.0]);
        let w = t(&[1, 1, 2, 2], &[1.0; 4]);
        let b = t(&[1], &[0.0]);
        let y = conv_transpose2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.to_vec(), vec![1.0; 4]);
    }

    #[test]
    fn conv_transpose_matches_scatter_oracle_on_random_input() {
        let mut rng = crate::rng::seed_rng(12);
        let x: Vec<f32> = crate::tensor::randn_vec(&mut rng, 1 * 2 * 3 * 3, 1.0);
        let w: Vec<f32> = crate::tensor::randn_vec(&mut rng, 2 * 3 * 4 * 4, 0.5);
        let b: Vec<f32> = crate::tensor::randn_vec(&mut rng, 3, 0.5);
        let y = conv_transpose2d(
            &t(&[1, 2, 3, 3], &x),
            &t(&[2, 3, 4, 4], &w),
            &t(&[3], &b),
            2,
            1,
        )
        .unwrap();
        let (oracle, oh, ow) = oracle_conv_transpose2d(&x, (1, 2, 3, 3), &w, (3, 4), &b, 2, 1);
        assert_eq!(y.shape(), &[1, 3, oh, ow]);
        for (a, o) in y.to_vec().iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-4, "{a} vs {o}");
        }
    }

    #[test]
    fn conv_then_transpose_restores_spatial_extent() {
        for &(h, w, k, stride, pad) in
            &[(8usize, 8usize, 4usize, 2usize, 1usize), (6, 10, 3, 1, 1), (12, 8, 4, 2, 1), (5, 5, 3, 2, 1)]
        {
            let x = Tensor::zeros(&[1, 2, h, w]);
            let wt = Tensor::zeros(&[3, 2, k, k]);
            let bias = Tensor::zeros(&[3]);
            let mid = conv2d(&x, &wt, &bias, stride, pad).unwrap();
            let wt2 = Tensor::zeros(&[3, 2, k, k]);
            let bias2 = Tensor::zeros(&[2]);
            let back = conv_transpose2d(&mid, &wt2, &bias2, stride, pad).unwrap();
            let (_, _, bh, bw) = back.dims4().unwrap();
            // exact restoration whenever the conv tiling is exact
            if (h + 2 * pad - k) % stride == 0 && (w + 2 * pad - k) % stride == 0 {
                assert_eq!((bh, bw), (h, w), "k={k} s={stride} p={pad}");
            }
        }
    }
}
