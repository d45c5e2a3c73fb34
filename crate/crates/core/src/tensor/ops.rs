//! Pointwise, reduction and layout operations with backward rules.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{BackwardOp, Tensor};
use crate::error::{arg_err, dim_err, Result};
use crate::math;

/// Floor applied inside `log` so saturated GAN scores cannot produce -inf.
pub const LOG_EPS: f32 = 1e-12;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// unary pointwise

struct LeakyReluOp {
    parents: [Tensor; 1],
    slope: f32,
}

impl BackwardOp for LeakyReluOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let x = &self.parents[0];
        let contrib: Vec<f32> = x
            .data()
            .iter()
            .zip(grad_out)
            .map(|(&xv, &g)| if xv >= 0.0 { g } else { self.slope * g })
            .collect();
        x.accumulate_grad(&contrib);
        Ok(())
    }
}

struct SigmoidOp {
    parents: [Tensor; 1],
}

impl BackwardOp for SigmoidOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let contrib: Vec<f32> = out
            .data()
            .iter()
            .zip(grad_out)
            .map(|(&y, &g)| g * y * (1.0 - y))
            .collect();
        self.parents[0].accumulate_grad(&contrib);
        Ok(())
    }
}

struct TanhOp {
    parents: [Tensor; 1],
}

impl BackwardOp for TanhOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let contrib: Vec<f32> = out
            .data()
            .iter()
            .zip(grad_out)
            .map(|(&y, &g)| g * (1.0 - y * y))
            .collect();
        self.parents[0].accumulate_grad(&contrib);
        Ok(())
    }
}

struct LogOp {
    parents: [Tensor; 1],
}

impl BackwardOp for LogOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let contrib: Vec<f32> = self.parents[0]
            .data()
            .iter()
            .zip(grad_out)
            .map(|(&x, &g)| g / x.max(LOG_EPS))
            .collect();
        self.parents[0].accumulate_grad(&contrib);
        Ok(())
    }
}

struct AffineOp {
    parents: [Tensor; 1],
    a: f32,
}

impl BackwardOp for AffineOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let contrib: Vec<f32> = grad_out.iter().map(|&g| g * self.a).collect();
        self.parents[0].accumulate_grad(&contrib);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// binary pointwise

struct AddOp {
    parents: [Tensor; 2],
}

impl BackwardOp for AddOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        if self.parents[0].requires_grad() {
            self.parents[0].accumulate_grad(grad_out);
        }
        if self.parents[1].requires_grad() {
            self.parents[1].accumulate_grad(grad_out);
        }
        Ok(())
    }
}

struct SubOp {
    parents: [Tensor; 2],
}

impl BackwardOp for SubOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        if self.parents[0].requires_grad() {
            self.parents[0].accumulate_grad(grad_out);
        }
        if self.parents[1].requires_grad() {
            let neg: Vec<f32> = grad_out.iter().map(|&g| -g).collect();
            self.parents[1].accumulate_grad(&neg);
        }
        Ok(())
    }
}

/// Elementwise product. `Channel` marks which parent is the single-channel
/// mask broadcast across the other's channels.
enum MulKind {
    Same,
    Channel { mask: usize },
}

struct MulOp {
    parents: [Tensor; 2],
    kind: MulKind,
}

impl BackwardOp for MulOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let (a, b) = (&self.parents[0], &self.parents[1]);
        match self.kind {
            MulKind::Same => {
                if a.requires_grad() {
                    let contrib: Vec<f32> =
                        b.data().iter().zip(grad_out).map(|(&bv, &g)| bv * g).collect();
                    a.accumulate_grad(&contrib);
                }
                if b.requires_grad() {
                    let contrib: Vec<f32> =
                        a.data().iter().zip(grad_out).map(|(&av, &g)| av * g).collect();
                    b.accumulate_grad(&contrib);
                }
            }
            MulKind::Channel { mask } => {
                let (m, full) = if mask == 0 { (a, b) } else { (b, a) };
                let (bsz, ch, h, w) = full.dims4()?;
                let hw = h * w;
                let m_data = m.data();
                let f_data = full.data();
                if full.requires_grad() {
                    let mut contrib = vec![0.0f32; full.numel()];
                    for bi in 0..bsz {
                        let m_base = bi * hw;
                        for c in 0..ch {
                            let f_base = (bi * ch + c) * hw;
                            for i in 0..hw {
                                contrib[f_base + i] = grad_out[f_base + i] * m_data[m_base + i];
                            }
                        }
                    }
                    full.accumulate_grad(&contrib);
                }
                if m.requires_grad() {
                    let mut contrib = vec![0.0f32; m.numel()];
                    for bi in 0..bsz {
                        let m_base = bi * hw;
                        for c in 0..ch {
                            let f_base = (bi * ch + c) * hw;
                            for i in 0..hw {
                                contrib[m_base + i] += grad_out[f_base + i] * f_data[f_base + i];
                            }
                        }
                    }
                    m.accumulate_grad(&contrib);
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// reductions

struct MeanOp {
    parents: [Tensor; 1],
}

impl BackwardOp for MeanOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let n = self.parents[0].numel();
        let g = grad_out[0] / n as f32;
        self.parents[0].accumulate_grad(&vec![g; n]);
        Ok(())
    }
}

struct MeanPerItemOp {
    parents: [Tensor; 1],
}

impl BackwardOp for MeanPerItemOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let x = &self.parents[0];
        let batch = x.shape()[0];
        let per = x.numel() / batch;
        let mut contrib = vec![0.0f32; x.numel()];
        for (bi, &g) in grad_out.iter().enumerate().take(batch) {
            let gv = g / per as f32;
            contrib[bi * per..(bi + 1) * per].fill(gv);
        }
        x.accumulate_grad(&contrib);
        Ok(())
    }
}

struct L1DistanceOp {
    parents: [Tensor; 2],
}

impl BackwardOp for L1DistanceOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let (a, b) = (&self.parents[0], &self.parents[1]);
        let n = a.numel() as f32;
        let g = grad_out[0] / n;
        let signs: Vec<f32> = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&av, &bv)| {
                let d = av - bv;
                if d > 0.0 {
                    g
                } else if d < 0.0 {
                    -g
                } else {
                    0.0
                }
            })
            .collect();
        if a.requires_grad() {
            a.accumulate_grad(&signs);
        }
        if b.requires_grad() {
            let neg: Vec<f32> = signs.iter().map(|&s| -s).collect();
            b.accumulate_grad(&neg);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// layout

struct ConcatChannelsOp {
    parents: [Tensor; 2],
    ch_a: usize,
    ch_b: usize,
    hw: usize,
}

impl BackwardOp for ConcatChannelsOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let (a, b) = (&self.parents[0], &self.parents[1]);
        let batch = a.shape()[0];
        let a_len = self.ch_a * self.hw;
        let b_len = self.ch_b * self.hw;
        let stride = a_len + b_len;
        if a.requires_grad() {
            let mut contrib = vec![0.0f32; a.numel()];
            for bi in 0..batch {
                contrib[bi * a_len..(bi + 1) * a_len]
                    .copy_from_slice(&grad_out[bi * stride..bi * stride + a_len]);
            }
            a.accumulate_grad(&contrib);
        }
        if b.requires_grad() {
            let mut contrib = vec![0.0f32; b.numel()];
            for bi in 0..batch {
                contrib[bi * b_len..(bi + 1) * b_len]
                    .copy_from_slice(&grad_out[bi * stride + a_len..(bi + 1) * stride]);
            }
            b.accumulate_grad(&contrib);
        }
        Ok(())
    }
}

struct SliceChannelsOp {
    parents: [Tensor; 1],
    start: usize,
    len: usize,
    hw: usize,
}

impl BackwardOp for SliceChannelsOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let x = &self.parents[0];
        let (batch, ch, _, _) = x.dims4()?;
        let mut grad = x.grad_buf_mut();
        let out_len = self.len * self.hw;
        for bi in 0..batch {
            let dst = (bi * ch + self.start) * self.hw;
            let src = bi * out_len;
            for i in 0..out_len {
                grad[dst + i] += grad_out[src + i];
            }
        }
        Ok(())
    }
}

struct UpsampleNearestOp {
    parents: [Tensor; 1],
    factor: usize,
}

impl BackwardOp for UpsampleNearestOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let x = &self.parents[0];
        let (batch, ch, h, w) = x.dims4()?;
        let f = self.factor;
        let (oh, ow) = (h * f, w * f);
        let mut contrib = vec![0.0f32; x.numel()];
        for bc in 0..batch * ch {
            let in_base = bc * h * w;
            let out_base = bc * oh * ow;
            for oy in 0..oh {
                let iy = oy / f;
                let row_in = in_base + iy * w;
                let row_out = out_base + oy * ow;
                for ox in 0..ow {
                    contrib[row_in + ox / f] += grad_out[row_out + ox];
                }
            }
        }
        x.accumulate_grad(&contrib);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// public surface

impl Tensor {
    pub fn leaky_relu(&self, slope: f32) -> Tensor {
        let data: Vec<f32> = self
            .data()
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        Tensor::from_op(
            self.shape(),
            data,
            Box::new(LeakyReluOp { parents: [self.clone()], slope }),
        )
    }

    pub fn relu(&self) -> Tensor {
        self.leaky_relu(0.0)
    }

    /// Logistic function; outputs lie strictly inside (0, 1) for finite input.
    pub fn sigmoid(&self) -> Tensor {
        let data: Vec<f32> = self.data().iter().map(|&x| math::sigmoid(x)).collect();
        Tensor::from_op(self.shape(), data, Box::new(SigmoidOp { parents: [self.clone()] }))
    }

    pub fn tanh(&self) -> Tensor {
        let data: Vec<f32> = self.data().iter().map(|&x| math::tanh(x)).collect();
        Tensor::from_op(self.shape(), data, Box::new(TanhOp { parents: [self.clone()] }))
    }

    /// Natural log with inputs floored at [`LOG_EPS`].
    pub fn log(&self) -> Tensor {
        let data: Vec<f32> = self.data().iter().map(|&x| math::ln(x.max(LOG_EPS))).collect();
        Tensor::from_op(self.shape(), data, Box::new(LogOp { parents: [self.clone()] }))
    }

    /// `a * x + b` elementwise with constants.
    pub fn affine(&self, a: f32, b: f32) -> Tensor {
        let data: Vec<f32> = self.data().iter().map(|&x| a * x + b).collect();
        Tensor::from_op(self.shape(), data, Box::new(AffineOp { parents: [self.clone()], a }))
    }

    pub fn neg(&self) -> Tensor {
        self.affine(-1.0, 0.0)
    }

    pub fn scale(&self, c: f32) -> Tensor {
        self.affine(c, 0.0)
    }

    /// `1 - x`, the usual companion of `log` in discriminator losses.
    pub fn one_minus(&self) -> Tensor {
        self.affine(-1.0, 1.0)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "add")?;
        let data: Vec<f32> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape(),
            data,
            Box::new(AddOp { parents: [self.clone(), other.clone()] }),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "sub")?;
        let data: Vec<f32> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape(),
            data,
            Box::new(SubOp { parents: [self.clone(), other.clone()] }),
        ))
    }

    /// Elementwise product. Shapes must match exactly, except that a
    /// rank-4 single-channel tensor broadcasts across the channels of a
    /// rank-4 tensor with the same batch and spatial extents (mask gating).
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() == other.shape() {
            let data: Vec<f32> = self
                .data()
                .iter()
                .zip(other.data().iter())
                .map(|(&a, &b)| a * b)
                .collect();
            return Ok(Tensor::from_op(
                self.shape(),
                data,
                Box::new(MulOp { parents: [self.clone(), other.clone()], kind: MulKind::Same }),
            ));
        }
        let (a4, b4) = (self.dims4(), other.dims4());
        if let (Ok((ab, ac, ah, aw)), Ok((bb, bc, bh, bw))) = (a4, b4) {
            if ab == bb && ah == bh && aw == bw && (ac == 1) != (bc == 1) {
                let mask_idx = if ac == 1 { 0 } else { 1 };
                let (mask, full) = if mask_idx == 0 { (self, other) } else { (other, self) };
                let (bsz, ch, h, w) = full.dims4()?;
                let hw = h * w;
                let m_data = mask.data();
                let f_data = full.data();
                let mut data = vec![0.0f32; full.numel()];
                for bi in 0..bsz {
                    let m_base = bi * hw;
                    for c in 0..ch {
                        let f_base = (bi * ch + c) * hw;
                        for i in 0..hw {
                            data[f_base + i] = f_data[f_base + i] * m_data[m_base + i];
                        }
                    }
                }
                drop(m_data);
                drop(f_data);
                return Ok(Tensor::from_op(
                    full.shape(),
                    data,
                    Box::new(MulOp {
                        parents: [self.clone(), other.clone()],
                        kind: MulKind::Channel { mask: mask_idx },
                    }),
                ));
            }
        }
        Err(dim_err(format!(
            "mul: shapes {:?} and {:?} are neither equal nor channel-broadcastable",
            self.shape(),
            other.shape()
        )))
    }

    /// Mean over all elements, as a `[1]` tensor.
    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f32;
        let sum: f32 = self.data().iter().sum();
        Tensor::from_op(&[1], vec![sum / n], Box::new(MeanOp { parents: [self.clone()] }))
    }

    /// Mean over all non-batch dimensions, as a `[B]` tensor.
    pub fn mean_per_item(&self) -> Result<Tensor> {
        if self.rank() < 2 {
            return Err(dim_err("mean_per_item needs a batch dimension"));
        }
        let batch = self.shape()[0];
        let per = self.numel() / batch;
        let data = self.data();
        let means: Vec<f32> = (0..batch)
            .map(|bi| data[bi * per..(bi + 1) * per].iter().sum::<f32>() / per as f32)
            .collect();
        drop(data);
        Ok(Tensor::from_op(
            &[batch],
            means,
            Box::new(MeanPerItemOp { parents: [self.clone()] }),
        ))
    }

    /// Scalar mean absolute difference.
    pub fn l1_distance(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "l1_distance")?;
        let n = self.numel() as f32;
        let sum: f32 = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| math::abs(a - b))
            .sum();
        Ok(Tensor::from_op(
            &[1],
            vec![sum / n],
            Box::new(L1DistanceOp { parents: [self.clone(), other.clone()] }),
        ))
    }

    /// Stack `other`'s channels after `self`'s. Batch and spatial extents
    /// must agree.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        let (ba, ca, ha, wa) = self.dims4()?;
        let (bb, cb, hb, wb) = other.dims4()?;
        if ba != bb || ha != hb || wa != wb {
            return Err(dim_err(format!(
                "concat_channels: shapes {:?} and {:?} differ outside the channel dim",
                self.shape(),
                other.shape()
            )));
        }
        let hw = ha * wa;
        let a_len = ca * hw;
        let b_len = cb * hw;
        let mut data = vec![0.0f32; ba * (a_len + b_len)];
        {
            let a_data = self.data();
            let b_data = other.data();
            for bi in 0..ba {
                let base = bi * (a_len + b_len);
                data[base..base + a_len].copy_from_slice(&a_data[bi * a_len..(bi + 1) * a_len]);
                data[base + a_len..base + a_len + b_len]
                    .copy_from_slice(&b_data[bi * b_len..(bi + 1) * b_len]);
            }
        }
        Ok(Tensor::from_op(
            &[ba, ca + cb, ha, wa],
            data,
            Box::new(ConcatChannelsOp {
                parents: [self.clone(), other.clone()],
                ch_a: ca,
                ch_b: cb,
                hw,
            }),
        ))
    }

    /// Channels `[start, start+len)` as a new tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let (batch, ch, h, w) = self.dims4()?;
        if start + len > ch || len == 0 {
            return Err(arg_err(format!(
                "slice_channels: [{start}, {}) out of {ch} channels",
                start + len
            )));
        }
        let hw = h * w;
        let mut data = vec![0.0f32; batch * len * hw];
        {
            let src = self.data();
            for bi in 0..batch {
                let s = (bi * ch + start) * hw;
                let d = bi * len * hw;
                data[d..d + len * hw].copy_from_slice(&src[s..s + len * hw]);
            }
        }
        Ok(Tensor::from_op(
            &[batch, len, h, w],
            data,
            Box::new(SliceChannelsOp { parents: [self.clone()], start, len, hw }),
        ))
    }

    /// Replicate each pixel into a `factor x factor` block.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Tensor> {
        if factor < 1 {
            return Err(arg_err("upsample_nearest: factor must be >= 1"));
        }
        let (batch, ch, h, w) = self.dims4()?;
        let (oh, ow) = (h * factor, w * factor);
        let mut data = vec![0.0f32; batch * ch * oh * ow];
        {
            let src = self.data();
            for bc in 0..batch * ch {
                let in_base = bc * h * w;
                let out_base = bc * oh * ow;
                for oy in 0..oh {
                    let row_in = in_base + (oy / factor) * w;
                    let row_out = out_base + oy * ow;
                    for ox in 0..ow {
                        data[row_out + ox] = src[row_in + ox / factor];
                    }
                }
            }
        }
        Ok(Tensor::from_op(
            &[batch, ch, oh, ow],
            data,
            Box::new(UpsampleNearestOp { parents: [self.clone()], factor }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn leaky_relu_matches_stated_values() {
        let x = t(&[3], &[1.0, -1.0, 0.0]);
        let y = x.leaky_relu(0.2);
        assert_eq!(y.to_vec(), vec![1.0, -0.2, 0.0]);
        let id = x.leaky_relu(1.0);
        assert_eq!(id.to_vec(), x.to_vec());
    }

    #[test]
    fn pointwise_basics() {
        assert_eq!(t(&[1], &[0.0]).sigmoid().item(), 0.5);
        assert_eq!(t(&[1], &[-3.0]).relu().item(), 0.0);
        assert_eq!(t(&[1], &[0.0]).tanh().item(), 0.0);
    }

    #[test]
    fn log_is_floored_not_infinite() {
        let y = t(&[2], &[0.0, -5.0]).log();
        assert!(y.to_vec().iter().all(|v| v.is_finite()));
        assert!((y.to_vec()[0] - LOG_EPS.ln()).abs() < 1e-3);
    }

    #[test]
    fn mean_of_one_to_four_is_two_point_five() {
        assert_eq!(t(&[4], &[1.0, 2.0, 3.0, 4.0]).mean().item(), 2.5);
    }

    #[test]
    fn l1_distance_of_identical_tensors_is_zero() {
        let a = t(&[2, 2], &[0.3, -0.7, 1.5, 2.0]);
        assert_eq!(a.l1_distance(&a).unwrap().item(), 0.0);
    }

    #[test]
    fn single_channel_mask_scales_every_channel_identically() {
        let full = t(&[1, 4, 1, 2], &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let mask = t(&[1, 1, 1, 2], &[0.5, 2.0]);
        let y = full.mul(&mask).unwrap();
        assert_eq!(y.shape(), &[1, 4, 1, 2]);
        for c in 0..4 {
            assert_eq!(&y.to_vec()[c * 2..c * 2 + 2], &[0.5, 4.0]);
        }
        // order must not matter
        let y2 = mask.mul(&full).unwrap();
        assert_eq!(y.to_vec(), y2.to_vec());
    }

    #[test]
    fn mul_rejects_incompatible_shapes() {
        let a = t(&[1, 3, 2, 2], &[0.0; 12]);
        let b = t(&[1, 2, 2, 2], &[0.0; 8]);
        assert!(a.mul(&b).is_err());
    }

    #[test]
    fn concat_then_slice_round_trips() {
        let a = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[1, 1, 2, 2], &[5.0, 6.0, 7.0, 8.0]);
        let cat = a.concat_channels(&b).unwrap();
        assert_eq!(cat.shape(), &[1, 2, 2, 2]);
        assert_eq!(cat.slice_channels(0, 1).unwrap().to_vec(), a.to_vec());
        assert_eq!(cat.slice_channels(1, 1).unwrap().to_vec(), b.to_vec());
    }

    #[test]
    fn concat_backward_routes_ones_to_both_inputs() {
        let a = Tensor::param(&[1, 1, 2, 2], vec![1.0; 4]).unwrap();
        let b = Tensor::param(&[1, 1, 2, 2], vec![2.0; 4]).unwrap();
        let loss = a.concat_channels(&b).unwrap().mean().scale(8.0);
        loss.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0; 4]);
        assert_eq!(b.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn upsample_nearest_replicates_blocks() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.upsample_nearest(1).unwrap().to_vec(), x.to_vec());
        let y = x.upsample_nearest(2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        #[rustfmt::skip]
        let expect = vec![
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(y.to_vec(), expect);
        assert!(x.upsample_nearest(0).is_err());
    }

    #[test]
    fn upsample_backward_sums_each_block() {
        let x = Tensor::param(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // mean * 16 puts gradient 1 on every output pixel
        let loss = x.upsample_nearest(2).unwrap().mean().scale(16.0);
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0; 4]);
    }

    #[test]
    fn gradients_accumulate_additively_on_reuse() {
        let x = Tensor::param(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let twice = x.add(&x).unwrap().mean();
        twice.backward().unwrap();
        let g_reuse = x.grad().unwrap();

        let x2 = Tensor::param(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let doubled = x2.scale(2.0).mean();
        doubled.backward().unwrap();
        assert_eq!(g_reuse, x2.grad().unwrap());
    }

    #[test]
    fn ops_are_deterministic() {
        let x = t(&[8], &[0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8]);
        let a = x.sigmoid().tanh().affine(2.0, 1.0).mean().item();
        let b = x.sigmoid().tanh().affine(2.0, 1.0).mean().item();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
