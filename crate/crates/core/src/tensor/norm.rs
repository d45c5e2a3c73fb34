//! Instance normalization: per-sample, per-channel over spatial dims.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{BackwardOp, Tensor};
use crate::error::{dim_err, Result};
use crate::math;

struct InstanceNormOp {
    parents: [Tensor; 3],
    // saved from the forward pass; xhat is the normalized pre-affine value
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

impl BackwardOp for InstanceNormOp {
    fn parents(&self) -> &[Tensor] {
        &self.parents
    }
    fn backward(&self, _out: &Tensor, grad_out: &[f32]) -> Result<()> {
        let (x, gamma, beta) = (&self.parents[0], &self.parents[1], &self.parents[2]);
        let (batch, ch, h, w) = x.dims4()?;
        let n = h * w;
        let gamma_data = gamma.data();

        if beta.requires_grad() || gamma.requires_grad() {
            let mut gbeta = vec![0.0f32; ch];
            let mut ggamma = vec![0.0f32; ch];
            for bi in 0..batch {
                for c in 0..ch {
                    let base = (bi * ch + c) * n;
                    for i in 0..n {
                        gbeta[c] += grad_out[base + i];
                        ggamma[c] += grad_out[base + i] * self.xhat[base + i];
                    }
                }
            }
            if beta.requires_grad() {
                beta.accumulate_grad(&gbeta);
            }
            if gamma.requires_grad() {
                gamma.accumulate_grad(&ggamma);
            }
        }

        if x.requires_grad() {
            // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            let mut gx = vec![0.0f32; x.numel()];
            for bi in 0..batch {
                for c in 0..ch {
                    let base = (bi * ch + c) * n;
                    let gc = gamma_data[c];
                    let istd = self.inv_std[bi * ch + c];
                    let mut mean_dxh = 0.0f32;
                    let mut mean_dxh_xh = 0.0f32;
                    for i in 0..n {
                        let dxh = grad_out[base + i] * gc;
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * self.xhat[base + i];
                    }
                    mean_dxh /= n as f32;
                    mean_dxh_xh /= n as f32;
                    for i in 0..n {
                        let dxh = grad_out[base + i] * gc;
                        gx[base + i] =
                            istd * (dxh - mean_dxh - self.xhat[base + i] * mean_dxh_xh);
                    }
                }
            }
            x.accumulate_grad(&gx);
        }
        Ok(())
    }
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta`, statistics taken over the
/// spatial dims of each (sample, channel) plane independently.
pub fn instance_norm(input: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let (batch, ch, h, w) = input.dims4()?;
    if gamma.shape() != [ch] || beta.shape() != [ch] {
        return Err(dim_err("instance_norm: gamma/beta must have one value per channel"));
    }
    let n = h * w;
    let mut out = vec![0.0f32; input.numel()];
    let mut xhat = vec![0.0f32; input.numel()];
    let mut inv_std = vec![0.0f32; batch * ch];
    {
        let x = input.data();
        let g = gamma.data();
        let b = beta.data();
        for bi in 0..batch {
            for c in 0..ch {
                let base = (bi * ch + c) * n;
                let plane = &x[base..base + n];
                let mean = plane.iter().sum::<f32>() / n as f32;
                let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
                let istd = 1.0 / math::sqrt(var + eps);
                inv_std[bi * ch + c] = istd;
                for i in 0..n {
                    let xh = (plane[i] - mean) * istd;
                    xhat[base + i] = xh;
                    out[base + i] = g[c] * xh + b[c];
                }
            }
        }
    }
    Ok(Tensor::from_op(
        input.shape(),
        out,
        Box::new(InstanceNormOp {
            parents: [input.clone(), gamma.clone(), beta.clone()],
            xhat,
            inv_std,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_normalizes_to_beta() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![3.0; 4]).unwrap();
        let y = instance_norm(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), 1e-5).unwrap();
        assert_eq!(y.to_vec(), vec![0.0; 4]);
    }

    #[test]
    fn unit_gamma_zero_beta_standardizes() {
        // hand oracle: mean 2.5, var 1.25, xhat = (x - 2.5)/sqrt(1.25)
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = instance_norm(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), 0.0).unwrap();
        let s = 1.25f32.sqrt();
        let expect = [-1.5 / s, -0.5 / s, 0.5 / s, 1.5 / s];
        for (a, e) in y.to_vec().iter().zip(expect) {
            assert!((a - e).abs() < 1e-6);
        }
        let out = y.to_vec();
        let mean: f32 = out.iter().sum::<f32>() / 4.0;
        let var: f32 = out.iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_gamma_forces_beta_everywhere() {
        let x = Tensor::from_vec(&[1, 2, 1, 2], vec![1.0, -4.0, 9.0, 2.0]).unwrap();
        let y = instance_norm(
            &x,
            &Tensor::zeros(&[2]),
            &Tensor::full(&[2], 5.0),
            1e-5,
        )
        .unwrap();
        assert_eq!(y.to_vec(), vec![5.0; 4]);
    }

    #[test]
    fn gamma_beta_shape_is_checked() {
        let x = Tensor::zeros(&[1, 2, 2, 2]);
        assert!(instance_norm(&x, &Tensor::ones(&[3]), &Tensor::zeros(&[2]), 1e-5).is_err());
    }
}
