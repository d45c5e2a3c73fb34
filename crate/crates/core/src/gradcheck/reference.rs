//! Independent f64 re-implementation of the network forward passes.
//!
//! Written as plain nested loops with no shared code with the tensor
//! engine, this is the oracle the end-to-end gradient checks difference
//! against: evaluating the probe points in f64 removes the f32 rounding
//! floor that would otherwise swamp small gradient elements, so a
//! disagreement means a wrong backward rule rather than noise.

use alloc::vec;
use alloc::vec::Vec;

use crate::net::generator::{ConvParams, DecoderStage, EncoderStage, GeneratorParams};
use crate::net::{DiscriminatorParams, NetConfig, UpsampleMode};
use crate::tensor::Tensor;

#[derive(Clone)]
pub(crate) struct Plane {
    pub ch: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn conv2d(x: &Plane, weight: &[f64], bias: &[f64], out_ch: usize, k: usize, stride: usize, pad: usize) -> Plane {
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0f64; out_ch * oh * ow];
    for oc in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..x.ch {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                continue;
                            }
                            acc += x.data[(ic * x.h + iy as usize) * x.w + ix as usize]
                                * weight[((oc * x.ch + ic) * k + ky) * k + kx];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Plane { ch: out_ch, h: oh, w: ow, data: out }
}

fn conv_transpose2d(x: &Plane, weight: &[f64], bias: &[f64], out_ch: usize, k: usize, stride: usize, pad: usize) -> Plane {
    let oh = (x.h - 1) * stride + k - 2 * pad;
    let ow = (x.w - 1) * stride + k - 2 * pad;
    let mut out = vec![0.0f64; out_ch * oh * ow];
    for oc in 0..out_ch {
        for v in &mut out[oc * oh * ow..(oc + 1) * oh * ow] {
            *v = bias[oc];
        }
    }
    for ic in 0..x.ch {
        for iy in 0..x.h {
            for ix in 0..x.w {
                let xv = x.data[(ic * x.h + iy) * x.w + ix];
                for oc in 0..out_ch {
                    for ky in 0..k {
                        for kx in 0..k {
                            let ty = (iy * stride + ky) as isize - pad as isize;
                            let tx = (ix * stride + kx) as isize - pad as isize;
                            if ty < 0 || tx < 0 || ty >= oh as isize || tx >= ow as isize {
                                continue;
                            }
                            out[(oc * oh + ty as usize) * ow + tx as usize] +=
                                xv * weight[((ic * out_ch + oc) * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
    Plane { ch: out_ch, h: oh, w: ow, data: out }
}

pub(crate) fn instance_norm(x: &Plane, gamma: &[f64], beta: &[f64], eps: f64) -> Plane {
    let n = x.h * x.w;
    let mut out = x.clone();
    for c in 0..x.ch {
        let plane = &x.data[c * n..(c + 1) * n];
        let mean = plane.iter().sum::<f64>() / n as f64;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let istd = 1.0 / libm::sqrt(var + eps);
        for i in 0..n {
            out.data[c * n + i] = gamma[c] * (plane[i] - mean) * istd + beta[c];
        }
    }
    out
}

fn map(p: &Plane, f: impl Fn(f64) -> f64) -> Plane {
    Plane { data: p.data.iter().map(|&v| f(v)).collect(), ..p.clone() }
}

/// Piecewise-linear unit: applies the slope for each branch and folds the
/// branch choice into `sig`. Probes whose signatures differ on the two
/// sides of a central difference straddle a kink and measure no derivative
/// there. Pre-activations inside a small guard band fold a third state, so
/// units where the f32 engine could have taken the other branch also force
/// a skip instead of a bogus comparison.
fn map_kinked(p: &Plane, neg_slope: f64, sig: &mut u64) -> Plane {
    const GUARD: f64 = 1e-5;
    let data = p
        .data
        .iter()
        .map(|&v| {
            let state = if v.abs() < GUARD { 2u64 } else { (v >= 0.0) as u64 };
            *sig = sig.wrapping_mul(1099511628211).wrapping_add(state);
            if v >= 0.0 {
                v
            } else {
                neg_slope * v
            }
        })
        .collect();
    Plane { data, ..p.clone() }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-v))
}

fn concat(a: &Plane, b: &Plane) -> Plane {
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Plane { ch: a.ch + b.ch, h: a.h, w: a.w, data }
}

fn upsample2(x: &Plane) -> Plane {
    let (oh, ow) = (x.h * 2, x.w * 2);
    let mut data = vec![0.0f64; x.ch * oh * ow];
    for c in 0..x.ch {
        for oy in 0..oh {
            for ox in 0..ow {
                data[(c * oh + oy) * ow + ox] = x.data[(c * x.h + oy / 2) * x.w + ox / 2];
            }
        }
    }
    Plane { ch: x.ch, h: oh, w: ow, data }
}

fn mul_mask(feat: &Plane, mask: &Plane) -> Plane {
    let n = feat.h * feat.w;
    let mut out = feat.clone();
    for c in 0..feat.ch {
        for i in 0..n {
            out.data[c * n + i] *= mask.data[i];
        }
    }
    out
}

fn mean(p: &Plane) -> f64 {
    p.data.iter().sum::<f64>() / p.data.len() as f64
}

fn enc_stage(stage: &EncoderStage, x: &Plane, cfg: &NetConfig, sig: &mut u64) -> Plane {
    let (o, _, k, _) = stage.conv.weight.dims4().expect("conv weight");
    let y = conv2d(x, &to_f64(&stage.conv.weight), &to_f64(&stage.conv.bias), o, k, 2, 1);
    let y = instance_norm(&y, &to_f64(&stage.norm.gamma), &to_f64(&stage.norm.beta), cfg.norm_eps as f64);
    map_kinked(&y, cfg.leaky_slope as f64, sig)
}

fn seg_stage(stage: &DecoderStage, x: &Plane, cfg: &NetConfig, sig: &mut u64) -> Plane {
    let (_, o, k, _) = stage.conv.weight.dims4().expect("deconv weight");
    let y = conv_transpose2d(x, &to_f64(&stage.conv.weight), &to_f64(&stage.conv.bias), o, k, 2, 1);
    match &stage.norm {
        Some(nm) => map_kinked(
            &instance_norm(&y, &to_f64(&nm.gamma), &to_f64(&nm.beta), cfg.norm_eps as f64),
            0.0,
            sig,
        ),
        None => map(&y, sigmoid),
    }
}

fn fill_stage(stage: &DecoderStage, x: &Plane, cfg: &NetConfig, sig: &mut u64) -> Plane {
    let y = match cfg.upsample_mode {
        UpsampleMode::NnConv => {
            let (o, _, k, _) = stage.conv.weight.dims4().expect("conv weight");
            conv2d(&upsample2(x), &to_f64(&stage.conv.weight), &to_f64(&stage.conv.bias), o, k, 1, 1)
        }
        UpsampleMode::Deconv => {
            let (_, o, k, _) = stage.conv.weight.dims4().expect("deconv weight");
            conv_transpose2d(x, &to_f64(&stage.conv.weight), &to_f64(&stage.conv.bias), o, k, 2, 1)
        }
    };
    match &stage.norm {
        Some(nm) => map_kinked(
            &instance_norm(&y, &to_f64(&nm.gamma), &to_f64(&nm.beta), cfg.norm_eps as f64),
            0.0,
            sig,
        ),
        None => map(&y, libm::tanh),
    }
}

fn gate(node: &ConvParams, enc: &Plane, seg_above: Option<&Plane>) -> Plane {
    let input = match seg_above {
        Some(top) => concat(top, enc),
        None => enc.clone(),
    };
    let m = conv2d(&input, &to_f64(&node.weight), &to_f64(&node.bias), 1, 1, 1, 0);
    map(&m, sigmoid)
}

/// `mean(background) + mean(mask)` of the full-mode generator, evaluated
/// entirely in f64 from the current (possibly perturbed) f32 parameters.
/// The second value is the branch signature of every piecewise unit.
pub fn generator_loss(params: &GeneratorParams, x: &[f64]) -> (f64, u64) {
    let mut sig = 0xcbf29ce484222325u64;
    let cfg = &params.config;
    let depth = cfg.depth;
    let mut feats: Vec<Plane> = Vec::with_capacity(depth);
    let mut cur = Plane { ch: cfg.in_channels, h: cfg.image_h, w: cfg.image_w, data: x.to_vec() };
    for stage in &params.encoder {
        cur = enc_stage(stage, &cur, cfg, &mut sig);
        feats.push(cur.clone());
    }

    let seg = params.seg.as_ref().expect("full mode");
    let mut seg_outs: Vec<Option<Plane>> = vec![None; depth];
    let mut above: Option<Plane> = None;
    for i in (1..=depth).rev() {
        let input = match &above {
            None => feats[depth - 1].clone(),
            Some(top) => concat(top, &feats[i - 1]),
        };
        let out = seg_stage(&seg[i - 1], &input, cfg, &mut sig);
        above = Some(out.clone());
        seg_outs[i - 1] = Some(out);
    }
    let mask_out = seg_outs[0].clone().expect("stage 1 ran");

    let nodes = params.neglect.as_ref().expect("full mode");
    let mut gated: Vec<Plane> = Vec::with_capacity(depth);
    for i in 1..=depth {
        let seg_above = (i < depth).then(|| seg_outs[i].as_ref().expect("ran"));
        let m = gate(&nodes[i - 1], &feats[i - 1], seg_above);
        gated.push(mul_mask(&feats[i - 1], &m));
    }

    let mut above: Option<Plane> = None;
    for i in (1..=depth).rev() {
        let input = match &above {
            None => gated[depth - 1].clone(),
            Some(top) => concat(top, &gated[i - 1]),
        };
        above = Some(fill_stage(&params.fill[i - 1], &input, cfg, &mut sig));
    }
    let background = above.expect("depth >= 1");
    (mean(&background) + mean(&mask_out), sig)
}

/// Mean patch score of the discriminator in f64, with branch signature.
pub fn discriminator_loss(params: &DiscriminatorParams, x: &[f64], y: &[f64]) -> (f64, u64) {
    let mut sig = 0xcbf29ce484222325u64;
    let cfg = &params.config;
    let xp = Plane { ch: cfg.in_channels, h: cfg.image_h, w: cfg.image_w, data: x.to_vec() };
    let yp = Plane { ch: cfg.in_channels, h: cfg.image_h, w: cfg.image_w, data: y.to_vec() };
    let mut cur = concat(&xp, &yp);
    for stage in &params.stages {
        cur = enc_stage(stage, &cur, cfg, &mut sig);
    }
    let scores = conv2d(&cur, &to_f64(&params.head.weight), &to_f64(&params.head.bias), 1, 1, 1, 0);
    (mean(&map(&scores, sigmoid)), sig)
}
