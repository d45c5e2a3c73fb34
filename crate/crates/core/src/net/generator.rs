//! Dual-branch encoder-decoder generator.
//!
//! A shared encoder feeds two decoders: one predicts a soft foreground mask,
//! the other synthesizes the background. At every scale a neglect gate (1x1
//! conv + sigmoid over the mask decoder's context) modulates the encoder
//! skip features before they reach the infill decoder, telling it which
//! regions to resynthesize rather than copy.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{NetConfig, UpsampleMode};
use crate::error::{arg_err, Result};
use crate::rng::seed_rng;
use crate::tensor::conv::{conv2d, conv_transpose2d};
use crate::tensor::norm::instance_norm;
use crate::tensor::{randn_vec, Tensor};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f32 = 0.02;

#[derive(Clone)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone)]
pub struct NormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Clone)]
pub struct EncoderStage {
    pub conv: ConvParams,
    pub norm: NormParams,
}

#[derive(Clone)]
pub struct DecoderStage {
    pub conv: ConvParams,
    /// Absent on the output head (stage 1), which applies no normalization.
    pub norm: Option<NormParams>,
}

/// All learnable tensors of the generator. The inventory is a pure function
/// of the config: baseline mode carries no mask decoder and no gates.
pub struct GeneratorParams {
    pub config: NetConfig,
    pub encoder: Vec<EncoderStage>,
    pub seg: Option<Vec<DecoderStage>>,
    pub fill: Vec<DecoderStage>,
    pub neglect: Option<Vec<ConvParams>>,
}

/// One forward pass worth of predictions.
pub struct GeneratorOutput {
    /// Foreground mask in [0, 1], one channel. `None` in baseline mode.
    pub mask: Option<Tensor>,
    /// Recovered background in [-1, 1], three channels.
    pub background: Tensor,
    /// Per-scale gate masks, index 0 at scale H/2, strictly inside (0, 1).
    /// Empty in baseline mode.
    pub neglect_masks: Vec<Tensor>,
}

fn conv_params<R: rand::Rng>(rng: &mut R, shape: &[usize], out_ch: usize) -> ConvParams {
    let n: usize = shape.iter().product();
    ConvParams {
        weight: Tensor::param(shape, randn_vec(rng, n, INIT_STD)).expect("static shape"),
        bias: Tensor::param(&[out_ch], vec![0.0; out_ch]).expect("static shape"),
    }
}

fn norm_params(ch: usize) -> NormParams {
    NormParams {
        gamma: Tensor::param(&[ch], vec![1.0; ch]).expect("static shape"),
        beta: Tensor::param(&[ch], vec![0.0; ch]).expect("static shape"),
    }
}

/// Channels entering decoder stage `i`: the deepest stage sees the deepest
/// encoder feature alone, every other stage a concat of the stage above and
/// the equal-scale skip.
fn decoder_in_channels(cfg: &NetConfig, i: usize) -> usize {
    if i == cfg.depth {
        cfg.width(cfg.depth)
    } else {
        2 * cfg.width(i)
    }
}

/// Channels leaving decoder stage `i` (head channel count supplied by caller).
fn decoder_out_channels(cfg: &NetConfig, i: usize, head_ch: usize) -> usize {
    if i == 1 {
        head_ch
    } else {
        cfg.width(i - 1)
    }
}

fn build_decoder<R: rand::Rng>(
    rng: &mut R,
    cfg: &NetConfig,
    head_ch: usize,
    mode: UpsampleMode,
) -> Vec<DecoderStage> {
    (1..=cfg.depth)
        .map(|i| {
            let in_ch = decoder_in_channels(cfg, i);
            let out_ch = decoder_out_channels(cfg, i, head_ch);
            let conv = match mode {
                UpsampleMode::NnConv => conv_params(rng, &[out_ch, in_ch, 3, 3], out_ch),
                UpsampleMode::Deconv => conv_params(rng, &[in_ch, out_ch, 4, 4], out_ch),
            };
            DecoderStage {
                conv,
                norm: (i > 1).then(|| norm_params(out_ch)),
            }
        })
        .collect()
}

/// Fresh generator parameters: weights Gaussian(0, 0.02), biases 0, norm
/// gamma 1 / beta 0, all drawn in a fixed order so a seed pins every bit.
pub fn build_generator(config: &NetConfig, rng_seed: u64) -> Result<GeneratorParams> {
    config.validate()?;
    let mut rng = seed_rng(rng_seed);
    let cfg = config.clone();

    let encoder: Vec<EncoderStage> = (1..=cfg.depth)
        .map(|i| {
            let in_ch = if i == 1 { cfg.in_channels } else { cfg.width(i - 1) };
            let out_ch = cfg.width(i);
            EncoderStage {
                conv: conv_params(&mut rng, &[out_ch, in_ch, 4, 4], out_ch),
                norm: norm_params(out_ch),
            }
        })
        .collect();

    let seg = cfg.use_neglect_branch.then(|| {
        (1..=cfg.depth)
            .map(|i| {
                let in_ch = decoder_in_channels(&cfg, i);
                let out_ch = decoder_out_channels(&cfg, i, 1);
                DecoderStage {
                    conv: conv_params(&mut rng, &[in_ch, out_ch, 4, 4], out_ch),
                    norm: (i > 1).then(|| norm_params(out_ch)),
                }
            })
            .collect::<Vec<_>>()
    });

    let fill = build_decoder(&mut rng, &cfg, 3, cfg.upsample_mode);

    let neglect = cfg.use_neglect_branch.then(|| {
        (1..=cfg.depth)
            .map(|i| conv_params(&mut rng, &[1, decoder_in_channels(&cfg, i), 1, 1], 1))
            .collect::<Vec<_>>()
    });

    Ok(GeneratorParams { config: cfg, encoder, seg, fill, neglect })
}

impl GeneratorParams {
    /// Canonical (name, tensor) inventory; the order is the serialization
    /// and optimizer-state order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (idx, st) in self.encoder.iter().enumerate() {
            let i = idx + 1;
            out.push((format!("gen.enc.{i}.conv.weight"), st.conv.weight.clone()));
            out.push((format!("gen.enc.{i}.conv.bias"), st.conv.bias.clone()));
            out.push((format!("gen.enc.{i}.norm.gamma"), st.norm.gamma.clone()));
            out.push((format!("gen.enc.{i}.norm.beta"), st.norm.beta.clone()));
        }
        if let Some(seg) = &self.seg {
            for (idx, st) in seg.iter().enumerate() {
                let i = idx + 1;
                out.push((format!("gen.seg.{i}.deconv.weight"), st.conv.weight.clone()));
                out.push((format!("gen.seg.{i}.deconv.bias"), st.conv.bias.clone()));
                if let Some(nm) = &st.norm {
                    out.push((format!("gen.seg.{i}.norm.gamma"), nm.gamma.clone()));
                    out.push((format!("gen.seg.{i}.norm.beta"), nm.beta.clone()));
                }
            }
        }
        for (idx, st) in self.fill.iter().enumerate() {
            let i = idx + 1;
            out.push((format!("gen.fill.{i}.conv.weight"), st.conv.weight.clone()));
            out.push((format!("gen.fill.{i}.conv.bias"), st.conv.bias.clone()));
            if let Some(nm) = &st.norm {
                out.push((format!("gen.fill.{i}.norm.gamma"), nm.gamma.clone()));
                out.push((format!("gen.fill.{i}.norm.beta"), nm.beta.clone()));
            }
        }
        if let Some(neglect) = &self.neglect {
            for (idx, node) in neglect.iter().enumerate() {
                let i = idx + 1;
                out.push((format!("gen.neglect.{i}.conv.weight"), node.weight.clone()));
                out.push((format!("gen.neglect.{i}.conv.bias"), node.bias.clone()));
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// View of the shared encoder + infill weights as a baseline-mode
    /// generator. Tensors are shared, not copied.
    pub fn as_baseline(&self) -> GeneratorParams {
        GeneratorParams {
            config: NetConfig { use_neglect_branch: false, ..self.config.clone() },
            encoder: self.encoder.clone(),
            seg: None,
            fill: self.fill.clone(),
            neglect: None,
        }
    }
}

fn enc_stage(stage: &EncoderStage, x: &Tensor, cfg: &NetConfig) -> Result<Tensor> {
    let y = conv2d(x, &stage.conv.weight, &stage.conv.bias, 2, 1)?;
    let y = instance_norm(&y, &stage.norm.gamma, &stage.norm.beta, cfg.norm_eps)?;
    Ok(y.leaky_relu(cfg.leaky_slope))
}

/// Multi-scale features `e_1 .. e_depth`; `e_i` lives at scale `H/2^i` with
/// `width(i)` channels.
pub fn encoder_forward(params: &GeneratorParams, x: &Tensor) -> Result<Vec<Tensor>> {
    let mut feats = Vec::with_capacity(params.encoder.len());
    let mut cur = x.clone();
    for stage in &params.encoder {
        cur = enc_stage(stage, &cur, &params.config)?;
        feats.push(cur.clone());
    }
    Ok(feats)
}

fn seg_stage(stage: &DecoderStage, x: &Tensor, cfg: &NetConfig) -> Result<Tensor> {
    let y = conv_transpose2d(x, &stage.conv.weight, &stage.conv.bias, 2, 1)?;
    match &stage.norm {
        Some(nm) => Ok(instance_norm(&y, &nm.gamma, &nm.beta, cfg.norm_eps)?.relu()),
        None => Ok(y.sigmoid()),
    }
}

/// Mask decoder pass. Returns the mask plus every stage output (index 0 =
/// stage 1, i.e. the mask itself); stage `i+1`'s output is the context the
/// level-`i` neglect gate re-reads.
pub fn seg_decoder_forward(
    params: &GeneratorParams,
    encoder_feats: &[Tensor],
) -> Result<(Tensor, Vec<Tensor>)> {
    let seg = params
        .seg
        .as_ref()
        .ok_or_else(|| arg_err("seg_decoder_forward: baseline mode has no mask decoder"))?;
    let depth = params.config.depth;
    let mut outs: Vec<Option<Tensor>> = vec![None; depth];
    let mut above: Option<Tensor> = None;
    for i in (1..=depth).rev() {
        let input = match &above {
            None => encoder_feats[depth - 1].clone(),
            Some(top) => top.concat_channels(&encoder_feats[i - 1])?,
        };
        let out = seg_stage(&seg[i - 1], &input, &params.config)?;
        above = Some(out.clone());
        outs[i - 1] = Some(out);
    }
    let outs: Vec<Tensor> = outs.into_iter().map(|o| o.expect("all stages ran")).collect();
    Ok((outs[0].clone(), outs))
}

/// Gate at one scale: a 1x1 convolution over the same context the mask
/// decoder stage sees, squashed to (0,1), multiplied onto the skip feature.
pub fn neglect_gate(
    node: &ConvParams,
    enc_feat: &Tensor,
    seg_above: Option<&Tensor>,
) -> Result<(Tensor, Tensor)> {
    let input = match seg_above {
        Some(top) => top.concat_channels(enc_feat)?,
        None => enc_feat.clone(),
    };
    let mask = conv2d(&input, &node.weight, &node.bias, 1, 0)?.sigmoid();
    let gated = mask.mul(enc_feat)?;
    Ok((mask, gated))
}

fn fill_stage(stage: &DecoderStage, x: &Tensor, cfg: &NetConfig) -> Result<Tensor> {
    let y = match cfg.upsample_mode {
        UpsampleMode::NnConv => {
            let up = x.upsample_nearest(2)?;
            conv2d(&up, &stage.conv.weight, &stage.conv.bias, 1, 1)?
        }
        UpsampleMode::Deconv => {
            conv_transpose2d(x, &stage.conv.weight, &stage.conv.bias, 2, 1)?
        }
    };
    match &stage.norm {
        Some(nm) => Ok(instance_norm(&y, &nm.gamma, &nm.beta, cfg.norm_eps)?.relu()),
        None => Ok(y.tanh()),
    }
}

/// Infill decoder pass. With the neglect branch active, every skip feature
/// arrives gated; in baseline mode the raw encoder features substitute.
/// `force_mask_one` short-circuits every gate to exactly 1 (diagnostics).
pub fn fill_decoder_forward(
    params: &GeneratorParams,
    encoder_feats: &[Tensor],
    seg_outs: Option<&[Tensor]>,
    force_mask_one: bool,
) -> Result<(Tensor, Vec<Tensor>)> {
    let depth = params.config.depth;
    let gated_feats: Vec<Tensor>;
    let mut masks: Vec<Tensor> = Vec::new();
    match (&params.neglect, seg_outs) {
        (Some(nodes), Some(seg_outs)) => {
            let mut gated = Vec::with_capacity(depth);
            let mut mask_by_stage: Vec<Option<Tensor>> = vec![None; depth];
            for i in 1..=depth {
                let e_i = &encoder_feats[i - 1];
                if force_mask_one {
                    let (b, _, h, w) = e_i.dims4()?;
                    mask_by_stage[i - 1] = Some(Tensor::ones(&[b, 1, h, w]));
                    gated.push(e_i.clone());
                } else {
                    let above = (i < depth).then(|| &seg_outs[i]);
                    let (mask, g) = neglect_gate(&nodes[i - 1], e_i, above)?;
                    mask_by_stage[i - 1] = Some(mask);
                    gated.push(g);
                }
            }
            masks = mask_by_stage.into_iter().map(|m| m.expect("all gates ran")).collect();
            gated_feats = gated;
        }
        (None, _) => {
            gated_feats = encoder_feats.to_vec();
        }
        (Some(_), None) => {
            return Err(arg_err(
                "fill_decoder_forward: neglect gates need the mask decoder outputs",
            ));
        }
    }

    let mut above: Option<Tensor> = None;
    for i in (1..=depth).rev() {
        let input = match &above {
            None => gated_feats[depth - 1].clone(),
            Some(top) => top.concat_channels(&gated_feats[i - 1])?,
        };
        above = Some(fill_stage(&params.fill[i - 1], &input, &params.config)?);
    }
    Ok((above.expect("depth >= 1"), masks))
}

/// Full forward pass: mask and background in one shot.
pub fn generator_forward(params: &GeneratorParams, x: &Tensor) -> Result<GeneratorOutput> {
    generator_forward_opts(params, x, false)
}

/// Forward with the gates optionally clamped to 1; with shared weights the
/// clamped full model reproduces baseline mode exactly.
pub fn generator_forward_opts(
    params: &GeneratorParams,
    x: &Tensor,
    force_neglect_one: bool,
) -> Result<GeneratorOutput> {
    let feats = encoder_forward(params, x)?;
    if params.config.use_neglect_branch {
        let (mask, seg_outs) = seg_decoder_forward(params, &feats)?;
        let (background, neglect_masks) =
            fill_decoder_forward(params, &feats, Some(&seg_outs), force_neglect_one)?;
        Ok(GeneratorOutput { mask: Some(mask), background, neglect_masks })
    } else {
        let (background, _) = fill_decoder_forward(params, &feats, None, false)?;
        Ok(GeneratorOutput { mask: None, background, neglect_masks: Vec::new() })
    }
}
