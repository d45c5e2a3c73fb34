//! Conditional patch discriminator.
//!
//! Judges (input, background) pairs: the pair is concatenated channelwise,
//! pushed through encoder-style stages, and a 1x1 convolution + sigmoid
//! yields a grid of per-patch realism scores whose average is the verdict.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::generator::{ConvParams, EncoderStage, INIT_STD};
use super::NetConfig;
use crate::error::{dim_err, Result};
use crate::rng::seed_rng;
use crate::tensor::conv::conv2d;
use crate::tensor::norm::instance_norm;
use crate::tensor::{randn_vec, Tensor};

pub struct DiscriminatorParams {
    pub config: NetConfig,
    pub stages: Vec<EncoderStage>,
    pub head: ConvParams,
}

/// Fresh discriminator parameters; same stage recipe and width schedule as
/// the generator encoder, over 2x`in_channels` inputs.
pub fn build_discriminator(config: &NetConfig, rng_seed: u64) -> Result<DiscriminatorParams> {
    config.validate()?;
    let mut rng = seed_rng(rng_seed);
    let cfg = config.clone();
    let stages: Vec<EncoderStage> = (1..=cfg.disc_depth)
        .map(|i| {
            let in_ch = if i == 1 { 2 * cfg.in_channels } else { cfg.width(i - 1) };
            let out_ch = cfg.width(i);
            let w_shape = [out_ch, in_ch, 4, 4];
            let n: usize = w_shape.iter().product();
            EncoderStage {
                conv: ConvParams {
                    weight: Tensor::param(&w_shape, randn_vec(&mut rng, n, INIT_STD))
                        .expect("static shape"),
                    bias: Tensor::param(&[out_ch], alloc::vec![0.0; out_ch]).expect("static shape"),
                },
                norm: super::generator::NormParams {
                    gamma: Tensor::param(&[out_ch], alloc::vec![1.0; out_ch]).expect("static shape"),
                    beta: Tensor::param(&[out_ch], alloc::vec![0.0; out_ch]).expect("static shape"),
                },
            }
        })
        .collect();
    let top = cfg.width(cfg.disc_depth);
    let head = ConvParams {
        weight: Tensor::param(&[1, top, 1, 1], randn_vec(&mut rng, top, INIT_STD))
            .expect("static shape"),
        bias: Tensor::param(&[1], alloc::vec![0.0]).expect("static shape"),
    };
    Ok(DiscriminatorParams { config: cfg, stages, head })
}

impl DiscriminatorParams {
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (idx, st) in self.stages.iter().enumerate() {
            let i = idx + 1;
            out.push((format!("disc.enc.{i}.conv.weight"), st.conv.weight.clone()));
            out.push((format!("disc.enc.{i}.conv.bias"), st.conv.bias.clone()));
            out.push((format!("disc.enc.{i}.norm.gamma"), st.norm.gamma.clone()));
            out.push((format!("disc.enc.{i}.norm.beta"), st.norm.beta.clone()));
        }
        out.push(("disc.head.conv.weight".into(), self.head.weight.clone()));
        out.push(("disc.head.conv.bias".into(), self.head.bias.clone()));
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }
}

/// Per-patch scores in (0, 1), shape `[B, 1, H/2^d, W/2^d]`.
pub fn discriminator_patches(
    params: &DiscriminatorParams,
    x: &Tensor,
    y: &Tensor,
) -> Result<Tensor> {
    if x.shape() != y.shape() {
        return Err(dim_err("discriminator: input and background shapes differ"));
    }
    let (_, _, h, w) = x.dims4()?;
    let div = 1usize << params.config.disc_depth;
    if h % div != 0 || w % div != 0 {
        return Err(crate::Error::Config(format!(
            "discriminator input {h}x{w} not divisible by 2^disc_depth = {div}"
        )));
    }
    let mut cur = x.concat_channels(y)?;
    for st in &params.stages {
        let z = conv2d(&cur, &st.conv.weight, &st.conv.bias, 2, 1)?;
        let z = instance_norm(&z, &st.norm.gamma, &st.norm.beta, params.config.norm_eps)?;
        cur = z.leaky_relu(params.config.leaky_slope);
    }
    Ok(conv2d(&cur, &params.head.weight, &params.head.bias, 1, 0)?.sigmoid())
}

/// Per-sample realism score in (0, 1): the mean over the patch grid.
pub fn discriminator_forward(
    params: &DiscriminatorParams,
    x: &Tensor,
    y: &Tensor,
) -> Result<Tensor> {
    discriminator_patches(params, x, y)?.mean_per_item()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(image: usize, disc_depth: usize) -> NetConfig {
        NetConfig {
            depth: disc_depth,
            base_width: 4,
            max_width: 16,
            image_h: image,
            image_w: image,
            disc_depth,
            ..NetConfig::default()
        }
    }

    fn rand_pair(c: &NetConfig, seed: u64) -> (Tensor, Tensor) {
        let mut rng = seed_rng(seed);
        let n = 3 * c.image_h * c.image_w;
        let x = Tensor::from_vec(&[1, 3, c.image_h, c.image_w], randn_vec(&mut rng, n, 0.5)).unwrap();
        let y = Tensor::from_vec(&[1, 3, c.image_h, c.image_w], randn_vec(&mut rng, n, 0.5)).unwrap();
        (x, y)
    }

    #[test]
    fn five_stages_on_128_give_a_4x4_grid() {
        let c = cfg(128, 5);
        let params = build_discriminator(&c, 2).unwrap();
        let (x, y) = rand_pair(&c, 3);
        let patches = discriminator_patches(&params, &x, &y).unwrap();
        assert_eq!(patches.shape(), &[1, 1, 4, 4]);
        let score = discriminator_forward(&params, &x, &y).unwrap();
        assert_eq!(score.shape(), &[1]);
        let mean: f32 = patches.to_vec().iter().sum::<f32>() / 16.0;
        assert!((score.item() - mean).abs() < 1e-6);
    }

    #[test]
    fn single_patch_grid_score_is_that_patch() {
        let c = cfg(32, 5);
        let params = build_discriminator(&c, 4).unwrap();
        let (x, y) = rand_pair(&c, 5);
        let patches = discriminator_patches(&params, &x, &y).unwrap();
        assert_eq!(patches.shape(), &[1, 1, 1, 1]);
        let score = discriminator_forward(&params, &x, &y).unwrap();
        assert_eq!(score.item(), patches.item());
    }

    #[test]
    fn zeroed_head_scores_exactly_half() {
        let c = cfg(32, 3);
        let params = build_discriminator(&c, 6).unwrap();
        params
            .head
            .weight
            .set_data(&alloc::vec![0.0; params.head.weight.numel()])
            .unwrap();
        let (x, y) = rand_pair(&c, 7);
        let score = discriminator_forward(&params, &x, &y).unwrap();
        assert_eq!(score.item(), 0.5);
    }

    #[test]
    fn scores_stay_strictly_inside_unit_interval() {
        let c = cfg(32, 3);
        let params = build_discriminator(&c, 8).unwrap();
        for seed in 0..5 {
            let (x, y) = rand_pair(&c, 100 + seed);
            let s = discriminator_forward(&params, &x, &y).unwrap().item();
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn indivisible_input_is_a_config_error() {
        let c = cfg(32, 3);
        let params = build_discriminator(&c, 9).unwrap();
        let x = Tensor::zeros(&[1, 3, 20, 20]);
        let y = Tensor::zeros(&[1, 3, 20, 20]);
        assert!(matches!(
            discriminator_patches(&params, &x, &y),
            Err(crate::Error::Config(_))
        ));
    }
}
