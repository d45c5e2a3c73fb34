//! Image quality metrics: L1 percentage, PSNR and SSIM, plus mask IoU.
//!
//! Metrics are computed on [0, 1]-rescaled images (value_range 1) so the
//! numbers are comparable across sources.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, dim_err, Result};
use crate::math;
use crate::net::{generator_forward, GeneratorParams};
use crate::synth::Sample;
use crate::tensor::Tensor;

/// PSNR reported when the MSE is exactly zero.
pub const PSNR_CAP_DB: f32 = 99.0;
/// SSIM stabilization constants (K1, K2) on unit dynamic range.
pub const SSIM_K1: f32 = 0.01;
pub const SSIM_K2: f32 = 0.03;
/// SSIM window: 11x11 Gaussian with sigma 1.5.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f32 = 1.5;

/// Aggregate evaluation of one split.
#[derive(Clone, Copy, Debug)]
pub struct EvalResult {
    pub l1_pct: f32,
    pub psnr_db: f32,
    pub ssim: f32,
    /// IoU between predicted and ground-truth masks thresholded at 0.5;
    /// absent for baseline-mode generators.
    pub mask_iou: Option<f32>,
    pub n_samples: usize,
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(alloc::format!(
            "metric inputs differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean absolute difference as a percentage of the value range.
pub fn l1_pct(a: &Tensor, b: &Tensor, value_range: f32) -> Result<f32> {
    same_shape(a, b)?;
    if !(value_range > 0.0) {
        return Err(arg_err("l1_pct: value range must be positive"));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok((sum / a.numel() as f64 / value_range as f64 * 100.0) as f32)
}

/// `10 * log10(max_val^2 / MSE)` in dB; exactly-zero MSE reports the cap.
pub fn psnr(a: &Tensor, b: &Tensor, max_val: f32) -> Result<f32> {
    same_shape(a, b)?;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.numel() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * math::log10((max_val as f64 * max_val as f64 / mse) as f32))
}

fn gaussian_window() -> Vec<f32> {
    let half = (SSIM_WINDOW / 2) as i32;
    let mut w1 = Vec::with_capacity(SSIM_WINDOW);
    for i in -half..=half {
        w1.push(math::exp(-(i * i) as f32 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)));
    }
    let norm: f32 = w1.iter().sum();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for &wy in &w1 {
        for &wx in &w1 {
            w.push(wy * wx / (norm * norm));
        }
    }
    w
}

/// Mean over channels, yielding one HxW grayscale plane.
fn to_gray(t: &Tensor) -> Result<(Vec<f32>, usize, usize)> {
    let shape = t.shape().to_vec();
    let (ch, h, w) = match shape.as_slice() {
        [c, h, w] => (*c, *h, *w),
        [1, c, h, w] => (*c, *h, *w),
        [h, w] => (1, *h, *w),
        _ => return Err(dim_err("ssim expects CxHxW, 1xCxHxW or HxW inputs")),
    };
    let data = t.data();
    let mut gray = vec![0.0f32; h * w];
    for c in 0..ch {
        for i in 0..h * w {
            gray[i] += data[c * h * w + i] / ch as f32;
        }
    }
    Ok((gray, h, w))
}

/// Mean local structural similarity over valid 11x11 Gaussian windows.
/// Inputs are grayscale-averaged; images must be at least the window size.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f32> {
    same_shape(a, b)?;
    let (ga, h, w) = to_gray(a)?;
    let (gb, _, _) = to_gray(b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(arg_err(alloc::format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for oy in 0..=h - SSIM_WINDOW {
        for ox in 0..=w - SSIM_WINDOW {
            let mut mu_a = 0.0f32;
            let mut mu_b = 0.0f32;
            let mut aa = 0.0f32;
            let mut bb = 0.0f32;
            let mut ab = 0.0f32;
            let mut k = 0usize;
            for wy in 0..SSIM_WINDOW {
                let row = (oy + wy) * w + ox;
                for wx in 0..SSIM_WINDOW {
                    let va = ga[row + wx];
                    let vb = gb[row + wx];
                    let wt = win[k];
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                    k += 1;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += (num / den) as f64;
            count += 1;
        }
    }
    Ok((acc / count as f64) as f32)
}

/// Intersection over union of both masks thresholded at 0.5. Two empty
/// masks count as a perfect match.
pub fn mask_iou(pred: &Tensor, truth: &Tensor, threshold: f32) -> Result<f32> {
    same_shape(pred, truth)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &t) in pred.data().iter().zip(truth.data().iter()) {
        let p = p >= threshold;
        let t = t >= threshold;
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f32 / union as f32)
}

/// Map a [-1, 1] image tensor onto [0, 1] for metric evaluation.
pub fn to_unit_range(t: &Tensor) -> Tensor {
    let data: Vec<f32> = t.data().iter().map(|&v| (v + 1.0) * 0.5).collect();
    Tensor::from_vec(t.shape(), data).expect("same shape")
}

/// Run the generator over a split and average background metrics between
/// prediction and ground truth; mask IoU rides along when available.
pub fn evaluate(params: &GeneratorParams, split: &[Sample]) -> Result<EvalResult> {
    if split.is_empty() {
        return Err(arg_err("evaluate: empty split"));
    }
    let mut l1_sum = 0.0f64;
    let mut psnr_sum = 0.0f64;
    let mut ssim_sum = 0.0f64;
    let mut iou_sum = 0.0f64;
    let mut have_iou = true;
    for sample in split {
        let shape = sample.composite.shape().to_vec();
        let mut batched = vec![1usize];
        batched.extend_from_slice(&shape);
        let x = Tensor::from_vec(&batched, sample.composite.to_vec())?;
        let out = generator_forward(params, &x)?;
        let pred = to_unit_range(&out.background);
        let mut truth_shape = vec![1usize];
        truth_shape.extend_from_slice(sample.background.shape());
        let truth = to_unit_range(&Tensor::from_vec(&truth_shape, sample.background.to_vec())?);
        l1_sum += l1_pct(&pred, &truth, 1.0)? as f64;
        psnr_sum += psnr(&pred, &truth, 1.0)? as f64;
        ssim_sum += ssim(&pred, &truth)? as f64;
        match &out.mask {
            Some(mask) => {
                let mut mshape = vec![1usize];
                mshape.extend_from_slice(sample.mask.shape());
                let truth_mask = Tensor::from_vec(&mshape, sample.mask.to_vec())?;
                iou_sum += mask_iou(mask, &truth_mask, 0.5)? as f64;
            }
            None => have_iou = false,
        }
    }
    let n = split.len() as f64;
    Ok(EvalResult {
        l1_pct: (l1_sum / n) as f32,
        psnr_db: (psnr_sum / n) as f32,
        ssim: (ssim_sum / n) as f32,
        mask_iou: have_iou.then_some((iou_sum / n) as f32),
        n_samples: split.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_rng;
    use crate::tensor::randn_vec;

    #[test]
    fn identical_images_score_perfectly() {
        let a = Tensor::from_vec(&[3, 16, 16], randn_vec(&mut seed_rng(1), 768, 0.3)).unwrap();
        assert_eq!(l1_pct(&a, &a, 1.0).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_offset_is_one_percent_of_range_two() {
        let a = Tensor::from_vec(&[2, 4], vec![0.1; 8]).unwrap();
        let b = Tensor::from_vec(&[2, 4], vec![0.12; 8]).unwrap();
        let pct = l1_pct(&a, &b, 2.0).unwrap();
        assert!((pct - 1.0).abs() < 1e-5, "{pct}");
    }

    #[test]
    fn l1_matches_a_naive_loop() {
        let mut rng = seed_rng(2);
        let a = Tensor::from_vec(&[5, 7], randn_vec(&mut rng, 35, 1.0)).unwrap();
        let b = Tensor::from_vec(&[5, 7], randn_vec(&mut rng, 35, 1.0)).unwrap();
        let mut acc = 0.0f64;
        for (x, y) in a.to_vec().iter().zip(b.to_vec()) {
            acc += (x - y).abs() as f64;
        }
        let oracle = (acc / 35.0 * 100.0) as f32;
        assert!((l1_pct(&a, &b, 1.0).unwrap() - oracle).abs() < 1e-6 * oracle.max(1.0));
        assert!(l1_pct(&a, &Tensor::zeros(&[3, 3]), 1.0).is_err());
    }

    #[test]
    fn psnr_follows_the_log_law() {
        // MSE 0.01 at range 1 -> 20 dB
        let n = 100;
        let a = Tensor::zeros(&[n]);
        let b = Tensor::full(&[n], 0.1);
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-4, "{p}");
        // halving the MSE adds 10 log10(2) dB
        let mut half = vec![0.1f32; n / 2];
        half.extend(vec![0.0f32; n / 2]);
        let c = Tensor::from_vec(&[n], half).unwrap();
        let p2 = psnr(&a, &c, 1.0).unwrap();
        assert!((p2 - p - 10.0 * 2.0f32.log10()).abs() < 1e-3, "{p2} vs {p}");
    }

    #[test]
    fn luminance_shift_drops_ssim_below_one() {
        let a = Tensor::full(&[16, 16], 0.2);
        let b = Tensor::full(&[16, 16], 0.8);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 1.0, "{s}");
        assert!(s > 0.0);
    }

    #[test]
    fn ssim_requires_the_window_to_fit() {
        let a = Tensor::zeros(&[8, 8]);
        assert!(ssim(&a, &a).is_err());
    }

    /// Plain-loop re-implementation of the SSIM definition (independent of
    /// the production code path).
    fn ssim_oracle(a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
        let half = 5i32;
        let mut win = Vec::new();
        for y in -half..=half {
            for x in -half..=half {
                win.push((-((y * y + x * x) as f64) / (2.0 * 1.5 * 1.5)).exp());
            }
        }
        let norm: f64 = win.iter().sum();
        for v in &mut win {
            *v /= norm;
        }
        let (c1, c2) = (0.01f64 * 0.01, 0.03f64 * 0.03);
        let mut acc = 0.0;
        let mut count = 0;
        for oy in 0..=h - 11 {
            for ox in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
                for wy in 0..11 {
                    for wx in 0..11 {
                        let va = a[(oy + wy) * w + ox + wx] as f64;
                        let vb = b[(oy + wy) * w + ox + wx] as f64;
                        let wt = win[wy * 11 + wx];
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cab) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cab + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn ssim_agrees_with_an_independent_implementation() {
        let mut rng = seed_rng(3);
        let a_data: Vec<f32> = randn_vec(&mut rng, 18 * 14, 0.2).iter().map(|v| 0.5 + v).collect();
        let b_data: Vec<f32> = a_data
            .iter()
            .zip(randn_vec(&mut rng, 18 * 14, 0.1))
            .map(|(&v, n)| v + n)
            .collect();
        let a = Tensor::from_vec(&[18, 14], a_data.clone()).unwrap();
        let b = Tensor::from_vec(&[18, 14], b_data.clone()).unwrap();
        let got = ssim(&a, &b).unwrap() as f64;
        let want = ssim_oracle(&a_data, &b_data, 18, 14);
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }

    #[test]
    fn ssim_stays_within_unit_bounds() {
        let mut rng = seed_rng(4);
        for _ in 0..20 {
            let a = Tensor::from_vec(&[12, 12], randn_vec(&mut rng, 144, 0.5)).unwrap();
            let b = Tensor::from_vec(&[12, 12], randn_vec(&mut rng, 144, 0.5)).unwrap();
            let s = ssim(&a, &b).unwrap();
            assert!((-1.0..=1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn iou_counts_thresholded_overlap() {
        let p = Tensor::from_vec(&[4], vec![0.9, 0.9, 0.1, 0.1]).unwrap();
        let t = Tensor::from_vec(&[4], vec![0.9, 0.1, 0.9, 0.1]).unwrap();
        assert!((mask_iou(&p, &t, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-6);
        let empty = Tensor::zeros(&[4]);
        assert_eq!(mask_iou(&empty, &empty, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn evaluating_a_perfect_predictor_on_itself() {
        // feeding ground truth through the metric path must be perfect
        use crate::synth::{generate_dataset, SynthConfig};
        let data: Vec<crate::synth::Sample> =
            generate_dataset(&SynthConfig { seed: 6, ..SynthConfig::default() }, 2)
                .unwrap()
                .into_iter()
                .map(|(s, _)| s)
                .collect();
        for s in &data {
            let a = to_unit_range(&s.background);
            assert_eq!(l1_pct(&a, &a, 1.0).unwrap(), 0.0);
            assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
            assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn evaluate_is_deterministic() {
        use crate::net::{build_generator, NetConfig};
        use crate::synth::{generate_dataset, SynthConfig};
        let cfg = NetConfig::default();
        let params = build_generator(&cfg, 8).unwrap();
        let data: Vec<crate::synth::Sample> =
            generate_dataset(&SynthConfig { seed: 9, ..SynthConfig::default() }, 3)
                .unwrap()
                .into_iter()
                .map(|(s, _)| s)
                .collect();
        let a = evaluate(&params, &data).unwrap();
        let b = evaluate(&params, &data).unwrap();
        assert_eq!(a.l1_pct, b.l1_pct);
        assert_eq!(a.ssim, b.ssim);
        assert_eq!(a.n_samples, 3);
        assert!(a.mask_iou.is_some());
        assert!(evaluate(&params, &[]).is_err());
    }
}
