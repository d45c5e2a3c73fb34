//! Adversarial training: losses, Adam, and the alternating D/G loop.
//!
//! Per iteration the discriminator takes one Adam step at half the learning
//! rate on real/fake pairs (the generator output detached), then the
//! generator takes one step on the non-saturating adversarial term plus
//! weighted L1 reconstruction terms for background and mask.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Error, Result};
use crate::math;
use crate::net::{discriminator_forward, generator_forward, DiscriminatorParams, GeneratorParams};
use crate::rng::{seed_rng, ChaCha8Rng};
use crate::synth::{augment, AugmentConfig, Sample};
use crate::tensor::Tensor;

/// Weights of the two L1 reconstruction terms in the generator loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_fill: f32,
    pub lambda_seg: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_fill: 100.0, lambda_seg: 100.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_fill < 0.0 || self.lambda_seg < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Adam hyperparameters: lr 1e-4, betas (0.5, 0.999), eps 1e-8 by default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter first/second moment buffers plus the shared step counter.
pub struct AdamState {
    pub hyper: AdamParams,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &[Tensor], hyper: AdamParams) -> AdamState {
        AdamState {
            hyper,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    /// Restore a persisted state. Buffers must shape-match `params`.
    pub fn restore(
        params: &[Tensor],
        hyper: AdamParams,
        step: u64,
        m: Vec<Vec<f32>>,
        v: Vec<Vec<f32>>,
    ) -> Result<AdamState> {
        if m.len() != params.len() || v.len() != params.len() {
            return Err(arg_err("adam restore: buffer count mismatch"));
        }
        for ((p, mb), vb) in params.iter().zip(&m).zip(&v) {
            if mb.len() != p.numel() || vb.len() != p.numel() {
                return Err(arg_err("adam restore: buffer shape mismatch"));
            }
        }
        Ok(AdamState { hyper, step, m, v })
    }

    /// Moment buffers in parameter order (for checkpointing).
    pub fn buffers(&self) -> (&[Vec<f32>], &[Vec<f32>]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected update over `params`, reading each tensor's
    /// accumulated gradient (missing gradient counts as zero). The step
    /// counter advances regardless.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(arg_err("adam step: parameter count mismatch"));
        }
        self.step += 1;
        let bc1 = 1.0 - math::powf(self.hyper.beta1, self.step as f32);
        let bc2 = 1.0 - math::powf(self.hyper.beta2, self.step as f32);
        let AdamParams { lr, beta1, beta2, eps } = self.hyper;
        for (idx, p) in params.iter().enumerate() {
            let grad = match p.grad() {
                Some(g) => g,
                None => continue,
            };
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in adam step {}",
                    self.step
                )));
            }
            let mut data = p.to_vec();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for j in 0..data.len() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
            p.set_data(&data)?;
        }
        Ok(())
    }
}

/// Generator loss pieces: the scalar graph root plus detached term values
/// for reporting.
pub struct GeneratorLoss {
    pub total: Tensor,
    pub adversarial: f32,
    pub l1_fill: f32,
    pub l1_seg: f32,
}

/// `-log D(x, y_p)` (non-saturating form) plus `lambda_fill * |y_g - y_p|`
/// and, when a mask prediction exists, `lambda_seg * |z_g - z_p|`.
pub fn generator_loss(
    d_fake: &Tensor,
    fill: &Tensor,
    fill_gt: &Tensor,
    seg: Option<(&Tensor, &Tensor)>,
    w: &LossWeights,
) -> Result<GeneratorLoss> {
    let adversarial = d_fake.log().mean().neg();
    let l1_fill = fill.l1_distance(fill_gt)?;
    let mut total = adversarial.add(&l1_fill.scale(w.lambda_fill))?;
    let mut l1_seg_val = 0.0;
    if let Some((mask, mask_gt)) = seg {
        let l1_seg = mask.l1_distance(mask_gt)?;
        l1_seg_val = l1_seg.item();
        total = total.add(&l1_seg.scale(w.lambda_seg))?;
    }
    if !total.item().is_finite() {
        return Err(Error::Numeric("generator loss is not finite".into()));
    }
    Ok(GeneratorLoss {
        adversarial: adversarial.item(),
        l1_fill: l1_fill.item(),
        l1_seg: l1_seg_val,
        total,
    })
}

/// `-(log D(x, y_g) + log(1 - D(x, y_p)))`, scores averaged over the batch.
pub fn discriminator_loss(d_real: &Tensor, d_fake: &Tensor) -> Result<Tensor> {
    let real_term = d_real.log().mean();
    let fake_term = d_fake.one_minus().log().mean();
    let loss = real_term.add(&fake_term)?.neg();
    if !loss.item().is_finite() {
        return Err(Error::Numeric("discriminator loss is not finite".into()));
    }
    Ok(loss)
}

/// One row of the training log.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub step: u64,
    pub loss_g: f32,
    pub loss_adv: f32,
    pub l1_fill: f32,
    pub l1_seg: f32,
    pub loss_d: f32,
    pub d_real: f32,
    pub d_fake: f32,
}

impl StepRecord {
    pub fn all_finite(&self) -> bool {
        [
            self.loss_g,
            self.loss_adv,
            self.l1_fill,
            self.l1_seg,
            self.loss_d,
            self.d_real,
            self.d_fake,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Full per-step history of a run.
#[derive(Default)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
}

/// Side-channel for the loop: streaming log rows out and checkpoint
/// requests in. File formats live with the implementor.
pub trait TrainObserver {
    fn on_step(&mut self, record: &StepRecord) -> Result<()> {
        let _ = record;
        Ok(())
    }
    fn on_checkpoint(&mut self, trainer: &Trainer) -> Result<()> {
        let _ = trainer;
        Ok(())
    }
}

/// No-op observer.
pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Iteration schedule and batching policy.
#[derive(Clone, Debug)]
pub struct TrainSchedule {
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Emit a checkpoint every this many steps (0 = only the final one).
    pub checkpoint_every: u64,
    /// Augmentation applied to drawn samples; `None` trains on raw samples.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            steps: 2000,
            batch_size: 8,
            seed: 1,
            checkpoint_every: 500,
            augment: None,
        }
    }
}

/// Mini-batch stacked into rank-4 tensors.
pub struct Batch {
    pub composite: Tensor,
    pub background: Tensor,
    pub mask: Tensor,
}

/// Stack samples along a fresh batch dimension.
pub fn stack_samples(samples: &[&Sample]) -> Result<Batch> {
    if samples.is_empty() {
        return Err(arg_err("cannot stack an empty batch"));
    }
    let stack = |pick: &dyn Fn(&Sample) -> &Tensor| -> Result<Tensor> {
        let first = pick(samples[0]).shape().to_vec();
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(&first);
        let mut data = Vec::with_capacity(shape.iter().product());
        for s in samples {
            let t = pick(s);
            if t.shape() != first.as_slice() {
                return Err(arg_err("batch samples disagree on shape"));
            }
            data.extend_from_slice(&t.data());
        }
        Tensor::from_vec(&shape, data)
    };
    Ok(Batch {
        composite: stack(&|s| &s.composite)?,
        background: stack(&|s| &s.background)?,
        mask: stack(&|s| &s.mask)?,
    })
}

/// Generator/discriminator pair mid-training. Owns the optimizer states and
/// the batch RNG so runs can be resumed from a checkpoint.
pub struct Trainer {
    pub gen: GeneratorParams,
    pub disc: DiscriminatorParams,
    pub g_opt: AdamState,
    pub d_opt: AdamState,
    pub step: u64,
    rng: ChaCha8Rng,
    pub weights: LossWeights,
}

impl Trainer {
    /// Fresh optimizers; the discriminator trains at exactly half the
    /// generator learning rate.
    pub fn new(
        gen: GeneratorParams,
        disc: DiscriminatorParams,
        adam: AdamParams,
        weights: LossWeights,
        seed: u64,
    ) -> Result<Trainer> {
        weights.validate()?;
        let g_opt = AdamState::new(&gen.parameters(), adam);
        let d_opt = AdamState::new(&disc.parameters(), AdamParams { lr: adam.lr / 2.0, ..adam });
        Ok(Trainer { gen, disc, g_opt, d_opt, step: 0, rng: seed_rng(seed), weights })
    }

    /// Rebuild a trainer from persisted pieces; the batch stream continues
    /// from a (seed, step)-derived child stream.
    pub fn resume(
        gen: GeneratorParams,
        disc: DiscriminatorParams,
        g_opt: AdamState,
        d_opt: AdamState,
        step: u64,
        weights: LossWeights,
        seed: u64,
    ) -> Result<Trainer> {
        weights.validate()?;
        let rng = crate::rng::child_rng(seed, step);
        Ok(Trainer { gen, disc, g_opt, d_opt, step, rng, weights })
    }

    fn zero_grads(&self) {
        for p in self.gen.parameters() {
            p.zero_grad();
        }
        for p in self.disc.parameters() {
            p.zero_grad();
        }
    }

    /// One alternating iteration: D step (detached fake) then G step.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepRecord> {
        let g_out = generator_forward(&self.gen, &batch.composite)?;

        // discriminator phase; y_p is a constant here
        self.zero_grads();
        let fake_detached = g_out.background.detach();
        let d_real = discriminator_forward(&self.disc, &batch.composite, &batch.background)?;
        let d_fake = discriminator_forward(&self.disc, &batch.composite, &fake_detached)?;
        let d_loss = discriminator_loss(&d_real, &d_fake)?;
        d_loss.backward()?;
        self.d_opt.step(&self.disc.parameters())?;
        let loss_d = d_loss.item();
        let d_real_mean = d_real.mean().item();
        let d_fake_mean = d_fake.mean().item();

        // generator phase against the just-updated discriminator
        self.zero_grads();
        let d_fake_g = discriminator_forward(&self.disc, &batch.composite, &g_out.background)?;
        let seg_pair = g_out.mask.as_ref().map(|m| (m, &batch.mask));
        let g_loss =
            generator_loss(&d_fake_g, &g_out.background, &batch.background, seg_pair, &self.weights)?;
        g_loss.total.backward()?;
        self.g_opt.step(&self.gen.parameters())?;
        self.zero_grads();

        self.step += 1;
        let record = StepRecord {
            step: self.step,
            loss_g: g_loss.total.item(),
            loss_adv: g_loss.adversarial,
            l1_fill: g_loss.l1_fill,
            l1_seg: g_loss.l1_seg,
            loss_d,
            d_real: d_real_mean,
            d_fake: d_fake_mean,
        };
        if !record.all_finite() {
            return Err(Error::Numeric(format!("training diverged at step {}", self.step)));
        }
        Ok(record)
    }

    fn draw_batch(
        &mut self,
        data: &[Sample],
        size: usize,
        aug: &Option<AugmentConfig>,
    ) -> Result<Batch> {
        use rand::Rng;
        let mut picked: Vec<Sample> = Vec::with_capacity(size);
        for _ in 0..size {
            let idx = self.rng.random_range(0..data.len());
            let sample = match aug {
                Some(cfg) => augment(&data[idx], cfg, &mut self.rng)?,
                None => data[idx].clone(),
            };
            picked.push(sample);
        }
        let refs: Vec<&Sample> = picked.iter().collect();
        stack_samples(&refs)
    }

    /// Run `schedule.steps` iterations over `data`, reporting every step to
    /// the observer and checkpointing on the configured cadence.
    pub fn run(
        &mut self,
        data: &[Sample],
        schedule: &TrainSchedule,
        observer: &mut dyn TrainObserver,
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(arg_err("training dataset is empty"));
        }
        if schedule.batch_size == 0 || schedule.batch_size > data.len() {
            return Err(arg_err(format!(
                "batch size {} must be in 1..={}",
                schedule.batch_size,
                data.len()
            )));
        }
        let mut report = TrainReport::default();
        for _ in 0..schedule.steps {
            let batch = self.draw_batch(data, schedule.batch_size, &schedule.augment)?;
            let record = self.train_step(&batch)?;
            observer.on_step(&record)?;
            report.steps.push(record);
            if schedule.checkpoint_every > 0 && self.step % schedule.checkpoint_every == 0 {
                observer.on_checkpoint(self)?;
            }
        }
        observer.on_checkpoint(self)?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_discriminator, build_generator, NetConfig};
    use crate::synth::{generate_dataset, SynthConfig};

    fn approx(a: f32, b: f64, tol: f64) {
        assert!(((a as f64) - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn generator_loss_at_half_score_is_ln2() {
        let d = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let y = Tensor::from_vec(&[1, 3, 2, 2], vec![0.1; 12]).unwrap();
        let z = Tensor::from_vec(&[1, 1, 2, 2], vec![0.5; 4]).unwrap();
        let w = LossWeights::default();
        let loss = generator_loss(&d, &y, &y, Some((&z, &z)), &w).unwrap();
        approx(loss.total.item(), core::f64::consts::LN_2, 1e-6);
        approx(loss.adversarial, core::f64::consts::LN_2, 1e-6);
        assert_eq!(loss.l1_fill, 0.0);
        assert_eq!(loss.l1_seg, 0.0);
    }

    #[test]
    fn generator_loss_weighs_l1_terms() {
        // -ln 0.5 + 100 * 0.01 + 100 * 0.02 = 0.6931 + 1 + 2
        let d = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let y_p = Tensor::from_vec(&[1, 3, 1, 1], vec![0.0; 3]).unwrap();
        let y_g = Tensor::from_vec(&[1, 3, 1, 1], vec![0.01; 3]).unwrap();
        let z_p = Tensor::from_vec(&[1, 1, 1, 1], vec![0.0]).unwrap();
        let z_g = Tensor::from_vec(&[1, 1, 1, 1], vec![0.02]).unwrap();
        let w = LossWeights::default();
        let loss = generator_loss(&d, &y_p, &y_g, Some((&z_p, &z_g)), &w).unwrap();
        approx(loss.total.item(), core::f64::consts::LN_2 + 3.0, 1e-5);
        // with zero weights only the adversarial term remains
        let w0 = LossWeights { lambda_fill: 0.0, lambda_seg: 0.0 };
        let loss0 = generator_loss(&d, &y_p, &y_g, Some((&z_p, &z_g)), &w0).unwrap();
        approx(loss0.total.item(), core::f64::consts::LN_2, 1e-6);
    }

    #[test]
    fn baseline_mode_drops_the_seg_term() {
        let d = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let y_p = Tensor::from_vec(&[1, 3, 1, 1], vec![0.0; 3]).unwrap();
        let y_g = Tensor::from_vec(&[1, 3, 1, 1], vec![0.01; 3]).unwrap();
        let loss = generator_loss(&d, &y_p, &y_g, None, &LossWeights::default()).unwrap();
        approx(loss.total.item(), core::f64::consts::LN_2 + 1.0, 1e-5);
        assert_eq!(loss.l1_seg, 0.0);
    }

    #[test]
    fn discriminator_loss_matches_hand_values() {
        let half = Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap();
        let loss = discriminator_loss(&half, &half).unwrap();
        approx(loss.item(), 2.0 * core::f64::consts::LN_2, 1e-6);

        let real = Tensor::from_vec(&[1], vec![0.9]).unwrap();
        let fake = Tensor::from_vec(&[1], vec![0.1]).unwrap();
        let loss = discriminator_loss(&real, &fake).unwrap();
        approx(loss.item(), -2.0 * 0.9f64.ln(), 1e-5);

        // a perfect discriminator's loss collapses toward the log clamp
        let one = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let zero = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let loss = discriminator_loss(&one, &zero).unwrap();
        assert!(loss.item().abs() < 1e-6);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let p = Tensor::param(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let mut state = AdamState::new(&[p.clone()], AdamParams::default());
        p.accumulate_grad(&[0.0, 0.0, 0.0]);
        state.step(&[p.clone()]).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr_sign() {
        let p = Tensor::param(&[2], vec![0.0, 0.0]).unwrap();
        let hyper = AdamParams { lr: 1e-2, ..AdamParams::default() };
        let mut state = AdamState::new(&[p.clone()], hyper);
        p.accumulate_grad(&[0.37, -2.5]);
        state.step(&[p.clone()]).unwrap();
        // bias correction makes m_hat/sqrt(v_hat) = sign(g) on step one
        approx(p.to_vec()[0], -1e-2, 1e-6);
        approx(p.to_vec()[1], 1e-2, 1e-6);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let p = Tensor::param(&[1], vec![0.0]).unwrap();
        let mut state = AdamState::new(&[p.clone()], AdamParams::default());
        p.accumulate_grad(&[f32::NAN]);
        assert!(matches!(state.step(&[p]), Err(Error::Numeric(_))));
    }

    fn desk_setup(seed: u64) -> (Trainer, Vec<Sample>) {
        let cfg = NetConfig {
            depth: 3,
            base_width: 4,
            max_width: 16,
            image_h: 16,
            image_w: 16,
            disc_depth: 3,
            ..NetConfig::default()
        };
        let gen = build_generator(&cfg, seed).unwrap();
        let disc = build_discriminator(&cfg, seed ^ 0xdd).unwrap();
        let trainer =
            Trainer::new(gen, disc, AdamParams::default(), LossWeights::default(), seed).unwrap();
        let synth = SynthConfig { image_h: 16, image_w: 16, seed, ..SynthConfig::default() };
        let data: Vec<Sample> =
            generate_dataset(&synth, 4).unwrap().into_iter().map(|(s, _)| s).collect();
        (trainer, data)
    }

    #[test]
    fn zero_step_schedule_returns_initial_parameters() {
        let (mut trainer, data) = desk_setup(3);
        let before = trainer.gen.parameters()[0].to_vec();
        let schedule = TrainSchedule { steps: 0, batch_size: 2, ..TrainSchedule::default() };
        let report = trainer.run(&data, &schedule, &mut NullObserver).unwrap();
        assert!(report.steps.is_empty());
        assert_eq!(trainer.gen.parameters()[0].to_vec(), before);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let run = || {
            let (mut trainer, data) = desk_setup(5);
            let schedule =
                TrainSchedule { steps: 3, batch_size: 2, seed: 5, ..TrainSchedule::default() };
            trainer.run(&data, &schedule, &mut NullObserver).unwrap();
            trainer.gen.parameters().iter().flat_map(|p| p.to_vec()).collect::<Vec<f32>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn d_learning_rate_is_exactly_half() {
        let (trainer, _) = desk_setup(7);
        assert_eq!(trainer.d_opt.hyper.lr, trainer.g_opt.hyper.lr / 2.0);
    }

    #[test]
    fn phases_touch_disjoint_parameter_sets() {
        let (mut trainer, data) = desk_setup(9);
        let refs: Vec<&Sample> = data.iter().take(2).collect();
        let batch = stack_samples(&refs).unwrap();

        let g_out = generator_forward(&trainer.gen, &batch.composite).unwrap();
        trainer.zero_grads();
        let fake = g_out.background.detach();
        let d_real =
            discriminator_forward(&trainer.disc, &batch.composite, &batch.background).unwrap();
        let d_fake = discriminator_forward(&trainer.disc, &batch.composite, &fake).unwrap();
        discriminator_loss(&d_real, &d_fake).unwrap().backward().unwrap();
        // the detached fake keeps the D loss out of the generator entirely
        assert!(trainer.gen.parameters().iter().all(|p| p.grad().is_none()));
        assert!(trainer.disc.parameters().iter().any(|p| p.grad().is_some()));

        trainer.zero_grads();
        let d_fake_g =
            discriminator_forward(&trainer.disc, &batch.composite, &g_out.background).unwrap();
        let seg_pair = g_out.mask.as_ref().map(|m| (m, &batch.mask));
        let g_loss = generator_loss(
            &d_fake_g,
            &g_out.background,
            &batch.background,
            seg_pair,
            &trainer.weights,
        )
        .unwrap();
        g_loss.total.backward().unwrap();
        assert!(trainer.gen.parameters().iter().any(|p| p.grad().is_some()));
        // the G optimizer leaves D parameters untouched
        let d_before: Vec<Vec<f32>> = trainer.disc.parameters().iter().map(|p| p.to_vec()).collect();
        trainer.g_opt.step(&trainer.gen.parameters()).unwrap();
        let d_after: Vec<Vec<f32>> = trainer.disc.parameters().iter().map(|p| p.to_vec()).collect();
        assert_eq!(d_before, d_after);
    }

    #[test]
    fn adversarial_gradients_flow_with_zero_lambdas_and_frozen_d() {
        // frozen, freshly initialized D scores ~0.5; the non-saturating
        // -log D term must still push gradients into G
        let (mut trainer, data) = desk_setup(11);
        trainer.weights = LossWeights { lambda_fill: 0.0, lambda_seg: 0.0 };
        let refs: Vec<&Sample> = data.iter().take(2).collect();
        let batch = stack_samples(&refs).unwrap();
        let g_out = generator_forward(&trainer.gen, &batch.composite).unwrap();
        trainer.zero_grads();
        let d_fake =
            discriminator_forward(&trainer.disc, &batch.composite, &g_out.background).unwrap();
        let score = d_fake.mean().item();
        assert!((0.2..0.8).contains(&score), "init D should sit near 0.5, got {score}");
        let loss =
            generator_loss(&d_fake, &g_out.background, &batch.background, None, &trainer.weights)
                .unwrap();
        loss.total.backward().unwrap();
        let total_grad: f32 = trainer
            .gen
            .parameters()
            .iter()
            .filter_map(|p| p.grad())
            .map(|g| g.iter().map(|v| v.abs()).sum::<f32>())
            .sum();
        assert!(total_grad > 0.0, "generator received no adversarial gradient");
    }

    #[test]
    fn losses_stay_finite_over_a_short_run() {
        let (mut trainer, data) = desk_setup(13);
        let schedule =
            TrainSchedule { steps: 5, batch_size: 2, seed: 13, ..TrainSchedule::default() };
        let report = trainer.run(&data, &schedule, &mut NullObserver).unwrap();
        assert_eq!(report.steps.len(), 5);
        assert!(report.steps.iter().all(|r| r.all_finite()));
    }
}
