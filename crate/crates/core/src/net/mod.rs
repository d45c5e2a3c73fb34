//! Network architecture configuration shared by generator and discriminator.

pub mod discriminator;
pub mod generator;

use alloc::format;

use crate::error::{Error, Result};

pub use discriminator::{
    build_discriminator, discriminator_forward, discriminator_patches, DiscriminatorParams,
};
pub use generator::{
    build_generator, encoder_forward, fill_decoder_forward, generator_forward,
    generator_forward_opts, neglect_gate, seg_decoder_forward, GeneratorOutput, GeneratorParams,
};

/// How the infilling decoder doubles spatial resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleMode {
    /// Nearest-neighbor upsample then 3x3 stride-1 convolution. Avoids the
    /// checkerboard artifacts of transpose convolution.
    NnConv,
    /// 4x4 stride-2 transpose convolution.
    Deconv,
}

/// Full architecture description. Widths, depths and activation constants;
/// everything a parameter inventory is a pure function of.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Number of encoder stages; each halves the spatial extent.
    pub depth: usize,
    /// Kernel count of the first encoder stage.
    pub base_width: usize,
    /// Kernel count ceiling for deep stages.
    pub max_width: usize,
    pub in_channels: usize,
    pub upsample_mode: UpsampleMode,
    /// `false` drops the segmentation decoder and the neglect gates,
    /// leaving the plain encoder/infill architecture with raw skips.
    pub use_neglect_branch: bool,
    pub image_h: usize,
    pub image_w: usize,
    pub leaky_slope: f32,
    pub norm_eps: f32,
    /// Discriminator stage count (its own spatial divisibility constraint).
    pub disc_depth: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            depth: 4,
            base_width: 8,
            max_width: 512,
            in_channels: 3,
            upsample_mode: UpsampleMode::NnConv,
            use_neglect_branch: true,
            image_h: 32,
            image_w: 32,
            leaky_slope: 0.2,
            norm_eps: 1e-5,
            disc_depth: 3,
        }
    }
}

impl NetConfig {
    /// Kernel count of stage `i` (1-based): `min(2^(i-1) * base, max)`.
    pub fn width(&self, i: usize) -> usize {
        debug_assert!(i >= 1);
        let doubled = self.base_width << (i - 1).min(usize::BITS as usize - 1);
        doubled.min(self.max_width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        if self.base_width < 1 || self.max_width < self.base_width {
            return Err(Error::Config("need 1 <= base_width <= max_width".into()));
        }
        if self.in_channels < 1 {
            return Err(Error::Config("in_channels must be >= 1".into()));
        }
        let div = 1usize << self.depth;
        if self.image_h % div != 0 || self.image_w % div != 0 {
            return Err(Error::Config(format!(
                "image {}x{} not divisible by 2^depth = {div}",
                self.image_h, self.image_w
            )));
        }
        if self.disc_depth < 1 {
            return Err(Error::Config("disc_depth must be >= 1".into()));
        }
        let ddiv = 1usize << self.disc_depth;
        if self.image_h % ddiv != 0 || self.image_w % ddiv != 0 {
            return Err(Error::Config(format!(
                "image {}x{} not divisible by 2^disc_depth = {ddiv}",
                self.image_h, self.image_w
            )));
        }
        if !(self.leaky_slope.is_finite() && self.norm_eps.is_finite() && self.norm_eps >= 0.0) {
            return Err(Error::Config("leaky_slope/norm_eps must be finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_schedule_doubles_up_to_the_cap() {
        let cfg = NetConfig {
            depth: 7,
            base_width: 64,
            max_width: 512,
            image_h: 128,
            image_w: 128,
            disc_depth: 5,
            ..NetConfig::default()
        };
        let widths: alloc::vec::Vec<usize> = (1..=7).map(|i| cfg.width(i)).collect();
        assert_eq!(widths, [64, 128, 256, 512, 512, 512, 512]);
    }

    #[test]
    fn width_schedule_at_small_scale() {
        let cfg = NetConfig {
            depth: 3,
            base_width: 8,
            max_width: 32,
            image_h: 32,
            image_w: 32,
            disc_depth: 3,
            ..NetConfig::default()
        };
        let widths: alloc::vec::Vec<usize> = (1..=3).map(|i| cfg.width(i)).collect();
        assert_eq!(widths, [8, 16, 32]);
    }

    #[test]
    fn divisibility_is_validated() {
        let bad = NetConfig { image_h: 40, ..NetConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let good = NetConfig::default();
        assert!(good.validate().is_ok());
    }
}
