//! Procedural training triples: composite, clean background, soft mask.
//!
//! Backgrounds mix smooth gradients, multi-octave value noise and a few
//! soft rectangles/ellipses; foregrounds are glyph-like stroke clusters,
//! random polygons or blobby closed curves, drawn from signed distance
//! fields with an anti-aliased edge band. The composite obeys
//! `x = alpha * f + (1 - alpha) * background` pixelwise, so `x` equals the
//! background bit-for-bit wherever the mask is zero.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{arg_err, Result};
use crate::math;
use crate::rng::{child_rng, ChaCha8Rng};
use crate::tensor::Tensor;

/// One training triple. All tensors are CHW; images live in [-1, 1], the
/// mask in [0, 1].
#[derive(Clone)]
pub struct Sample {
    pub composite: Tensor,
    pub background: Tensor,
    pub mask: Tensor,
}

/// Provenance of one generated sample (manifest row material).
#[derive(Clone, Debug)]
pub struct SampleMeta {
    pub index: u64,
    pub seed: u64,
    /// Sampled edge margin (pixels); 0 means the foreground touches an edge.
    pub margin: usize,
    /// Placed foreground bounding box as (x0, y0, w, h).
    pub bbox: (usize, usize, usize, usize),
}

/// Jitter ranges for [`augment`]. All-off equals the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub hflip: bool,
    /// Largest fraction of each side that may be cropped away.
    pub max_crop: f32,
    /// Additive brightness shift range (+-) on the [-1, 1] scale.
    pub brightness: f32,
    /// Multiplicative contrast range (1 +- this).
    pub contrast: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { hflip: true, max_crop: 0.1, brightness: 0.1, contrast: 0.1 }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig { hflip: false, max_crop: 0.0, brightness: 0.0, contrast: 0.0 }
    }
}

/// Generation knobs. The foreground bounding box side is drawn between the
/// two fractions of the image side.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub fg_min_frac: f32,
    pub fg_max_frac: f32,
    pub noise_octaves: usize,
    pub jitter: AugmentConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            image_h: 32,
            image_w: 32,
            fg_min_frac: 0.25,
            fg_max_frac: 0.9,
            noise_octaves: 3,
            jitter: AugmentConfig::default(),
            seed: 1,
        }
    }
}

fn clamp01(v: f32) -> f32 {
    v.clamp(0.0, 1.0)
}

/// Smooth 0..1 ramp of `-d` over an edge band, giving anti-aliased alpha
/// from a signed distance (negative inside).
fn edge_alpha(d: f32) -> f32 {
    let t = clamp01(0.5 - d / 1.5);
    t * t * (3.0 - 2.0 * t)
}

// ---------------------------------------------------------------------------
// background

fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, octaves: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; h * w];
    let mut amp = 0.5f32;
    for o in 0..octaves.max(1) {
        let cells = 2usize << o;
        let gh = cells + 1;
        let gw = cells + 1;
        let grid: Vec<f32> = (0..gh * gw).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        for y in 0..h {
            let fy = y as f32 / h as f32 * cells as f32;
            let gy = (fy as usize).min(cells - 1);
            let ty = fy - gy as f32;
            for x in 0..w {
                let fx = x as f32 / w as f32 * cells as f32;
                let gx = (fx as usize).min(cells - 1);
                let tx = fx - gx as f32;
                let v00 = grid[gy * gw + gx];
                let v01 = grid[gy * gw + gx + 1];
                let v10 = grid[(gy + 1) * gw + gx];
                let v11 = grid[(gy + 1) * gw + gx + 1];
                let top = v00 + (v01 - v00) * tx;
                let bot = v10 + (v11 - v10) * tx;
                out[y * w + x] += amp * (top + (bot - top) * ty);
            }
        }
        amp *= 0.5;
    }
    out
}

/// Random non-constant background, values in [-1, 1].
///
/// A linear two-color gradient guarantees contrast; value noise and a few
/// soft rectangles/ellipses add structure worth inpainting.
pub fn synth_background(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let (h, w) = (config.image_h, config.image_w);
    if h < 8 || w < 8 {
        return Err(arg_err("background dims must be at least 8x8"));
    }
    // endpoint colors in [0,1]; force a healthy spread on one channel
    let mut c0 = [0.0f32; 3];
    let mut c1 = [0.0f32; 3];
    for ch in 0..3 {
        c0[ch] = rng.random_range(0.0..1.0);
        c1[ch] = rng.random_range(0.0..1.0);
    }
    let forced = rng.random_range(0..3usize);
    if (c0[forced] - c1[forced]).abs() < 0.25 {
        c1[forced] = if c0[forced] > 0.5 { c0[forced] - 0.3 } else { c0[forced] + 0.3 };
    }
    let angle = rng.random_range(0.0f32..core::f32::consts::TAU);
    let (dx, dy) = (libm::cosf(angle), libm::sinf(angle));

    let noise_amp = rng.random_range(0.05f32..0.2);
    let noise = value_noise(rng, h, w, config.noise_octaves);

    struct Patch {
        cx: f32,
        cy: f32,
        rx: f32,
        ry: f32,
        ellipse: bool,
        tint: [f32; 3],
        strength: f32,
    }
    let n_patches = rng.random_range(0..=3usize);
    let patches: Vec<Patch> = (0..n_patches)
        .map(|_| Patch {
            cx: rng.random_range(0.0..w as f32),
            cy: rng.random_range(0.0..h as f32),
            rx: rng.random_range(w as f32 * 0.1..w as f32 * 0.4),
            ry: rng.random_range(h as f32 * 0.1..h as f32 * 0.4),
            ellipse: rng.random(),
            tint: [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ],
            strength: rng.random_range(0.3..0.8),
        })
        .collect();

    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let u = (x as f32 / (w - 1) as f32 - 0.5) * dx + (y as f32 / (h - 1) as f32 - 0.5) * dy;
            let t = clamp01(u + 0.5);
            let n = noise[y * w + x] * noise_amp;
            for ch in 0..3 {
                let mut v = c0[ch] + (c1[ch] - c0[ch]) * t + n;
                for p in &patches {
                    let nx = (x as f32 - p.cx) / p.rx;
                    let ny = (y as f32 - p.cy) / p.ry;
                    let inside = if p.ellipse {
                        1.0 - (nx * nx + ny * ny)
                    } else {
                        1.0 - nx.abs().max(ny.abs())
                    };
                    let m = clamp01(inside * 2.0) * p.strength;
                    v = v + (p.tint[ch] - v) * m;
                }
                data[ch * h * w + y * w + x] = clamp01(v) * 2.0 - 1.0;
            }
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

// ---------------------------------------------------------------------------
// foreground

/// Foreground colors plus soft alpha, drawn into a (fh, fw) canvas whose
/// support touches all four canvas edges.
pub struct Foreground {
    pub colors: Tensor,
    pub alpha: Tensor,
    pub h: usize,
    pub w: usize,
}

fn seg_dist(px: f32, py: f32, ax: f32, ay: f32, bx: f32, by: f32) -> f32 {
    let (abx, aby) = (bx - ax, by - ay);
    let (apx, apy) = (px - ax, py - ay);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 { clamp01((apx * abx + apy * aby) / len2) } else { 0.0 };
    let (dx, dy) = (apx - t * abx, apy - t * aby);
    math::sqrt(dx * dx + dy * dy)
}

/// Signed distance to a star-shaped polygon around its centroid: negative
/// inside (even-odd rule), positive outside.
fn polygon_sdf(px: f32, py: f32, verts: &[(f32, f32)]) -> f32 {
    let mut dmin = f32::MAX;
    let mut inside = false;
    let n = verts.len();
    for i in 0..n {
        let (ax, ay) = verts[i];
        let (bx, by) = verts[(i + 1) % n];
        dmin = dmin.min(seg_dist(px, py, ax, ay, bx, by));
        if (ay > py) != (by > py) {
            let x_cross = ax + (py - ay) / (by - ay) * (bx - ax);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        -dmin
    } else {
        dmin
    }
}

enum Shape {
    Strokes(Vec<(f32, f32, f32, f32, f32)>), // segments with radius
    Polygon(Vec<(f32, f32)>),
}

impl Shape {
    fn sdf(&self, px: f32, py: f32) -> f32 {
        match self {
            Shape::Strokes(caps) => caps
                .iter()
                .map(|&(ax, ay, bx, by, r)| seg_dist(px, py, ax, ay, bx, by) - r)
                .fold(f32::MAX, f32::min),
            Shape::Polygon(v) => polygon_sdf(px, py, v),
        }
    }
}

/// Rows of thick segments spanning the full canvas: the first and last rows
/// hug the top and bottom edges, every row spans the full width.
fn stroke_cluster(rng: &mut ChaCha8Rng, fh: f32, fw: f32) -> Shape {
    let rows = rng.random_range(2..=3usize);
    let mut caps = Vec::new();
    let radius = (fh / (rows as f32 * 3.0)).clamp(1.2, fh / 4.0);
    for row in 0..rows {
        let y = if rows == 1 {
            fh / 2.0
        } else {
            radius + (fh - 2.0 * radius) * row as f32 / (rows - 1) as f32
        };
        let n_seg = rng.random_range(2..=4usize);
        let mut x = radius;
        let span = fw - 2.0 * radius;
        for s in 0..n_seg {
            let x_end = if s == n_seg - 1 {
                fw - radius
            } else {
                radius + span * (s + 1) as f32 / n_seg as f32 - rng.random_range(0.0..span * 0.08)
            };
            let jitter_y = rng.random_range(-radius * 0.4..radius * 0.4);
            caps.push((x, y + jitter_y, x_end, y - jitter_y, radius));
            x = x_end + rng.random_range(0.0..radius);
            if x >= fw - radius {
                x = fw - radius;
            }
        }
    }
    Shape::Strokes(caps)
}

/// Star-shaped polygon inscribed in the canvas, pinned to touch all four
/// canvas sides at the cardinal angles.
fn random_polygon(rng: &mut ChaCha8Rng, fh: f32, fw: f32, blobby: bool) -> Shape {
    let n = if blobby { 48 } else { rng.random_range(5..=9usize) };
    let (cx, cy) = (fw / 2.0, fh / 2.0);
    let phase = rng.random_range(0.0f32..core::f32::consts::TAU);
    let dip = rng.random_range(0.15f32..0.4);
    let mut verts = Vec::with_capacity(n.max(4));
    if blobby {
        for i in 0..n {
            let theta = i as f32 / n as f32 * core::f32::consts::TAU;
            // the dip vanishes at the four cardinal angles, so the curve
            // keeps radius 1 there and stays in contact with every edge
            let depth = dip * (1.0 + 0.5 * libm::sinf(3.0 * theta + phase));
            let r = (1.0 - depth * (1.0 - libm::cosf(4.0 * theta)) / 2.0).clamp(0.4, 1.0);
            verts.push((cx + libm::cosf(theta) * (cx - 0.5) * r, cy + libm::sinf(theta) * (cy - 0.5) * r));
        }
    } else {
        // random angles plus the four cardinals with radius 1
        let mut angles: Vec<(f32, f32)> = (0..n)
            .map(|_| (rng.random_range(0.0f32..core::f32::consts::TAU), rng.random_range(0.55f32..0.95)))
            .collect();
        for k in 0..4 {
            angles.push((k as f32 * core::f32::consts::FRAC_PI_2, 1.0));
        }
        angles.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite angles"));
        for (theta, r) in angles {
            verts.push((cx + libm::cosf(theta) * (cx - 0.5) * r, cy + libm::sinf(theta) * (cy - 0.5) * r));
        }
    }
    Shape::Polygon(verts)
}

/// Foreground on its own canvas; the bounding box side is a random fraction
/// (between the configured bounds) of each image side.
pub fn synth_foreground(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Foreground> {
    let fh = (config.image_h as f32
        * rng.random_range(config.fg_min_frac..=config.fg_max_frac)) as usize;
    let fw = (config.image_w as f32
        * rng.random_range(config.fg_min_frac..=config.fg_max_frac)) as usize;
    let fh = fh.max(6).min(config.image_h);
    let fw = fw.max(6).min(config.image_w);

    let shape = match rng.random_range(0..3usize) {
        0 => stroke_cluster(rng, fh as f32, fw as f32),
        1 => random_polygon(rng, fh as f32, fw as f32, false),
        _ => random_polygon(rng, fh as f32, fw as f32, true),
    };

    let mut alpha = vec![0.0f32; fh * fw];
    for y in 0..fh {
        for x in 0..fw {
            let d = shape.sdf(x as f32 + 0.5, y as f32 + 0.5);
            alpha[y * fw + x] = edge_alpha(d);
        }
    }

    // flat base color with a soft gradient; kept fully inside [-1, 1]
    let base: [f32; 3] = [
        rng.random_range(-0.9f32..0.9),
        rng.random_range(-0.9f32..0.9),
        rng.random_range(-0.9f32..0.9),
    ];
    let grad = rng.random_range(-0.1f32..0.1);
    let mut colors = vec![0.0f32; 3 * fh * fw];
    for y in 0..fh {
        let shade = grad * (y as f32 / fh.max(1) as f32 - 0.5);
        for x in 0..fw {
            for ch in 0..3 {
                colors[ch * fh * fw + y * fw + x] = (base[ch] + shade).clamp(-1.0, 1.0);
            }
        }
    }
    Ok(Foreground {
        colors: Tensor::from_vec(&[3, fh, fw], colors)?,
        alpha: Tensor::from_vec(&[1, fh, fw], alpha)?,
        h: fh,
        w: fw,
    })
}

/// Edge margin for one axis: up to half the foreground extent, clipped so
/// the foreground still fits; 0 allowed (touching the edge).
fn sample_margin(rng: &mut ChaCha8Rng, fg_extent: usize, image_extent: usize) -> usize {
    let hi = (fg_extent / 2).min(image_extent - fg_extent);
    rng.random_range(0..=hi)
}

/// Alpha-blend the foreground over the background at a placement drawn from
/// the margin policy. Returns the sample plus its placement metadata.
pub fn compose(
    background: &Tensor,
    fg: &Foreground,
    rng: &mut ChaCha8Rng,
) -> Result<(Sample, usize, (usize, usize, usize, usize))> {
    let dims = background.shape().to_vec();
    let (h, w) = match dims.as_slice() {
        [3, h, w] => (*h, *w),
        _ => return Err(arg_err("compose: background must be 3xHxW")),
    };
    if fg.h > h || fg.w > w {
        return Err(arg_err("compose: foreground larger than the image"));
    }
    let mx = sample_margin(rng, fg.w, w);
    let my = sample_margin(rng, fg.h, h);
    let x0 = if rng.random::<bool>() { mx } else { w - fg.w - mx };
    let y0 = if rng.random::<bool>() { my } else { h - fg.h - my };

    let bg = background.data();
    let f = fg.colors.data();
    let a = fg.alpha.data();
    let mut composite = bg.clone();
    let mut mask = vec![0.0f32; h * w];
    for fy in 0..fg.h {
        for fx in 0..fg.w {
            let alpha = a[fy * fg.w + fx];
            let (ix, iy) = (x0 + fx, y0 + fy);
            mask[iy * w + ix] = alpha;
            for ch in 0..3 {
                let b = bg[ch * h * w + iy * w + ix];
                let fv = f[ch * fg.h * fg.w + fy * fg.w + fx];
                composite[ch * h * w + iy * w + ix] = alpha * fv + (1.0 - alpha) * b;
            }
        }
    }
    drop(bg);
    let sample = Sample {
        composite: Tensor::from_vec(&[3, h, w], composite)?,
        background: background.detach(),
        mask: Tensor::from_vec(&[1, h, w], mask)?,
    };
    Ok((sample, mx.min(my), (x0, y0, fg.w, fg.h)))
}

// ---------------------------------------------------------------------------
// augmentation

fn flip_h(data: &[f32], ch: usize, h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; data.len()];
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                out[(c * h + y) * w + x] = data[(c * h + y) * w + (w - 1 - x)];
            }
        }
    }
    out
}

fn crop_resize_nearest(
    data: &[f32],
    ch: usize,
    h: usize,
    w: usize,
    crop: (usize, usize, usize, usize),
) -> Vec<f32> {
    let (cx, cy, cw, chh) = crop;
    let mut out = vec![0.0f32; data.len()];
    for c in 0..ch {
        for y in 0..h {
            let sy = cy + y * chh / h;
            for x in 0..w {
                let sx = cx + x * cw / w;
                out[(c * h + y) * w + x] = data[(c * h + sy.min(h - 1)) * w + sx.min(w - 1)];
            }
        }
    }
    out
}

/// Random flip, nearest-neighbor crop-and-resize and brightness/contrast
/// jitter. Geometry applies to all three planes identically; color jitter
/// touches the images only, and the composite is rebuilt from the jittered
/// background and foreground term rather than jittered directly, so
/// `composite == background` stays exact wherever the mask is zero.
pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let (h, w) = match sample.background.shape() {
        [3, h, w] => (*h, *w),
        other => return Err(arg_err(alloc::format!("augment: bad sample shape {other:?}"))),
    };
    let mut x = sample.composite.to_vec();
    let mut y = sample.background.to_vec();
    let mut z = sample.mask.to_vec();

    if cfg.hflip && rng.random::<bool>() {
        x = flip_h(&x, 3, h, w);
        y = flip_h(&y, 3, h, w);
        z = flip_h(&z, 1, h, w);
    }

    if cfg.max_crop > 0.0 {
        let keep = 1.0 - rng.random_range(0.0..cfg.max_crop);
        let cw = ((w as f32 * keep) as usize).clamp(1, w);
        let chh = ((h as f32 * keep) as usize).clamp(1, h);
        if cw < w || chh < h {
            let cx = rng.random_range(0..=w - cw);
            let cy = rng.random_range(0..=h - chh);
            x = crop_resize_nearest(&x, 3, h, w, (cx, cy, cw, chh));
            y = crop_resize_nearest(&y, 3, h, w, (cx, cy, cw, chh));
            z = crop_resize_nearest(&z, 1, h, w, (cx, cy, cw, chh));
        }
    }

    if cfg.brightness > 0.0 || cfg.contrast > 0.0 {
        let c = 1.0 + rng.random_range(-cfg.contrast..=cfg.contrast);
        let b = rng.random_range(-cfg.brightness..=cfg.brightness);
        if c != 1.0 || b != 0.0 {
            for ch in 0..3 {
                for i in 0..h * w {
                    let idx = ch * h * w + i;
                    let alpha = z[i];
                    // alpha-weighted foreground term; exactly 0 off-mask
                    let fg_term = x[idx] - (1.0 - alpha) * y[idx];
                    let y_new = (c * y[idx] + b).clamp(-1.0, 1.0);
                    let fg_new = c * fg_term + b * alpha;
                    x[idx] = (fg_new + (1.0 - alpha) * y_new).clamp(-1.0, 1.0);
                    y[idx] = y_new;
                }
            }
        }
    }

    Ok(Sample {
        composite: Tensor::from_vec(&[3, h, w], x)?,
        background: Tensor::from_vec(&[3, h, w], y)?,
        mask: Tensor::from_vec(&[1, h, w], z)?,
    })
}

// ---------------------------------------------------------------------------
// dataset assembly

/// Sample `index` of the dataset rooted at `config.seed`, from its own
/// child stream: parallel and serial generation agree.
pub fn generate_sample(config: &SynthConfig, index: u64) -> Result<(Sample, SampleMeta)> {
    let mut rng = child_rng(config.seed, index);
    let background = synth_background(config, &mut rng)?;
    let fg = synth_foreground(config, &mut rng)?;
    let (sample, margin, bbox) = compose(&background, &fg, &mut rng)?;
    Ok((sample, SampleMeta { index, seed: config.seed, margin, bbox }))
}

/// The first `n` samples of the dataset.
pub fn generate_dataset(config: &SynthConfig, n: usize) -> Result<Vec<(Sample, SampleMeta)>> {
    if n < 1 {
        return Err(arg_err("dataset size must be >= 1"));
    }
    (0..n as u64).map(|i| generate_sample(config, i)).collect()
}

/// Manifest-ready rendering of a bbox.
pub fn bbox_string(bbox: (usize, usize, usize, usize)) -> String {
    alloc::format!("{}:{}:{}:{}", bbox.0, bbox.1, bbox.2, bbox.3)
}
