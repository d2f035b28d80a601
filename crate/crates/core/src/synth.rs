//! Seeded generator of screen-content-like blocks with known foreground.
//!
//! Backgrounds are smooth: a base level plus a linear ramp, a couple of
//! low-frequency cosines and a soft radial bump. Foreground is a few rows of
//! glyph-like stroke shapes and occasional rule lines, added on top of the
//! background with a fixed signed contrast. Pixel values are rounded to
//! integers so a block survives an 8-bit round trip unchanged.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::segment::{ImagePlane, SegmentationMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub block_size: usize,
    /// Stroke contrast is drawn uniformly from this closed range.
    pub contrast: (f64, f64),
    /// Stroke thickness in pixels, closed range.
    pub thickness: (usize, usize),
    /// Upper bound on the fraction of stroke pixels per block.
    pub max_foreground_fraction: f64,
    /// Probability that a block carries no strokes at all.
    pub empty_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            block_size: 64,
            contrast: (30.0, 90.0),
            thickness: (1, 3),
            max_foreground_fraction: 0.12,
            empty_probability: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (c0, c1) = self.contrast;
        if !(c0 >= 0.0 && c0 <= c1 && c1 <= 120.0) {
            return Err(Error::Config(format!(
                "contrast range must satisfy 0 <= lo <= hi <= 120, got {c0}..{c1}"
            )));
        }
        let (t0, t1) = self.thickness;
        if t0 == 0 || t0 > t1 || t1 > self.block_size / 4 {
            return Err(Error::Config(format!("invalid thickness range {t0}..{t1}")));
        }
        if self.block_size < 16 {
            return Err(Error::Config("synthetic blocks need block size >= 16".into()));
        }
        if !(0.0..=1.0).contains(&self.max_foreground_fraction)
            || !(0.0..=1.0).contains(&self.empty_probability)
        {
            return Err(Error::Config("fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub image: ImagePlane,
    pub truth: SegmentationMask,
    /// The smooth layer before strokes and rounding, row-major.
    pub background: Vec<f64>,
}

/// `count` blocks drawn from a single seeded stream.
pub fn synthesize(count: usize, seed: u64, config: &SynthConfig) -> Result<Vec<SynthItem>> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| synth_block(&mut rng, config)).collect())
}

fn smooth_background(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let gx = rng.gen_range(-0.5..0.5);
    let gy = rng.gen_range(-0.5..0.5);
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.0..10.0),
            )
        })
        .collect();
    let (cx, cy) = (rng.gen_range(0.0..nf), rng.gen_range(0.0..nf));
    let bump = rng.gen_range(-12.0..12.0);
    let radius = rng.gen_range(0.3..0.8) * nf;

    (0..n * n)
        .map(|i| {
            let (x, y) = ((i / n) as f64, (i % n) as f64);
            let mut v = gx * x + gy * y;
            for &(fu, fv, phase, amp) in &waves {
                v += amp * (PI * (fu * x + fv * y) / nf + phase).cos();
            }
            let d2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (radius * radius);
            v + bump * (-d2).exp()
        })
        .collect()
}

/// Adds a filled rectangle to the stroke map, clipped to the block.
fn rect(map: &mut [bool], n: usize, r0: isize, c0: isize, h: usize, w: usize) {
    for r in r0.max(0)..(r0 + h as isize).min(n as isize) {
        for c in c0.max(0)..(c0 + w as isize).min(n as isize) {
            map[r as usize * n + c as usize] = true;
        }
    }
}

/// One glyph-like shape inside an `h x w` cell at `(r0, c0)`.
fn glyph(map: &mut [bool], n: usize, rng: &mut ChaCha8Rng, r0: isize, c0: isize, h: usize, w: usize, t: usize) {
    match rng.gen_range(0..6) {
        // I
        0 => rect(map, n, r0, c0 + (w / 2) as isize - (t / 2) as isize, h, t),
        // L
        1 => {
            rect(map, n, r0, c0, h, t);
            rect(map, n, r0 + (h - t) as isize, c0, t, w);
        }
        // T
        2 => {
            rect(map, n, r0, c0, t, w);
            rect(map, n, r0, c0 + (w / 2) as isize - (t / 2) as isize, h, t);
        }
        // box / O
        3 => {
            rect(map, n, r0, c0, t, w);
            rect(map, n, r0 + (h - t) as isize, c0, t, w);
            rect(map, n, r0, c0, h, t);
            rect(map, n, r0, c0 + (w - t) as isize, h, t);
        }
        // H
        4 => {
            rect(map, n, r0, c0, h, t);
            rect(map, n, r0, c0 + (w - t) as isize, h, t);
            rect(map, n, r0 + (h / 2) as isize, c0, t, w);
        }
        // diagonal stroke
        _ => {
            for k in 0..h {
                let c = c0 + ((k * (w - t)) / h.max(1)) as isize;
                rect(map, n, r0 + k as isize, c, 1, t);
            }
        }
    }
}

fn stroke_map(rng: &mut ChaCha8Rng, n: usize, t: usize, budget: usize) -> Vec<bool> {
    let mut map = vec![false; n * n];
    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    let rows = rng.gen_range(1..=3);
    for _ in 0..rows {
        let h = rng.gen_range(8..=14).max(3 * t);
        let w = rng.gen_range(6..=10).max(3 * t);
        let r0 = rng.gen_range(0..n.saturating_sub(h).max(1)) as isize;
        let mut c = rng.gen_range(0..(n / 4)) as isize;
        while (c as usize) + w < n {
            let mut trial = map.clone();
            glyph(&mut trial, n, rng, r0, c, h, w, t);
            if count(&trial) > budget {
                return map;
            }
            map = trial;
            c += (w + rng.gen_range(2..=6)) as isize;
            if rng.gen_bool(0.25) {
                break;
            }
        }
    }
    if rng.gen_bool(0.3) {
        let mut trial = map.clone();
        if rng.gen_bool(0.5) {
            let r = rng.gen_range(0..n - t) as isize;
            let c0 = rng.gen_range(0..n / 3) as isize;
            rect(&mut trial, n, r, c0, t, rng.gen_range(n / 3..n));
        } else {
            let c = rng.gen_range(0..n - t) as isize;
            let r0 = rng.gen_range(0..n / 3) as isize;
            rect(&mut trial, n, r0, c, rng.gen_range(n / 3..n), t);
        }
        if count(&trial) <= budget {
            map = trial;
        }
    }
    map
}

fn synth_block(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> SynthItem {
    let n = cfg.block_size;
    let variation = smooth_background(rng, n);
    let contrast = if cfg.contrast.0 == cfg.contrast.1 {
        cfg.contrast.0
    } else {
        rng.gen_range(cfg.contrast.0..=cfg.contrast.1)
    };
    let thickness = rng.gen_range(cfg.thickness.0..=cfg.thickness.1);
    let empty = rng.gen_bool(cfg.empty_probability);
    let budget = (cfg.max_foreground_fraction * (n * n) as f64) as usize;
    let strokes = if empty {
        vec![false; n * n]
    } else {
        stroke_map(rng, n, thickness, budget)
    };

    // Place the background so that strokes of either polarity stay in 0..=255.
    let lo = variation.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = variation.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dark = rng.gen_bool(0.5);
    let (min_base, max_base) = if dark {
        (contrast + 5.0 - lo, 250.0 - hi)
    } else {
        (5.0 - lo, 250.0 - contrast - hi)
    };
    let base = if min_base < max_base {
        rng.gen_range(min_base..max_base)
    } else {
        0.5 * (min_base + max_base)
    };
    let sign = if dark { -1.0 } else { 1.0 };

    let background: Vec<f64> = variation.iter().map(|v| base + v).collect();
    let pixels: Vec<f64> = background
        .iter()
        .zip(&strokes)
        .map(|(&b, &fg)| {
            let value = b + if fg { sign * contrast } else { 0.0 };
            value.round().clamp(0.0, 255.0)
        })
        .collect();
    let truth: Vec<bool> = strokes.iter().map(|&fg| fg && contrast > 0.0).collect();

    SynthItem {
        image: ImagePlane::new(n, n, pixels).expect("generator emits finite pixels"),
        truth: SegmentationMask::new(n, n, truth).expect("sizes agree"),
        background,
    }
}
