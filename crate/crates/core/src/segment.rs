//! Block tiling, per-block decomposition and foreground classification.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::admm::{AdmmWorkspace, DecompositionResult, SolverConfig};
use crate::basis::{build_basis, BasisMatrix, BasisSpec};
use crate::diff::build_diff_operator;
use crate::error::{Error, Result};
use crate::reference::lad_workspace;

/// A single-channel image with values on the 8-bit scale, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::dim("image pixels", width * height, pixels.len()));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("image contains non-finite value {bad}")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// The `n x n` block whose top-left pixel is `(row0, col0)`, vectorized
    /// row-major; out-of-range pixels repeat the nearest edge pixel.
    pub fn block_replicated(&self, row0: usize, col0: usize, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * n);
        for x in 0..n {
            let r = (row0 + x).min(self.height - 1);
            for y in 0..n {
                let c = (col0 + y).min(self.width - 1);
                out.push(self.pixels[r * self.width + c]);
            }
        }
        out
    }
}

/// Binary foreground map; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::dim("mask bits", width * height, bits.len()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Treatment of images whose sides are not multiples of the block size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum EdgePolicy {
    /// Pad partial blocks by repeating edge pixels, then crop the mask.
    #[default]
    Replicate,
    /// Reject such images.
    Strict,
}

impl FromStr for EdgePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicate" | "pad" => Ok(Self::Replicate),
            "strict" => Ok(Self::Strict),
            other => Err(Error::Config(format!(
                "unsupported edge policy '{other}' (expected replicate or strict)"
            ))),
        }
    }
}

impl fmt::Display for EdgePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Replicate => "replicate",
            Self::Strict => "strict",
        })
    }
}

/// Decomposition used to separate the layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Method {
    /// Sparse coefficients, sparse residual and TV on the residual.
    #[default]
    SparseTv,
    /// Least-absolute-deviation fit of the same basis.
    Lad,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse-tv" | "proposed" => Ok(Self::SparseTv),
            "lad" => Ok(Self::Lad),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected sparse-tv or lad)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SparseTv => "sparse-tv",
            Self::Lad => "lad",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmenterConfig {
    pub basis: BasisSpec,
    pub solver: SolverConfig,
    /// Pixels with `|s| > fg_threshold` (8-bit intensity units) are foreground.
    pub fg_threshold: f64,
    pub edge_policy: EdgePolicy,
    pub method: Method,
    /// Full-scale intensity the solver works at; pixels are rescaled from
    /// 0..255 to 0..intensity_scale before solving. The default keeps the
    /// 8-bit scale the default weights were chosen for.
    pub intensity_scale: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            basis: BasisSpec::default(),
            solver: SolverConfig::default(),
            fg_threshold: 10.0,
            edge_policy: EdgePolicy::default(),
            method: Method::default(),
            intensity_scale: 255.0,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.fg_threshold >= 0.0 && self.fg_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "foreground threshold must be finite and >= 0, got {}",
                self.fg_threshold
            )));
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return Err(Error::Config(format!(
                "intensity scale must be > 0, got {}",
                self.intensity_scale
            )));
        }
        if self.method == Method::SparseTv && self.basis.block_size() < 2 {
            return Err(Error::Config("block size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Diagnostics for one block of a segmented image.
#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub block_row: usize,
    pub block_col: usize,
    pub foreground_pixels: usize,
    pub result: DecompositionResult,
}

/// Prepared basis and solver state, reusable across blocks and images.
#[derive(Debug, Clone)]
pub struct Segmenter {
    config: SegmenterConfig,
    basis: BasisMatrix,
    workspace: AdmmWorkspace,
}

impl Segmenter {
    pub fn new(config: SegmenterConfig) -> Result<Self> {
        config.validate()?;
        let basis = build_basis(config.basis);
        let workspace = match config.method {
            Method::SparseTv => {
                let diff = build_diff_operator(config.basis.block_size())?;
                AdmmWorkspace::new(&basis, &diff, &config.solver)?
            }
            Method::Lad => lad_workspace(&basis, &config.solver)?,
        };
        Ok(Self {
            config,
            basis,
            workspace,
        })
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.config
    }

    pub fn basis(&self) -> &BasisMatrix {
        &self.basis
    }

    pub fn block_size(&self) -> usize {
        self.config.basis.block_size()
    }

    /// Decomposes one block given on the 8-bit scale. The returned result is
    /// also on the 8-bit scale.
    pub fn decompose_block(&self, block: &[f64]) -> Result<DecompositionResult> {
        let n = self.block_size();
        if block.len() != n * n {
            return Err(Error::dim("block pixels", n * n, block.len()));
        }
        let scale = self.config.intensity_scale / 255.0;
        if scale == 1.0 {
            return self.workspace.solve(block);
        }
        let scaled: Vec<f64> = block.iter().map(|v| v * scale).collect();
        let mut r = self.workspace.solve(&scaled)?;
        r.alpha.iter_mut().for_each(|a| *a /= scale);
        r.s.iter_mut().for_each(|v| *v /= scale);
        Ok(r)
    }

    /// Foreground flags (`|s| > threshold`) for one block, plus the decomposition.
    pub fn segment_block(&self, block: &[f64]) -> Result<(Vec<bool>, DecompositionResult)> {
        let r = self.decompose_block(block)?;
        let tau = self.config.fg_threshold;
        let mask = r.s.iter().map(|v| v.abs() > tau).collect();
        Ok((mask, r))
    }

    /// Number of `(block rows, block cols)` the image is tiled into.
    pub fn grid(&self, image: &ImagePlane) -> Result<(usize, usize)> {
        let n = self.block_size();
        let (w, h) = (image.width(), image.height());
        if self.config.edge_policy == EdgePolicy::Strict && (w % n != 0 || h % n != 0) {
            return Err(Error::Config(format!(
                "image {w}x{h} is not a multiple of block size {n} under the strict edge policy"
            )));
        }
        Ok((h.div_ceil(n), w.div_ceil(n)))
    }

    pub fn segment_image(&self, image: &ImagePlane) -> Result<SegmentationMask> {
        Ok(self.segment_image_detailed(image)?.0)
    }

    /// Segments every block (in parallel on the current rayon pool) and
    /// returns the mask with per-block diagnostics in row-major block order.
    pub fn segment_image_detailed(
        &self,
        image: &ImagePlane,
    ) -> Result<(SegmentationMask, Vec<BlockReport>)> {
        let n = self.block_size();
        let (rows, cols) = self.grid(image)?;
        let outcomes: Vec<Result<(Vec<bool>, BlockReport)>> = (0..rows * cols)
            .into_par_iter()
            .map(|idx| {
                let (br, bc) = (idx / cols, idx % cols);
                let block = image.block_replicated(br * n, bc * n, n);
                let (bits, result) = self.segment_block(&block)?;
                let report = BlockReport {
                    block_row: br,
                    block_col: bc,
                    foreground_pixels: bits.iter().filter(|&&b| b).count(),
                    result,
                };
                Ok((bits, report))
            })
            .collect();

        let mut mask = SegmentationMask::empty(image.width(), image.height());
        let mut reports = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            let (bits, report) = outcome?;
            let (r0, c0) = (report.block_row * n, report.block_col * n);
            for x in 0..n.min(image.height() - r0) {
                for y in 0..n.min(image.width() - c0) {
                    mask.set(r0 + x, c0 + y, bits[x * n + y]);
                }
            }
            reports.push(report);
        }
        Ok((mask, reports))
    }
}

/// Segments a single `N x N` block with a one-off [`Segmenter`].
pub fn segment_block(
    block: &[f64],
    config: &SegmenterConfig,
) -> Result<(Vec<bool>, DecompositionResult)> {
    Segmenter::new(*config)?.segment_block(block)
}

pub fn segment_image(image: &ImagePlane, config: &SegmenterConfig) -> Result<SegmentationMask> {
    Segmenter::new(*config)?.segment_image(image)
}
