//! Background/foreground segmentation of screen-content images.
//!
//! Each `N x N` block is decomposed into a smooth layer spanned by a few
//! low-frequency DCT bases and a sparse layer whose total variation is
//! penalized, using ADMM. Pixels with a large sparse component are marked as
//! foreground.

pub mod admm;
pub mod basis;
pub mod diff;
pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod reference;
pub mod segment;
pub mod synth;

pub use admm::{objective, soft_threshold, solve, AdmmWorkspace, DecompositionResult, SolverConfig};
pub use basis::{build_basis, zigzag_frequencies, BasisMatrix, BasisSpec};
pub use diff::{build_diff_operator, tv, DiffOperator};
pub use error::{Error, Result};
pub use reference::{lad_fit, proximal_reference, ReferenceConfig, StepRule};
pub use metrics::{confusion, evaluate_dataset, precision_recall_f1, ConfusionCounts, EvalReport};
pub use segment::{
    segment_block, segment_image, EdgePolicy, ImagePlane, Method, SegmentationMask, Segmenter,
    SegmenterConfig,
};
pub use synth::{synthesize, SynthConfig, SynthItem};
