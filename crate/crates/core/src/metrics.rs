//! Pixelwise precision, recall and F1 against ground-truth masks.
//!
//! Foreground is the positive class. When a rate's denominator is zero it is
//! 1 if the other error count is also zero (nothing to find and nothing
//! claimed), otherwise 0. F1 is 0 when both rates are 0.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::segment::{ImagePlane, SegmentationMask, Segmenter, SegmenterConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(pred: &SegmentationMask, truth: &SegmentationMask) -> Result<ConfusionCounts> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(Error::Input(format!(
            "mask size {}x{} does not match ground truth {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn rate(hits: u64, misses: u64, other_errors: u64) -> f64 {
    match hits + misses {
        0 if other_errors == 0 => 1.0,
        0 => 0.0,
        d => hits as f64 / d as f64,
    }
}

pub fn precision_recall_f1(c: &ConfusionCounts) -> Scores {
    let precision = rate(c.tp, c.fp, c.fn_);
    let recall = rate(c.tp, c.fn_, c.fp);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageScore {
    pub id: String,
    pub counts: ConfusionCounts,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalFailure {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageScore>,
    pub failures: Vec<EvalFailure>,
    /// Unweighted mean of per-image rates.
    pub macro_avg: Scores,
    /// Rates from pixel counts pooled over all images.
    pub micro_avg: Scores,
    pub totals: ConfusionCounts,
}

impl EvalReport {
    pub fn from_scores(per_image: Vec<ImageScore>, failures: Vec<EvalFailure>) -> Self {
        let n = per_image.len();
        let totals = per_image
            .iter()
            .fold(ConfusionCounts::default(), |acc, s| acc + s.counts);
        let mean = |get: fn(&Scores) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_image.iter().map(|s| get(&s.scores)).sum::<f64>() / n as f64
            }
        };
        let macro_avg = Scores {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
        };
        Self {
            micro_avg: precision_recall_f1(&totals),
            macro_avg,
            totals,
            per_image,
            failures,
        }
    }
}

/// One dataset entry. A pair that could not be loaded carries its error
/// message instead of data.
pub type DatasetItem = (String, std::result::Result<(ImagePlane, SegmentationMask), String>);

/// Segments every image, scores it against its mask and averages per image.
///
/// Items that fail to load or segment are reported as failures and left out
/// of the averages. Items are processed in parallel on the current rayon
/// pool; the report keeps input order.
pub fn evaluate_dataset(items: &[DatasetItem], config: &SegmenterConfig) -> Result<EvalReport> {
    let segmenter = Segmenter::new(*config)?;
    evaluate_with(items, &segmenter)
}

pub fn evaluate_with(items: &[DatasetItem], segmenter: &Segmenter) -> Result<EvalReport> {
    let outcomes: Vec<std::result::Result<ImageScore, EvalFailure>> = items
        .par_iter()
        .map(|(id, item)| {
            let fail = |message: String| EvalFailure {
                id: id.clone(),
                message,
            };
            let (image, truth) = item.as_ref().map_err(|e| fail(e.clone()))?;
            let pred = segmenter
                .segment_image(image)
                .map_err(|e| fail(e.to_string()))?;
            let counts = confusion(&pred, truth).map_err(|e| fail(e.to_string()))?;
            Ok(ImageScore {
                id: id.clone(),
                counts,
                scores: precision_recall_f1(&counts),
            })
        })
        .collect();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(s) => scores.push(s),
            Err(f) => failures.push(f),
        }
    }
    Ok(EvalReport::from_scores(scores, failures))
}
