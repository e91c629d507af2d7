//! Evaluation protocol: thresholding, confusion counts inside the visibility
//! mask, micro-averaged ratios, threshold sweeps, and the Detection-2D
//! baseline.
//!
//! Report keys, in both the `key=value` and the JSON form:
//! `frames tp fp fn tn iou recall precision fn_rate`, plus `threshold` when a
//! sweep chose one. Undefined ratios are written as `n/a` (text) or `null`
//! (JSON); precision is always undefined for sparse ground truth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster, SemanticMap};
use crate::sequence::LabelConfig;

/// `1` iff `prob >= threshold`.
pub fn binarize(prob: &Raster<f64>, threshold: f64) -> BinaryMask {
    prob.map(|&p| p >= threshold)
}

/// Pixel confusion counts summed over frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MetricReport {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub frames: usize,
    /// Ground truth is sparse, so precision is reported as not applicable.
    pub sparse_gt: bool,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricReport {
    pub fn iou(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        if self.sparse_gt {
            None
        } else {
            ratio(self.tp, self.tp + self.fp)
        }
    }

    pub fn fn_rate(&self) -> Option<f64> {
        ratio(self.fn_, self.fn_ + self.tn)
    }

    /// Number of pixels counted, i.e. the summed size of V.
    pub fn counted(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn merge(&mut self, other: &MetricReport) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
        self.frames += other.frames;
    }

    /// Line-oriented `key=value` text.
    pub fn to_key_value(&self, threshold: Option<f64>) -> String {
        let fmt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
        let mut s = String::new();
        if let Some(t) = threshold {
            s += &format!("threshold={t}\n");
        }
        s += &format!(
            "frames={}\ntp={}\nfp={}\nfn={}\ntn={}\niou={}\nrecall={}\nprecision={}\nfn_rate={}\n",
            self.frames,
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
            fmt(self.iou()),
            fmt(self.recall()),
            fmt(self.precision()),
            fmt(self.fn_rate())
        );
        s
    }

    pub fn to_json(&self, threshold: Option<f64>) -> String {
        #[derive(Serialize)]
        struct Json {
            #[serde(skip_serializing_if = "Option::is_none")]
            threshold: Option<f64>,
            frames: usize,
            tp: u64,
            fp: u64,
            #[serde(rename = "fn")]
            fn_: u64,
            tn: u64,
            iou: Option<f64>,
            recall: Option<f64>,
            precision: Option<f64>,
            fn_rate: Option<f64>,
        }
        let j = Json {
            threshold,
            frames: self.frames,
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
            iou: self.iou(),
            recall: self.recall(),
            precision: self.precision(),
            fn_rate: self.fn_rate(),
        };
        serde_json::to_string_pretty(&j).expect("report serializes")
    }
}

fn count_frame(pred: &BinaryMask, gt: &BinaryMask, vis: &BinaryMask) -> Result<MetricReport> {
    pred.ensure_same_size(gt)?;
    pred.ensure_same_size(vis)?;
    let mut r = MetricReport {
        frames: 1,
        ..Default::default()
    };
    for ((&p, &g), &v) in pred.iter().zip(gt.iter()).zip(vis.iter()) {
        if !v {
            continue;
        }
        match (p, g) {
            (true, true) => r.tp += 1,
            (true, false) => r.fp += 1,
            (false, true) => r.fn_ += 1,
            (false, false) => r.tn += 1,
        }
    }
    Ok(r)
}

/// Confusion counts of one frame, restricted to `vis`.
pub fn masked_metrics(pred: &BinaryMask, gt: &BinaryMask, vis: &BinaryMask) -> Result<MetricReport> {
    let r = count_frame(pred, gt, vis)?;
    if r.counted() == 0 {
        return Err(Error::EmptyVisibility);
    }
    Ok(r)
}

/// Sums counts over frames; ratios are taken only at the end.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    total: MetricReport,
}

impl MetricAccumulator {
    pub fn new(sparse_gt: bool) -> Self {
        Self {
            total: MetricReport {
                sparse_gt,
                ..Default::default()
            },
        }
    }

    pub fn add(&mut self, pred: &BinaryMask, gt: &BinaryMask, vis: &BinaryMask) -> Result<()> {
        let r = count_frame(pred, gt, vis)?;
        self.total.merge(&r);
        Ok(())
    }

    /// Fails when no frame contributed a visible pixel.
    pub fn finish(self) -> Result<MetricReport> {
        if self.total.counted() == 0 {
            return Err(Error::EmptyVisibility);
        }
        Ok(self.total)
    }
}

/// Micro-averaged report over frames.
pub fn evaluate_frames(preds: &[BinaryMask], gts: &[BinaryMask], vis: &[BinaryMask], sparse_gt: bool) -> Result<MetricReport> {
    if preds.len() != gts.len() || preds.len() != vis.len() {
        return Err(Error::InvalidInput(format!(
            "frame counts differ: {} predictions, {} ground truths, {} visibility masks",
            preds.len(),
            gts.len(),
            vis.len()
        )));
    }
    let mut acc = MetricAccumulator::new(sparse_gt);
    for ((p, g), v) in preds.iter().zip(gts).zip(vis) {
        acc.add(p, g, v)?;
    }
    acc.finish()
}

/// Thresholds 0.1, 0.2, ..., 0.9.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Picks the grid threshold with the highest micro-averaged IoU. Ties go to
/// the lower threshold; an undefined IoU ranks as 0.
pub fn threshold_sweep(
    probs: &[Raster<f64>],
    gts: &[BinaryMask],
    vis: &[BinaryMask],
    grid: &[f64],
) -> Result<(f64, MetricReport)> {
    if probs.is_empty() || grid.is_empty() {
        return Err(Error::InvalidInput("threshold sweep needs frames and thresholds".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, MetricReport)> = None;
    for &t in &sorted {
        let preds: Vec<BinaryMask> = probs.iter().map(|p| binarize(p, t)).collect();
        let report = evaluate_frames(&preds, gts, vis, false)?;
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| report.iou().unwrap_or(0.0) > b.iou().unwrap_or(0.0));
        if better {
            best = Some((t, report));
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Marks every obstacle-class pixel (vehicles, pedestrians, cyclists) as a
/// blind spot.
pub fn detection2d_baseline(sem: &SemanticMap, cfg: &LabelConfig) -> Result<BinaryMask> {
    cfg.select(sem, &cfg.obstacle_ids)
}
