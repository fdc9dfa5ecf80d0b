//! End-to-end post-processing of one coarse prediction and per-case scoring.

use crate::anatomy::{filter_components, select_top_k, FilterDecision, Verdict};
use crate::error::Result;
use crate::io::{CaseReport, PipelineConfig};
use crate::metrics::{boundary_dice, dice, hd95};
use crate::morphology::{
    dilate, label_components, restrict_labels, threshold_probability, ComponentRecord, ComponentStatus,
};
use crate::roi::{bounding_box, RoiBox};
use crate::volume::{check_grid_compat, LabelMap, Mask, Volume};

#[derive(Debug, Clone)]
pub struct PostprocessOutcome {
    /// Thresholded voxels of the selected components.
    pub mask: Mask,
    /// Components measured on the thresholded (undilated) voxels.
    pub labels: LabelMap,
    pub records: Vec<ComponentRecord>,
    pub decisions: Vec<FilterDecision>,
    /// Selected labels, largest first.
    pub kept: Vec<u32>,
    /// Tight boxes of the selected components, same order as `kept`.
    pub boxes: Vec<RoiBox>,
}

impl PostprocessOutcome {
    pub fn components_before(&self) -> usize {
        self.records.len()
    }

    pub fn components_after(&self) -> usize {
        self.kept.len()
    }
}

/// Threshold, dilate, label, filter against the lung and keep the Top-K.
///
/// Dilation only decides which voxels belong together; sizes, overlaps,
/// distances and boxes are measured on the thresholded voxels.
pub fn postprocess(coarse: &Volume, lung: &Mask, cfg: &PipelineConfig) -> Result<PostprocessOutcome> {
    cfg.validate()?;
    check_grid_compat(&coarse.meta, &lung.meta)?;
    let fg = threshold_probability(coarse, cfg.threshold_prob)?;
    let grouped = dilate(&fg, cfg.dilation_radius, cfg.dilation_iterations);
    let (group_labels, _) = label_components(&grouped, cfg.connectivity)?;
    let (labels, mut records) = restrict_labels(&group_labels, &fg)?;
    let mut decisions = filter_components(&mut records, &labels, lung, cfg)?;
    let kept = select_top_k(&mut decisions, &records, cfg.top_k);
    for (r, d) in records.iter_mut().zip(&decisions) {
        r.status = match d.verdict {
            Verdict::Kept => ComponentStatus::Kept(d.reason),
            Verdict::Discarded => ComponentStatus::Discarded(d.reason),
        };
    }
    let boxes = kept
        .iter()
        .map(|&l| bounding_box(&records, l, labels.meta.dims))
        .collect::<Result<Vec<_>>>()?;
    let mask = labels.select(&kept);
    Ok(PostprocessOutcome { mask, labels, records, decisions, kept, boxes })
}

/// Dice, HD95 (mm, using the prediction's spacing) and boundary Dice.
pub fn score(pred: &Mask, gt: &Mask, tol: usize) -> Result<(f64, f64, f64)> {
    Ok((dice(pred, gt)?, hd95(pred, gt, pred.meta.spacing)?, boundary_dice(pred, gt, tol)?))
}

/// Scores a prediction and packages the counts and decisions into a report.
pub fn case_report(
    case_id: &str,
    pred: &Mask,
    gt: &Mask,
    tol: usize,
    components_before: usize,
    components_after: usize,
    decisions: Vec<FilterDecision>,
) -> Result<CaseReport> {
    let (d, h, b) = score(pred, gt, tol)?;
    Ok(CaseReport {
        case_id: case_id.to_string(),
        dice: d,
        hd95_mm: h,
        boundary_dice: b,
        components_before,
        components_after,
        decisions,
    })
}
