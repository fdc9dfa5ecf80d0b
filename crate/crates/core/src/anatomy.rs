//! Anatomy-aware component filtering against a lung mask.
//!
//! Each candidate component goes through three checks in a fixed order:
//! minimum size, then lung overlap (stricter inside the mediastinal zone),
//! then a surface-distance rescue for low-overlap peripheral components
//! that sit close to the lung. Survivors are ranked by size for Top-K
//! selection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::distance;
use crate::error::{Error, Result};
use crate::io::{PipelineConfig, TopK};
use crate::morphology::{BBox, ComponentRecord, ComponentStatus};
use crate::par;
use crate::volume::{check_grid_compat, LabelMap, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Kept,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionReason {
    BelowMinVoxels,
    LowOverlap,
    LowOverlapMediastinal,
    RescuedBySurfaceDistance,
    PassedOverlap,
    DroppedByTopK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub label: u32,
    pub verdict: Verdict,
    pub reason: DecisionReason,
}

impl FilterDecision {
    fn kept(label: u32, reason: DecisionReason) -> Self {
        Self { label, verdict: Verdict::Kept, reason }
    }

    fn discarded(label: u32, reason: DecisionReason) -> Self {
        Self { label, verdict: Verdict::Discarded, reason }
    }

    pub fn is_kept(&self) -> bool {
        self.verdict == Verdict::Kept
    }
}

/// Central mediastinal region, as an inclusive voxel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneBox {
    pub bounds: BBox,
}

impl ZoneBox {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.bounds.contains_point(p)
    }
}

fn foreground_bbox(m: &Mask) -> Option<BBox> {
    let mut bbox: Option<BBox> = None;
    for (i, _) in m.data.iter().enumerate().filter(|(_, &v)| v != 0) {
        let c = m.meta.coords(i);
        match bbox.as_mut() {
            Some(b) => b.include(c),
            None => bbox = Some(BBox::point(c)),
        }
    }
    bbox
}

/// Middle third (floor division) of the lung bounding box along x, with the
/// box's full y and z extent.
pub fn mediastinal_zone(lung: &Mask) -> Result<ZoneBox> {
    let lb = foreground_bbox(lung).ok_or(Error::EmptyLungMask)?;
    let (lo, width) = (lb.min[0], lb.max[0] - lb.min[0] + 1);
    let zmin = lo + width / 3;
    let zmax = (lo + 2 * width / 3).saturating_sub(1).max(zmin);
    Ok(ZoneBox { bounds: BBox { min: [zmin, lb.min[1], lb.min[2]], max: [zmax, lb.max[1], lb.max[2]] } })
}

/// Per-label accumulation over the label map, merged deterministically.
fn per_label<T, F, M>(labels: &LabelMap, init: T, visit: F, merge: M) -> Vec<T>
where
    T: Clone + Send + Sync,
    F: Fn(&mut T, usize) + Sync + Send,
    M: Fn(&mut T, &T),
{
    let n = labels.data.len();
    let k = labels.num_labels as usize + 1;
    let blocks = n.div_ceil(par::REDUCE_CHUNK);
    let partial = par::map_range(blocks, |b| {
        let mut acc = vec![init.clone(); k];
        let end = ((b + 1) * par::REDUCE_CHUNK).min(n);
        for i in b * par::REDUCE_CHUNK..end {
            let l = labels.data[i] as usize;
            if l != 0 {
                visit(&mut acc[l], i);
            }
        }
        acc
    });
    let mut total = vec![init; k];
    for p in &partial {
        for (t, v) in total.iter_mut().zip(p) {
            merge(t, v);
        }
    }
    total
}

fn check_label(labels: &LabelMap, label: u32) -> Result<()> {
    if label == 0 || label > labels.num_labels {
        return Err(Error::UnknownLabel(label));
    }
    Ok(())
}

/// Overlap fractions `|component ∩ lung| / |component|` for every label
/// (index 0 unused).
pub fn overlap_fractions(labels: &LabelMap, lung: &Mask) -> Result<Vec<f64>> {
    check_grid_compat(&labels.meta, &lung.meta)?;
    let counts = per_label(
        labels,
        (0usize, 0usize),
        |acc, i| {
            acc.0 += 1;
            acc.1 += lung.data[i] as usize;
        },
        |t, v| {
            t.0 += v.0;
            t.1 += v.1;
        },
    );
    Ok(counts.iter().map(|&(n, hit)| if n == 0 { 0.0 } else { hit as f64 / n as f64 }).collect())
}

pub fn overlap_fraction(labels: &LabelMap, label: u32, lung: &Mask) -> Result<f64> {
    check_label(labels, label)?;
    Ok(overlap_fractions(labels, lung)?[label as usize])
}

/// Minimum Euclidean distance, in voxel index units, from each component to
/// the nearest lung voxel (index 0 unused).
pub fn surface_distances(labels: &LabelMap, lung: &Mask) -> Result<Vec<f64>> {
    check_grid_compat(&labels.meta, &lung.meta)?;
    if lung.is_blank() {
        return Err(Error::EmptyLungMask);
    }
    let d2 = distance::edt_squared(lung, [1.0; 3]);
    let mins = per_label(labels, f64::INFINITY, |acc, i| *acc = acc.min(d2[i]), |t, v| *t = t.min(*v));
    Ok(mins.into_iter().map(f64::sqrt).collect())
}

pub fn surface_distance_voxels(labels: &LabelMap, label: u32, lung: &Mask) -> Result<f64> {
    check_label(labels, label)?;
    Ok(surface_distances(labels, lung)?[label as usize])
}

/// Decides every component and records the measured overlap and distance
/// on `records`. Decisions follow the order of `records`.
pub fn filter_components(
    records: &mut [ComponentRecord],
    labels: &LabelMap,
    lung: &Mask,
    cfg: &PipelineConfig,
) -> Result<Vec<FilterDecision>> {
    check_grid_compat(&labels.meta, &lung.meta)?;
    for r in records.iter() {
        check_label(labels, r.label)?;
    }
    let zone = mediastinal_zone(lung)?;
    let overlaps = overlap_fractions(labels, lung)?;

    let needs_distance = records.iter().any(|r| {
        r.voxels > cfg.min_component_voxels
            && overlaps[r.label as usize] < cfg.lung_overlap_min.max(cfg.mediastinal_overlap_min)
    });
    let distances = if needs_distance { Some(surface_distances(labels, lung)?) } else { None };

    let mut decisions = Vec::with_capacity(records.len());
    for r in records.iter_mut() {
        let l = r.label;
        let overlap = overlaps[l as usize];
        r.overlap_fraction = Some(overlap);
        if let Some(d) = &distances {
            r.surface_distance = Some(d[l as usize]);
        }
        let decision = if r.voxels <= cfg.min_component_voxels {
            FilterDecision::discarded(l, DecisionReason::BelowMinVoxels)
        } else {
            let mediastinal = zone.contains(r.centroid);
            let required = if mediastinal { cfg.mediastinal_overlap_min } else { cfg.lung_overlap_min };
            if overlap >= required {
                FilterDecision::kept(l, DecisionReason::PassedOverlap)
            } else if mediastinal {
                FilterDecision::discarded(l, DecisionReason::LowOverlapMediastinal)
            } else if r.surface_distance.is_some_and(|d| d <= cfg.surface_distance_max) {
                FilterDecision::kept(l, DecisionReason::RescuedBySurfaceDistance)
            } else {
                FilterDecision::discarded(l, DecisionReason::LowOverlap)
            }
        };
        r.status = match decision.verdict {
            Verdict::Kept => ComponentStatus::Kept(decision.reason),
            Verdict::Discarded => ComponentStatus::Discarded(decision.reason),
        };
        decisions.push(decision);
    }
    Ok(decisions)
}

/// Keeps the `k` largest kept components (ties by ascending label) and
/// marks the remaining kept ones `DroppedByTopK`. Returns surviving labels
/// largest first.
pub fn select_top_k(decisions: &mut [FilterDecision], records: &[ComponentRecord], k: TopK) -> Vec<u32> {
    let sizes: HashMap<u32, usize> = records.iter().map(|r| (r.label, r.voxels)).collect();
    let mut kept: Vec<(usize, u32)> = decisions
        .iter()
        .filter(|d| d.is_kept())
        .map(|d| (sizes.get(&d.label).copied().unwrap_or(0), d.label))
        .collect();
    kept.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let limit = match k {
        TopK::All => kept.len(),
        TopK::Count(n) => n.min(kept.len()),
    };
    let survivors: Vec<u32> = kept[..limit].iter().map(|&(_, l)| l).collect();
    for d in decisions.iter_mut() {
        if d.is_kept() && !survivors.contains(&d.label) {
            *d = FilterDecision::discarded(d.label, DecisionReason::DroppedByTopK);
        }
    }
    survivors
}
