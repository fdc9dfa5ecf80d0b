//! Overlap and surface metrics, plus the component-count trend analysis.
//!
//! Boundary voxels are foreground voxels with a background 6-neighbor (the
//! grid edge counts as background). HD95 pools both directed surface
//! distance sets and takes the 95th percentile with linear interpolation
//! between order statistics; nearest-rank percentiles differ slightly for
//! small surfaces.
//!
//! Boundary Dice is Dice restricted to the band of voxels within `tol`
//! voxels (Euclidean, index units) of either mask's boundary. It is a
//! band-overlap variant, not a standardized metric.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distance::{boundary, edt_squared};
use crate::error::{Error, Result};
use crate::io::CaseReport;
use crate::stats::{pearson, spearman, Correlation};
use crate::volume::{check_grid_compat, Mask};

pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    check_grid_compat(&a.meta, &b.meta)?;
    let (mut inter, mut sa, mut sb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x & y) as usize;
        sa += x as usize;
        sb += y as usize;
    }
    if sa + sb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (sa + sb) as f64)
}

/// Directed boundary-to-boundary distances in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceDistanceSet {
    pub a_to_b: Vec<f64>,
    pub b_to_a: Vec<f64>,
}

impl SurfaceDistanceSet {
    pub fn pooled(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.a_to_b.len() + self.b_to_a.len());
        v.extend_from_slice(&self.a_to_b);
        v.extend_from_slice(&self.b_to_a);
        v
    }
}

fn directed(from: &Mask, to_dist2: &[f64]) -> Vec<f64> {
    from.data
        .iter()
        .zip(to_dist2)
        .filter(|(&f, _)| f != 0)
        .map(|(_, &d)| d.sqrt())
        .collect()
}

pub fn surface_distances(a: &Mask, b: &Mask, spacing: [f64; 3]) -> Result<SurfaceDistanceSet> {
    check_grid_compat(&a.meta, &b.meta)?;
    let (ba, bb) = (boundary(a), boundary(b));
    let da = edt_squared(&ba, spacing);
    let db = edt_squared(&bb, spacing);
    Ok(SurfaceDistanceSet { a_to_b: directed(&ba, &db), b_to_a: directed(&bb, &da) })
}

/// Linear-interpolation percentile (`q` in [0, 100]) of unsorted values.
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    let frac = pos - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}

/// 95th percentile Hausdorff distance in mm. Both masks empty gives 0;
/// exactly one empty gives `f64::INFINITY`.
pub fn hd95(a: &Mask, b: &Mask, spacing: [f64; 3]) -> Result<f64> {
    check_grid_compat(&a.meta, &b.meta)?;
    match (a.is_blank(), b.is_blank()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(f64::INFINITY),
        _ => {}
    }
    let mut pooled = surface_distances(a, b, spacing)?.pooled();
    Ok(percentile(&mut pooled, 95.0))
}

/// Dice restricted to voxels within `tol` voxels of either boundary.
pub fn boundary_dice(a: &Mask, b: &Mask, tol: usize) -> Result<f64> {
    check_grid_compat(&a.meta, &b.meta)?;
    if tol == 0 {
        return Err(Error::InvalidArgument("boundary tolerance must be >= 1".into()));
    }
    let (ba, bb) = (boundary(a), boundary(b));
    let union = Mask { meta: a.meta, data: ba.data.iter().zip(&bb.data).map(|(x, y)| x | y).collect() };
    let band = edt_squared(&union, [1.0; 3]);
    let limit = (tol * tol) as f64;
    let (mut inter, mut sa, mut sb) = (0usize, 0usize, 0usize);
    for i in 0..band.len() {
        if band[i] <= limit {
            let (x, y) = (a.data[i] as usize, b.data[i] as usize);
            inter += x & y;
            sa += x;
            sb += y;
        }
    }
    if sa + sb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (sa + sb) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean_dice: f64,
    /// Mean over cases with a finite HD95; `None` if there are none.
    pub mean_hd95: Option<f64>,
    pub hd95_n: usize,
}

/// Grouped means and correlations of residual component count against
/// Dice and HD95.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub n_cases: usize,
    pub hd95_excluded: usize,
    pub group_means: BTreeMap<String, GroupStats>,
    pub pearson_dice: Option<Correlation>,
    pub spearman_dice: Option<Correlation>,
    pub pearson_hd95: Option<Correlation>,
    pub spearman_hd95: Option<Correlation>,
}

fn group_key(components: usize) -> String {
    match components {
        0 => "0".into(),
        1 => "1".into(),
        2 => "2".into(),
        _ => "3+".into(),
    }
}

pub fn component_trend(cases: &[CaseReport]) -> Result<TrendReport> {
    if cases.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<String, (usize, f64, usize, f64)> = BTreeMap::new();
    for c in cases {
        let g = groups.entry(group_key(c.components_after)).or_default();
        g.0 += 1;
        g.1 += c.dice;
        if c.hd95_mm.is_finite() {
            g.2 += 1;
            g.3 += c.hd95_mm;
        }
    }
    let group_means = groups
        .into_iter()
        .map(|(k, (n, ds, hn, hs))| {
            let stats = GroupStats {
                n,
                mean_dice: ds / n as f64,
                mean_hd95: (hn > 0).then(|| hs / hn as f64),
                hd95_n: hn,
            };
            (k, stats)
        })
        .collect();

    let counts: Vec<f64> = cases.iter().map(|c| c.components_after as f64).collect();
    let dices: Vec<f64> = cases.iter().map(|c| c.dice).collect();
    let finite: Vec<&CaseReport> = cases.iter().filter(|c| c.hd95_mm.is_finite()).collect();
    let hcounts: Vec<f64> = finite.iter().map(|c| c.components_after as f64).collect();
    let hds: Vec<f64> = finite.iter().map(|c| c.hd95_mm).collect();

    Ok(TrendReport {
        n_cases: cases.len(),
        hd95_excluded: cases.len() - finite.len(),
        group_means,
        pearson_dice: pearson(&counts, &dices).ok(),
        spearman_dice: spearman(&counts, &dices).ok(),
        pearson_hd95: pearson(&hcounts, &hds).ok(),
        spearman_hd95: spearman(&hcounts, &hds).ok(),
    })
}
