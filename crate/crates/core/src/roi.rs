//! Region-of-interest boxes: extraction from components, margin expansion,
//! cropping and paste-back into the full grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::ComponentRecord;
use crate::volume::{GridMeta, Mask, Volume};

/// Inclusive voxel box clamped to a source grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
    pub source_dims: [usize; 3],
}

impl RoiBox {
    pub fn new(min: [usize; 3], max: [usize; 3], source_dims: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if min[a] > max[a] || max[a] >= source_dims[a] {
                return Err(Error::BoxMismatch(format!(
                    "axis {a}: [{}, {}] does not fit in {}",
                    min[a], max[a], source_dims[a]
                )));
            }
        }
        Ok(Self { min, max, source_dims })
    }

    /// Whole-grid box.
    pub fn full(dims: [usize; 3]) -> Self {
        Self { min: [0; 3], max: dims.map(|d| d - 1), source_dims: dims }
    }

    pub fn dims(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.max[a] - self.min[a] + 1)
    }

    /// Six integers: min xyz then max xyz.
    pub fn to_array(&self) -> [usize; 6] {
        [self.min[0], self.min[1], self.min[2], self.max[0], self.max[1], self.max[2]]
    }

    pub fn from_array(v: [usize; 6], source_dims: [usize; 3]) -> Result<Self> {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], source_dims)
    }

    pub fn contains(&self, other: &RoiBox) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && self.max[a] >= other.max[a])
    }

    fn check_source(&self, meta: &GridMeta) -> Result<()> {
        if meta.dims != self.source_dims {
            return Err(Error::BoxMismatch(format!(
                "box built for {:?}, grid is {:?}",
                self.source_dims, meta.dims
            )));
        }
        Ok(())
    }

    fn sub_meta(&self, meta: &GridMeta) -> GridMeta {
        let origin = [0, 1, 2].map(|a| meta.origin[a] + self.min[a] as f64 * meta.spacing[a]);
        GridMeta { dims: self.dims(), spacing: meta.spacing, origin }
    }
}

/// Tight bounding box of a labelled component.
pub fn bounding_box(records: &[ComponentRecord], label: u32, source_dims: [usize; 3]) -> Result<RoiBox> {
    let r = records.iter().find(|r| r.label == label).ok_or(Error::UnknownLabel(label))?;
    RoiBox::new(r.bbox.min, r.bbox.max, source_dims)
}

/// Grows a box by `margin` voxels on every side, clamped to the grid.
pub fn expand_box(b: &RoiBox, margin: usize) -> RoiBox {
    let min = b.min.map(|v| v.saturating_sub(margin));
    let max = [0, 1, 2].map(|a| (b.max[a].saturating_add(margin)).min(b.source_dims[a] - 1));
    RoiBox { min, max, source_dims: b.source_dims }
}

fn crop_slice<T: Copy>(data: &[T], meta: &GridMeta, b: &RoiBox) -> Vec<T> {
    let [w, h, d] = b.dims();
    let mut out = Vec::with_capacity(w * h * d);
    for z in b.min[2]..=b.max[2] {
        for y in b.min[1]..=b.max[1] {
            let start = meta.index(b.min[0], y, z);
            out.extend_from_slice(&data[start..start + w]);
        }
    }
    out
}

pub fn crop_volume(v: &Volume, b: &RoiBox) -> Result<Volume> {
    b.check_source(&v.meta)?;
    Ok(Volume { meta: b.sub_meta(&v.meta), data: crop_slice(&v.data, &v.meta, b) })
}

pub fn crop_mask(m: &Mask, b: &RoiBox) -> Result<Mask> {
    b.check_source(&m.meta)?;
    Ok(Mask { meta: b.sub_meta(&m.meta), data: crop_slice(&m.data, &m.meta, b) })
}

/// Voxel-wise OR of every ROI mask placed at its box; zero elsewhere.
pub fn paste_back(full: &GridMeta, items: &[(RoiBox, Mask)]) -> Result<Mask> {
    let mut out = Mask::zeros(*full);
    for (b, m) in items {
        b.check_source(full)?;
        if m.meta.dims != b.dims() {
            return Err(Error::BoxMismatch(format!("ROI mask {:?} does not match box {:?}", m.meta.dims, b.dims())));
        }
        let w = b.dims()[0];
        let mut src = m.data.chunks_exact(w);
        for z in b.min[2]..=b.max[2] {
            for y in b.min[1]..=b.max[1] {
                let row = src.next().expect("row count checked above");
                let start = full.index(b.min[0], y, z);
                for (o, &s) in out.data[start..start + w].iter_mut().zip(row) {
                    *o |= s;
                }
            }
        }
    }
    Ok(out)
}
