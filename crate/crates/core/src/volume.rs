//! Grid geometry and the three voxel containers shared by every stage.
//!
//! All containers use a flat x-fastest layout:
//! `index = x + dims[0] * (y + dims[1] * z)`, the NIfTI on-disk order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for spacing comparisons between grids.
pub const SPACING_RTOL: f64 = 1e-4;

/// Dimensions, voxel spacing (mm) and world origin (mm) of a voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridMeta {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be > 0, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(format!("origin must be finite, got {origin:?}")));
        }
        dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .filter(|&n| n <= isize::MAX as usize)
            .ok_or_else(|| Error::InvalidGrid(format!("voxel count overflows for {dims:?}")))?;
        Ok(Self { dims, spacing, origin })
    }

    /// Unit spacing, zero origin.
    pub fn with_dims(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a])
    }
}

/// Succeeds iff dims agree exactly and spacing agrees within
/// [`SPACING_RTOL`]. Origin differences only log a warning.
pub fn check_grid_compat(a: &GridMeta, b: &GridMeta) -> Result<()> {
    for axis in 0..3 {
        if a.dims[axis] != b.dims[axis] {
            return Err(Error::GridMismatch { axis, left: a.dims[axis], right: b.dims[axis] });
        }
    }
    for axis in 0..3 {
        let (l, r) = (a.spacing[axis], b.spacing[axis]);
        if (l - r).abs() > SPACING_RTOL * l.abs().max(r.abs()) {
            return Err(Error::SpacingMismatch { axis, left: l, right: r });
        }
    }
    if a.origin != b.origin {
        log::warn!("grid origins differ: {:?} vs {:?}", a.origin, b.origin);
    }
    Ok(())
}

/// Scalar voxel grid: probabilities, intensities or uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub meta: GridMeta,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(meta: GridMeta, data: Vec<f32>) -> Result<Self> {
        if data.len() != meta.len() {
            return Err(Error::LengthMismatch { expected: meta.len(), actual: data.len() });
        }
        Ok(Self { meta, data })
    }

    pub fn filled(meta: GridMeta, value: f32) -> Self {
        Self { data: vec![value; meta.len()], meta }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.meta.index(x, y, z)]
    }

    /// Fails with `ValueOutOfRange` on the first voxel outside [0, 1]
    /// (NaN included).
    pub fn check_probability(&self) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(index) => Err(Error::ValueOutOfRange { index, value: self.data[index] as f64 }),
            None => Ok(()),
        }
    }
}

/// Binary voxel grid with values exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub meta: GridMeta,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(meta: GridMeta, data: Vec<u8>) -> Result<Self> {
        if data.len() != meta.len() {
            return Err(Error::LengthMismatch { expected: meta.len(), actual: data.len() });
        }
        if let Some(index) = data.iter().position(|&v| v > 1) {
            return Err(Error::ValueOutOfRange { index, value: data[index] as f64 });
        }
        Ok(Self { meta, data })
    }

    pub fn zeros(meta: GridMeta) -> Self {
        Self { data: vec![0; meta.len()], meta }
    }

    /// Any nonzero voxel becomes foreground.
    pub fn from_volume(v: &Volume) -> Self {
        Self { meta: v.meta, data: v.data.iter().map(|&x| u8::from(x != 0.0)).collect() }
    }

    pub fn to_volume(&self) -> Volume {
        Volume { meta: self.meta, data: self.data.iter().map(|&b| b as f32).collect() }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.meta.index(x, y, z)] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = self.meta.index(x, y, z);
        self.data[i] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        count_foreground(self)
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}

/// Number of foreground voxels.
pub fn count_foreground(m: &Mask) -> usize {
    m.data.iter().map(|&v| v as usize).sum()
}

/// Component label grid: 0 is background, components are numbered 1..=L.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub meta: GridMeta,
    pub data: Vec<u32>,
    pub num_labels: u32,
}

impl LabelMap {
    pub fn to_mask(&self) -> Mask {
        Mask { meta: self.meta, data: self.data.iter().map(|&l| u8::from(l != 0)).collect() }
    }

    /// Foreground mask of the given labels.
    pub fn select(&self, labels: &[u32]) -> Mask {
        let mut keep = vec![false; self.num_labels as usize + 1];
        for &l in labels {
            if let Some(slot) = keep.get_mut(l as usize) {
                *slot = true;
            }
        }
        keep[0] = false;
        Mask { meta: self.meta, data: self.data.iter().map(|&l| u8::from(keep[l as usize])).collect() }
    }
}
