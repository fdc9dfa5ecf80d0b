//! Thresholding, cubic binary dilation and 3D connected-component labeling.

use serde::{Deserialize, Serialize};

use crate::anatomy::DecisionReason;
use crate::error::{Error, Result};
use crate::par;
use crate::volume::{LabelMap, Mask, Volume};

/// Voxel adjacency used for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors.
    Six,
    /// Face and edge neighbors.
    Eighteen,
    /// Face, edge and corner neighbors.
    TwentySix,
}

impl Connectivity {
    pub fn from_neighbors(n: u8) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            18 => Some(Connectivity::Eighteen),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    pub fn neighbors(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Whether offset `d` (each component in -1..=1, not all zero) is adjacent.
    pub fn admits(self, d: [i64; 3]) -> bool {
        let nonzero = d.iter().filter(|&&c| c != 0).count();
        nonzero > 0
            && match self {
                Connectivity::Six => nonzero == 1,
                Connectivity::Eighteen => nonzero <= 2,
                Connectivity::TwentySix => true,
            }
    }

    /// Offsets preceding the center in x-fastest raster order.
    fn causal_offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1..=0 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                    if before && self.admits([dx, dy, dz]) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Inclusive voxel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BBox {
    pub fn point(p: [usize; 3]) -> Self {
        Self { min: p, max: p }
    }

    pub fn include(&mut self, p: [usize; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn extent(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.max[a] - self.min[a] + 1)
    }

    pub fn contains_point(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] as f64 && p[a] <= self.max[a] as f64)
    }
}

/// Filter state of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentStatus {
    Pending,
    Kept(DecisionReason),
    Discarded(DecisionReason),
}

/// One connected component and its statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub label: u32,
    pub voxels: usize,
    pub bbox: BBox,
    /// Mean voxel coordinate.
    pub centroid: [f64; 3],
    pub overlap_fraction: Option<f64>,
    pub surface_distance: Option<f64>,
    pub status: ComponentStatus,
}

/// Voxel-wise `p >= t`. All probabilities must lie in [0, 1] and `t` in (0, 1).
pub fn threshold_probability(p: &Volume, t: f64) -> Result<Mask> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside (0, 1)")));
    }
    p.check_probability()?;
    let mut data = vec![0u8; p.data.len()];
    par::zip_map(&p.data, &mut data, |&v| u8::from(v as f64 >= t));
    Ok(Mask { meta: p.meta, data })
}

fn dilate_x(src: &[u8], dst: &mut [u8], d0: usize, r: usize) {
    par::for_each_chunk_mut(dst, d0, |row, out| {
        let line = &src[row * d0..(row + 1) * d0];
        // Running count of foreground voxels in the window [x - r, x + r].
        let mut count: usize = line[..r.min(d0)].iter().map(|&v| v as usize).sum();
        for x in 0..d0 {
            if x + r < d0 {
                count += line[x + r] as usize;
            }
            if x > r {
                count -= line[x - r - 1] as usize;
            }
            out[x] = u8::from(count > 0);
        }
    });
}

/// Dilation along y (`axis = 1`) or z (`axis = 2`) as an OR of whole x-rows.
fn dilate_rows(src: &[u8], dst: &mut [u8], dims: [usize; 3], axis: usize, r: usize) {
    let [d0, d1, d2] = dims;
    let slab = d0 * d1;
    par::for_each_chunk_mut(dst, slab, |z, out| {
        for y in 0..d1 {
            let row_out = &mut out[y * d0..(y + 1) * d0];
            row_out.fill(0);
            let (c, len) = if axis == 1 { (y, d1) } else { (z, d2) };
            for k in c.saturating_sub(r)..=(c + r).min(len - 1) {
                let start = if axis == 1 { k * d0 + z * slab } else { y * d0 + k * slab };
                for (o, &s) in row_out.iter_mut().zip(&src[start..start + d0]) {
                    *o |= s;
                }
            }
        }
    });
}

/// Binary dilation with a cubic structuring element of side `2 * radius + 1`,
/// applied `iterations` times. Voxels outside the grid count as background.
pub fn dilate(m: &Mask, radius: usize, iterations: usize) -> Mask {
    if iterations == 0 || radius == 0 {
        return m.clone();
    }
    let dims = m.meta.dims;
    let mut cur = m.data.clone();
    let mut tmp = vec![0u8; cur.len()];
    for _ in 0..iterations {
        dilate_x(&cur, &mut tmp, dims[0], radius);
        dilate_rows(&tmp, &mut cur, dims, 1, radius);
        dilate_rows(&cur, &mut tmp, dims, 2, radius);
        std::mem::swap(&mut cur, &mut tmp);
    }
    Mask { meta: m.meta, data: cur }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

const MAX_LABELS: usize = i32::MAX as usize;

/// Labels connected foreground regions.
///
/// Labels follow first-encounter order in an x-fastest raster scan, so the
/// same mask always yields the same map. Records are sorted by voxel count
/// descending, ties by ascending label.
pub fn label_components(m: &Mask, connectivity: Connectivity) -> Result<(LabelMap, Vec<ComponentRecord>)> {
    let meta = m.meta;
    let [d0, d1, d2] = meta.dims;
    let offsets: Vec<([i64; 3], isize)> = connectivity
        .causal_offsets()
        .into_iter()
        .map(|d| (d, d[0] as isize + d0 as isize * (d[1] as isize + d1 as isize * d[2] as isize)))
        .collect();

    let n = meta.len();
    let mut prov = vec![0u32; n];
    let mut parent: Vec<u32> = vec![0];
    let mut i = 0usize;
    for z in 0..d2 {
        for y in 0..d1 {
            for x in 0..d0 {
                if m.data[i] != 0 {
                    let mut current = 0u32;
                    for &(d, delta) in &offsets {
                        let (nx, ny, nz) = (x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]);
                        if nx < 0 || ny < 0 || nz < 0 || nx >= d0 as i64 || ny >= d1 as i64 {
                            continue;
                        }
                        let l = prov[(i as isize + delta) as usize];
                        if l == 0 {
                            continue;
                        }
                        if current == 0 {
                            current = find(&mut parent, l);
                        } else {
                            let (a, b) = (find(&mut parent, current), find(&mut parent, l));
                            if a != b {
                                let (lo, hi) = (a.min(b), a.max(b));
                                parent[hi as usize] = lo;
                                current = lo;
                            }
                        }
                    }
                    if current == 0 {
                        if parent.len() > u32::MAX as usize - 1 {
                            return Err(Error::TooManyComponents);
                        }
                        current = parent.len() as u32;
                        parent.push(current);
                    }
                    prov[i] = current;
                }
                i += 1;
            }
        }
    }

    let mut final_of = vec![0u32; parent.len()];
    let mut next = 0usize;
    let mut stats: Vec<(usize, BBox, [f64; 3])> = Vec::new();
    for (idx, p) in prov.iter_mut().enumerate() {
        if *p == 0 {
            continue;
        }
        let root = find(&mut parent, *p);
        if final_of[root as usize] == 0 {
            next += 1;
            if next > MAX_LABELS {
                return Err(Error::TooManyComponents);
            }
            final_of[root as usize] = next as u32;
            stats.push((0, BBox::point(meta.coords(idx)), [0.0; 3]));
        }
        let label = final_of[root as usize];
        *p = label;
        let c = meta.coords(idx);
        let s = &mut stats[label as usize - 1];
        s.0 += 1;
        s.1.include(c);
        for a in 0..3 {
            s.2[a] += c[a] as f64;
        }
    }

    let records = build_records(stats);
    Ok((LabelMap { meta, data: prov, num_labels: next as u32 }, records))
}

fn build_records(stats: Vec<(usize, BBox, [f64; 3])>) -> Vec<ComponentRecord> {
    let mut records: Vec<ComponentRecord> = stats
        .into_iter()
        .enumerate()
        .map(|(i, (voxels, bbox, sum))| ComponentRecord {
            label: i as u32 + 1,
            voxels,
            bbox,
            centroid: sum.map(|s| s / voxels as f64),
            overlap_fraction: None,
            surface_distance: None,
            status: ComponentStatus::Pending,
        })
        .collect();
    sort_records(&mut records);
    records
}

/// Voxel count descending, then label ascending.
pub fn sort_records(records: &mut [ComponentRecord]) {
    records.sort_by(|a, b| b.voxels.cmp(&a.voxels).then(a.label.cmp(&b.label)));
}

/// Intersects a label map with `support` and renumbers the surviving
/// components in raster first-encounter order.
///
/// The pipeline groups voxels by labeling a dilated mask, then measures each
/// group on the original (undilated) voxels through this function. Every
/// group containing at least one support voxel survives.
pub fn restrict_labels(labels: &LabelMap, support: &Mask) -> Result<(LabelMap, Vec<ComponentRecord>)> {
    crate::volume::check_grid_compat(&labels.meta, &support.meta)?;
    let meta = labels.meta;
    let mut remap = vec![0u32; labels.num_labels as usize + 1];
    let mut next = 0u32;
    let mut data = vec![0u32; labels.data.len()];
    let mut stats: Vec<(usize, BBox, [f64; 3])> = Vec::new();
    for (idx, (&l, &s)) in labels.data.iter().zip(&support.data).enumerate() {
        if l == 0 || s == 0 {
            continue;
        }
        if remap[l as usize] == 0 {
            next += 1;
            remap[l as usize] = next;
            stats.push((0, BBox::point(meta.coords(idx)), [0.0; 3]));
        }
        let label = remap[l as usize];
        data[idx] = label;
        let c = meta.coords(idx);
        let st = &mut stats[label as usize - 1];
        st.0 += 1;
        st.1.include(c);
        for a in 0..3 {
            st.2[a] += c[a] as f64;
        }
    }
    Ok((LabelMap { meta, data, num_labels: next }, build_records(stats)))
}

/// Foreground voxel indices of one label.
pub fn component_indices(labels: &LabelMap, label: u32) -> Vec<usize> {
    labels.data.iter().enumerate().filter(|(_, &l)| l == label).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::volume::GridMeta;

    fn mask(dims: [usize; 3]) -> Mask {
        Mask::zeros(GridMeta::with_dims(dims).unwrap())
    }

    fn random_mask(dims: [usize; 3], density: f64, rng: &mut ChaCha8Rng) -> Mask {
        let mut m = mask(dims);
        for v in &mut m.data {
            *v = u8::from(rng.random_bool(density));
        }
        m
    }

    /// Brute-force dilation: any set voxel within Chebyshev distance r.
    fn dilate_oracle(m: &Mask, r: i64) -> Mask {
        let mut out = mask(m.meta.dims);
        let d = m.meta.dims.map(|v| v as i64);
        for z in 0..d[2] {
            for y in 0..d[1] {
                for x in 0..d[0] {
                    let mut hit = false;
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let p = [x + dx, y + dy, z + dz];
                                if m.meta.contains(p) && m.get(p[0] as usize, p[1] as usize, p[2] as usize) {
                                    hit = true;
                                }
                            }
                        }
                    }
                    out.set(x as usize, y as usize, z as usize, hit);
                }
            }
        }
        out
    }

    #[test]
    fn threshold_cases() {
        let g = GridMeta::with_dims([3, 3, 3]).unwrap();
        assert!(threshold_probability(&Volume::filled(g, 0.7), 0.5).unwrap().data.iter().all(|&v| v == 1));
        assert!(threshold_probability(&Volume::filled(g, 0.5), 0.5).unwrap().data.iter().all(|&v| v == 1));
        assert!(threshold_probability(&Volume::filled(g, 0.49), 0.5).unwrap().is_blank());
        assert!(matches!(threshold_probability(&Volume::filled(g, 1.2), 0.5), Err(Error::ValueOutOfRange { .. })));
        assert!(threshold_probability(&Volume::filled(g, 0.2), 1.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GridMeta::with_dims([9, 7, 5]).unwrap();
        let v = Volume::new(g, (0..g.len()).map(|_| rng.random::<f32>()).collect()).unwrap();
        let m = threshold_probability(&v, 0.3).unwrap();
        for (p, b) in v.data.iter().zip(&m.data) {
            assert_eq!(*b == 1, *p as f64 >= 0.3);
        }
    }

    #[test]
    fn dilate_single_voxel_gives_cube() {
        let mut m = mask([5, 5, 5]);
        m.set(2, 2, 2, true);
        let d = dilate(&m, 1, 1);
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let inside = (1..=3).contains(&x) && (1..=3).contains(&y) && (1..=3).contains(&z);
                    assert_eq!(d.get(x, y, z), inside);
                }
            }
        }
        assert_eq!(d.count(), 27);
    }

    #[test]
    fn dilate_zero_iterations_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mask([6, 5, 4], 0.2, &mut rng);
        assert_eq!(dilate(&m, 2, 0), m);
    }

    #[test]
    fn dilate_merges_gap_of_one() {
        let mut m = mask([7, 3, 3]);
        m.set(2, 1, 1, true);
        m.set(4, 1, 1, true);
        let (_, before) = label_components(&m, Connectivity::TwentySix).unwrap();
        assert_eq!(before.len(), 2);
        let (_, after) = label_components(&dilate(&m, 1, 1), Connectivity::Six).unwrap();
        assert_eq!(after.len(), 1);
    }

    #[test]
    fn dilate_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let dims = [rng.random_range(1..10), rng.random_range(1..10), rng.random_range(1..10)];
            let m = random_mask(dims, 0.05, &mut rng);
            let r = rng.random_range(1..4);
            assert_eq!(dilate(&m, r, 1), dilate_oracle(&m, r as i64));
        }
    }

    #[test]
    fn empty_mask_labels() {
        let (lm, recs) = label_components(&mask([4, 4, 4]), Connectivity::TwentySix).unwrap();
        assert!(lm.data.iter().all(|&l| l == 0));
        assert_eq!(lm.num_labels, 0);
        assert!(recs.is_empty());
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let mut m = mask([2, 2, 2]);
        m.set(0, 0, 0, true);
        m.set(1, 1, 1, true);
        assert_eq!(label_components(&m, Connectivity::TwentySix).unwrap().1.len(), 1);
        assert_eq!(label_components(&m, Connectivity::Eighteen).unwrap().1.len(), 2);
        assert_eq!(label_components(&m, Connectivity::Six).unwrap().1.len(), 2);

        let mut e = mask([2, 2, 1]);
        e.set(0, 0, 0, true);
        e.set(1, 1, 0, true);
        assert_eq!(label_components(&e, Connectivity::Eighteen).unwrap().1.len(), 1);
        assert_eq!(label_components(&e, Connectivity::Six).unwrap().1.len(), 2);
    }

    #[test]
    fn u_shape_merges_late() {
        // Two prongs joined at the bottom row: provisional labels must merge.
        let mut m = mask([5, 3, 1]);
        for (x, y) in [(0, 0), (4, 0), (0, 1), (4, 1), (0, 2), (1, 2), (2, 2), (3, 2), (4, 2)] {
            m.set(x, y, 0, true);
        }
        let (lm, recs) = label_components(&m, Connectivity::Six).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].voxels, 9);
        assert!(lm.data.iter().all(|&l| l <= 1));
    }

    #[test]
    fn records_sorted_and_labels_first_encounter() {
        let mut m = mask([10, 1, 1]);
        m.set(0, 0, 0, true);
        for x in 3..6 {
            m.set(x, 0, 0, true);
        }
        m.set(8, 0, 0, true);
        let (lm, recs) = label_components(&m, Connectivity::Six).unwrap();
        assert_eq!(lm.data[0], 1);
        assert_eq!(lm.data[3], 2);
        assert_eq!(lm.data[8], 3);
        let order: Vec<_> = recs.iter().map(|r| (r.label, r.voxels)).collect();
        assert_eq!(order, vec![(2, 3), (1, 1), (3, 1)]);
        assert_eq!(recs[0].bbox, BBox { min: [3, 0, 0], max: [5, 0, 0] });
        assert_eq!(recs[0].centroid, [4.0, 0.0, 0.0]);
        assert_eq!(recs[0].status, ComponentStatus::Pending);
    }

    #[test]
    fn restrict_renumbers() {
        let mut m = mask([6, 1, 1]);
        m.set(1, 0, 0, true);
        m.set(3, 0, 0, true);
        let dilated = dilate(&m, 1, 1);
        let (lm, _) = label_components(&dilated, Connectivity::Six).unwrap();
        assert_eq!(lm.num_labels, 1);
        let (r, recs) = restrict_labels(&lm, &m).unwrap();
        assert_eq!(r.data, vec![0, 1, 0, 1, 0, 0]);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].voxels, 2);
        assert_eq!(recs[0].centroid, [2.0, 0.0, 0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dilation_is_extensive_and_monotone(seed in any::<u64>(), r in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let small = random_mask([7, 6, 5], 0.08, &mut rng);
            let mut big = small.clone();
            for v in &mut big.data {
                if rng.random_bool(0.05) { *v = 1; }
            }
            let ds = dilate(&small, r, 1);
            let db = dilate(&big, r, 1);
            for i in 0..small.data.len() {
                prop_assert!(ds.data[i] >= small.data[i]);
                prop_assert!(db.data[i] >= ds.data[i]);
            }
        }

        #[test]
        fn radius_r_equals_r_unit_steps(seed in any::<u64>(), r in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mask([9, 8, 7], 0.03, &mut rng);
            prop_assert_eq!(dilate(&m, r, 1), dilate(&m, 1, r));
        }

        #[test]
        fn dilation_commutes_with_translation(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = mask([12, 12, 12]);
            let mut b = mask([12, 12, 12]);
            for _ in 0..6 {
                let p = [rng.random_range(2..8), rng.random_range(2..8), rng.random_range(2..8)];
                a.set(p[0], p[1], p[2], true);
                b.set(p[0] + 1, p[1] + 1, p[2] + 1, true);
            }
            let (da, db) = (dilate(&a, 1, 1), dilate(&b, 1, 1));
            for z in 0..11 { for y in 0..11 { for x in 0..11 {
                prop_assert_eq!(da.get(x, y, z), db.get(x + 1, y + 1, z + 1));
            }}}
        }

        #[test]
        fn record_voxels_sum_to_foreground(seed in any::<u64>(), c in 0usize..3) {
            let conn = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix][c];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mask([8, 7, 6], 0.3, &mut rng);
            let (lm, recs) = label_components(&m, conn).unwrap();
            prop_assert_eq!(recs.iter().map(|r| r.voxels).sum::<usize>(), m.count());
            prop_assert_eq!(lm.num_labels as usize, recs.len());
            for r in &recs {
                prop_assert!(r.bbox.contains_point(r.centroid));
            }
            let (again, _) = label_components(&m, conn).unwrap();
            prop_assert_eq!(again, lm);
        }
    }
}
