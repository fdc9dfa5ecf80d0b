//! Exact Euclidean distance transform and boundary extraction.
//!
//! The transform is the separable lower-envelope-of-parabolas algorithm run
//! once per axis on squared distances, with per-axis spacing folded into
//! each 1D pass. Distances are exact up to floating-point rounding.

use crate::par;
use crate::volume::{GridMeta, Mask};

/// Squared 1D distance transform of `f` sampled at unit steps scaled by
/// `step`. Entries equal to `f64::INFINITY` are not sites.
fn edt_1d(f: &[f64], step: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    let s2 = step * step;
    v.clear();
    z.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if v.is_empty() {
            v.push(q);
            z.push(f64::NEG_INFINITY);
            continue;
        }
        let qf = q as f64;
        loop {
            let p = *v.last().unwrap();
            let pf = p as f64;
            let s = ((f[q] + s2 * qf * qf) - (f[p] + s2 * pf * pf)) / (2.0 * s2 * (qf - pf));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
                if v.is_empty() {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let d = (qf - v[k] as f64) * step;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (mm² when `spacing` is in mm) from every voxel
/// to the nearest site. All entries are infinite when there are no sites.
pub fn edt_squared(sites: &Mask, spacing: [f64; 3]) -> Vec<f64> {
    let meta = sites.meta;
    let [d0, d1, d2] = meta.dims;
    let slab = d0 * d1;
    let mut dist: Vec<f64> = sites.data.iter().map(|&s| if s != 0 { 0.0 } else { f64::INFINITY }).collect();

    // x: contiguous rows.
    {
        let src = dist.clone();
        par::for_each_chunk_mut(&mut dist, d0, |row, out| {
            let (mut v, mut z) = (Vec::new(), Vec::new());
            edt_1d(&src[row * d0..(row + 1) * d0], spacing[0], out, &mut v, &mut z);
        });
    }
    // y: lines stay inside one z-slab.
    {
        let src = dist.clone();
        par::for_each_chunk_mut(&mut dist, slab, |zi, out| {
            let base = zi * slab;
            let (mut v, mut z) = (Vec::new(), Vec::new());
            let mut line = vec![0.0; d1];
            let mut res = vec![0.0; d1];
            for x in 0..d0 {
                for y in 0..d1 {
                    line[y] = src[base + x + y * d0];
                }
                edt_1d(&line, spacing[1], &mut res, &mut v, &mut z);
                for y in 0..d1 {
                    out[x + y * d0] = res[y];
                }
            }
        });
    }
    // z: lines cross slabs; compute one xz-plane per y, then scatter.
    if d2 > 1 {
        let planes = par::map_range(d1, |y| {
            let (mut v, mut z) = (Vec::new(), Vec::new());
            let mut line = vec![0.0; d2];
            let mut plane = vec![0.0; d0 * d2];
            for x in 0..d0 {
                for zi in 0..d2 {
                    line[zi] = dist[x + y * d0 + zi * slab];
                }
                edt_1d(&line, spacing[2], &mut plane[x * d2..(x + 1) * d2], &mut v, &mut z);
            }
            plane
        });
        for (y, plane) in planes.iter().enumerate() {
            for x in 0..d0 {
                for zi in 0..d2 {
                    dist[x + y * d0 + zi * slab] = plane[x * d2 + zi];
                }
            }
        }
    }
    dist
}

/// Euclidean distance to the nearest site.
pub fn edt(sites: &Mask, spacing: [f64; 3]) -> Vec<f64> {
    let mut d = edt_squared(sites, spacing);
    par::for_each_chunk_mut(&mut d, par::REDUCE_CHUNK, |_, c| c.iter_mut().for_each(|v| *v = v.sqrt()));
    d
}

/// Foreground voxels with at least one background 6-neighbor; voxels on the
/// grid edge count as touching background.
pub fn boundary(m: &Mask) -> Mask {
    let meta: GridMeta = m.meta;
    let [d0, d1, d2] = meta.dims;
    let slab = d0 * d1;
    let mut out = vec![0u8; m.data.len()];
    par::for_each_chunk_mut(&mut out, slab, |z, o| {
        for y in 0..d1 {
            for x in 0..d0 {
                let i = x + y * d0 + z * slab;
                if m.data[i] == 0 {
                    continue;
                }
                let edge = x == 0 || y == 0 || z == 0 || x + 1 == d0 || y + 1 == d1 || z + 1 == d2;
                let open = edge
                    || m.data[i - 1] == 0
                    || m.data[i + 1] == 0
                    || m.data[i - d0] == 0
                    || m.data[i + d0] == 0
                    || m.data[i - slab] == 0
                    || m.data[i + slab] == 0;
                o[x + y * d0] = u8::from(open);
            }
        }
    });
    Mask { meta, data: out }
}
