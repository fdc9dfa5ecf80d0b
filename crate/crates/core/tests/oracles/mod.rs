//! Slow, obviously-correct reference implementations used by the
//! integration tests and the acceptance suite. None of them call into the
//! library's kernels.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_bits(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<u8> {
    (0..n).map(|_| rng.random_bool(density) as u8).collect()
}

fn offsets(neighbors: u8) -> Vec<[i64; 3]> {
    let mut v = Vec::new();
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let nonzero = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                let ok = match neighbors {
                    6 => nonzero == 1,
                    18 => nonzero == 1 || nonzero == 2,
                    26 => nonzero >= 1,
                    _ => panic!("bad connectivity"),
                };
                if ok {
                    v.push([dx, dy, dz]);
                }
            }
        }
    }
    v
}

/// Breadth-first flood fill; labels are 1-based in raster discovery order.
pub fn flood_fill(data: &[u8], dims: [usize; 3], neighbors: u8) -> Vec<u32> {
    let offs = offsets(neighbors);
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let mut labels = vec![0u32; data.len()];
    let mut next = 0;
    for start in 0..data.len() {
        if data[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            let (x, y, z) = (i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1]));
            for d in &offs {
                let p = [x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]];
                if (0..3).any(|a| p[a] < 0 || p[a] >= dims[a] as i64) {
                    continue;
                }
                let j = idx(p[0] as usize, p[1] as usize, p[2] as usize);
                if data[j] != 0 && labels[j] == 0 {
                    labels[j] = next;
                    q.push_back(j);
                }
            }
        }
    }
    labels
}

/// True when the two labelings induce the same partition (a bijection
/// between label values, with 0 fixed).
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.len() == b.len()
        && a.iter().zip(b).all(|(&x, &y)| {
            (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
        })
}

fn boundary_points(data: &[u8], dims: [usize; 3]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if data[x + dims[0] * (y + dims[1] * z)] == 0 {
                    continue;
                }
                let p = [x as i64, y as i64, z as i64];
                let edge = offsets(6).iter().any(|d| {
                    let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
                    (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as i64)
                        || data[q[0] as usize + dims[0] * (q[1] as usize + dims[1] * q[2] as usize)] == 0
                });
                if edge {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn min_dist(p: &[usize; 3], set: &[[usize; 3]], s: [f64; 3]) -> f64 {
    set.iter()
        .map(|q| (0..3).map(|a| ((p[a] as f64 - q[a] as f64) * s[a]).powi(2)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// All-pairs HD95 with linear interpolation at rank `0.95 (n - 1)`.
pub fn hd95(a: &[u8], b: &[u8], dims: [usize; 3], spacing: [f64; 3]) -> f64 {
    let (ea, eb) = (a.iter().all(|&v| v == 0), b.iter().all(|&v| v == 0));
    if ea && eb {
        return 0.0;
    }
    if ea || eb {
        return f64::INFINITY;
    }
    let (ba, bb) = (boundary_points(a, dims), boundary_points(b, dims));
    let mut all: Vec<f64> = ba.iter().map(|p| min_dist(p, &bb, spacing)).collect();
    all.extend(bb.iter().map(|p| min_dist(p, &ba, spacing)));
    all.sort_by(f64::total_cmp);
    let rank = 0.95 * (all.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    all[lo] + (rank - lo as f64) * (all[hi] - all[lo])
}

/// Two-sided Student-t tail `P(|T| > |t|)` for integer `df`, from the
/// closed-form finite series in `theta = atan(t / sqrt(df))`.
pub fn t_two_sided(t: f64, df: u32) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 3;
            while k <= df - 2 {
                term *= (k - 1) as f64 / k as f64 * c * c;
                sum += term;
                k += 2;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 2;
        while k <= df - 2 {
            term *= (k - 1) as f64 / k as f64 * c * c;
            sum += term;
            k += 2;
        }
        s * sum
    };
    (1.0 - a).clamp(0.0, 1.0)
}

pub fn corr_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    t_two_sided(r * (df / (1.0 - r * r)).sqrt(), n as u32 - 2)
}

/// Two-sided p-values for (n, |r|) computed with 50-digit arithmetic.
pub const FROZEN_P: [(usize, f64, f64); 9] = [
    (5, 0.9, 0.037386073468498633),
    (5, 0.55, 0.33683012874893315),
    (5, 0.0, 1.0),
    (17, 0.9, 8.654661887847953e-7),
    (17, 0.55, 0.022173165553682993),
    (17, 0.0, 1.0),
    (100, 0.9, 4.063405277490598e-37),
    (100, 0.55, 3.0833243501644475e-9),
    (100, 0.0, 1.0),
];

/// Rank by counting: `#less + (#equal + 1) / 2`.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count();
            let eq = xs.iter().filter(|y| *y == x).count();
            less as f64 + (eq as f64 + 1.0) / 2.0
        })
        .collect()
}

/// `wd * soft Dice + wc * mean BCE` with per-voxel weights `a_dice` (inside
/// the Dice sums) and `a_ce`, evaluated directly from the definition.
pub fn weighted_loss(p: &[f64], g: &[u8], a_dice: &[f64], a_ce: &[f64], wd: f64, wc: f64, eps: f64) -> f64 {
    let (mut i, mut sp, mut sg, mut ce) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..p.len() {
        let gk = g[k] as f64;
        i += a_dice[k] * p[k] * gk;
        sp += a_dice[k] * p[k];
        sg += a_dice[k] * gk;
        let q = p[k].clamp(1e-7, 1.0 - 1e-7);
        ce += a_ce[k] * -(gk * q.ln() + (1.0 - gk) * (1.0 - q).ln());
    }
    wd * (1.0 - (2.0 * i + eps) / (sp + sg + eps)) + wc * ce / p.len() as f64
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|k| {
            q[k] = p[k] + h;
            let up = f(&q);
            q[k] = p[k] - h;
            let down = f(&q);
            q[k] = p[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}
