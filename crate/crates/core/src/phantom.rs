//! Deterministic synthetic thorax cases: two ellipsoid lungs, one spherical
//! tumor, spurious spherical detections and a dropout-like sample stack.
//!
//! All randomness comes from ChaCha8 streams derived from the seed: stream 0
//! places objects, stream 1 flips voxels and stream `2 + t` drives MC sample
//! `t`. Samples are therefore reproducible regardless of how many run in
//! parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anatomy::mediastinal_zone;
use crate::distance::edt_squared;
use crate::error::{Error, Result};
use crate::par;
use crate::uncertainty::SampleStack;
use crate::volume::{GridMeta, Mask, Volume};

/// Number of MC samples in a generated stack.
pub const MC_SAMPLES: usize = 8;

/// Minimum distance in voxels between an exterior spurious sphere and the
/// lung.
pub const EXTERIOR_CLEARANCE: f64 = 8.0;

/// Extra surface-to-surface gap between placed spheres, in voxels. Keeps
/// objects separate after the default dilation.
pub const SPHERE_GAP: f64 = 8.0;

pub const PROB_TUMOR: f32 = 0.9;
pub const PROB_BACKGROUND: f32 = 0.05;
pub const PROB_SPURIOUS: f32 = 0.7;

const MAX_ATTEMPTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TumorZone {
    /// Fully inside a lung, lateral to the mediastinal zone.
    Peripheral,
    /// Centered in the mediastinal zone against a lung's medial surface.
    Mediastinal,
    /// Centered on a lung's lateral surface, partly outside the lung.
    PleuralStraddling,
}

impl std::str::FromStr for TumorZone {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "peripheral" => Ok(TumorZone::Peripheral),
            "mediastinal" => Ok(TumorZone::Mediastinal),
            "pleural-straddling" | "pleural" => Ok(TumorZone::PleuralStraddling),
            other => Err(format!("unknown tumor zone `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: [usize; 3],
    /// Semi-axes (voxels) of the left and right lung ellipsoids.
    pub lung_semi_axes: [[f64; 3]; 2],
    pub tumor_radius: f64,
    pub tumor_zone: TumorZone,
    /// Spurious spheres alternate between lung interior (even index) and
    /// exterior (odd index).
    pub n_spurious: usize,
    pub spurious_radius_range: (f64, f64),
    pub noise_flip_prob: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            dims: [96, 96, 96],
            lung_semi_axes: [[13.0, 22.0, 30.0], [13.0, 22.0, 30.0]],
            tumor_radius: 7.0,
            tumor_zone: TumorZone::Peripheral,
            n_spurious: 0,
            spurious_radius_range: (2.0, 4.0),
            noise_flip_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    fn voxels(&self, dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> + '_ {
        let lo = self.center.map(|c| (c - self.radius).floor().max(0.0) as usize);
        let hi = [0, 1, 2].map(|a| ((self.center[a] + self.radius).ceil() as usize).min(dims[a] - 1));
        (lo[2]..=hi[2]).flat_map(move |z| {
            (lo[1]..=hi[1]).flat_map(move |y| {
                (lo[0]..=hi[0]).filter_map(move |x| {
                    let d2: f64 = [x, y, z].iter().zip(&self.center).map(|(&p, c)| (p as f64 - c).powi(2)).sum();
                    (d2 <= self.radius * self.radius).then_some([x, y, z])
                })
            })
        })
    }

    fn fits(&self, dims: [usize; 3]) -> bool {
        (0..3).all(|a| self.center[a] - self.radius >= 0.0 && self.center[a] + self.radius <= (dims[a] - 1) as f64)
    }

    fn clear_of(&self, other: &Sphere) -> bool {
        let d: f64 = (0..3).map(|a| (self.center[a] - other.center[a]).powi(2)).sum::<f64>().sqrt();
        d >= self.radius + other.radius + SPHERE_GAP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousObject {
    pub sphere: Sphere,
    pub interior: bool,
}

/// Generated case.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub lung: Mask,
    pub gt: Mask,
    pub coarse_prob: Volume,
    pub stack: SampleStack,
    pub tumor: Sphere,
    pub spurious: Vec<SpuriousObject>,
}

fn lung_centers(dims: [usize; 3]) -> [[f64; 3]; 2] {
    let cy = (dims[1] as f64 - 1.0) / 2.0;
    let cz = (dims[2] as f64 - 1.0) / 2.0;
    [[0.27 * dims[0] as f64, cy, cz], [0.73 * dims[0] as f64, cy, cz]]
}

fn validate(spec: &PhantomSpec) -> Result<()> {
    let bad = |m: String| Err(Error::SpecInfeasible(m));
    if spec.dims.iter().any(|&d| d < 8) {
        return bad(format!("dims {:?} too small", spec.dims));
    }
    let centers = lung_centers(spec.dims);
    for (c, axes) in centers.iter().zip(&spec.lung_semi_axes) {
        for a in 0..3 {
            if !(axes[a] > 0.0) || c[a] - axes[a] < 0.0 || c[a] + axes[a] > (spec.dims[a] - 1) as f64 {
                return bad(format!("lung semi-axes {axes:?} do not fit in {:?}", spec.dims));
            }
        }
    }
    if !(spec.tumor_radius > 0.0) || 2.0 * spec.tumor_radius + 1.0 > *spec.dims.iter().min().unwrap() as f64 {
        return bad(format!("tumor radius {} does not fit", spec.tumor_radius));
    }
    let (lo, hi) = spec.spurious_radius_range;
    if !(lo >= 1.0 && hi >= lo) {
        return bad(format!("spurious radius range ({lo}, {hi}) invalid"));
    }
    if !(0.0..=0.1).contains(&spec.noise_flip_prob) {
        return bad(format!("noise flip probability {} outside [0, 0.1]", spec.noise_flip_prob));
    }
    Ok(())
}

fn paint(mask: &mut Mask, s: &Sphere) {
    let dims = mask.meta.dims;
    for [x, y, z] in s.voxels(dims) {
        mask.set(x, y, z, true);
    }
}

fn inside_all(s: &Sphere, m: &Mask) -> bool {
    s.fits(m.meta.dims) && s.voxels(m.meta.dims).all(|[x, y, z]| m.get(x, y, z))
}

fn overlap(s: &Sphere, m: &Mask) -> f64 {
    let (mut n, mut hit) = (0usize, 0usize);
    for [x, y, z] in s.voxels(m.meta.dims) {
        n += 1;
        hit += m.get(x, y, z) as usize;
    }
    if n == 0 { 0.0 } else { hit as f64 / n as f64 }
}

fn sample_in(rng: &mut ChaCha8Rng, lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|a| if hi[a] > lo[a] { rng.random_range(lo[a]..hi[a]) } else { lo[a] })
}

fn place_tumor(spec: &PhantomSpec, lung: &Mask, rng: &mut ChaCha8Rng) -> Result<Sphere> {
    let dims = spec.dims;
    let r = spec.tumor_radius;
    let centers = lung_centers(dims);
    let zone = mediastinal_zone(lung)?;
    for _ in 0..MAX_ATTEMPTS {
        let side = rng.random_range(0..2usize);
        let (c, axes) = (centers[side], spec.lung_semi_axes[side]);
        let lateral = if side == 0 { -1.0 } else { 1.0 };
        let candidate = match spec.tumor_zone {
            TumorZone::Peripheral => {
                let lo = [0, 1, 2].map(|a| c[a] - axes[a]);
                let hi = [0, 1, 2].map(|a| c[a] + axes[a]);
                let s = Sphere { center: sample_in(rng, lo, hi), radius: r };
                if !inside_all(&s, lung) || zone.contains(s.center) {
                    continue;
                }
                s
            }
            TumorZone::Mediastinal => {
                // Against the medial lung surface, centre inside the zone.
                let mx = c[0] - lateral * axes[0] * rng.random_range(0.85..1.0);
                let jitter = [0.0, rng.random_range(-0.3..0.3) * axes[1], rng.random_range(-0.3..0.3) * axes[2]];
                let s = Sphere { center: [mx, c[1] + jitter[1], c[2] + jitter[2]], radius: r };
                if !s.fits(dims) || !zone.contains(s.center) {
                    continue;
                }
                s
            }
            TumorZone::PleuralStraddling => {
                let uy = rng.random_range(-0.3..0.3);
                let uz = rng.random_range(-0.3..0.3);
                let u = [lateral, uy, uz];
                let norm = (0..3).map(|a| (u[a] / axes[a]).powi(2)).sum::<f64>().sqrt();
                let t = 1.0 / norm;
                let unit_len = (u[0] * u[0] + uy * uy + uz * uz).sqrt();
                let mut s = Sphere { center: [0, 1, 2].map(|a| c[a] + t * u[a]), radius: r };
                // Slide along the ray until the overlap lands in [0.3, 0.8].
                let mut ok = false;
                for _ in 0..40 {
                    let o = overlap(&s, lung);
                    let step = if o < 0.3 {
                        -0.5
                    } else if o > 0.8 {
                        0.5
                    } else {
                        ok = true;
                        break;
                    };
                    s.center = [0, 1, 2].map(|a| s.center[a] + step * u[a] / unit_len);
                }
                if !ok || !s.fits(dims) || zone.contains(s.center) {
                    continue;
                }
                s
            }
        };
        return Ok(candidate);
    }
    Err(Error::SpecInfeasible(format!("could not place a {:?} tumor of radius {r}", spec.tumor_zone)))
}

fn place_spurious(
    spec: &PhantomSpec,
    lung: &Mask,
    lung_dist2: &[f64],
    tumor: &Sphere,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SpuriousObject>> {
    let dims = spec.dims;
    let centers = lung_centers(dims);
    let mut placed: Vec<SpuriousObject> = Vec::new();
    let clearance2 = EXTERIOR_CLEARANCE * EXTERIOR_CLEARANCE;
    for i in 0..spec.n_spurious {
        let interior = i % 2 == 0;
        let (lo_r, hi_r) = spec.spurious_radius_range;
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS {
            let radius = if hi_r > lo_r { rng.random_range(lo_r..=hi_r) } else { lo_r };
            let center = if interior {
                let side = rng.random_range(0..2usize);
                let axes = spec.lung_semi_axes[side];
                let c = centers[side];
                sample_in(rng, [0, 1, 2].map(|a| c[a] - axes[a]), [0, 1, 2].map(|a| c[a] + axes[a]))
            } else {
                sample_in(rng, [radius; 3], [0, 1, 2].map(|a| (dims[a] - 1) as f64 - radius))
            };
            let s = Sphere { center, radius };
            if !s.fits(dims) || !s.clear_of(tumor) || !placed.iter().all(|p| s.clear_of(&p.sphere)) {
                continue;
            }
            let good = if interior {
                inside_all(&s, lung)
            } else {
                s.voxels(dims).all(|[x, y, z]| lung_dist2[x + dims[0] * (y + dims[1] * z)] > clearance2)
            };
            if good {
                found = Some(SpuriousObject { sphere: s, interior });
                break;
            }
        }
        placed.push(found.ok_or_else(|| Error::SpecInfeasible(format!("could not place spurious object {i}")))?);
    }
    Ok(placed)
}

/// Builds the lung mask, ground truth, coarse probability map and MC stack.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    validate(spec)?;
    let meta = GridMeta::with_dims(spec.dims)?;
    let dims = spec.dims;

    let mut lung = Mask::zeros(meta);
    for (c, axes) in lung_centers(dims).iter().zip(&spec.lung_semi_axes) {
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = [x as f64, y as f64, z as f64];
                    let q: f64 = (0..3).map(|a| ((p[a] - c[a]) / axes[a]).powi(2)).sum();
                    if q <= 1.0 {
                        lung.set(x, y, z, true);
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let tumor = place_tumor(spec, &lung, &mut rng)?;
    let lung_dist2 = if spec.n_spurious > 1 { edt_squared(&lung, [1.0; 3]) } else { Vec::new() };
    let spurious = place_spurious(spec, &lung, &lung_dist2, &tumor, &mut rng)?;

    let mut gt = Mask::zeros(meta);
    paint(&mut gt, &tumor);

    let mut prob = vec![PROB_BACKGROUND; meta.len()];
    for (p, &g) in prob.iter_mut().zip(&gt.data) {
        if g != 0 {
            *p = PROB_TUMOR;
        }
    }
    for s in &spurious {
        for [x, y, z] in s.sphere.voxels(dims) {
            prob[meta.index(x, y, z)] = PROB_SPURIOUS;
        }
    }
    if spec.noise_flip_prob > 0.0 {
        let mut noise = ChaCha8Rng::seed_from_u64(spec.seed);
        noise.set_stream(1);
        for p in prob.iter_mut() {
            if noise.random_bool(spec.noise_flip_prob) {
                *p = if *p >= 0.5 { PROB_BACKGROUND } else { PROB_TUMOR };
            }
        }
    }
    let coarse_prob = Volume::new(meta, prob)?;

    // Larger jitter within 1.5 voxels of any sphere surface.
    let mut edge = vec![false; meta.len()];
    let all_spheres: Vec<Sphere> = std::iter::once(tumor).chain(spurious.iter().map(|s| s.sphere)).collect();
    for s in &all_spheres {
        let grown = Sphere { center: s.center, radius: s.radius + 1.5 };
        for [x, y, z] in grown.voxels(dims) {
            let d: f64 = [x, y, z].iter().zip(&s.center).map(|(&p, c)| (p as f64 - c).powi(2)).sum::<f64>().sqrt();
            if (d - s.radius).abs() <= 1.5 {
                edge[meta.index(x, y, z)] = true;
            }
        }
    }
    let samples = par::map_range(MC_SAMPLES, |t| {
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
        r.set_stream(2 + t as u64);
        let data: Vec<f32> = coarse_prob
            .data
            .iter()
            .zip(&edge)
            .map(|(&p, &e)| {
                let half_width: f32 = if e { 0.35 } else { 0.03 };
                (p + r.random_range(-half_width..=half_width)).clamp(0.0, 1.0)
            })
            .collect();
        Volume { meta, data }
    });
    let stack = SampleStack::new(samples)?;

    Ok(Phantom { lung, gt, coarse_prob, stack, tumor, spurious })
}
