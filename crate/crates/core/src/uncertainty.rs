//! MC-dropout uncertainty maps and the uncertainty-weighted segmentation loss.
//!
//! The adaptive loss weights each voxel's Dice contribution by
//! `alpha(x) = exp(-scale * U(x))` and its cross-entropy by `1 - alpha(x)`:
//!
//! ```text
//! dice_term = 1 - (2 Σ α p g + eps) / (Σ α (p + g) + eps)
//! ce_term   = (1 / N) Σ (1 - α) BCE(p, g)
//! ```
//!
//! `alpha` is treated as a constant when differentiating. All sums run in
//! `f64` over a fixed reduction tree, so values do not depend on the number
//! of worker threads.

use crate::error::{Error, Result};
use crate::par;
use crate::volume::{check_grid_compat, Mask, Volume};

/// Probability clamp applied inside the log terms of the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

/// Default smoothing term of the soft Dice ratio.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Stochastic forward passes on one grid.
#[derive(Debug, Clone)]
pub struct SampleStack {
    samples: Vec<Volume>,
}

impl SampleStack {
    pub fn new(samples: Vec<Volume>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples(samples.len()));
        }
        for s in &samples[1..] {
            check_grid_compat(&samples[0].meta, &s.meta)?;
        }
        for s in &samples {
            s.check_probability()?;
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Volume] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-voxel population variance (divide by T) across the stack.
pub fn variance_map(stack: &SampleStack) -> Volume {
    let samples = stack.samples();
    let meta = samples[0].meta;
    let t = samples.len() as f64;
    let mut data = vec![0f32; meta.len()];
    par::for_each_chunk_mut(&mut data, par::REDUCE_CHUNK, |b, out| {
        let base = b * par::REDUCE_CHUNK;
        for (j, o) in out.iter_mut().enumerate() {
            let i = base + j;
            let mean = samples.iter().map(|s| s.data[i] as f64).sum::<f64>() / t;
            let var = samples.iter().map(|s| (s.data[i] as f64 - mean).powi(2)).sum::<f64>() / t;
            *o = var as f32;
        }
    });
    Volume { meta, data }
}

/// `alpha(x) = exp(-scale * U(x))`.
pub fn alpha_map(u: &Volume, scale: f64) -> Result<Volume> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha scale must be > 0, got {scale}")));
    }
    if let Some(index) = u.data.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::NegativeUncertainty { index, value: u.data[index] as f64 });
    }
    let mut data = vec![0f32; u.data.len()];
    par::zip_map(&u.data, &mut data, |&v| (-scale * v as f64).exp() as f32);
    Ok(Volume { meta: u.meta, data })
}

/// Loss value, its two terms, and the gradient with respect to each
/// predicted probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub dice_term: f64,
    pub ce_term: f64,
    pub gradient: Vec<f64>,
}

impl LossResult {
    pub fn gradient_volume(&self, like: &Volume) -> Volume {
        Volume { meta: like.meta, data: self.gradient.iter().map(|&g| g as f32).collect() }
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[inline]
fn bce(p: f64, g: f64) -> f64 {
    let q = clamp_prob(p);
    -(g * q.ln() + (1.0 - g) * (1.0 - q).ln())
}

#[inline]
fn bce_grad(p: f64, g: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    -g / p + (1.0 - g) / (1.0 - p)
}

/// Shared kernel: `w_dice * weighted soft Dice + w_ce * mean weighted BCE`
/// with per-voxel Dice weights `dice_w(i)` and CE weights `ce_w(i)`.
fn weighted_loss<D, C>(p: &[f64], g: &[u8], eps: f64, w_dice: f64, w_ce: f64, dice_w: D, ce_w: C) -> LossResult
where
    D: Fn(usize) -> f64 + Sync + Send,
    C: Fn(usize) -> f64 + Sync + Send,
{
    let n = p.len();
    let [inter, denom, ce_sum] = par::sum_range_n(n, |i| {
        let gi = g[i] as f64;
        let a = dice_w(i);
        [a * p[i] * gi, a * (p[i] + gi), ce_w(i) * bce(p[i], gi)]
    });
    let num = 2.0 * inter + eps;
    let den = denom + eps;
    let soft_dice = 1.0 - num / den;
    let mean_ce = if n == 0 { 0.0 } else { ce_sum / n as f64 };
    let dice_term = w_dice * soft_dice;
    let ce_term = w_ce * mean_ce;

    let mut gradient = vec![0.0; n];
    let inv_n = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    par::for_each_chunk_mut(&mut gradient, par::REDUCE_CHUNK, |b, out| {
        let base = b * par::REDUCE_CHUNK;
        for (j, o) in out.iter_mut().enumerate() {
            let i = base + j;
            let gi = g[i] as f64;
            let a = dice_w(i);
            // d/dp [1 - num/den] with d num = 2 a g, d den = a.
            let d_dice = -(2.0 * a * gi * den - num * a) / (den * den);
            let d_ce = ce_w(i) * bce_grad(p[i], gi) * inv_n;
            *o = w_dice * d_dice + w_ce * d_ce;
        }
    });
    LossResult { value: dice_term + ce_term, dice_term, ce_term, gradient }
}

fn check_inputs(p: &[f64], g: &[u8], eps: f64) -> Result<()> {
    if p.len() != g.len() {
        return Err(Error::LengthMismatch { expected: g.len(), actual: p.len() });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    if let Some(index) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::ValueOutOfRange { index, value: p[index] });
    }
    if let Some(index) = g.iter().position(|&v| v > 1) {
        return Err(Error::ValueOutOfRange { index, value: g[index] as f64 });
    }
    Ok(())
}

/// Uncertainty-weighted loss on raw slices.
pub fn adaptive_loss_slices(p: &[f64], g: &[u8], alpha: &[f64], eps: f64) -> Result<LossResult> {
    check_inputs(p, g, eps)?;
    if alpha.len() != p.len() {
        return Err(Error::LengthMismatch { expected: p.len(), actual: alpha.len() });
    }
    if let Some(index) = alpha.iter().position(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::ValueOutOfRange { index, value: alpha[index] });
    }
    Ok(weighted_loss(p, g, eps, 1.0, 1.0, |i| alpha[i], |i| 1.0 - alpha[i]))
}

/// Fixed-weight Dice + BCE loss on raw slices.
pub fn dice_ce_loss_slices(p: &[f64], g: &[u8], w_dice: f64, w_ce: f64, eps: f64) -> Result<LossResult> {
    check_inputs(p, g, eps)?;
    if !(w_dice >= 0.0 && w_ce >= 0.0) || (w_dice == 0.0 && w_ce == 0.0) {
        return Err(Error::InvalidArgument(format!("invalid loss weights ({w_dice}, {w_ce})")));
    }
    Ok(weighted_loss(p, g, eps, w_dice, w_ce, |_| 1.0, |_| 1.0))
}

fn widen(v: &Volume) -> Vec<f64> {
    v.data.iter().map(|&x| x as f64).collect()
}

pub fn adaptive_loss(p: &Volume, g: &Mask, alpha: &Volume, eps: f64) -> Result<LossResult> {
    check_grid_compat(&p.meta, &g.meta)?;
    check_grid_compat(&p.meta, &alpha.meta)?;
    adaptive_loss_slices(&widen(p), &g.data, &widen(alpha), eps)
}

pub fn dice_ce_loss(p: &Volume, g: &Mask, w_dice: f64, w_ce: f64, eps: f64) -> Result<LossResult> {
    check_grid_compat(&p.meta, &g.meta)?;
    dice_ce_loss_slices(&widen(p), &g.data, w_dice, w_ce, eps)
}
