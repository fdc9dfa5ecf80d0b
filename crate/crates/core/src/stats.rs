//! Product-moment and rank correlation with two-sided Student-t p-values.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Correlation coefficient and its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
}

/// Two-sided p-value of a correlation `r` over `n` pairs, from
/// `t = r sqrt((n - 2) / (1 - r^2))` with `n - 2` degrees of freedom.
///
/// Uses `P(|T| > t) = I_{df / (df + t^2)}(df / 2, 1 / 2)`, which avoids the
/// cancellation of `1 - cdf` in the tail.
pub fn correlation_p_value(r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: n });
    }
    let df = (n - 2) as f64;
    let r2 = r * r;
    if r2 >= 1.0 {
        return Ok(0.0);
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let t2 = r2 * df / (1.0 - r2);
    let x = df / (df + t2);
    Ok(beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0))
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::SequenceLengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: xs.len() });
    }
    Ok(())
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    check_pair(xs, ys)?;
    let r = pearson_r(xs, ys)?;
    Ok(Correlation { r, p: correlation_p_value(r, xs.len())? })
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_linear() {
        let c = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12 && c.p < 1e-6);
        let c = pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap();
        assert!((c.r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn reported_pairing_near_n17() {
        let p = correlation_p_value(-0.55, 17).unwrap();
        assert!((p - 0.021).abs() < 0.002, "{p}");
        // The second reported pair (r = -0.69, p = 0.0021) fits the same n.
        let p = correlation_p_value(-0.69, 17).unwrap();
        assert!((p - 0.0021).abs() < 1e-4, "{p}");
        // Neighbouring n move p away from the reported value.
        assert!((correlation_p_value(-0.55, 15).unwrap() - 0.021).abs() > 0.01);
    }

    #[test]
    fn errors() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::SequenceLengthMismatch(2, 3))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooFewObservations { .. })));
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateVariance)));
        assert!(spearman(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0, 20.0]), vec![1.5, 3.5, 1.5, 5.0, 3.5]);
    }

    #[test]
    fn spearman_monotone() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, 8.0, 27.0, 64.0, 125.0];
        assert!((spearman(&xs, &ys).unwrap().r - 1.0).abs() < 1e-12);
        let down: Vec<f64> = ys.iter().map(|y| -y.ln()).collect();
        assert!((spearman(&xs, &down).unwrap().r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_correlation_p_is_one() {
        assert_eq!(correlation_p_value(0.0, 10).unwrap(), 1.0);
    }

    #[test]
    fn affine_invariance() {
        let xs = [0.3, 1.2, -0.7, 2.2, 0.9, 1.1];
        let ys = [1.0, 0.4, 0.2, 2.0, -1.0, 0.5];
        let a = pearson(&xs, &ys).unwrap();
        let xt: Vec<f64> = xs.iter().map(|x| 3.0 * x + 7.0).collect();
        let b = pearson(&xt, &ys).unwrap();
        assert!((a.r - b.r).abs() < 1e-12 && (a.p - b.p).abs() < 1e-12);
    }
}
