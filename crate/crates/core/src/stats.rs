//! Small statistical helpers shared across modules: empirical CDFs,
//! rank statistics and a Kolmogorov–Smirnov distance against Unif(0,1).

use crate::error::{Error, Result};

/// Empirical distribution function F̂(x) = n⁻¹ Σ 1(Xᵢ ≤ x) over a sorted copy
/// of the sample.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Self {
        let mut sorted = sample.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ecdf { sorted }
    }

    pub fn value(&self, x: f64) -> f64 {
        let le = self.sorted.partition_point(|&v| v <= x);
        le as f64 / self.sorted.len() as f64
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }
}

/// F̂(xᵢ) for every element of the sample, tie-aware, in O(n log n).
pub fn ecdf_values(sample: &[f64]) -> Vec<f64> {
    let e = Ecdf::new(sample);
    sample.iter().map(|&x| e.value(x)).collect()
}

/// Order statistic X₍ᵣ₎ (1-indexed, ascending) of a sample.
pub fn order_statistic(sample: &[f64], r: usize) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[r - 1]
}

/// Kolmogorov–Smirnov distance of a sample against the standard uniform.
pub fn ks_distance_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let hi = (i + 1) as f64 / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic KS critical value at significance `alpha` for sample size `n`.
pub fn ks_critical_value(alpha: f64, n: usize) -> f64 {
    ((-(alpha / 2.0).ln()) / 2.0).sqrt() / (n as f64).sqrt()
}

/// Mid-ranks (average ranks for ties), 1-based.
pub fn average_ranks(sample: &[f64]) -> Vec<f64> {
    let n = sample.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| sample[a].partial_cmp(&sample[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sample[idx[j + 1]] == sample[idx[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Input("spearman needs two equal-length samples of size >= 2".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Input("constant column in correlation".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_maps_maximum_to_one() {
        let e = Ecdf::new(&[3.0, 1.0, 2.0]);
        assert_eq!(e.value(3.0), 1.0);
        assert_eq!(e.value(1.0), 1.0 / 3.0);
        assert_eq!(e.value(0.5), 0.0);
    }

    #[test]
    fn ks_of_perfect_grid_is_small() {
        let m = 1000;
        let grid: Vec<f64> = (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect();
        assert!(ks_distance_uniform(&grid) < 1.0 / m as f64);
    }

    #[test]
    fn spearman_perfect_monotone() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let yr: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &yr).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_ranks_handle_ties() {
        let r = average_ranks(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }
}
