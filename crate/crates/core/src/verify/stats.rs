//! Sample statistics and Kolmogorov–Smirnov distances.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn std_err(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn second_moment(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() as f64 - 1.0)
}

/// Pearson correlation; `None` when either sample has zero variance.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (vx, vy) = (variance(xs), variance(ys));
    if vx <= 0.0 || vy <= 0.0 || !vx.is_finite() || !vy.is_finite() {
        return None;
    }
    Some(covariance(xs, ys) / (vx * vy).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample KS distance of a sorted sample from `cdf`:
/// `max_i max(i/n − F(x_i), F(x_i) − (i−1)/n)`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<(f64, usize)> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    debug_assert!(
        sample.windows(2).all(|w| w[0] <= w[1]),
        "sample must be sorted"
    );
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let i = i as f64;
            ((i + 1.0) / n - f).max(f - i / n)
        })
        .fold(0.0_f64, f64::max);
    Ok((d, sample.len()))
}

/// Two-sample KS distance `sup_x |F_a(x) − F_b(x)|` for unsorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        // advance past every copy of the smaller value before comparing
        let x = match a[i].total_cmp(&b[j]) {
            Ordering::Greater => b[j],
            _ => a[i],
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Pearson chi-square of the 2×2 table obtained by splitting both samples
/// at their medians.
pub fn median_split_chi2(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (median(xs), median(ys));
    let mut table = [[0.0_f64; 2]; 2];
    for (x, y) in xs.iter().zip(ys) {
        table[(*x > mx) as usize][(*y > my) as usize] += 1.0;
    }
    let n = xs.len() as f64;
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut chi2 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let e = rows[r] * cols[c] / n;
            if e > 0.0 {
                chi2 += (table[r][c] - e).powi(2) / e;
            }
        }
    }
    chi2
}

/// Chi-square(1) critical value at the 1% level.
pub const CHI2_1DF_1PCT: f64 = 6.635;
