//! Small statistics toolkit: moments, regression, proportions and
//! goodness-of-fit tests used by the estimators and the acceptance checks.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::num::Real;

pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Unbiased sample variance.
pub fn variance<T: Real>(xs: &[T]) -> T {
    let n = xs.len();
    if n < 2 {
        return T::zero();
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(n - 1)
}

pub fn std_error<T: Real>(xs: &[T]) -> T {
    (variance(xs) / T::of_usize(xs.len().max(1))).sqrt()
}

/// Linear quantile (type 7) of unsorted data.
pub fn quantile<T: Real>(xs: &[T], q: f64) -> T {
    assert!(!xs.is_empty(), "quantile of empty sample");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = T::of(h - lo as f64);
    v[lo] + (v[hi] - v[lo]) * w
}

pub fn median<T: Real>(xs: &[T]) -> T {
    quantile(xs, 0.5)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Standard error of the slope under homoscedastic residuals.
    pub slope_stderr: T,
}

pub fn ols<T: Real>(x: &[T], y: &[T]) -> LineFit<T> {
    assert_eq!(x.len(), y.len(), "ols: length mismatch");
    assert!(x.len() >= 2, "ols: need at least two points");
    let mx = mean(x);
    let my = mean(y);
    let sxx: T = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = x.len();
    let slope_stderr = if n > 2 {
        let rss: T = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        (rss / T::of_usize(n - 2) / sxx).sqrt()
    } else {
        T::zero()
    };
    LineFit {
        slope,
        intercept,
        slope_stderr,
    }
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks<T: Real>(xs: &[T]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("NaN in sample"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman<T: Real>(x: &[T], y: &[T]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = ranks(x);
    let ry = ranks(y);
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sided standard normal quantile, e.g. 1.96 for `level = 0.95`.
pub fn z_for_level(level: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_for_level(level);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Pooled two-proportion z statistic. Zero when both proportions coincide.
pub fn two_proportion_z(x1: usize, n1: usize, x2: usize, n2: usize) -> f64 {
    let p1 = x1 as f64 / n1 as f64;
    let p2 = x2 as f64 / n2 as f64;
    let p = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// One-sample KS test of integer data against a CDF on the integers.
///
/// For discrete laws the asymptotic p-value is conservative.
pub fn ks_one_sample_discrete(samples: &[u64], cdf: impl Fn(u64) -> f64) -> KsResult {
    let n = samples.len();
    assert!(n > 0);
    let mut v = samples.to_vec();
    v.sort_unstable();
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < n {
        let x = v[i];
        let mut j = i;
        while j < n && v[j] == x {
            j += 1;
        }
        let f = cdf(x);
        let emp_after = j as f64 / n as f64;
        let emp_before = i as f64 / n as f64;
        let f_before = if x == 0 { 0.0 } else { cdf(x - 1) };
        d = d.max((emp_after - f).abs()).max((emp_before - f_before).abs());
        i = j;
    }
    KsResult {
        statistic: d,
        p_value: ks_p(d, n as f64),
    }
}

/// Two-sample KS test. Ties are handled by evaluating both empirical CDFs
/// after each distinct value, which keeps the p-value conservative.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty());
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    let cmp = |p: &T, q: &T| p.partial_cmp(q).expect("NaN in sample");
    x.sort_by(cmp);
    y.sort_by(cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n || j < m {
        let v = match (x.get(i), y.get(j)) {
            (Some(&p), Some(&q)) => {
                if p <= q {
                    p
                } else {
                    q
                }
            }
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    KsResult {
        statistic: d,
        p_value: ks_p(d, n_eff),
    }
}

/// Pearson chi-square goodness of fit; returns (statistic, p-value).
pub fn chi_square(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_probs)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}
