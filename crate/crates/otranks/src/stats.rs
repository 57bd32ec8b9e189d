//! Small statistical helpers used by the test suites: Kolmogorov-Smirnov
//! tests against Uniform[0,1] and between two samples, a chi-square
//! goodness-of-fit test, and QQ pairs.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Asymptotic Kolmogorov survival function 2 sum (-1)^{j-1} exp(-2 j^2 x^2),
/// evaluated with the Stephens small-sample correction applied by callers.
fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * x * x).exp();
        if term < 1e-16 {
            break;
        }
        s += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf(d * (sn + 0.12 + 0.11 / sn))
}

/// One-sample KS test against Uniform[0,1]. Returns (statistic, p-value).
pub fn ks_test_uniform(sample: &[f64]) -> (f64, f64) {
    assert!(!sample.is_empty());
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        let hi = (i + 1) as f64 / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    (d, ks_pvalue(d, n))
}

/// Two-sample KS test. Returns (statistic, p-value).
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    (d, ks_pvalue(d, n_eff))
}

/// Chi-square goodness-of-fit p-value for observed counts against expected
/// counts. Expected counts must be positive and the two sum to the same
/// total.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<f64> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidArgument(
            "observed and expected must have equal positive length".into(),
        ));
    }
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            return Err(Error::InvalidArgument("expected counts must be positive".into()));
        }
        let diff = o as f64 - e;
        stat += diff * diff / e;
    }
    let dof = (observed.len() - 1) as f64;
    let chi = ChiSquared::new(dof)
        .map_err(|e| Error::Numeric(format!("chi-square dof {dof}: {e}")))?;
    Ok(chi.sf(stat))
}

/// Sorted (theoretical, empirical) quantile pairs against Uniform[0,1],
/// using plotting positions (i - 1/2) / n.
pub fn qq_pairs_uniform(sample: &[f64]) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 0.5) / n, x))
        .collect()
}

/// Ordinary least squares slope of y against x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
