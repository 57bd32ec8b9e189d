//! Deterministic generators for the simulation distributions used by the
//! test suites and the CLI: a banana-shaped cloud, bivariate Gaussians,
//! Gaussian mixtures, and paired univariate laws for independence
//! experiments.
//!
//! Univariate components written N(m, v) take v as a variance, matching the
//! covariance-matrix convention of the bivariate settings. Gamma(3, 2) is
//! shape 3 with rate 2; lnN(0, 0.5) has log-standard-deviation 0.5.

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from};
use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, StandardNormal};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Banana,
    StandardNormal,
    CorrelatedNormal,
    GaussMixture2sII,
    LognormalGamma,
    GaussMixtureIndepIII,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "banana" => Ok(Family::Banana),
            "standard-normal" => Ok(Family::StandardNormal),
            "correlated-normal" => Ok(Family::CorrelatedNormal),
            "gauss-mixture-2s-ii" => Ok(Family::GaussMixture2sII),
            "lognormal-gamma" => Ok(Family::LognormalGamma),
            "gauss-mixture-indep-iii" => Ok(Family::GaussMixtureIndepIII),
            other => Err(Error::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Banana => "banana",
            Family::StandardNormal => "standard-normal",
            Family::CorrelatedNormal => "correlated-normal",
            Family::GaussMixture2sII => "gauss-mixture-2s-ii",
            Family::LognormalGamma => "lognormal-gamma",
            Family::GaussMixtureIndepIII => "gauss-mixture-indep-iii",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Setting {
    I,
    II,
    III,
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" | "1" => Ok(Setting::I),
            "ii" | "2" => Ok(Setting::II),
            "iii" | "3" => Ok(Setting::III),
            other => Err(Error::InvalidArgument(format!("unknown setting '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Vec<Vec<f64>>> {
    if spec.n == 0 {
        return Err(Error::EmptyInput("generator sample count"));
    }
    let GeneratorSpec { family, n, seed } = *spec;
    match family {
        Family::Banana => banana(n, seed),
        Family::StandardNormal => gauss_mixture_2s(Setting::I, n, seed),
        Family::CorrelatedNormal => correlated_normal(n, seed),
        Family::GaussMixture2sII => gauss_mixture_2s(Setting::II, n, seed),
        Family::LognormalGamma => indep_setting(Setting::II, n, seed),
        Family::GaussMixtureIndepIII => indep_setting(Setting::III, n, seed),
    }
}

/// (X + R cos P, X^2 + R sin P) with X ~ U[-1,1], P ~ U[0,2pi],
/// R = 0.2 Z (1 + (1-|X|)/2), Z ~ U[0,1], all independent.
pub fn banana(n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    banana_impl(n, seed, 1.0)
}

fn banana_impl(n: usize, seed: u64, z_scale: f64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::EmptyInput("generator sample count"));
    }
    let mut rng_x = rng_from(derive_seed(seed, "banana-x", 0));
    let mut rng_phi = rng_from(derive_seed(seed, "banana-phi", 0));
    let mut rng_z = rng_from(derive_seed(seed, "banana-z", 0));
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = 2.0 * rng_x.random::<f64>() - 1.0;
        let phi = 2.0 * std::f64::consts::PI * rng_phi.random::<f64>();
        let z = z_scale * rng_z.random::<f64>();
        let r = 0.2 * z * (1.0 + (1.0 - x.abs()) / 2.0);
        out.push(vec![x + r * phi.cos(), x * x + r * phi.sin()]);
    }
    Ok(out)
}

/// Bivariate standard normal (i), the two-component Gaussian mixture (ii),
/// or the banana cloud (iii).
pub fn gauss_mixture_2s(setting: Setting, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::EmptyInput("generator sample count"));
    }
    match setting {
        Setting::I => {
            let mut rng0 = rng_from(derive_seed(seed, "normal-x", 0));
            let mut rng1 = rng_from(derive_seed(seed, "normal-y", 0));
            Ok((0..n)
                .map(|_| {
                    vec![
                        rng0.sample::<f64, _>(StandardNormal),
                        rng1.sample::<f64, _>(StandardNormal),
                    ]
                })
                .collect())
        }
        Setting::II => {
            let mut rng_pick = rng_from(derive_seed(seed, "mix-pick", 0));
            let mut rng_a = rng_from(derive_seed(seed, "mix-a", 0));
            let mut rng_b = rng_from(derive_seed(seed, "mix-b", 0));
            // Cholesky factor of [[5, 2], [2, 5]].
            let l11 = 5.0f64.sqrt();
            let l21 = 2.0 / 5.0f64.sqrt();
            let l22 = (21.0f64 / 5.0).sqrt();
            let s2 = 2.0f64.sqrt();
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                if rng_pick.random::<f64>() < 0.5 {
                    let z1: f64 = rng_a.sample(StandardNormal);
                    let z2: f64 = rng_a.sample(StandardNormal);
                    out.push(vec![5.0 + s2 * z1, s2 * z2]);
                } else {
                    let z1: f64 = rng_b.sample(StandardNormal);
                    let z2: f64 = rng_b.sample(StandardNormal);
                    out.push(vec![l11 * z1, 5.0 + l21 * z1 + l22 * z2]);
                }
            }
            Ok(out)
        }
        Setting::III => banana(n, seed),
    }
}

/// Bivariate normal with unit variances and correlation 0.99.
pub fn correlated_normal(n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::EmptyInput("generator sample count"));
    }
    let mut rng0 = rng_from(derive_seed(seed, "corr-z1", 0));
    let mut rng1 = rng_from(derive_seed(seed, "corr-z2", 0));
    let rho = 0.99f64;
    let tail = (1.0 - rho * rho).sqrt();
    Ok((0..n)
        .map(|_| {
            let z1: f64 = rng0.sample(StandardNormal);
            let z2: f64 = rng1.sample(StandardNormal);
            vec![z1, rho * z1 + tail * z2]
        })
        .collect())
}

/// Columnwise-independent pairs: two standard normals (i), log-normal with
/// Gamma (ii), or two univariate Gaussian mixtures (iii).
pub fn indep_setting(setting: Setting, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::EmptyInput("generator sample count"));
    }
    let mut rng_x = rng_from(derive_seed(seed, "indep-x", 0));
    let mut rng_y = rng_from(derive_seed(seed, "indep-y", 0));
    match setting {
        Setting::I => Ok((0..n)
            .map(|_| {
                vec![
                    rng_x.sample::<f64, _>(StandardNormal),
                    rng_y.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect()),
        Setting::II => {
            let lognormal = LogNormal::new(0.0, 0.5).expect("valid log-normal");
            // Shape 3, rate 2; rand_distr takes a scale.
            let gamma = Gamma::new(3.0, 0.5).expect("valid gamma");
            Ok((0..n)
                .map(|_| vec![lognormal.sample(&mut rng_x), gamma.sample(&mut rng_y)])
                .collect())
        }
        Setting::III => {
            // X ~ 1/4 N(-1, 2) + 3/4 N(5, 3),
            // Y ~ 3/10 N(0, 1/2) + 3/10 N(5, 2) + 2/5 N(-5, 1).
            let x_means = [-1.0, 5.0];
            let x_sds = [2.0f64.sqrt(), 3.0f64.sqrt()];
            let y_means = [0.0, 5.0, -5.0];
            let y_sds = [0.5f64.sqrt(), 2.0f64.sqrt(), 1.0];
            Ok((0..n)
                .map(|_| {
                    let ux: f64 = rng_x.random();
                    let kx = usize::from(ux >= 0.25);
                    let zx: f64 = rng_x.sample(StandardNormal);
                    let uy: f64 = rng_y.random();
                    let ky = if uy < 0.3 {
                        0
                    } else if uy < 0.6 {
                        1
                    } else {
                        2
                    };
                    let zy: f64 = rng_y.sample(StandardNormal);
                    vec![x_means[kx] + x_sds[kx] * zx, y_means[ky] + y_sds[ky] * zy]
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_cov(data: &[Vec<f64>]) -> ([f64; 2], [[f64; 2]; 2]) {
        let n = data.len() as f64;
        let mut m = [0.0f64; 2];
        for row in data {
            m[0] += row[0];
            m[1] += row[1];
        }
        m[0] /= n;
        m[1] /= n;
        let mut c = [[0.0f64; 2]; 2];
        for row in data {
            let d0 = row[0] - m[0];
            let d1 = row[1] - m[1];
            c[0][0] += d0 * d0;
            c[0][1] += d0 * d1;
            c[1][1] += d1 * d1;
        }
        c[0][0] /= n - 1.0;
        c[0][1] /= n - 1.0;
        c[1][0] = c[0][1];
        c[1][1] /= n - 1.0;
        (m, c)
    }

    #[test]
    fn banana_ranges() {
        let data = banana(100_000, 5).unwrap();
        for row in &data {
            assert!((-1.3..=1.3).contains(&row[0]), "{row:?}");
            assert!((-0.3..=1.3).contains(&row[1]), "{row:?}");
        }
    }

    #[test]
    fn banana_zero_radius_is_parabola() {
        let data = banana_impl(1000, 5, 0.0).unwrap();
        for row in &data {
            assert!((row[1] - row[0] * row[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn banana_deterministic() {
        assert_eq!(banana(50, 11).unwrap(), banana(50, 11).unwrap());
        assert_ne!(banana(50, 11).unwrap(), banana(50, 12).unwrap());
    }

    #[test]
    fn standard_normal_moments() {
        let data = gauss_mixture_2s(Setting::I, 100_000, 3).unwrap();
        let (m, c) = mean_cov(&data);
        assert!(m[0].abs() < 0.02 && m[1].abs() < 0.02, "{m:?}");
        assert!((c[0][0] - 1.0).abs() < 0.02, "{c:?}");
        assert!((c[1][1] - 1.0).abs() < 0.02, "{c:?}");
        assert!(c[0][1].abs() < 0.02, "{c:?}");
    }

    #[test]
    fn mixture_two_sample_moments() {
        let data = gauss_mixture_2s(Setting::II, 100_000, 4).unwrap();
        let (m, _) = mean_cov(&data);
        assert!((m[0] - 2.5).abs() < 0.05, "{m:?}");
        assert!((m[1] - 2.5).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn mixture_setting_three_is_banana() {
        assert_eq!(
            gauss_mixture_2s(Setting::III, 100, 9).unwrap(),
            banana(100, 9).unwrap()
        );
    }

    #[test]
    fn correlated_normal_moments() {
        let data = correlated_normal(100_000, 6).unwrap();
        let (m, c) = mean_cov(&data);
        assert!(m[0].abs() < 0.02 && m[1].abs() < 0.02);
        assert!((c[0][0] - 1.0).abs() < 0.02);
        assert!((c[1][1] - 1.0).abs() < 0.02);
        let corr = c[0][1] / (c[0][0] * c[1][1]).sqrt();
        assert!((corr - 0.99).abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn indep_columns_uncorrelated() {
        let data = indep_setting(Setting::I, 100_000, 7).unwrap();
        let (_, c) = mean_cov(&data);
        let corr = c[0][1] / (c[0][0] * c[1][1]).sqrt();
        assert!(corr.abs() < 0.02, "corr {corr}");
    }

    #[test]
    fn lognormal_gamma_supports_and_means() {
        let data = indep_setting(Setting::II, 100_000, 8).unwrap();
        for row in &data {
            assert!(row[0] > 0.0 && row[1] > 0.0);
        }
        let (m, _) = mean_cov(&data);
        // lnN(0, 0.5) has mean exp(0.125); Gamma(3, rate 2) has mean 1.5.
        assert!((m[0] - 0.125f64.exp()).abs() < 0.02, "{m:?}");
        assert!((m[1] - 1.5).abs() < 0.02, "{m:?}");
    }

    #[test]
    fn indep_mixture_means() {
        let data = indep_setting(Setting::III, 100_000, 9).unwrap();
        let (m, _) = mean_cov(&data);
        // X mean 1/4 (-1) + 3/4 (5) = 3.5; Y mean -0.5.
        assert!((m[0] - 3.5).abs() < 0.1, "{m:?}");
        assert!((m[1] + 0.5).abs() < 0.1, "{m:?}");
    }

    #[test]
    fn family_parsing() {
        for name in [
            "banana",
            "standard-normal",
            "correlated-normal",
            "gauss-mixture-2s-ii",
            "lognormal-gamma",
            "gauss-mixture-indep-iii",
        ] {
            let family: Family = name.parse().unwrap();
            assert_eq!(family.name(), name);
        }
        assert!("cauchy".parse::<Family>().is_err());
        assert!("iv".parse::<Setting>().is_err());
    }

    #[test]
    fn generate_dispatch_and_determinism() {
        for family in [
            Family::Banana,
            Family::StandardNormal,
            Family::CorrelatedNormal,
            Family::GaussMixture2sII,
            Family::LognormalGamma,
            Family::GaussMixtureIndepIII,
        ] {
            let spec = GeneratorSpec { family, n: 40, seed: 21 };
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            assert_eq!(a, b, "{family:?}");
            assert_eq!(a.len(), 40);
            assert!(a.iter().all(|r| r.len() == 2 && r.iter().all(|v| v.is_finite())));
        }
        let empty = GeneratorSpec { family: Family::Banana, n: 0, seed: 1 };
        assert!(generate(&empty).is_err());
    }
}
