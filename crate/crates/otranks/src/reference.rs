//! Reference measures on compact convex supports.
//!
//! Three measures are supported: the uniform law on the unit cube [0,1]^d,
//! the uniform law on the unit ball, and the spherical-uniform law that
//! draws a direction uniformly on the sphere and an independent radius
//! uniform on [0,1]. The spherical-uniform law is not the uniform law on
//! the ball; the ball needs radius U^{1/d}.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Cube,
    Ball,
    Spherical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceMeasure {
    pub kind: ReferenceKind,
    pub d: usize,
}

impl ReferenceMeasure {
    pub fn new(kind: ReferenceKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self { kind, d })
    }

    pub fn cube(d: usize) -> Result<Self> {
        Self::new(ReferenceKind::Cube, d)
    }

    pub fn ball(d: usize) -> Result<Self> {
        Self::new(ReferenceKind::Ball, d)
    }

    pub fn spherical(d: usize) -> Result<Self> {
        Self::new(ReferenceKind::Spherical, d)
    }

    /// Diameter of the support; the step-size scale for rank ascent.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            ReferenceKind::Cube => (self.d as f64).sqrt(),
            ReferenceKind::Ball | ReferenceKind::Spherical => 2.0,
        }
    }

    /// Center of the support.
    pub fn center(&self) -> Vec<f64> {
        match self.kind {
            ReferenceKind::Cube => vec![0.5; self.d],
            ReferenceKind::Ball | ReferenceKind::Spherical => vec![0.0; self.d],
        }
    }

    /// Closed-support membership. Sampled points always pass; the ball test
    /// carries a 1e-12 slack on the squared norm for round-off on the
    /// direction normalization.
    pub fn contains(&self, u: &[f64]) -> Result<bool> {
        if u.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: u.len(),
            });
        }
        Ok(match self.kind {
            ReferenceKind::Cube => u.iter().all(|&x| (0.0..=1.0).contains(&x)),
            ReferenceKind::Ball | ReferenceKind::Spherical => {
                u.iter().map(|&x| x * x).sum::<f64>() <= 1.0 + 1e-12
            }
        })
    }

    /// Halfspaces {u : <normal, u> + offset >= 0} whose intersection is the
    /// support. Available for the cube only.
    pub fn support_halfspaces(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        match self.kind {
            ReferenceKind::Cube => {
                let mut hs = Vec::with_capacity(2 * self.d);
                for j in 0..self.d {
                    let mut lo = vec![0.0; self.d];
                    lo[j] = 1.0; // u_j >= 0
                    hs.push((lo, 0.0));
                    let mut hi = vec![0.0; self.d];
                    hi[j] = -1.0; // u_j <= 1
                    hs.push((hi, 1.0));
                }
                Some(hs)
            }
            ReferenceKind::Ball | ReferenceKind::Spherical => None,
        }
    }

    /// Project a point onto the support. Identity for points already inside.
    pub fn project(&self, u: &mut [f64]) {
        match self.kind {
            ReferenceKind::Cube => {
                for x in u.iter_mut() {
                    *x = x.clamp(0.0, 1.0);
                }
            }
            ReferenceKind::Ball | ReferenceKind::Spherical => {
                let norm2: f64 = u.iter().map(|&x| x * x).sum();
                if norm2 > 1.0 {
                    let inv = 1.0 / norm2.sqrt();
                    for x in u.iter_mut() {
                        *x *= inv;
                    }
                }
            }
        }
    }

    /// One draw from the measure. Draw order per point: cube uses d
    /// uniforms; ball and spherical use d standard normals (the direction)
    /// followed by one uniform (the radius).
    pub fn sample_one(&self, rng: &mut SeededRng) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.sample_into(rng, &mut out);
        out
    }

    pub fn sample_into(&self, rng: &mut SeededRng, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d);
        match self.kind {
            ReferenceKind::Cube => {
                for x in out.iter_mut() {
                    *x = rng.random::<f64>();
                }
            }
            ReferenceKind::Ball | ReferenceKind::Spherical => {
                let mut norm2;
                // A zero normal vector is astronomically unlikely but would
                // break the normalization, hence the loop.
                loop {
                    norm2 = 0.0;
                    for x in out.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x = z;
                        norm2 += z * z;
                    }
                    if norm2 > 1e-24 {
                        break;
                    }
                }
                let u: f64 = rng.random::<f64>();
                let radius = match self.kind {
                    ReferenceKind::Ball => u.powf(1.0 / self.d as f64),
                    _ => u,
                };
                let scale = radius / norm2.sqrt();
                for x in out.iter_mut() {
                    *x *= scale;
                }
            }
        }
    }

    pub fn sample(&self, count: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from;
    use crate::stats::ks_test_uniform;

    #[test]
    fn rejects_zero_dimension() {
        assert!(ReferenceMeasure::cube(0).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_contained() {
        for kind in [
            ReferenceKind::Cube,
            ReferenceKind::Ball,
            ReferenceKind::Spherical,
        ] {
            for d in [1, 2, 3] {
                let m = ReferenceMeasure::new(kind, d).unwrap();
                let a = m.sample(64, &mut rng_from(7));
                let b = m.sample(64, &mut rng_from(7));
                assert_eq!(a, b);
                for p in &a {
                    assert!(m.contains(p).unwrap());
                }
            }
        }
    }

    #[test]
    fn ball_sample_mean_near_origin() {
        let m = ReferenceMeasure::ball(3).unwrap();
        let pts = m.sample(10_000, &mut rng_from(3));
        for j in 0..3 {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64;
            assert!(mean.abs() < 0.05, "component {j} mean {mean}");
        }
    }

    #[test]
    fn spherical_radii_are_uniform() {
        let m = ReferenceMeasure::spherical(2).unwrap();
        let pts = m.sample(10_000, &mut rng_from(5));
        let radii: Vec<f64> = pts
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .collect();
        let (_, p) = ks_test_uniform(&radii);
        assert!(p > 0.001, "KS p-value {p}");
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn ball_radii_are_not_uniform() {
        // r = U^{1/2} in d=2, so mean radius is 2/3.
        let m = ReferenceMeasure::ball(2).unwrap();
        let pts = m.sample(10_000, &mut rng_from(5));
        let mean = pts
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .sum::<f64>()
            / pts.len() as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.005);
    }

    #[test]
    fn membership_examples() {
        let cube = ReferenceMeasure::cube(2).unwrap();
        assert!(cube.contains(&[0.5, 0.5]).unwrap());
        assert!(cube.contains(&[1.0, 1.0]).unwrap());
        assert!(!cube.contains(&[1.1, 0.2]).unwrap());
        assert!(cube.contains(&[0.5]).is_err());
        let ball = ReferenceMeasure::ball(2).unwrap();
        assert!(!ball.contains(&[0.8, 0.8]).unwrap());
        assert!(ball.contains(&[0.8, 0.2]).unwrap());
    }

    #[test]
    fn cube_halfspaces_bound_the_square() {
        let cube = ReferenceMeasure::cube(2).unwrap();
        let hs = cube.support_halfspaces().unwrap();
        assert_eq!(hs.len(), 4);
        // every sampled point satisfies all halfspaces
        let pts = cube.sample(256, &mut rng_from(1));
        for p in &pts {
            for (a, b) in &hs {
                let v: f64 = a.iter().zip(p).map(|(ai, pi)| ai * pi).sum::<f64>() + b;
                assert!(v >= 0.0);
            }
        }
        assert!(ReferenceMeasure::ball(2).unwrap().support_halfspaces().is_none());
    }

    #[test]
    fn serialization_shape() {
        let m = ReferenceMeasure::spherical(3).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"kind":"spherical","d":3}"#);
        let back: ReferenceMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
