//! Piecewise-affine potentials u -> max_i { <u, X_i> + h_i } and the power
//! cells they induce on the reference support.
//!
//! The potential is immutable after construction. Weights are stored under
//! the gauge sum(h) = 0; `from_gauged` skips the re-centering so that
//! deserialized models keep their exact bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, P2};

/// Absolute slack for active-set membership and assignment ties.
pub const ACTIVE_SLACK: f64 = 1e-12;

/// One cell of the induced decomposition. `vertices` is a counterclockwise
/// ring for d=2 and the pair of interval endpoints for d=1; empty cells
/// carry no vertices and measure 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub site: usize,
    pub vertices: Vec<Vec<f64>>,
    pub measure: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseAffinePotential {
    points: Vec<Vec<f64>>,
    h: Vec<f64>,
    d: usize,
}

fn validate(points: &[Vec<f64>], h: &[f64]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::EmptyInput("potential needs at least one site"));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("sites must have positive dimension".into()));
    }
    for row in points {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("site coordinates must be finite".into()));
        }
    }
    if h.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: h.len(),
        });
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    // Duplicate detection via lexicographic sort; cells are ill-defined for
    // coincident sites with equal weights.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .find_map(|(x, y)| x.partial_cmp(y).filter(|c| c.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::DuplicateSite { first: a, second: b });
        }
    }
    Ok(d)
}

impl PiecewiseAffinePotential {
    /// Build a potential, re-centering the weights to sum(h) = 0.
    pub fn new(points: Vec<Vec<f64>>, mut h: Vec<f64>) -> Result<Self> {
        let d = validate(&points, &h)?;
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        for w in &mut h {
            *w -= mean;
        }
        Ok(Self { points, h, d })
    }

    /// Build a potential from weights that are already gauged, preserving
    /// their exact bit patterns (used when loading saved models).
    pub fn from_gauged(points: Vec<Vec<f64>>, h: Vec<f64>) -> Result<Self> {
        let d = validate(&points, &h)?;
        Ok(Self { points, h, d })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.h
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Value of the potential at u together with the set of plane indices
    /// attaining the max within `ACTIVE_SLACK`.
    pub fn eval(&self, u: &[f64]) -> Result<(f64, Vec<usize>)> {
        self.check_dim(u)?;
        let mut best = f64::NEG_INFINITY;
        for (row, &hi) in self.points.iter().zip(&self.h) {
            let v = dot(row, u) + hi;
            if v > best {
                best = v;
            }
        }
        let mut active = Vec::new();
        for (i, (row, &hi)) in self.points.iter().zip(&self.h).enumerate() {
            if dot(row, u) + hi >= best - ACTIVE_SLACK {
                active.push(i);
            }
        }
        Ok((best, active))
    }

    /// Index of the site whose plane attains the max at u; ties resolve to
    /// the lowest index.
    pub fn assign(&self, u: &[f64]) -> Result<usize> {
        self.check_dim(u)?;
        Ok(self.assign_unchecked(u))
    }

    pub(crate) fn assign_unchecked(&self, u: &[f64]) -> usize {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (i, (row, &hi)) in self.points.iter().zip(&self.h).enumerate() {
            let v = dot(row, u) + hi;
            if v > best {
                best = v;
                arg = i;
            }
        }
        arg
    }

    /// Legendre conjugate evaluated at site i: always -h_i.
    pub fn conjugate_at_site(&self, i: usize) -> Result<f64> {
        if i >= self.n() {
            return Err(Error::SiteIndex { index: i, len: self.n() });
        }
        Ok(-self.h[i])
    }

    /// Envelope intervals on [0,1], one cell per site in increasing site
    /// order; empty cells have zero length and no vertices.
    pub fn cells_1d(&self) -> Result<Vec<PowerCell>> {
        if self.d != 1 {
            return Err(Error::Unsupported(format!(
                "cells_1d requires dimension 1, potential has dimension {}",
                self.d
            )));
        }
        let env = Envelope1d::new(&self.points);
        let mut spans = vec![(0.0f64, 0.0f64); self.n()];
        env.spans_into(&self.h, &mut spans);
        Ok(env
            .order
            .iter()
            .map(|&i| {
                let (a, b) = spans[i as usize];
                PowerCell {
                    site: i as usize,
                    vertices: if b > a { vec![vec![a], vec![b]] } else { Vec::new() },
                    measure: (b - a).max(0.0),
                }
            })
            .collect())
    }

    /// Power cells clipped to the unit square, in site order. Vertices are
    /// counterclockwise; measures are polygon areas.
    pub fn cells_2d(&self) -> Result<Vec<PowerCell>> {
        if self.d != 2 {
            return Err(Error::Unsupported(format!(
                "cells_2d requires dimension 2, potential has dimension {}",
                self.d
            )));
        }
        let diagram = Diagram2d::new(&self.points);
        let mut poly = Vec::new();
        let mut tmp = Vec::new();
        let h_max = self.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            diagram.cell_into(i, &self.h, h_max, &mut poly, &mut tmp);
            geom::dedup_ring(&mut poly, 1e-12);
            let measure = if poly.len() >= 3 { geom::polygon_area(&poly) } else { 0.0 };
            out.push(PowerCell {
                site: i,
                vertices: if poly.len() >= 3 {
                    poly.iter().map(|p| vec![p[0], p[1]]).collect()
                } else {
                    Vec::new()
                },
                measure,
            });
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Upper envelope of lines x_i * u + h_i over [0,1]. Sites are fixed at
/// construction; weights vary per call, which lets solvers reuse the sorted
/// order across iterations.
pub(crate) struct Envelope1d {
    xs: Vec<f64>,
    /// Site indices sorted by increasing coordinate.
    pub(crate) order: Vec<u32>,
}

impl Envelope1d {
    pub fn new(points: &[Vec<f64>]) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let mut order: Vec<u32> = (0..xs.len() as u32).collect();
        order.sort_by(|&a, &b| xs[a as usize].partial_cmp(&xs[b as usize]).unwrap());
        Self { xs, order }
    }

    /// Envelope pieces as (site, start, end) clipped to [0,1], increasing
    /// coordinate order, empty pieces omitted.
    pub fn pieces(&self, h: &[f64]) -> Vec<(usize, f64, f64)> {
        // Stack algorithm over lines in increasing slope order. Slopes are
        // strictly increasing because duplicate sites are rejected.
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(self.order.len());
        for &idx in &self.order {
            let i = idx as usize;
            loop {
                match stack.last() {
                    None => {
                        stack.push((idx, f64::NEG_INFINITY));
                        break;
                    }
                    Some(&(top, top_start)) => {
                        let t = top as usize;
                        let cross = (h[t] - h[i]) / (self.xs[i] - self.xs[t]);
                        if cross <= top_start {
                            stack.pop();
                        } else {
                            stack.push((idx, cross));
                            break;
                        }
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(stack.len());
        for (k, &(idx, start)) in stack.iter().enumerate() {
            let end = stack.get(k + 1).map_or(f64::INFINITY, |&(_, s)| s);
            let a = start.max(0.0);
            let b = end.min(1.0);
            if b > a {
                out.push((idx as usize, a, b));
            }
        }
        out
    }

    /// Interval per site (zero-length when the site is off the envelope).
    pub fn spans_into(&self, h: &[f64], out: &mut [(f64, f64)]) {
        out.fill((0.0, 0.0));
        for (i, a, b) in self.pieces(h) {
            out[i] = (a, b);
        }
    }

    pub fn measures_into(&self, h: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, a, b) in self.pieces(h) {
            out[i] = b - a;
        }
    }

    /// Fills measures and returns the envelope integral over [0,1]:
    /// sum_i x_i (b^2 - a^2)/2 + h_i (b - a).
    pub fn measures_and_integral(&self, h: &[f64], out: &mut [f64]) -> f64 {
        out.fill(0.0);
        let mut total = 0.0;
        for (i, a, b) in self.pieces(h) {
            out[i] = b - a;
            total += self.xs[i] * (b * b - a * a) * 0.5 + h[i] * (b - a);
        }
        total
    }

    /// Off-diagonal Hessian magnitudes of the measure map: adjacent envelope
    /// pieces couple with weight 1/(x_j - x_i). A breakpoint clamped to a
    /// domain end does not move with h, so it contributes nothing.
    pub fn laplacian_pairs(&self, h: &[f64], out: &mut Vec<(u32, u32, f64)>) {
        out.clear();
        for w in self.pieces(h).windows(2) {
            let (i, _, end) = w[0];
            let (j, start, _) = w[1];
            if start <= 0.0 || start >= 1.0 || end <= 0.0 || end >= 1.0 {
                continue;
            }
            let wgt = 1.0 / (self.xs[j] - self.xs[i]);
            out.push((i.min(j) as u32, i.max(j) as u32, wgt));
        }
    }
}

/// Edge tag for the sides of the unit square in tagged clipping.
const BOX_TAG: u32 = u32::MAX;

/// Power diagram engine on the unit square. Site geometry (including the
/// per-site neighbor order by distance) is precomputed once; each call
/// takes the current weights, so descent loops pay only the clipping cost.
pub(crate) struct Diagram2d {
    n: usize,
    px: Vec<f64>,
    py: Vec<f64>,
    norm2: Vec<f64>,
    max_norm2: f64,
    /// Flattened (n-1)-blocks of neighbor indices, each block sorted by
    /// distance from the block's site.
    neighbors: Vec<u32>,
    dists: Vec<f64>,
}

impl Diagram2d {
    pub fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let px: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let py: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let norm2: Vec<f64> = px.iter().zip(&py).map(|(x, y)| x * x + y * y).collect();
        let max_norm2 = norm2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut neighbors = Vec::with_capacity(n.saturating_sub(1) * n);
        let mut dists = Vec::with_capacity(neighbors.capacity());
        let mut block: Vec<(f64, u32)> = Vec::with_capacity(n);
        for i in 0..n {
            block.clear();
            for j in 0..n {
                if j != i {
                    let dx = px[j] - px[i];
                    let dy = py[j] - py[i];
                    block.push(((dx * dx + dy * dy).sqrt(), j as u32));
                }
            }
            block.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for &(d, j) in &block {
                neighbors.push(j);
                dists.push(d);
            }
        }
        Self { n, px, py, norm2, max_norm2, neighbors, dists }
    }

    /// Clip cell `i` into `poly`. `h_max` must be max(h). Neighbors whose
    /// bisector provably misses the running polygon are skipped; the scan
    /// stops once no farther neighbor can cut, which keeps typical cells at
    /// a handful of clips.
    pub fn cell_into(&self, i: usize, h: &[f64], h_max: f64, poly: &mut Vec<P2>, tmp: &mut Vec<P2>) {
        poly.clear();
        poly.extend_from_slice(&geom::unit_square());
        if self.n == 1 {
            return;
        }
        // Lower bound for (|X_i|^2 - |X_j|^2)/2 + h_i - h_j over all j.
        let c_min = 0.5 * (self.norm2[i] - self.max_norm2) + h[i] - h_max;
        let mut radius = max_dist_to(poly, self.px[i], self.py[i]);
        let block = (self.n - 1) * i;
        for k in 0..self.n - 1 {
            let j = self.neighbors[block + k] as usize;
            let dj = self.dists[block + k];
            if dj >= radius && 0.5 * dj * dj - radius * dj + c_min >= 0.0 {
                break;
            }
            // Signed margin of X_i against j's halfplane, scaled by d_j.
            let g = 0.5 * dj * dj + 0.5 * (self.norm2[i] - self.norm2[j]) + h[i] - h[j];
            if g >= radius * dj {
                continue;
            }
            let a = [self.px[i] - self.px[j], self.py[i] - self.py[j]];
            let b = h[i] - h[j];
            geom::clip_halfplane(poly, a, b, tmp);
            std::mem::swap(poly, tmp);
            if poly.len() < 3 {
                poly.clear();
                return;
            }
            radius = max_dist_to(poly, self.px[i], self.py[i]);
        }
    }

    pub fn measures_into(&self, h: &[f64], out: &mut [f64]) {
        let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut poly = Vec::new();
        let mut tmp = Vec::new();
        for i in 0..self.n {
            self.cell_into(i, h, h_max, &mut poly, &mut tmp);
            out[i] = if poly.len() >= 3 { geom::polygon_area(&poly) } else { 0.0 };
        }
    }

    /// Fills measures and returns the envelope integral over the square:
    /// sum_i area_i * (<centroid_i, X_i> + h_i).
    pub fn measures_and_integral(&self, h: &[f64], out: &mut [f64]) -> f64 {
        let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut poly = Vec::new();
        let mut tmp = Vec::new();
        let mut total = 0.0;
        for i in 0..self.n {
            self.cell_into(i, h, h_max, &mut poly, &mut tmp);
            if poly.len() < 3 {
                out[i] = 0.0;
                continue;
            }
            let (area, cx, cy) = area_centroid(&poly);
            out[i] = area;
            total += area * (cx * self.px[i] + cy * self.py[i] + h[i]);
        }
        total
    }

    /// cell_into with edge provenance: tags[k] is the neighbor whose bisector
    /// carries the edge leaving vertex k, or BOX_TAG for a square side.
    fn cell_tagged_into(
        &self,
        i: usize,
        h: &[f64],
        h_max: f64,
        poly: &mut Vec<P2>,
        tags: &mut Vec<u32>,
        tmp: &mut Vec<P2>,
        tmp_tags: &mut Vec<u32>,
    ) {
        poly.clear();
        tags.clear();
        poly.extend_from_slice(&geom::unit_square());
        tags.extend_from_slice(&[BOX_TAG; 4]);
        if self.n == 1 {
            return;
        }
        let c_min = 0.5 * (self.norm2[i] - self.max_norm2) + h[i] - h_max;
        let mut radius = max_dist_to(poly, self.px[i], self.py[i]);
        let block = (self.n - 1) * i;
        for k in 0..self.n - 1 {
            let j = self.neighbors[block + k] as usize;
            let dj = self.dists[block + k];
            if dj >= radius && 0.5 * dj * dj - radius * dj + c_min >= 0.0 {
                break;
            }
            let g = 0.5 * dj * dj + 0.5 * (self.norm2[i] - self.norm2[j]) + h[i] - h[j];
            if g >= radius * dj {
                continue;
            }
            let a = [self.px[i] - self.px[j], self.py[i] - self.py[j]];
            let b = h[i] - h[j];
            geom::clip_halfplane_tagged(poly, tags, a, b, j as u32, tmp, tmp_tags);
            std::mem::swap(poly, tmp);
            std::mem::swap(tags, tmp_tags);
            if poly.len() < 3 {
                poly.clear();
                tags.clear();
                return;
            }
            radius = max_dist_to(poly, self.px[i], self.py[i]);
        }
    }

    /// Off-diagonal Hessian magnitudes of the measure map: cells sharing an
    /// edge couple with weight |edge| / |X_i - X_j|. Every interior edge is
    /// seen from both cells; the two lengths are averaged so the matrix comes
    /// out exactly symmetric despite clipping round-off.
    pub fn laplacian_pairs(&self, h: &[f64], out: &mut Vec<(u32, u32, f64)>) {
        out.clear();
        let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut poly = Vec::new();
        let mut tags = Vec::new();
        let mut tmp = Vec::new();
        let mut tmp_tags = Vec::new();
        let mut raw: Vec<(u32, u32, f64)> = Vec::new();
        for i in 0..self.n {
            self.cell_tagged_into(i, h, h_max, &mut poly, &mut tags, &mut tmp, &mut tmp_tags);
            if poly.len() < 3 {
                continue;
            }
            for k in 0..poly.len() {
                let j = tags[k];
                if j == BOX_TAG {
                    continue;
                }
                let p = poly[k];
                let q = poly[(k + 1) % poly.len()];
                let len = geom::dist2(p, q).sqrt();
                if len <= 1e-14 {
                    continue;
                }
                let jj = j as usize;
                let dx = self.px[i] - self.px[jj];
                let dy = self.py[i] - self.py[jj];
                let dist = (dx * dx + dy * dy).sqrt();
                let (a, b) = if (i as u32) < j { (i as u32, j) } else { (j, i as u32) };
                raw.push((a, b, len / dist));
            }
        }
        raw.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut k = 0;
        while k < raw.len() {
            let (a, b, mut sum) = raw[k];
            let mut count = 1.0;
            k += 1;
            while k < raw.len() && raw[k].0 == a && raw[k].1 == b {
                sum += raw[k].2;
                count += 1.0;
                k += 1;
            }
            out.push((a, b, sum / count));
        }
    }

    /// Integral of |u - X_i|^2 over each cell, summed.
    pub fn quadratic_transport(&self, h: &[f64]) -> f64 {
        let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut poly = Vec::new();
        let mut tmp = Vec::new();
        let mut total = 0.0;
        for i in 0..self.n {
            self.cell_into(i, h, h_max, &mut poly, &mut tmp);
            if poly.len() >= 3 {
                total += geom::integral_sq_dist(&poly, [self.px[i], self.py[i]]);
            }
        }
        total
    }
}

fn max_dist_to(poly: &[P2], x: f64, y: f64) -> f64 {
    poly.iter()
        .map(|p| {
            let dx = p[0] - x;
            let dy = p[1] - y;
            (dx * dx + dy * dy).sqrt()
        })
        .fold(0.0f64, f64::max)
}

fn area_centroid(poly: &[P2]) -> (f64, f64, f64) {
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let w = p[0] * q[1] - q[0] * p[1];
        a2 += w;
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    if a2.abs() < 1e-300 {
        let inv = 1.0 / poly.len() as f64;
        let mx = poly.iter().map(|p| p[0]).sum::<f64>() * inv;
        let my = poly.iter().map(|p| p[1]).sum::<f64>() * inv;
        return (0.0, mx, my);
    }
    (0.5 * a2, cx / (3.0 * a2), cy / (3.0 * a2))
}
