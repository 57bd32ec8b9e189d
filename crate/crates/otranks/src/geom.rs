//! Planar geometry for power-diagram cells.
//!
//! Polygons are convex and counterclockwise. Clipping keeps the closed side
//! {u : <a,u> + b >= 0} of a halfplane; every polygon here starts as the
//! unit square and only gets clipped, so convexity is preserved throughout.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeding::SeededRng;

pub type P2 = [f64; 2];

#[inline]
pub fn dot2(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn dist2(a: P2, b: P2) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Vertices of [0,1]^2 in counterclockwise order.
pub fn unit_square() -> Vec<P2> {
    vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
}

#[inline]
fn cross_point(p: P2, q: P2, sp: f64, sq: f64) -> P2 {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Clip a convex polygon to the halfplane {u : <a,u> + b >= 0}.
///
/// Writes the result into `out` (cleared first). Points exactly on the
/// boundary are kept.
pub fn clip_halfplane(poly: &[P2], a: P2, b: f64, out: &mut Vec<P2>) {
    out.clear();
    let n = poly.len();
    if n == 0 {
        return;
    }
    let mut p = poly[n - 1];
    let mut sp = dot2(a, p) + b;
    for &q in poly {
        let sq = dot2(a, q) + b;
        if sp >= 0.0 {
            out.push(p);
            if sq < 0.0 {
                out.push(cross_point(p, q, sp, sq));
            }
        } else if sq >= 0.0 {
            out.push(cross_point(p, q, sp, sq));
        }
        p = q;
        sp = sq;
    }
}

/// clip_halfplane with edge provenance: tags[k] labels the edge leaving
/// vertex k, and every edge created by this cut is labeled `cut_tag`.
/// A convex input stays convex, so the cut introduces at most one exit and
/// one entry crossing.
pub fn clip_halfplane_tagged(
    poly: &[P2],
    tags: &[u32],
    a: P2,
    b: f64,
    cut_tag: u32,
    out: &mut Vec<P2>,
    out_tags: &mut Vec<u32>,
) {
    out.clear();
    out_tags.clear();
    let n = poly.len();
    if n == 0 {
        return;
    }
    let mut p = poly[n - 1];
    let mut tp = tags[n - 1];
    let mut sp = dot2(a, p) + b;
    for (&q, &tq) in poly.iter().zip(tags) {
        let sq = dot2(a, q) + b;
        if sp >= 0.0 {
            out.push(p);
            out_tags.push(tp);
            if sq < 0.0 {
                out.push(cross_point(p, q, sp, sq));
                out_tags.push(cut_tag);
            }
        } else if sq >= 0.0 {
            out.push(cross_point(p, q, sp, sq));
            out_tags.push(tp);
        }
        p = q;
        tp = tq;
        sp = sq;
    }
}

/// Signed area by the shoelace formula; positive for counterclockwise rings.
pub fn polygon_area(poly: &[P2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    let mut p = poly[poly.len() - 1];
    for &q in poly {
        s += p[0] * q[1] - q[0] * p[1];
        p = q;
    }
    0.5 * s
}

/// Area and centroid of a convex counterclockwise polygon.
pub fn polygon_area_centroid(poly: &[P2]) -> Result<(f64, P2)> {
    if poly.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "polygon needs at least 3 vertices, got {}",
            poly.len()
        )));
    }
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut p = poly[poly.len() - 1];
    for &q in poly {
        let w = p[0] * q[1] - q[0] * p[1];
        a2 += w;
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
        p = q;
    }
    if a2.abs() < 1e-300 {
        // Collapsed ring: fall back to the vertex mean so callers that
        // multiply by the (zero) area stay finite.
        let k = poly.len() as f64;
        let mx = poly.iter().map(|v| v[0]).sum::<f64>() / k;
        let my = poly.iter().map(|v| v[1]).sum::<f64>() / k;
        return Ok((0.5 * a2, [mx, my]));
    }
    Ok((0.5 * a2, [cx / (3.0 * a2), cy / (3.0 * a2)]))
}

/// Integral of ||u - x||^2 over a convex ccw polygon.
///
/// Fans the polygon into triangles from its first vertex; the formula per
/// triangle is exact for quadratic integrands.
pub fn integral_sq_dist(poly: &[P2], x: P2) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let a = [poly[0][0] - x[0], poly[0][1] - x[1]];
    let mut total = 0.0;
    for k in 1..poly.len() - 1 {
        let b = [poly[k][0] - x[0], poly[k][1] - x[1]];
        let c = [poly[k + 1][0] - x[0], poly[k + 1][1] - x[1]];
        let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let q = dot2(a, a) + dot2(b, b) + dot2(c, c) + dot2(a, b) + dot2(b, c) + dot2(a, c);
        total += area2 * q;
    }
    total / 12.0
}

/// Membership test for a convex ccw polygon with an absolute slack on the
/// cross products.
pub fn point_in_convex(poly: &[P2], p: P2, slack: f64) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut a = poly[poly.len() - 1];
    for &b in poly {
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross < -slack {
            return false;
        }
        a = b;
    }
    true
}

/// Drop consecutive near-duplicate vertices (including the wrap-around pair).
pub fn dedup_ring(poly: &mut Vec<P2>, eps: f64) {
    if poly.len() < 2 {
        return;
    }
    let e2 = eps * eps;
    let mut out: Vec<P2> = Vec::with_capacity(poly.len());
    for &v in poly.iter() {
        if out.last().map_or(true, |&w| dist2(v, w) > e2) {
            out.push(v);
        }
    }
    while out.len() >= 2 && dist2(out[0], *out.last().unwrap()) <= e2 {
        out.pop();
    }
    *poly = out;
}

/// Uniform draw from a convex ccw polygon: pick a fan triangle with
/// probability proportional to its area, then a uniform point inside it.
pub fn sample_in_polygon(poly: &[P2], rng: &mut SeededRng) -> Result<P2> {
    if poly.len() < 3 {
        return Err(Error::Sampling("polygon has no interior".into()));
    }
    let v0 = poly[0];
    let mut areas = Vec::with_capacity(poly.len() - 2);
    let mut total = 0.0;
    for k in 1..poly.len() - 1 {
        let a2 = (poly[k][0] - v0[0]) * (poly[k + 1][1] - v0[1])
            - (poly[k + 1][0] - v0[0]) * (poly[k][1] - v0[1]);
        let a = a2.max(0.0);
        total += a;
        areas.push(a);
    }
    if total <= 0.0 {
        return Err(Error::Sampling("polygon has zero area".into()));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = areas.len() - 1;
    for (k, a) in areas.iter().enumerate() {
        acc += a;
        if target < acc {
            pick = k;
            break;
        }
    }
    let b = poly[pick + 1];
    let c = poly[pick + 2];
    let r1 = rng.random::<f64>().sqrt();
    let r2 = rng.random::<f64>();
    Ok([
        (1.0 - r1) * v0[0] + r1 * (1.0 - r2) * b[0] + r1 * r2 * c[0],
        (1.0 - r1) * v0[1] + r1 * (1.0 - r2) * b[1] + r1 * r2 * c[1],
    ])
}

/// Intersections of the segment p-q with the circle |u - c| = r.
pub fn segment_circle_intersections(p: P2, q: P2, c: P2, r: f64, out: &mut Vec<P2>) {
    let d = [q[0] - p[0], q[1] - p[1]];
    let f = [p[0] - c[0], p[1] - c[1]];
    let a = dot2(d, d);
    if a == 0.0 {
        return;
    }
    let b = 2.0 * dot2(f, d);
    let cc = dot2(f, f) - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return;
    }
    let sq = disc.sqrt();
    for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
        if (0.0..=1.0).contains(&t) {
            out.push([p[0] + t * d[0], p[1] + t * d[1]]);
        }
    }
}
