//! Transport maps read off a fitted potential: the quantile map (cell
//! assignment), the rank map (maximizer of the conjugate objective
//! g(u) = <u,y> - psi(u) over the support), randomized and deterministic
//! ranks at data points, the center-outward depth, and local deviation
//! diagnostics.

use crate::error::{Error, Result};
use crate::geom::{self, P2};
use crate::potential::PowerCell;
use crate::reference::{ReferenceKind, ReferenceMeasure};
use crate::seeding::{point_keyed_seed, rng_from, SeededRng};
use crate::solver::FittedTransport;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMode {
    /// ExactVertex when the reference is a cube of dimension <= 2,
    /// Optimize otherwise.
    Auto,
    /// Enumerate all cell vertices (power-diagram vertices, cell-edge/box
    /// intersections and box corners) and return the best, breaking value
    /// ties by lexicographically smallest point.
    ExactVertex,
    /// Projected supergradient ascent with iterate averaging, refined by an
    /// active-plane polish step; keeps the first maximizer found.
    Optimize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankSolution {
    /// Maximizer u* in the support.
    pub point: Vec<f64>,
    /// Achieved objective g(u*), i.e. the conjugate value at the query.
    pub value: f64,
}

/// Number of fixed seeded probe points folded into every optimize-mode
/// search; they double as the dominance part of the certificate.
const RANK_PROBES: usize = 64;
const RANK_PROBE_SALT: u64 = 0x72616e6b;
const CERT_TOL: f64 = 1e-8;

/// Empirical quantile map: the data point whose cell contains u.
pub fn quantile(fitted: &FittedTransport, u: &[f64]) -> Result<Vec<f64>> {
    if !fitted.reference.contains(u)? {
        return Err(Error::InvalidArgument(
            "quantile query lies outside the reference support".into(),
        ));
    }
    let i = fitted.potential.assign(u)?;
    Ok(fitted.potential.points()[i].clone())
}

struct GFn<'a> {
    points: &'a [Vec<f64>],
    h: &'a [f64],
    y: &'a [f64],
}

impl GFn<'_> {
    /// min_i <u, y - X_i> - h_i together with the attaining index.
    fn eval(&self, u: &[f64]) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0usize;
        for (i, (row, &hi)) in self.points.iter().zip(self.h).enumerate() {
            let mut v = -hi;
            for ((&uj, &yj), &xj) in u.iter().zip(self.y).zip(row) {
                v += uj * (yj - xj);
            }
            if v < best {
                best = v;
                arg = i;
            }
        }
        (best, arg)
    }
}

/// Rank map: a certified maximizer of g(u) = <u,y> - psi(u) over the
/// support, with the achieved conjugate value.
pub fn rank(fitted: &FittedTransport, y: &[f64], mode: RankMode) -> Result<RankSolution> {
    let d = fitted.potential.d();
    if y.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("rank query must be finite".into()));
    }
    let reference = fitted.reference;
    let vertex_ok = reference.kind == ReferenceKind::Cube && d <= 2;
    let mode = match mode {
        RankMode::Auto => {
            if vertex_ok {
                RankMode::ExactVertex
            } else {
                RankMode::Optimize
            }
        }
        m => m,
    };
    let g = GFn { points: fitted.potential.points(), h: fitted.potential.weights(), y };
    let solution = match mode {
        RankMode::ExactVertex => {
            if !vertex_ok {
                return Err(Error::Unsupported(
                    "exact vertex mode needs a cube reference of dimension <= 2".into(),
                ));
            }
            let cells = if d == 1 {
                fitted.potential.cells_1d()?
            } else {
                fitted.potential.cells_2d()?
            };
            rank_by_vertices(&g, &cells)
        }
        RankMode::Optimize => rank_by_ascent(&g, reference),
        RankMode::Auto => unreachable!(),
    };
    certify(&g, fitted, reference, &solution)?;
    Ok(solution)
}

fn rank_by_vertices(g: &GFn, cells: &[PowerCell]) -> RankSolution {
    let mut best_value = f64::NEG_INFINITY;
    let mut ties: Vec<Vec<f64>> = Vec::new();
    for cell in cells {
        for v in &cell.vertices {
            let (val, _) = g.eval(v);
            if val > best_value + 1e-12 {
                best_value = val;
                ties.clear();
                ties.push(v.clone());
            } else if val >= best_value - 1e-12 {
                if val > best_value {
                    best_value = val;
                }
                ties.push(v.clone());
            }
        }
    }
    ties.sort_by(|a, b| a.partial_cmp(b).unwrap());
    RankSolution { point: ties.swap_remove(0), value: best_value }
}

fn rank_by_ascent(g: &GFn, reference: ReferenceMeasure) -> RankSolution {
    let d = reference.d;
    let n = g.points.len();
    // Start at the projected site mean.
    let mut u = vec![0.0f64; d];
    for row in g.points {
        for (uj, xj) in u.iter_mut().zip(row) {
            *uj += xj;
        }
    }
    for uj in u.iter_mut() {
        *uj /= n as f64;
    }
    reference.project(&mut u);

    let (mut best_value, mut arg) = g.eval(&u);
    let mut best = u.clone();
    let mut avg = u.clone();
    let c = reference.diameter();
    let iters = 2000usize;
    for k in 1..=iters {
        let step = c / (k as f64).sqrt();
        for ((uj, yj), xj) in u.iter_mut().zip(g.y).zip(&g.points[arg]) {
            *uj += step * (yj - xj);
        }
        reference.project(&mut u);
        let (val, a) = g.eval(&u);
        arg = a;
        if val > best_value {
            best_value = val;
            best.copy_from_slice(&u);
        }
        let w = 1.0 / (k + 1) as f64;
        for (aj, uj) in avg.iter_mut().zip(&u) {
            *aj += w * (uj - *aj);
        }
    }

    let mut point = best.clone();
    let consider = |cand: &mut Vec<f64>, point: &mut Vec<f64>, best_value: &mut f64| {
        reference.project(cand);
        let (val, _) = g.eval(cand);
        if val > *best_value {
            *best_value = val;
            point.clone_from(cand);
        }
    };

    let mut cand = avg.clone();
    consider(&mut cand, &mut point, &mut best_value);
    polish(g, reference, &best, |c| {
        let mut c = c;
        consider(&mut c, &mut point, &mut best_value);
    });
    // Fixed seeded probes; they also back the dominance certificate.
    let mut rng = rng_from(point_keyed_seed(RANK_PROBE_SALT, g.y));
    for _ in 0..RANK_PROBES {
        let mut cand = reference.sample_one(&mut rng);
        consider(&mut cand, &mut point, &mut best_value);
    }
    RankSolution { point, value: best_value }
}

/// Candidate generation from the planes nearly active at `at`: exact
/// maximizers for single planes and plane-pair / plane-triple intersections
/// where the geometry permits. Widening tolerance tiers make the active-set
/// guess robust to ascent error.
fn polish<F: FnMut(Vec<f64>)>(g: &GFn, reference: ReferenceMeasure, at: &[f64], mut emit: F) {
    let d = reference.d;
    let n = g.points.len();
    let mut margins: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let row = &g.points[i];
            let mut v = -g.h[i];
            for ((&uj, &yj), &xj) in at.iter().zip(g.y).zip(row) {
                v += uj * (yj - xj);
            }
            (v, i)
        })
        .collect();
    margins.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let gmin = margins[0].0;

    if reference.kind == ReferenceKind::Cube {
        if d == 1 {
            emit(vec![0.0]);
            emit(vec![1.0]);
        } else if d == 2 {
            for corner in [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] {
                emit(corner.to_vec());
            }
        }
    }

    for &tier in &[1e-9, 1e-6, 1e-4, 1e-2, 5e-2] {
        let active: Vec<usize> = margins
            .iter()
            .take_while(|(v, _)| *v <= gmin + tier)
            .map(|&(_, i)| i)
            .take(10)
            .collect();
        // Single active plane: maximize its affine piece over the support.
        for &i in &active {
            let grad: Vec<f64> = g.y.iter().zip(&g.points[i]).map(|(a, b)| a - b).collect();
            match reference.kind {
                ReferenceKind::Cube => {
                    emit(grad.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect());
                }
                ReferenceKind::Ball | ReferenceKind::Spherical => {
                    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-300 {
                        emit(grad.iter().map(|&v| v / norm).collect());
                    } else {
                        emit(vec![0.0; d]);
                    }
                }
            }
        }
        if active.len() < 2 {
            continue;
        }
        for (a_pos, &i) in active.iter().enumerate() {
            for &j in active.iter().skip(a_pos + 1) {
                // Equal-value locus of planes i and j:
                // <u, X_j - X_i> = h_i - h_j.
                if d == 1 {
                    let m = g.points[j][0] - g.points[i][0];
                    if m.abs() > 1e-300 {
                        emit(vec![(g.h[i] - g.h[j]) / m]);
                    }
                    continue;
                }
                if d != 2 {
                    continue;
                }
                let m = [
                    g.points[j][0] - g.points[i][0],
                    g.points[j][1] - g.points[i][1],
                ];
                let c = g.h[i] - g.h[j];
                match reference.kind {
                    ReferenceKind::Cube => {
                        for p in line_box_intersections(m, c) {
                            emit(p.to_vec());
                        }
                    }
                    ReferenceKind::Ball | ReferenceKind::Spherical => {
                        for p in line_circle_intersections(m, c) {
                            emit(p.to_vec());
                        }
                    }
                }
                // Third plane pins a diagram vertex.
                for &k in active.iter().filter(|&&k| k > j) {
                    let m2 = [
                        g.points[k][0] - g.points[i][0],
                        g.points[k][1] - g.points[i][1],
                    ];
                    let c2 = g.h[i] - g.h[k];
                    let det = m[0] * m2[1] - m[1] * m2[0];
                    if det.abs() > 1e-14 {
                        emit(vec![
                            (c * m2[1] - c2 * m[1]) / det,
                            (m[0] * c2 - m2[0] * c) / det,
                        ]);
                    }
                }
            }
        }
    }
}

/// Points where the line {<u,m> = c} meets the unit-square boundary.
fn line_box_intersections(m: P2, c: f64) -> Vec<P2> {
    let mut out = Vec::new();
    // Vertical edges u1 = 0, 1 and horizontal edges u2 = 0, 1.
    for (fixed_axis, fixed) in [(0usize, 0.0f64), (0, 1.0), (1, 0.0), (1, 1.0)] {
        let free_axis = 1 - fixed_axis;
        if m[free_axis].abs() < 1e-300 {
            continue;
        }
        let v = (c - m[fixed_axis] * fixed) / m[free_axis];
        if (-1e-12..=1.0 + 1e-12).contains(&v) {
            let mut p = [0.0; 2];
            p[fixed_axis] = fixed;
            p[free_axis] = v.clamp(0.0, 1.0);
            out.push(p);
        }
    }
    out
}

/// Points where the line {<u,m> = c} meets the unit circle.
fn line_circle_intersections(m: P2, c: f64) -> Vec<P2> {
    let norm2 = m[0] * m[0] + m[1] * m[1];
    if norm2 < 1e-300 {
        return Vec::new();
    }
    let norm = norm2.sqrt();
    let t = c / norm;
    if t.abs() > 1.0 {
        return Vec::new();
    }
    let foot = [m[0] * c / norm2, m[1] * c / norm2];
    let s = (1.0 - t * t).max(0.0).sqrt();
    let dir = [-m[1] / norm, m[0] / norm];
    vec![
        [foot[0] + s * dir[0], foot[1] + s * dir[1]],
        [foot[0] - s * dir[0], foot[1] - s * dir[1]],
    ]
}

/// Optimality certificate: the duality identity must close and no probe may
/// dominate the achieved value.
fn certify(
    g: &GFn,
    fitted: &FittedTransport,
    reference: ReferenceMeasure,
    sol: &RankSolution,
) -> Result<()> {
    let (psi, _) = fitted.potential.eval(&sol.point)?;
    let inner: f64 = sol.point.iter().zip(g.y).map(|(a, b)| a * b).sum();
    let gap = (psi + sol.value - inner).abs();
    if gap > CERT_TOL {
        return Err(Error::RankCertificate(format!(
            "duality identity off by {gap:.3e}"
        )));
    }
    let mut rng = rng_from(point_keyed_seed(RANK_PROBE_SALT, g.y));
    for _ in 0..RANK_PROBES {
        let probe = reference.sample_one(&mut rng);
        let (val, _) = g.eval(&probe);
        if val > sol.value + CERT_TOL {
            return Err(Error::RankCertificate(format!(
                "probe dominates achieved value by {:.3e}",
                val - sol.value
            )));
        }
    }
    Ok(())
}

/// Randomized rank of data point i: a uniform draw from its cell.
pub fn rank_at_sample(
    fitted: &FittedTransport,
    i: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let n = fitted.potential.n();
    if i >= n {
        return Err(Error::SiteIndex { index: i, len: n });
    }
    let reference = fitted.reference;
    if reference.kind == ReferenceKind::Cube && fitted.potential.d() == 2 {
        let h = fitted.potential.weights();
        let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let diagram = crate::potential::Diagram2d::new(fitted.potential.points());
        let mut poly = Vec::new();
        let mut tmp = Vec::new();
        diagram.cell_into(i, h, h_max, &mut poly, &mut tmp);
        geom::dedup_ring(&mut poly, 1e-12);
        if poly.len() >= 3 {
            return sample_cell_polygon(fitted, i, &poly, rng);
        }
        return Err(Error::Sampling(format!("cell {i} is degenerate")));
    }
    if reference.kind == ReferenceKind::Cube && fitted.potential.d() == 1 {
        let cells = fitted.potential.cells_1d()?;
        let cell = cells.iter().find(|c| c.site == i).unwrap();
        if cell.vertices.is_empty() {
            return Err(Error::Sampling(format!("cell {i} is empty")));
        }
        let (a, b) = (cell.vertices[0][0], cell.vertices[1][0]);
        // The draw can land where a neighboring plane ties; nudge by redraw.
        for _ in 0..64 {
            let t: f64 = rng.random::<f64>();
            let u = [a + t * (b - a)];
            if fitted.potential.assign_unchecked(&u) == i {
                return Ok(u.to_vec());
            }
        }
        return Err(Error::Sampling(format!("interval draws for cell {i} kept tying")));
    }
    // Rejection from the reference measure.
    let cap = 10_000usize.saturating_mul(n);
    let mut u = vec![0.0; reference.d];
    for _ in 0..cap {
        reference.sample_into(rng, &mut u);
        if fitted.potential.assign_unchecked(&u) == i {
            return Ok(u);
        }
    }
    Err(Error::Sampling(format!(
        "rejection cap {cap} exceeded for cell {i}; cell is degenerate or empty"
    )))
}

fn sample_cell_polygon(
    fitted: &FittedTransport,
    i: usize,
    poly: &[P2],
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    for _ in 0..64 {
        let p = geom::sample_in_polygon(poly, rng)?;
        if fitted.potential.assign_unchecked(&p) == i {
            return Ok(p.to_vec());
        }
    }
    Err(Error::Sampling(format!("polygon draws for cell {i} kept tying")))
}

/// Deterministic rank of data point i: the cell vertex of maximal
/// Euclidean norm, lexicographic on ties. Needs exact cell geometry.
pub fn rank_at_sample_deterministic(fitted: &FittedTransport, i: usize) -> Result<Vec<f64>> {
    let n = fitted.potential.n();
    if i >= n {
        return Err(Error::SiteIndex { index: i, len: n });
    }
    if fitted.reference.kind != ReferenceKind::Cube || fitted.potential.d() > 2 {
        return Err(Error::Unsupported(
            "deterministic ranks need exact cell geometry (cube, d <= 2)".into(),
        ));
    }
    let cells = if fitted.potential.d() == 1 {
        fitted.potential.cells_1d()?
    } else {
        fitted.potential.cells_2d()?
    };
    let cell = cells.iter().find(|c| c.site == i).unwrap();
    if cell.vertices.is_empty() {
        return Err(Error::Sampling(format!("cell {i} is empty")));
    }
    let mut best: Option<(f64, &Vec<f64>)> = None;
    for v in &cell.vertices {
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        let better = match &best {
            None => true,
            Some((bn, bv)) => {
                norm2 > bn + 1e-15
                    || (norm2 >= bn - 1e-15 && v.as_slice() < bv.as_slice())
            }
        };
        if better {
            best = Some((norm2, v));
        }
    }
    Ok(best.unwrap().1.clone())
}

/// Center-outward depth 1/2 - ||rank(x) - 1/2||_inf; cube reference only.
/// Uses the iterative rank mode so fully tied queries (an n=1 model queried
/// at its own site) resolve to an interior maximizer.
pub fn depth(fitted: &FittedTransport, x: &[f64]) -> Result<f64> {
    if fitted.reference.kind != ReferenceKind::Cube {
        return Err(Error::Unsupported("depth is defined for cube references".into()));
    }
    let r = rank(fitted, x, RankMode::Optimize)?;
    let dev = r
        .point
        .iter()
        .map(|&v| (v - 0.5).abs())
        .fold(0.0f64, f64::max);
    Ok(0.5 - dev)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSpec {
    pub n: u64,
    pub d: usize,
    pub q: f64,
}

/// Local uniform rate bound Psi(n, d, q).
pub fn psi_rate(spec: &RateSpec) -> Result<f64> {
    let RateSpec { n, d, q } = *spec;
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("rate needs n >= 1 and d >= 1".into()));
    }
    if q <= 2.0 {
        return Err(Error::InvalidArgument("rate needs moment order q > 2".into()));
    }
    if d <= 4 && (q - 4.0).abs() < 1e-12 {
        return Err(Error::InvalidArgument("q = 4 is excluded for d <= 4".into()));
    }
    if d > 4 {
        let excluded = d as f64 / (d as f64 - 2.0);
        if (q - excluded).abs() < 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "q = d/(d-2) = {excluded} is excluded for d = {d}"
            )));
        }
    }
    let nf = n as f64;
    let df = d as f64;
    let value = match d.cmp(&4) {
        std::cmp::Ordering::Less => {
            nf.powf(-1.0 / (2.0 * (df + 2.0))) + nf.powf(-(q - 2.0) / (q * (df + 2.0)))
        }
        std::cmp::Ordering::Equal => {
            nf.powf(-1.0 / 12.0) * (1.0 + nf).ln().powf(1.0 / 6.0)
                + nf.powf(-(q - 2.0) / (6.0 * q))
        }
        std::cmp::Ordering::Greater => {
            nf.powf(-2.0 / (df * (df + 2.0))) + nf.powf(-(q - 2.0) / (q * (df + 2.0)))
        }
    };
    Ok(value)
}

/// Exact sup over the ball B(center, radius) of ||X_{assign(u)} - u||.
///
/// The supremum over each cell-ball intersection sits on its boundary:
/// polygon vertices inside the ball, edge-circle crossings, or the farthest
/// circle point when that lies inside the cell.
pub fn local_sup_deviation(
    fitted: &FittedTransport,
    center: &[f64],
    radius: f64,
) -> Result<f64> {
    if fitted.reference.kind != ReferenceKind::Cube || fitted.potential.d() != 2 {
        return Err(Error::Unsupported(
            "local deviation needs exact cell geometry (cube, d = 2)".into(),
        ));
    }
    if center.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: center.len() });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let c = [center[0], center[1]];
    if c[0] - radius <= 0.0 || c[0] + radius >= 1.0 || c[1] - radius <= 0.0 || c[1] + radius >= 1.0
    {
        return Err(Error::InvalidArgument(
            "ball must lie strictly inside the unit square".into(),
        ));
    }
    let cells = fitted.potential.cells_2d()?;
    let mut sup: f64 = 0.0;
    let mut crossings = Vec::new();
    for cell in &cells {
        if cell.vertices.is_empty() {
            continue;
        }
        let site = &fitted.potential.points()[cell.site];
        let x = [site[0], site[1]];
        let poly: Vec<P2> = cell.vertices.iter().map(|v| [v[0], v[1]]).collect();
        for v in &poly {
            if geom::dist2(*v, c) <= radius * radius + 1e-12 {
                sup = sup.max(geom::dist2(*v, x).sqrt());
            }
        }
        for k in 0..poly.len() {
            let p = poly[k];
            let q = poly[(k + 1) % poly.len()];
            crossings.clear();
            geom::segment_circle_intersections(p, q, c, radius, &mut crossings);
            for w in &crossings {
                sup = sup.max(geom::dist2(*w, x).sqrt());
            }
        }
        let dx = [c[0] - x[0], c[1] - x[1]];
        let dist = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
        let far = if dist > 1e-12 {
            [c[0] + radius * dx[0] / dist, c[1] + radius * dx[1] / dist]
        } else {
            [c[0] + radius, c[1]]
        };
        if geom::point_in_convex(&poly, far, 1e-12) {
            sup = sup.max(dist + radius);
        }
    }
    Ok(sup)
}
