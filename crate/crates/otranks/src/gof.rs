//! Rank-based goodness-of-fit statistics: the two-sample statistic built
//! from composed quantile and rank maps, the mutual-independence statistic
//! comparing joint against blockwise marginal ranks, and permutation
//! calibration for both.
//!
//! Internal fits canonicalize their input by lexicographic row sort with
//! deduplication. Assignments are translated back through point lookups, so
//! callers see row order preserved while the statistics become exactly
//! invariant under row reordering. Randomized ranks at data points are
//! keyed by (seed, site coordinates); duplicated points share draws, which
//! makes identical samples compare to exactly zero.

use crate::error::{Error, Result};
use crate::geom::{self, P2};
use crate::reference::{ReferenceKind, ReferenceMeasure};
use crate::seeding::{derive_seed, point_keyed_seed, rng_from, SeededRng};
use crate::solver::{fit, FittedTransport, SolverConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub fit: u64,
    pub mc: u64,
    pub perm: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Seeds {
            fit: derive_seed(master, "fit", 0),
            mc: derive_seed(master, "mc", 0),
            perm: derive_seed(master, "perm", 0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoSampleReport {
    pub statistic: f64,
    pub mc_samples: usize,
    pub replicates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub seeds: Seeds,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub statistic: f64,
    pub contributions: Vec<f64>,
    pub split: Vec<usize>,
    pub replicates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub seeds: Seeds,
}

fn point_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Lexicographically sorted unique rows; the canonical form all internal
/// fits operate on.
fn unique_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut sorted: Vec<Vec<f64>> = rows.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup_by(|a, b| a == b);
    sorted
}

fn gof_fit(rows: &[Vec<f64>], reference: ReferenceMeasure, seed: u64) -> Result<FittedTransport> {
    // Degenerate inputs (collinear sites from comonotone data) condition
    // the dual badly; give internal fits more headroom than the solver
    // default.
    let config = SolverConfig { seed, max_iterations: 200_000, ..SolverConfig::default() };
    fit(rows, reference, &config)
}

/// Uniform sampler over the cells of a fitted model, with geometry built
/// once up front. Falls back to rejection sampling when exact cells are not
/// available.
struct CellSampler {
    kind: SamplerKind,
}

enum SamplerKind {
    Intervals(Vec<(f64, f64)>),
    Polygons(Vec<Vec<P2>>),
    Rejection,
}

impl CellSampler {
    fn new(fitted: &FittedTransport) -> Result<Self> {
        let d = fitted.potential.d();
        if fitted.reference.kind == ReferenceKind::Cube && d == 1 {
            let cells = fitted.potential.cells_1d()?;
            let mut spans = vec![(f64::NAN, f64::NAN); fitted.potential.n()];
            for cell in &cells {
                if !cell.vertices.is_empty() {
                    spans[cell.site] = (cell.vertices[0][0], cell.vertices[1][0]);
                }
            }
            return Ok(CellSampler { kind: SamplerKind::Intervals(spans) });
        }
        if fitted.reference.kind == ReferenceKind::Cube && d == 2 {
            let cells = fitted.potential.cells_2d()?;
            let mut polys = vec![Vec::new(); fitted.potential.n()];
            for cell in &cells {
                polys[cell.site] = cell.vertices.iter().map(|v| [v[0], v[1]]).collect();
            }
            return Ok(CellSampler { kind: SamplerKind::Polygons(polys) });
        }
        Ok(CellSampler { kind: SamplerKind::Rejection })
    }

    fn draw(&self, fitted: &FittedTransport, i: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
        match &self.kind {
            SamplerKind::Intervals(spans) => {
                let (a, b) = spans[i];
                if !a.is_finite() {
                    return Err(Error::Sampling(format!("cell {i} is empty")));
                }
                for _ in 0..64 {
                    let u = [a + rng.random::<f64>() * (b - a)];
                    if fitted.potential.assign_unchecked(&u) == i {
                        return Ok(u.to_vec());
                    }
                }
                Err(Error::Sampling(format!("interval draws for cell {i} kept tying")))
            }
            SamplerKind::Polygons(polys) => {
                let poly = &polys[i];
                if poly.len() < 3 {
                    return Err(Error::Sampling(format!("cell {i} is degenerate")));
                }
                for _ in 0..64 {
                    let p = geom::sample_in_polygon(poly, rng)?;
                    if fitted.potential.assign_unchecked(&p) == i {
                        return Ok(p.to_vec());
                    }
                }
                Err(Error::Sampling(format!("polygon draws for cell {i} kept tying")))
            }
            SamplerKind::Rejection => {
                let cap = 10_000usize.saturating_mul(fitted.potential.n());
                let mut u = vec![0.0; fitted.reference.d];
                for _ in 0..cap {
                    fitted.reference.sample_into(rng, &mut u);
                    if fitted.potential.assign_unchecked(&u) == i {
                        return Ok(u);
                    }
                }
                Err(Error::Sampling(format!("rejection cap {cap} exceeded for cell {i}")))
            }
        }
    }
}

/// Pooled model shared by the observed statistic and every permutation
/// replicate: the pooled point set never changes under re-partitioning.
struct PooledModel {
    fitted: FittedTransport,
    sampler: CellSampler,
    lookup: HashMap<Vec<u64>, usize>,
}

impl PooledModel {
    fn build(rows: &[Vec<f64>], reference: ReferenceMeasure, fit_seed: u64) -> Result<Self> {
        let unique = unique_rows(rows);
        let fitted = gof_fit(&unique, reference, fit_seed)?;
        let sampler = CellSampler::new(&fitted)?;
        let lookup = unique
            .iter()
            .enumerate()
            .map(|(i, row)| (point_key(row), i))
            .collect();
        Ok(PooledModel { fitted, sampler, lookup })
    }

    /// One randomized rank per pooled site, keyed by site coordinates so
    /// shared points share draws.
    fn rank_draws(&self, rank_master: u64) -> Result<Vec<Vec<f64>>> {
        let points = self.fitted.potential.points();
        let mut draws = Vec::with_capacity(points.len());
        for (i, row) in points.iter().enumerate() {
            let mut rng = rng_from(point_keyed_seed(rank_master, row));
            draws.push(self.sampler.draw(&self.fitted, i, &mut rng)?);
        }
        Ok(draws)
    }

    fn site_of(&self, row: &[f64]) -> usize {
        self.lookup[&point_key(row)]
    }
}

fn validate_rows(rows: &[Vec<f64>], d: usize, what: &str, min_rows: usize) -> Result<()> {
    if rows.len() < min_rows {
        return Err(Error::InvalidArgument(format!(
            "{what} needs at least {min_rows} rows, got {}",
            rows.len()
        )));
    }
    for row in rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
    }
    Ok(())
}

fn validate_sample(rows: &[Vec<f64>], d: usize, what: &str) -> Result<()> {
    validate_rows(rows, d, what, 2)
}

/// Average of ||R(Q_X(U)) - R(Q_Y(U))||^2 over the fixed U-sample, given
/// the two group fits and one realization of pooled rank draws.
fn two_sample_value(
    fit_x: &FittedTransport,
    fit_y: &FittedTransport,
    pooled: &PooledModel,
    draws: &[Vec<f64>],
    u_sample: &[Vec<f64>],
) -> f64 {
    let px = fit_x.potential.points();
    let py = fit_y.potential.points();
    let mut acc = 0.0;
    for u in u_sample {
        let i = fit_x.potential.assign_unchecked(u);
        let j = fit_y.potential.assign_unchecked(u);
        let rx = &draws[pooled.site_of(&px[i])];
        let ry = &draws[pooled.site_of(&py[j])];
        acc += rx
            .iter()
            .zip(ry)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    acc / u_sample.len() as f64
}

/// Two-sample statistic: Monte Carlo average of the squared distance
/// between the pooled ranks of the two composed quantile maps.
pub fn two_sample_statistic(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    reference: ReferenceMeasure,
    mc_count: usize,
    seeds: Seeds,
) -> Result<TwoSampleReport> {
    let d = reference.d;
    validate_sample(x, d, "two-sample X")?;
    validate_sample(y, d, "two-sample Y")?;
    if mc_count < 100 {
        return Err(Error::InvalidArgument(format!(
            "mc_count {mc_count} is below the minimum of 100"
        )));
    }
    let fit_x = gof_fit(&unique_rows(x), reference, derive_seed(seeds.fit, "fit-x", 0))?;
    let fit_y = gof_fit(&unique_rows(y), reference, derive_seed(seeds.fit, "fit-y", 0))?;
    let pooled_rows: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    let pooled = PooledModel::build(&pooled_rows, reference, derive_seed(seeds.fit, "fit-pooled", 0))?;
    let u_sample = reference.sample(mc_count, &mut rng_from(derive_seed(seeds.mc, "u-sample", 0)));
    let draws = pooled.rank_draws(derive_seed(seeds.mc, "rank-draw", 0))?;
    let statistic = two_sample_value(&fit_x, &fit_y, &pooled, &draws, &u_sample);
    Ok(TwoSampleReport {
        statistic,
        mc_samples: mc_count,
        replicates: Vec::new(),
        p_value: None,
        seeds,
    })
}

/// Permutation-calibrated two-sample test: re-partitions the pooled rows
/// into groups of the original sizes, keeping the U-sample fixed and
/// deriving fresh rank seeds per replicate.
pub fn two_sample_test(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    reference: ReferenceMeasure,
    mc_count: usize,
    b: usize,
    seeds: Seeds,
) -> Result<TwoSampleReport> {
    let mut report = two_sample_statistic(x, y, reference, mc_count, seeds)?;
    let pooled_rows: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    let pooled = PooledModel::build(
        &pooled_rows,
        reference,
        derive_seed(seeds.fit, "fit-pooled", 0),
    )?;
    let u_sample = reference.sample(mc_count, &mut rng_from(derive_seed(seeds.mc, "u-sample", 0)));
    let m = x.len();
    let (p_value, replicates) = permutation_pvalue(b, seeds.perm, report.statistic, |rep_seed| {
        let mut order: Vec<usize> = (0..pooled_rows.len()).collect();
        order.shuffle(&mut rng_from(derive_seed(rep_seed, "shuffle", 0)));
        let xr: Vec<Vec<f64>> = order[..m].iter().map(|&i| pooled_rows[i].clone()).collect();
        let yr: Vec<Vec<f64>> = order[m..].iter().map(|&i| pooled_rows[i].clone()).collect();
        let fit_x = gof_fit(&unique_rows(&xr), reference, derive_seed(rep_seed, "fit-x", 0))?;
        let fit_y = gof_fit(&unique_rows(&yr), reference, derive_seed(rep_seed, "fit-y", 0))?;
        let draws = pooled.rank_draws(derive_seed(rep_seed, "rank-draw", 0))?;
        Ok(two_sample_value(&fit_x, &fit_y, &pooled, &draws, &u_sample))
    })?;
    report.p_value = Some(p_value);
    report.replicates = replicates;
    Ok(report)
}

/// Exact two-sample statistic for d=2 cube references: the double sum of
/// squared rank distances weighted by the areas of pairwise cell
/// intersections, for a caller-fixed realization of the pooled ranks
/// (rank_x[i] belongs to row i of x; duplicate rows must repeat the draw).
pub fn two_sample_exact_2d(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    reference: ReferenceMeasure,
    rank_x: &[Vec<f64>],
    rank_y: &[Vec<f64>],
) -> Result<f64> {
    if reference.kind != ReferenceKind::Cube || reference.d != 2 {
        return Err(Error::Unsupported(
            "exact two-sample evaluation needs the d=2 cube reference".into(),
        ));
    }
    validate_rows(x, 2, "two-sample X", 1)?;
    validate_rows(y, 2, "two-sample Y", 1)?;
    if rank_x.len() != x.len() || rank_y.len() != y.len() {
        return Err(Error::InvalidArgument(
            "rank realizations must match the sample row counts".into(),
        ));
    }
    let ux = unique_rows(x);
    let uy = unique_rows(y);
    let fit_x = gof_fit(&ux, reference, 0)?;
    let fit_y = gof_fit(&uy, reference, 0)?;
    // First-occurrence rank per unique site.
    let pick = |unique: &[Vec<f64>], rows: &[Vec<f64>], ranks: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let lookup: HashMap<Vec<u64>, usize> = rows
            .iter()
            .enumerate()
            .rev()
            .map(|(i, row)| (point_key(row), i))
            .collect();
        unique
            .iter()
            .map(|row| ranks[lookup[&point_key(row)]].clone())
            .collect()
    };
    let rx = pick(&ux, x, rank_x);
    let ry = pick(&uy, y, rank_y);

    let cells_x = fit_x.potential.cells_2d()?;
    let hy = fit_y.potential.weights();
    let py = fit_y.potential.points();
    let mut total_area = 0.0;
    let mut statistic = 0.0;
    let mut poly = Vec::new();
    let mut tmp = Vec::new();
    for cell in &cells_x {
        if cell.vertices.is_empty() {
            continue;
        }
        let base: Vec<P2> = cell.vertices.iter().map(|v| [v[0], v[1]]).collect();
        let rxi = &rx[cell.site];
        for j in 0..py.len() {
            poly.clear();
            poly.extend_from_slice(&base);
            for l in 0..py.len() {
                if l == j || poly.is_empty() {
                    continue;
                }
                let a = [py[j][0] - py[l][0], py[j][1] - py[l][1]];
                let bb = hy[j] - hy[l];
                geom::clip_halfplane(&poly, a, bb, &mut tmp);
                std::mem::swap(&mut poly, &mut tmp);
            }
            if poly.len() < 3 {
                continue;
            }
            let area = geom::polygon_area(&poly);
            // Clipping along a shared edge (duplicate sites across samples)
            // leaves slivers with round-off area; they are not cells.
            if area <= 1e-14 {
                continue;
            }
            total_area += area;
            let ryj = &ry[j];
            let dist2: f64 = rxi
                .iter()
                .zip(ryj)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            statistic += dist2 * area;
        }
    }
    if (total_area - 1.0).abs() > 1e-8 {
        return Err(Error::Numeric(format!(
            "cell intersection areas sum to {total_area}, not 1"
        )));
    }
    Ok(statistic)
}

/// The pooled randomized-rank realization two_sample_statistic uses for the
/// same inputs and seeds, reported per input row.
pub fn pooled_rank_realization(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    reference: ReferenceMeasure,
    seeds: Seeds,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d = reference.d;
    validate_rows(x, d, "two-sample X", 1)?;
    validate_rows(y, d, "two-sample Y", 1)?;
    let pooled_rows: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    let pooled = PooledModel::build(
        &pooled_rows,
        reference,
        derive_seed(seeds.fit, "fit-pooled", 0),
    )?;
    let draws = pooled.rank_draws(derive_seed(seeds.mc, "rank-draw", 0))?;
    let rank_of = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter().map(|row| draws[pooled.site_of(row)].clone()).collect()
    };
    Ok((rank_of(x), rank_of(y)))
}

/// Exact-area two-sample statistic on the d=2 cube, evaluated at the rank
/// realization two_sample_statistic would draw for the same seeds.
pub fn two_sample_statistic_exact_2d(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    reference: ReferenceMeasure,
    seeds: Seeds,
) -> Result<TwoSampleReport> {
    let (rank_x, rank_y) = pooled_rank_realization(x, y, reference, seeds)?;
    let statistic = two_sample_exact_2d(x, y, reference, &rank_x, &rank_y)?;
    Ok(TwoSampleReport {
        statistic,
        mc_samples: 0,
        replicates: Vec::new(),
        p_value: None,
        seeds,
    })
}

/// Permutation-calibrated exact-area two-sample test. Same shuffle and
/// rank-seed schedule as two_sample_test; the integral is computed by
/// polygon clipping instead of Monte Carlo.
pub fn two_sample_test_exact_2d(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    reference: ReferenceMeasure,
    b: usize,
    seeds: Seeds,
) -> Result<TwoSampleReport> {
    let mut report = two_sample_statistic_exact_2d(x, y, reference, seeds)?;
    let pooled_rows: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    let pooled = PooledModel::build(
        &pooled_rows,
        reference,
        derive_seed(seeds.fit, "fit-pooled", 0),
    )?;
    let m = x.len();
    let (p_value, replicates) = permutation_pvalue(b, seeds.perm, report.statistic, |rep_seed| {
        let mut order: Vec<usize> = (0..pooled_rows.len()).collect();
        order.shuffle(&mut rng_from(derive_seed(rep_seed, "shuffle", 0)));
        let draws = pooled.rank_draws(derive_seed(rep_seed, "rank-draw", 0))?;
        let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| pooled_rows[i].clone()).collect();
            let ranks = rows.iter().map(|row| draws[pooled.site_of(row)].clone()).collect();
            (rows, ranks)
        };
        let (xr, rank_x) = pick(&order[..m]);
        let (yr, rank_y) = pick(&order[m..]);
        two_sample_exact_2d(&xr, &yr, reference, &rank_x, &rank_y)
    })?;
    report.p_value = Some(p_value);
    report.replicates = replicates;
    Ok(report)
}

fn validate_split(split: &[usize], d: usize) -> Result<()> {
    if split.len() < 2 {
        return Err(Error::InvalidArgument(
            "independence split needs at least 2 blocks".into(),
        ));
    }
    if split.iter().any(|&w| w == 0) {
        return Err(Error::InvalidArgument("split blocks must be nonempty".into()));
    }
    if split.iter().sum::<usize>() != d {
        return Err(Error::InvalidArgument(format!(
            "split blocks sum to {}, data dimension is {d}",
            split.iter().sum::<usize>()
        )));
    }
    Ok(())
}

struct MarginalModel {
    offset: usize,
    width: usize,
    pooled: PooledModel,
}

fn block_slices(z: &[Vec<f64>], offset: usize, width: usize) -> Vec<Vec<f64>> {
    z.iter().map(|row| row[offset..offset + width].to_vec()).collect()
}

fn build_marginals(z: &[Vec<f64>], split: &[usize], fit_seed: u64) -> Result<Vec<MarginalModel>> {
    let mut out = Vec::with_capacity(split.len());
    let mut offset = 0;
    for (b, &width) in split.iter().enumerate() {
        let rows = block_slices(z, offset, width);
        let reference = ReferenceMeasure::cube(width)?;
        let pooled = PooledModel::build(&rows, reference, derive_seed(fit_seed, "fit-block", b as u64))?;
        out.push(MarginalModel { offset, width, pooled });
        offset += width;
    }
    Ok(out)
}

/// Mean of ||joint rank - concatenated marginal ranks||^2 over rows.
fn independence_value(
    z: &[Vec<f64>],
    joint: &PooledModel,
    joint_draws: &[Vec<f64>],
    marginals: &[MarginalModel],
    marginal_draws: &[Vec<Vec<f64>>],
) -> Vec<f64> {
    z.iter()
        .map(|row| {
            let joint_rank = &joint_draws[joint.site_of(row)];
            let mut acc = 0.0;
            let mut coord = 0;
            for (m, draws) in marginals.iter().zip(marginal_draws) {
                let site = m.pooled.site_of(&row[m.offset..m.offset + m.width]);
                for &v in &draws[site] {
                    let dv = joint_rank[coord] - v;
                    acc += dv * dv;
                    coord += 1;
                }
            }
            acc
        })
        .collect()
}

/// Independence statistic on the unit cube: joint randomized ranks against
/// the concatenation of blockwise marginal randomized ranks.
pub fn independence_statistic(
    z: &[Vec<f64>],
    split: &[usize],
    seeds: Seeds,
) -> Result<IndependenceReport> {
    if z.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "independence test needs at least 2 rows, got {}",
            z.len()
        )));
    }
    let d = z[0].len();
    validate_sample(z, d, "independence Z")?;
    validate_split(split, d)?;
    let reference = ReferenceMeasure::cube(d)?;
    let joint = PooledModel::build(z, reference, derive_seed(seeds.fit, "fit-joint", 0))?;
    let marginals = build_marginals(z, split, seeds.fit)?;
    let rank_master = derive_seed(seeds.mc, "rank-draw", 0);
    let joint_draws = joint.rank_draws(rank_master)?;
    let marginal_draws = marginals
        .iter()
        .enumerate()
        .map(|(b, m)| m.pooled.rank_draws(derive_seed(rank_master, "block", b as u64)))
        .collect::<Result<Vec<_>>>()?;
    let contributions = independence_value(z, &joint, &joint_draws, &marginals, &marginal_draws);
    let statistic = contributions.iter().sum::<f64>() / contributions.len() as f64;
    Ok(IndependenceReport {
        statistic,
        contributions,
        split: split.to_vec(),
        replicates: Vec::new(),
        p_value: None,
        seeds,
    })
}

/// Permutation-calibrated independence test: every block but the first is
/// row-permuted independently per replicate, the joint model is refit, and
/// the cached marginal models are reused.
pub fn independence_test(
    z: &[Vec<f64>],
    split: &[usize],
    b: usize,
    seeds: Seeds,
) -> Result<IndependenceReport> {
    let mut report = independence_statistic(z, split, seeds)?;
    let marginals = build_marginals(z, split, seeds.fit)?;
    let reference = ReferenceMeasure::cube(z[0].len())?;
    let n = z.len();
    let (p_value, replicates) = permutation_pvalue(b, seeds.perm, report.statistic, |rep_seed| {
        let mut zr: Vec<Vec<f64>> = z.to_vec();
        for (bi, m) in marginals.iter().enumerate().skip(1) {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from(derive_seed(rep_seed, "block-shuffle", bi as u64)));
            for (row, &src) in zr.iter_mut().zip(&order) {
                row[m.offset..m.offset + m.width]
                    .copy_from_slice(&z[src][m.offset..m.offset + m.width]);
            }
        }
        let joint = PooledModel::build(&zr, reference, derive_seed(rep_seed, "fit-joint", 0))?;
        let rank_master = derive_seed(rep_seed, "rank-draw", 0);
        let joint_draws = joint.rank_draws(rank_master)?;
        let marginal_draws = marginals
            .iter()
            .enumerate()
            .map(|(bi, m)| m.pooled.rank_draws(derive_seed(rank_master, "block", bi as u64)))
            .collect::<Result<Vec<_>>>()?;
        let contributions = independence_value(&zr, &joint, &joint_draws, &marginals, &marginal_draws);
        Ok(contributions.iter().sum::<f64>() / contributions.len() as f64)
    })?;
    report.p_value = Some(p_value);
    report.replicates = replicates;
    Ok(report)
}

/// Runs B permutation replicates with seeds derived from the master and
/// returns ((1 + #{replicate >= observed}) / (B+1), replicates).
pub fn permutation_pvalue<F>(
    b: usize,
    perm_seed: u64,
    observed: f64,
    mut replicate: F,
) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(u64) -> Result<f64>,
{
    if b < 19 {
        return Err(Error::InvalidArgument(format!(
            "need at least 19 permutation replicates, got {b}"
        )));
    }
    let mut replicates = Vec::with_capacity(b);
    for r in 0..b {
        replicates.push(replicate(derive_seed(perm_seed, "perm", r as u64 + 1))?);
    }
    let count = replicates.iter().filter(|&&t| t >= observed).count();
    Ok(((1 + count) as f64 / (b + 1) as f64, replicates))
}

/// (n / log n) (T - center); the centering is caller-supplied.
pub fn normalized_statistic(t: f64, n: usize, center: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalization needs n >= 2, got {n}"
        )));
    }
    Ok(n as f64 / (n as f64).ln() * (t - center))
}
