//! Semi-discrete transport solver: fits weights h so that every power cell
//! carries reference mass 1/n, by minimizing the convex dual
//! F(h) = integral of psi_h over S - (1/n) sum_i h_i,
//! whose subgradient component i is mu(W_i(h)) - 1/n. Exact backends
//! measure cells geometrically (d=1 interval envelope, d=2 polygon
//! clipping); the Monte Carlo backend fixes one quadrature sample up front,
//! which turns the fit into a deterministic finite convex program.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{Diagram2d, Envelope1d, PiecewiseAffinePotential};
use crate::reference::{ReferenceKind, ReferenceMeasure};
use crate::seeding::{derive_seed, rng_from};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Auto,
    Exact1d,
    Exact2d,
    Montecarlo,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Backend::Auto),
            "exact1d" => Ok(Backend::Exact1d),
            "exact2d" => Ok(Backend::Exact2d),
            "montecarlo" => Ok(Backend::Montecarlo),
            other => Err(Error::InvalidArgument(format!("unknown backend '{other}'"))),
        }
    }
}

/// Descent rule for the dual minimization. `Newton` (the default) solves
/// the exact Hessian system, a graph Laplacian weighted by shared cell
/// boundaries, with damping on the measure residual; it needs a first-order
/// warm start until every cell has mass, and falls back to `Lbfgs` steps
/// when a damped step is rejected. The dual's conditioning degrades like
/// n^2, which first-order rules pay for directly: `Gradient` needs
/// thousands of iterations where `Lbfgs` needs hundreds and `Newton` tens.
/// Monte Carlo measures are step functions in h with no usable Hessian, so
/// that backend always runs `Lbfgs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descent {
    Gradient,
    Lbfgs,
    Newton,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub backend: Backend,
    /// Sup-norm target on cell-measure residuals; `None` picks the backend
    /// default (1e-7 exact, 0.25/n montecarlo).
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    /// Monte Carlo quadrature size; `None` picks max(10^4, 100 n).
    pub quadrature_size: Option<usize>,
    pub seed: u64,
    pub descent: Descent,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Auto,
            tolerance: None,
            max_iterations: 10_000,
            quadrature_size: None,
            seed: 0,
            descent: Descent::Newton,
        }
    }
}

/// Post-resolution echo of the parameters a fit actually used; this is what
/// gets serialized with a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub backend: Backend,
    pub tol: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
}

/// A fixed quadrature sample from the reference measure.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Quadrature {
    /// The sample a fit with this (reference, m, seed) draws internally.
    pub fn draw(reference: ReferenceMeasure, m: usize, seed: u64) -> Self {
        let mut rng = rng_from(derive_seed(seed, "quadrature", 0));
        Self { points: reference.sample(m, &mut rng), seed }
    }
}

#[derive(Clone, Debug)]
pub struct FittedTransport {
    pub potential: PiecewiseAffinePotential,
    pub reference: ReferenceMeasure,
    /// Achieved sup-norm of mu(W_i) - 1/n.
    pub residual: f64,
    pub iterations: usize,
    pub config: ResolvedConfig,
    /// Present when the fit used the montecarlo backend in this process;
    /// absent on loaded models, where it is redrawn from the config seed.
    pub quadrature: Option<Quadrature>,
}

pub(crate) fn resolve_backend(backend: Backend, reference: ReferenceMeasure) -> Backend {
    match backend {
        Backend::Auto => match (reference.kind, reference.d) {
            (ReferenceKind::Cube, 1) => Backend::Exact1d,
            (ReferenceKind::Cube, 2) => Backend::Exact2d,
            _ => Backend::Montecarlo,
        },
        other => other,
    }
}

fn check_backend(backend: Backend, reference: ReferenceMeasure) -> Result<()> {
    match backend {
        Backend::Exact1d if reference.kind != ReferenceKind::Cube || reference.d != 1 => {
            Err(Error::Unsupported(
                "exact1d backend requires the d=1 cube reference".into(),
            ))
        }
        Backend::Exact2d if reference.kind != ReferenceKind::Cube || reference.d != 2 => {
            Err(Error::Unsupported(
                "exact2d backend requires the d=2 cube reference".into(),
            ))
        }
        _ => Ok(()),
    }
}

pub(crate) fn default_tolerance(backend: Backend, n: usize) -> f64 {
    match backend {
        Backend::Montecarlo => 0.25 / n as f64,
        _ => 1e-7,
    }
}

fn default_quadrature_size(n: usize) -> usize {
    10_000usize.max(100 * n)
}

/// Cell-measure engine shared by the public measure operations and the
/// descent loop. Holds per-site precomputation so repeated weight updates
/// stay cheap.
pub(crate) enum Engine {
    Exact1d(Envelope1d),
    Exact2d(Diagram2d),
    Montecarlo { quad: Vec<f64>, m: usize, sites: Vec<f64>, n: usize, d: usize },
}

impl Engine {
    pub fn new(
        backend: Backend,
        points: &[Vec<f64>],
        quadrature: Option<&Quadrature>,
    ) -> Result<Self> {
        match backend {
            Backend::Exact1d => Ok(Engine::Exact1d(Envelope1d::new(points))),
            Backend::Exact2d => Ok(Engine::Exact2d(Diagram2d::new(points))),
            Backend::Montecarlo => {
                let quadrature = quadrature.ok_or_else(|| {
                    Error::InvalidArgument("montecarlo backend needs a quadrature".into())
                })?;
                let d = points[0].len();
                let m = quadrature.points.len();
                let mut quad = Vec::with_capacity(m * d);
                for q in &quadrature.points {
                    if q.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: q.len() });
                    }
                    quad.extend_from_slice(q);
                }
                let mut sites = Vec::with_capacity(points.len() * d);
                for p in points {
                    sites.extend_from_slice(p);
                }
                Ok(Engine::Montecarlo { quad, m, sites, n: points.len(), d })
            }
            Backend::Auto => unreachable!("backend resolved before engine construction"),
        }
    }

    /// Fills mu(W_i) estimates and returns the integral of psi_h over S.
    pub fn measures_and_integral(&self, h: &[f64], out: &mut [f64]) -> f64 {
        match self {
            Engine::Exact1d(env) => env.measures_and_integral(h, out),
            Engine::Exact2d(dia) => dia.measures_and_integral(h, out),
            Engine::Montecarlo { quad, m, sites, n, d } => {
                out.fill(0.0);
                let mut total = 0.0;
                let inv = 1.0 / *m as f64;
                for q in quad.chunks_exact(*d) {
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = 0usize;
                    for i in 0..*n {
                        let row = &sites[i * d..(i + 1) * d];
                        let mut v = h[i];
                        for (a, b) in row.iter().zip(q) {
                            v += a * b;
                        }
                        if v > best {
                            best = v;
                            arg = i;
                        }
                    }
                    out[arg] += inv;
                    total += best;
                }
                total * inv
            }
        }
    }

    pub fn measures_into(&self, h: &[f64], out: &mut [f64]) {
        match self {
            Engine::Exact1d(env) => env.measures_into(h, out),
            Engine::Exact2d(dia) => dia.measures_into(h, out),
            mc @ Engine::Montecarlo { .. } => {
                mc.measures_and_integral(h, out);
            }
        }
    }

    /// Hessian off-diagonals of the measure map at h, as (i, j, w) with
    /// i < j and w > 0; the matrix is the graph Laplacian with these edge
    /// weights. Returns false for montecarlo, whose measures are piecewise
    /// constant in h.
    pub fn laplacian_pairs(&self, h: &[f64], out: &mut Vec<(u32, u32, f64)>) -> bool {
        match self {
            Engine::Exact1d(env) => {
                env.laplacian_pairs(h, out);
                true
            }
            Engine::Exact2d(dia) => {
                dia.laplacian_pairs(h, out);
                true
            }
            Engine::Montecarlo { .. } => false,
        }
    }

    /// Integral of ||u - X_{assign(u)}||^2 over S.
    pub fn quadratic_transport(&self, h: &[f64], points: &[Vec<f64>]) -> f64 {
        match self {
            Engine::Exact1d(env) => {
                let mut total = 0.0;
                for (i, a, b) in env.pieces(h) {
                    let x = points[i][0];
                    total += ((b - x).powi(3) - (a - x).powi(3)) / 3.0;
                }
                total
            }
            Engine::Exact2d(dia) => dia.quadratic_transport(h),
            Engine::Montecarlo { quad, m, sites, n, d } => {
                let mut total = 0.0;
                for q in quad.chunks_exact(*d) {
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = 0usize;
                    for i in 0..*n {
                        let row = &sites[i * d..(i + 1) * d];
                        let mut v = h[i];
                        for (a, b) in row.iter().zip(q) {
                            v += a * b;
                        }
                        if v > best {
                            best = v;
                            arg = i;
                        }
                    }
                    let row = &sites[arg * d..(arg + 1) * d];
                    total += row
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                }
                total / *m as f64
            }
        }
    }
}

/// Nudge a nonnegative vector whose entries are within float round-off of
/// summing to 1 so the sum is exactly 1.0, charging the largest entry.
fn exact_unit_sum(v: &mut [f64]) {
    for _ in 0..16 {
        let sum: f64 = v.iter().sum();
        let delta = 1.0 - sum;
        if delta == 0.0 {
            return;
        }
        let arg = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        v[arg] += delta;
    }
}

/// Measures of every cell of `potential` under `reference`. Montecarlo
/// results are count fractions over the supplied quadrature and sum to 1
/// exactly; exact backends return geometric lengths/areas.
pub fn cell_measures(
    potential: &PiecewiseAffinePotential,
    reference: ReferenceMeasure,
    backend: Backend,
    quadrature: Option<&Quadrature>,
) -> Result<Vec<f64>> {
    if potential.d() != reference.d {
        return Err(Error::DimensionMismatch { expected: reference.d, got: potential.d() });
    }
    let backend = resolve_backend(backend, reference);
    check_backend(backend, reference)?;
    let engine = Engine::new(backend, potential.points(), quadrature)?;
    let mut out = vec![0.0; potential.n()];
    engine.measures_into(potential.weights(), &mut out);
    if backend == Backend::Montecarlo {
        exact_unit_sum(&mut out);
    }
    Ok(out)
}

/// Dual objective F(h) for the potential's weights. Not re-gauged: the
/// value is meaningful for arbitrary h, which is what makes
/// finite-difference gradient checks valid.
pub fn dual_objective(
    potential: &PiecewiseAffinePotential,
    reference: ReferenceMeasure,
    backend: Backend,
    quadrature: Option<&Quadrature>,
) -> Result<f64> {
    if potential.d() != reference.d {
        return Err(Error::DimensionMismatch { expected: reference.d, got: potential.d() });
    }
    let backend = resolve_backend(backend, reference);
    check_backend(backend, reference)?;
    let engine = Engine::new(backend, potential.points(), quadrature)?;
    let h = potential.weights();
    let mut scratch = vec![0.0; potential.n()];
    let integral = engine.measures_and_integral(h, &mut scratch);
    Ok(integral - h.iter().sum::<f64>() / h.len() as f64)
}

struct LbfgsHistory {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl LbfgsHistory {
    const MEMORY: usize = 10;

    fn new() -> Self {
        Self { s: Vec::new(), y: Vec::new(), rho: Vec::new() }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum::<f64>().sqrt();
        let yy: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        // Curvature pairs that are too flat poison the inverse-Hessian
        // estimate on this piecewise-smooth objective.
        if sy <= 1e-12 * ss * yy {
            return;
        }
        if self.s.len() == Self::MEMORY {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.rho.push(1.0 / sy);
        self.s.push(s);
        self.y.push(y);
    }

    /// Two-loop recursion; returns -H grad.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = grad.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let a = self.rho[i] * dot(&self.s[i], &q);
            alpha[i] = a;
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= a * yj;
            }
        }
        if k > 0 {
            let last = k - 1;
            let sy = 1.0 / self.rho[last];
            let yy: f64 = dot(&self.y[last], &self.y[last]);
            let gamma = sy / yy;
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        for qj in q.iter_mut() {
            *qj = -*qj;
        }
        q
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn regauge(h: &mut [f64]) {
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    for v in h.iter_mut() {
        *v -= mean;
    }
}

/// Fit the transport weights for `points` under `reference`.
///
/// Starts from h = 0, re-gauges every iterate to sum(h) = 0, and stops when
/// max_i |mu(W_i) - 1/n| <= tolerance. Exceeding max_iterations is an
/// error. The montecarlo backend draws its quadrature once from the config
/// seed, so identical inputs give identical fits.
pub fn fit(
    points: &[Vec<f64>],
    reference: ReferenceMeasure,
    config: &SolverConfig,
) -> Result<FittedTransport> {
    let backend = resolve_backend(config.backend, reference);
    let quadrature = if backend == Backend::Montecarlo {
        let m = config
            .quadrature_size
            .unwrap_or_else(|| default_quadrature_size(points.len()));
        Some(Quadrature::draw(reference, m, config.seed))
    } else {
        None
    };
    fit_inner(points, reference, config, quadrature)
}

/// Fit against a caller-supplied quadrature (montecarlo only). Lets tests
/// probe quadrature sensitivity and equivariance under transformed samples.
pub fn fit_with_quadrature(
    points: &[Vec<f64>],
    reference: ReferenceMeasure,
    config: &SolverConfig,
    quadrature: Quadrature,
) -> Result<FittedTransport> {
    let backend = resolve_backend(config.backend, reference);
    if backend != Backend::Montecarlo {
        return Err(Error::InvalidArgument(
            "explicit quadrature requires the montecarlo backend".into(),
        ));
    }
    fit_inner(points, reference, config, Some(quadrature))
}

fn fit_inner(
    points: &[Vec<f64>],
    reference: ReferenceMeasure,
    config: &SolverConfig,
    quadrature: Option<Quadrature>,
) -> Result<FittedTransport> {
    let backend = resolve_backend(config.backend, reference);
    check_backend(backend, reference)?;
    if config.max_iterations == 0 {
        return Err(Error::InvalidArgument("max_iterations must be positive".into()));
    }
    if let Some(t) = config.tolerance {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
    }
    // Validates shape, finiteness and distinctness.
    let probe = PiecewiseAffinePotential::new(points.to_vec(), vec![0.0; points.len()])?;
    if probe.d() != reference.d {
        return Err(Error::DimensionMismatch { expected: reference.d, got: probe.d() });
    }
    let n = probe.n();
    let tol = config.tolerance.unwrap_or_else(|| default_tolerance(backend, n));
    let m = match (backend, &quadrature) {
        (Backend::Montecarlo, Some(q)) => {
            if q.points.len() < n {
                return Err(Error::InvalidArgument(format!(
                    "quadrature size {} is below n = {n}",
                    q.points.len()
                )));
            }
            q.points.len()
        }
        _ => config.quadrature_size.unwrap_or_else(|| default_quadrature_size(n)),
    };
    let engine = Engine::new(backend, probe.points(), quadrature.as_ref())?;
    let descent = if backend == Backend::Montecarlo && config.descent == Descent::Newton {
        Descent::Lbfgs
    } else {
        config.descent
    };

    let inv_n = 1.0 / n as f64;
    let mut h = vec![0.0f64; n];
    let mut measures = vec![0.0f64; n];
    let mut value = engine.measures_and_integral(&h, &mut measures);
    let mut grad: Vec<f64> = measures.iter().map(|&mi| mi - inv_n).collect();
    let mut history = LbfgsHistory::new();
    let mut trial_h = vec![0.0f64; n];
    let mut trial_measures = vec![0.0f64; n];
    let mut pairs: Vec<(u32, u32, f64)> = Vec::new();
    // The dual value goes stale across Newton steps, which never look at it;
    // it is recomputed lazily if a first-order fallback needs it.
    let mut value_stale = false;

    let mut iterations = 0usize;
    let mut residual = sup_norm(&grad);
    loop {
        if residual <= tol {
            break;
        }
        if iterations == config.max_iterations {
            return Err(Error::NoConvergence { residual, iterations, tolerance: tol });
        }

        if descent == Descent::Newton
            && measures.iter().cloned().fold(f64::INFINITY, f64::min) > 0.0
            && newton_step(
                &engine, &h, &measures, residual, inv_n, &mut pairs, &mut trial_h,
                &mut trial_measures,
            )
        {
            regauge(&mut trial_h);
            // Re-measure at the gauged point so the stored measures always
            // belong to the stored h.
            engine.measures_into(&trial_h, &mut trial_measures);
            std::mem::swap(&mut h, &mut trial_h);
            std::mem::swap(&mut measures, &mut trial_measures);
            grad = measures.iter().map(|&mi| mi - inv_n).collect();
            residual = sup_norm(&grad);
            iterations += 1;
            // First-order curvature pairs do not survive a second-order move.
            history.clear();
            value_stale = true;
            continue;
        }

        if value_stale {
            value = engine.measures_and_integral(&h, &mut measures);
            grad = measures.iter().map(|&mi| mi - inv_n).collect();
            residual = sup_norm(&grad);
            value_stale = false;
            if residual <= tol {
                break;
            }
        }

        let mut dir = match descent {
            Descent::Gradient => grad.iter().map(|g| -g).collect::<Vec<f64>>(),
            _ => history.direction(&grad),
        };
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // Quasi-Newton direction lost descent; restart from steepest.
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }

        let mut accepted = armijo(
            &engine, &h, &dir, slope, value, residual, inv_n, &mut trial_h, &mut trial_measures,
        );
        if accepted.is_none() && !history.is_empty() {
            // Stale curvature can demand steps too small to move h at all;
            // restart from steepest before giving up.
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
            accepted = armijo(
                &engine, &h, &dir, slope, value, residual, inv_n, &mut trial_h, &mut trial_measures,
            );
        }
        if accepted.is_none() {
            // Near the optimum of a badly conditioned instance the
            // guaranteed decrease drops below the resolution of the
            // objective value and no step can be verified by it. The cell
            // measures stay accurate, so accept a steepest step on strict
            // residual decrease instead.
            let mut step = 1.0f64;
            for _ in 0..80 {
                let mut moved = false;
                for ((t, hi), gi) in trial_h.iter_mut().zip(&h).zip(&grad) {
                    *t = hi - step * gi;
                    moved |= *t != *hi;
                }
                if !moved {
                    break;
                }
                engine.measures_into(&trial_h, &mut trial_measures);
                let trial_residual = trial_measures
                    .iter()
                    .fold(0.0f64, |acc, &mi| acc.max((mi - inv_n).abs()));
                if trial_residual < residual * (1.0 - 1e-3) {
                    accepted = Some(value);
                    break;
                }
                step *= 0.5;
            }
        }
        if accepted.is_none() {
            return Err(Error::NoConvergence { residual, iterations, tolerance: tol });
        }

        regauge(&mut trial_h);
        // Re-evaluate on the gauged point so gradient and value stay
        // consistent with the stored h. The gauge shift leaves F invariant
        // only up to round-off; cheap insurance is one extra evaluation.
        let new_value = engine.measures_and_integral(&trial_h, &mut trial_measures);
        let new_grad: Vec<f64> = trial_measures.iter().map(|&mi| mi - inv_n).collect();
        if descent != Descent::Gradient {
            let s: Vec<f64> = trial_h.iter().zip(&h).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            history.push(s, y);
        }
        std::mem::swap(&mut h, &mut trial_h);
        std::mem::swap(&mut measures, &mut trial_measures);
        grad = new_grad;
        value = new_value;
        residual = sup_norm(&grad);
        iterations += 1;
    }

    let potential = PiecewiseAffinePotential::from_gauged(points.to_vec(), h)?;
    Ok(FittedTransport {
        potential,
        reference,
        residual,
        iterations,
        config: ResolvedConfig { backend, tol, m, seed: config.seed },
        quadrature,
    })
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Backtracking line search with sufficient decrease. Returns the accepted
/// objective value with trial_h and trial_measures filled, or None when no
/// acceptable step exists down to the point where h stops moving.
///
/// When the required decrease underflows the resolution of the objective,
/// the test degenerates to trial_value == value; such steps only count if
/// they cut the gradient residual, otherwise the iterate drifts at a frozen
/// objective without ever converging.
fn armijo(
    engine: &Engine,
    h: &[f64],
    dir: &[f64],
    slope: f64,
    value: f64,
    residual: f64,
    inv_n: f64,
    trial_h: &mut [f64],
    trial_measures: &mut [f64],
) -> Option<f64> {
    let mut step = 1.0f64;
    for _ in 0..80 {
        let mut moved = false;
        for ((t, hi), di) in trial_h.iter_mut().zip(h).zip(dir) {
            *t = hi + step * di;
            moved |= *t != *hi;
        }
        // A step below the resolution of h can be "accepted" with zero
        // numerical progress and freeze the outer loop.
        if !moved {
            return None;
        }
        let trial_value = engine.measures_and_integral(trial_h, trial_measures);
        if trial_value <= value + 1e-4 * step * slope {
            if trial_value < value {
                return Some(trial_value);
            }
            let trial_residual = trial_measures
                .iter()
                .fold(0.0f64, |acc, &mi| acc.max((mi - inv_n).abs()));
            if trial_residual < residual * (1.0 - 1e-3) {
                return Some(trial_value);
            }
        }
        step *= 0.5;
    }
    None
}

/// Apply the weighted graph Laplacian to x.
fn laplacian_apply(pairs: &[(u32, u32, f64)], x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for &(i, j, w) in pairs {
        let d = w * (x[i as usize] - x[j as usize]);
        out[i as usize] += d;
        out[j as usize] -= d;
    }
}

/// Solve L x = rhs on the sum-zero subspace by Jacobi-preconditioned
/// conjugate gradients, to a tenth of the input residual. The Laplacian is
/// singular along constants, so both the preconditioned residual and the
/// iterate are re-projected to mean zero. Early breakdown returns the
/// current iterate; an inexact direction is still a useful descent
/// direction and the damped acceptance test judges it.
fn solve_laplacian(pairs: &[(u32, u32, f64)], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut diag = vec![0.0f64; n];
    for &(i, j, w) in pairs {
        diag[i as usize] += w;
        diag[j as usize] += w;
    }
    // An isolated site means an empty cell; the Newton phase only runs when
    // every cell has mass.
    if diag.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let mut x = vec![0.0f64; n];
    let mut r = rhs.to_vec();
    regauge(&mut r);
    let target = 0.1 * dot(&r, &r).sqrt();
    if target == 0.0 {
        return Some(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    regauge(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0f64; n];
    let cap = 200 + 20 * n;
    for _ in 0..cap {
        if dot(&r, &r).sqrt() <= target {
            break;
        }
        laplacian_apply(pairs, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !(rz > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&diag) {
            *zi = ri / di;
        }
        regauge(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    regauge(&mut x);
    Some(x)
}

/// One damped Newton attempt. On success trial_h and trial_measures hold
/// the accepted point and true is returned; on rejection (no damping level
/// passes) both scratch buffers are garbage and false is returned.
///
/// The acceptance rule follows the damped scheme for semi-discrete
/// transport: a step of length t must cut the sup residual by a factor
/// (1 - t/4) while keeping every cell above half the current minimum mass,
/// which is what guarantees the Hessian stays nondegenerate along the path.
fn newton_step(
    engine: &Engine,
    h: &[f64],
    measures: &[f64],
    residual: f64,
    inv_n: f64,
    pairs: &mut Vec<(u32, u32, f64)>,
    trial_h: &mut [f64],
    trial_measures: &mut [f64],
) -> bool {
    if !engine.laplacian_pairs(h, pairs) {
        return false;
    }
    let min_m = measures.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps0 = 0.5 * min_m.min(inv_n);
    let rhs: Vec<f64> = measures.iter().map(|&mi| inv_n - mi).collect();
    let Some(delta) = solve_laplacian(pairs, &rhs) else {
        return false;
    };
    let mut t = 1.0f64;
    for _ in 0..40 {
        let mut moved = false;
        for ((tr, hi), di) in trial_h.iter_mut().zip(h).zip(&delta) {
            *tr = hi + t * di;
            moved |= *tr != *hi;
        }
        if !moved {
            return false;
        }
        engine.measures_into(trial_h, trial_measures);
        let mut trial_residual = 0.0f64;
        let mut trial_min = f64::INFINITY;
        for &mi in trial_measures.iter() {
            trial_residual = trial_residual.max((mi - inv_n).abs());
            trial_min = trial_min.min(mi);
        }
        if trial_residual <= (1.0 - 0.25 * t) * residual && trial_min >= eps0 {
            return true;
        }
        t *= 0.5;
    }
    false
}

/// Quadratic transport cost of the fitted assignment,
/// integral of ||u - X_{assign(u)}||^2 over the reference.
pub fn transport_cost(fitted: &FittedTransport) -> Result<f64> {
    let backend = fitted.config.backend;
    let redrawn;
    let quadrature = match (&fitted.quadrature, backend) {
        (Some(q), _) => Some(q),
        (None, Backend::Montecarlo) => {
            redrawn = Quadrature::draw(fitted.reference, fitted.config.m, fitted.config.seed);
            Some(&redrawn)
        }
        _ => None,
    };
    let engine = Engine::new(backend, fitted.potential.points(), quadrature)?;
    Ok(engine.quadratic_transport(fitted.potential.weights(), fitted.potential.points()))
}
