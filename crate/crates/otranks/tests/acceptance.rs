//! End-to-end acceptance checks, one test per numbered criterion. Each test
//! prints a single summary line (visible under --nocapture, or on failure)
//! and asserts the documented thresholds. Statistical criteria run pinned
//! seeds so the suite is exactly reproducible; calibration constants that
//! came from pilot runs are noted inline next to the assertion they feed.

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use otranks::seeding::{derive_seed, rng_from};
use otranks::stats::{ks_test_two_sample, ks_test_uniform, median, ols_slope};
use otranks::synth::{banana, gauss_mixture_2s, indep_setting};
use otranks::{
    cell_measures, fit, fit_with_quadrature, independence_statistic, independence_test,
    local_sup_deviation, load_model, model_to_json, psi_rate, quantile, rank, rank_at_sample,
    two_sample_statistic, two_sample_statistic_exact_2d, two_sample_test, Backend,
    PiecewiseAffinePotential, Quadrature, RankMode, RateSpec, ReferenceMeasure, Seeds, Setting,
    SolverConfig, normalized_statistic,
};
use rand::Rng;

macro_rules! check {
    ($fails:ident, $cond:expr, $($msg:tt)*) => {
        if !$cond {
            $fails.push(format!($($msg)*));
        }
    };
}

fn report(label: &str, detail: &str, fails: Vec<String>) {
    if fails.is_empty() {
        println!("[{label}] PASS {detail}");
    } else {
        println!("[{label}] FAIL {detail}");
        for f in &fails {
            println!("  {f}");
        }
        panic!("{label}: {} check(s) failed: {fails:?}", fails.len());
    }
}

fn cube(d: usize) -> ReferenceMeasure {
    ReferenceMeasure::cube(d).unwrap()
}

fn exact_cfg(backend: Backend, tol: f64) -> SolverConfig {
    SolverConfig {
        backend,
        tolerance: Some(tol),
        max_iterations: 200_000,
        ..SolverConfig::default()
    }
}

fn normal_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
        .collect()
}

fn uniform_square(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// Rows [x, x] built from one standard normal coordinate.
fn comonotone_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    gauss_mixture_2s(Setting::I, n, seed)
        .unwrap()
        .into_iter()
        .map(|r| vec![r[0], r[0]])
        .collect()
}

#[test]
fn c01_univariate_closed_forms() {
    let started = Instant::now();
    let mut fails = Vec::new();
    let cube1 = cube(1);
    for instance in 0..50u64 {
        let mut rng = rng_from(derive_seed(0xc01, "instance", instance));
        let n = 3 + (rng.random::<u32>() as usize) % 98;
        let mut xs: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let f = fit(&rows, cube1, &exact_cfg(Backend::Exact1d, 1e-12)).unwrap();
        let h = f.potential.weights();

        // Sorted-data weight recurrence: h[i+1] - h[i] = (i+1)(x[i] - x[i+1])/n
        // with 0-based i, the closed form for uniform cell masses on a line.
        for i in 0..n - 1 {
            let expected = (i + 1) as f64 * (xs[i] - xs[i + 1]) / n as f64;
            let got = h[i + 1] - h[i];
            check!(
                fails,
                (got - expected).abs() <= 1e-8,
                "instance {instance}: weight step {i} off by {:e}",
                (got - expected).abs()
            );
        }

        // Off-knot quantiles return the order statistic itself, bitwise: with
        // u strictly inside ((i-1)/n, i/n) the argmax cell is unambiguous.
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let q = quantile(&f, &[u]).unwrap();
            check!(
                fails,
                q[0].to_bits() == xs[i].to_bits(),
                "instance {instance}: quantile({u}) = {} not row {}",
                q[0],
                xs[i]
            );
        }

        // Ranks between consecutive data values sit at the fraction (i+1)/n;
        // queries outside the hull pin to the interval ends exactly.
        for i in 0..n - 1 {
            if xs[i + 1] - xs[i] < 1e-6 {
                continue;
            }
            let x = 0.5 * (xs[i] + xs[i + 1]);
            let r = rank(&f, &[x], RankMode::ExactVertex).unwrap();
            let expected = (i + 1) as f64 / n as f64;
            check!(
                fails,
                (r.point[0] - expected).abs() <= 1e-8,
                "instance {instance}: rank between rows {i},{} = {} want {expected}",
                i + 1,
                r.point[0]
            );
        }
        let low = rank(&f, &[xs[0] - 1.0], RankMode::ExactVertex).unwrap();
        let high = rank(&f, &[xs[n - 1] + 1.0], RankMode::ExactVertex).unwrap();
        check!(fails, low.point[0] == 0.0, "instance {instance}: rank below hull {}", low.point[0]);
        check!(fails, high.point[0] == 1.0, "instance {instance}: rank above hull {}", high.point[0]);
    }
    let elapsed = started.elapsed().as_secs_f64();
    check!(fails, elapsed < 5.0, "runtime {elapsed:.2}s exceeds 5s");
    report("c01 univariate closed forms", &format!("(50 instances, {elapsed:.2}s)"), fails);
}

#[test]
fn c02_cell_measure_uniformity() {
    let started = Instant::now();
    let mut fails = Vec::new();
    let cube2 = cube(2);
    let n = 50;
    let pts = uniform_square(n, 0xc02);
    let target = 1.0 / n as f64;

    let f = fit(&pts, cube2, &exact_cfg(Backend::Exact2d, 1e-7)).unwrap();
    let areas = cell_measures(&f.potential, cube2, Backend::Exact2d, None).unwrap();
    let exact_dev =
        areas.iter().map(|a| (a - target).abs()).fold(0.0f64, f64::max);
    check!(fails, exact_dev <= 1e-7, "exact2d max |area - 1/n| = {exact_dev:e}");

    let mc_cfg = SolverConfig {
        backend: Backend::Montecarlo,
        quadrature_size: Some(100_000),
        max_iterations: 200_000,
        ..SolverConfig::default()
    };
    let fm = fit(&pts, cube2, &mc_cfg).unwrap();
    let mc_dev = fm.residual;
    check!(fails, mc_dev <= 0.25 / n as f64, "montecarlo residual {mc_dev:e}");

    let elapsed = started.elapsed().as_secs_f64();
    check!(fails, elapsed < 30.0, "runtime {elapsed:.2}s exceeds 30s");
    report(
        "c02 cell measure uniformity",
        &format!("(exact dev {exact_dev:.2e}, mc dev {mc_dev:.2e}, {elapsed:.2}s)"),
        fails,
    );
}

#[test]
fn c03_duality_certificates() {
    let mut fails = Vec::new();
    let cube2 = cube(2);
    let mut vertex_cases = 0usize;
    for m in 0..20u64 {
        let pts = normal_points(40, 2, derive_seed(0xc03, "data", m));
        let f = fit(&pts, cube2, &exact_cfg(Backend::Exact2d, 1e-9)).unwrap();

        // rank() verifies its own optimality certificate (duality gap plus
        // probe dominance at 1e-8) and errors when it fails.
        let mut rng = rng_from(derive_seed(0xc03, "query", m));
        for k in 0..100 {
            let y = [
                1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ];
            if let Err(e) = rank(&f, &y, RankMode::ExactVertex) {
                fails.push(format!("model {m} query {k}: certificate failed: {e}"));
            }
        }

        // At a data point the conjugate value is -h_i.
        let h = f.potential.weights();
        for (i, row) in pts.iter().enumerate() {
            let r = rank(&f, row, RankMode::ExactVertex).unwrap();
            check!(
                fails,
                (r.value + h[i]).abs() <= 1e-8,
                "model {m}: value at site {i} = {} want {}",
                r.value,
                -h[i]
            );
        }

        // Every interior vertex shared by exactly three cells identifies the
        // rank of any point inside the triangle of those three sites; the
        // centroid is such a point whenever the triangle is non-degenerate.
        let cells = f.potential.cells_2d().unwrap();
        let mut shared: std::collections::BTreeMap<(i64, i64), (Vec<usize>, [f64; 2])> =
            std::collections::BTreeMap::new();
        for cell in &cells {
            for v in &cell.vertices {
                let key = ((v[0] * 1e9).round() as i64, (v[1] * 1e9).round() as i64);
                let entry = shared.entry(key).or_insert_with(|| (Vec::new(), [v[0], v[1]]));
                if !entry.0.contains(&cell.site) {
                    entry.0.push(cell.site);
                }
            }
        }
        for (sites, v) in shared.values() {
            if sites.len() != 3 {
                continue;
            }
            if !(v[0] > 1e-7 && v[0] < 1.0 - 1e-7 && v[1] > 1e-7 && v[1] < 1.0 - 1e-7) {
                continue;
            }
            let (a, b, c) = (&pts[sites[0]], &pts[sites[1]], &pts[sites[2]]);
            let area2 =
                (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if area2.abs() < 1e-9 {
                continue;
            }
            let x = [
                (a[0] + b[0] + c[0]) / 3.0,
                (a[1] + b[1] + c[1]) / 3.0,
            ];
            let r = rank(&f, &x, RankMode::ExactVertex).unwrap();
            let err = (r.point[0] - v[0]).abs().max((r.point[1] - v[1]).abs());
            check!(
                fails,
                err <= 1e-8,
                "model {m}: 3-cell vertex ({:.6},{:.6}) rank err {err:e}",
                v[0],
                v[1]
            );
            vertex_cases += 1;
        }
    }
    check!(fails, vertex_cases > 500, "only {vertex_cases} applicable 3-cell vertices");
    report(
        "c03 duality certificates",
        &format!("(20 models, 100 queries each, {vertex_cases} vertex cases)"),
        fails,
    );
}

#[test]
fn c04_rank_monotonicity_along_lines() {
    let mut fails = Vec::new();
    let cube2 = cube(2);
    for m in 0..20u64 {
        let pts = normal_points(40, 2, derive_seed(0xc04, "data", m));
        let f = fit(&pts, cube2, &exact_cfg(Backend::Exact2d, 1e-8)).unwrap();
        let mut rng = rng_from(derive_seed(0xc04, "lines", m));
        for line in 0..10 {
            let x = [
                1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ];
            let y = [
                1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ];
            let dir = [x[0] - y[0], x[1] - y[1]];
            let mut prev = f64::NEG_INFINITY;
            for k in 0..50 {
                let t = k as f64 / 49.0;
                let p = [t * x[0] + (1.0 - t) * y[0], t * x[1] + (1.0 - t) * y[1]];
                let r = rank(&f, &p, RankMode::ExactVertex).unwrap();
                let s = dir[0] * r.point[0] + dir[1] * r.point[1];
                check!(
                    fails,
                    s >= prev - 1e-9,
                    "model {m} line {line} step {k}: projection drops {prev} -> {s}"
                );
                prev = s;
            }
        }
    }
    report("c04 rank monotonicity along lines", "(200 lines, 50 points each)", fails);
}

#[test]
fn c05_equivariance() {
    let mut fails = Vec::new();
    let cube2 = cube(2);

    // Affine map of a fitted model: scaling sites by c > 0 and translating,
    // with weights scaled by c, leaves every cell assignment unchanged.
    let pts = normal_points(40, 2, 0xc05);
    let f = fit(&pts, cube2, &exact_cfg(Backend::Exact2d, 1e-9)).unwrap();
    let (c, b) = (2.5f64, [0.7f64, -0.3f64]);
    let mapped: Vec<Vec<f64>> = pts
        .iter()
        .map(|r| vec![c * r[0] + b[0], c * r[1] + b[1]])
        .collect();
    let scaled_h: Vec<f64> = f.potential.weights().iter().map(|&w| c * w).collect();
    let g = PiecewiseAffinePotential::from_gauged(mapped.clone(), scaled_h).unwrap();
    let mut rng = rng_from(derive_seed(0xc05, "probe", 0));
    for _ in 0..500 {
        let u = [rng.random::<f64>(), rng.random::<f64>()];
        let ia = f.potential.assign(&u).unwrap();
        let ib = g.assign(&u).unwrap();
        check!(fails, ia == ib, "assign differs at ({},{}) : {ia} vs {ib}", u[0], u[1]);
    }

    // Refitting the mapped data reproduces the scaled weights within 10x the
    // solver tolerance, and the same assignments.
    let tol = 1e-9;
    let f2 = fit(&mapped, cube2, &exact_cfg(Backend::Exact2d, tol)).unwrap();
    for (i, (&w0, &w1)) in f.potential.weights().iter().zip(f2.potential.weights()).enumerate() {
        check!(
            fails,
            (c * w0 - w1).abs() <= 10.0 * tol,
            "refit weight {i}: {} vs {}",
            c * w0,
            w1
        );
    }
    for _ in 0..200 {
        let u = [rng.random::<f64>(), rng.random::<f64>()];
        check!(
            fails,
            f.potential.assign(&u).unwrap() == f2.potential.assign(&u).unwrap(),
            "refit assign differs at ({},{})",
            u[0],
            u[1]
        );
    }

    // Orthogonal map with the ball reference: fitting rotated data against a
    // rotated copy of the same quadrature commutes with the rotation.
    let ball2 = ReferenceMeasure::ball(2).unwrap();
    let theta = std::f64::consts::PI / 6.0;
    let (cos, sin) = (theta.cos(), theta.sin());
    let rot = |p: &[f64]| vec![cos * p[0] - sin * p[1], sin * p[0] + cos * p[1]];
    let data = normal_points(40, 2, derive_seed(0xc05, "ball", 0));
    let rotated: Vec<Vec<f64>> = data.iter().map(|r| rot(r)).collect();
    let quad = Quadrature::draw(ball2, 40_000, 0xc05);
    let quad_rot = Quadrature {
        points: quad.points.iter().map(|p| rot(p)).collect(),
        seed: quad.seed,
    };
    let mc_cfg = SolverConfig {
        backend: Backend::Montecarlo,
        max_iterations: 200_000,
        ..SolverConfig::default()
    };
    let fa = fit_with_quadrature(&data, ball2, &mc_cfg, quad).unwrap();
    let fb = fit_with_quadrature(&rotated, ball2, &mc_cfg, quad_rot).unwrap();
    let mc_tol = 0.25 / 40.0;
    let mut max_gap = 0.0f64;
    for k in 0..20 {
        let y = &data[k];
        let ra = rank(&fa, y, RankMode::Optimize).unwrap();
        let rb = rank(&fb, &rot(y), RankMode::Optimize).unwrap();
        let ra_rot = rot(&ra.point);
        let gap = (ra_rot[0] - rb.point[0])
            .abs()
            .max((ra_rot[1] - rb.point[1]).abs());
        max_gap = max_gap.max(gap);
        check!(fails, gap <= 10.0 * mc_tol, "query {k}: rotated rank gap {gap:e}");
    }

    report(
        "c05 equivariance",
        &format!("(500 exact assigns, refit 10x{tol:.0e}, rotation gap {max_gap:.2e})"),
        fails,
    );
}

#[test]
fn c06_distribution_free_ranks() {
    let started = Instant::now();
    let mut fails = Vec::new();
    let cube2 = cube(2);
    let reps = 2000;
    let n = 20;
    let cfg = exact_cfg(Backend::Exact2d, 1e-7);
    let mut coords: Vec<Vec<Vec<f64>>> = Vec::new(); // [setting][coord][rep]
    for (si, name) in ["gaussian", "banana"].iter().enumerate() {
        let mut u1 = Vec::with_capacity(reps);
        let mut u2 = Vec::with_capacity(reps);
        for rep in 0..reps as u64 {
            let data_seed = derive_seed(0xc06, name, rep);
            let rows = if si == 0 {
                gauss_mixture_2s(Setting::I, n, data_seed).unwrap()
            } else {
                banana(n, data_seed).unwrap()
            };
            let f = fit(&rows, cube2, &cfg).unwrap();
            let mut rng = rng_from(derive_seed(data_seed, "rank", 0));
            let u = rank_at_sample(&f, 0, &mut rng).unwrap();
            u1.push(u[0]);
            u2.push(u[1]);
        }
        for (ci, us) in [&u1, &u2].into_iter().enumerate() {
            let (stat, p) = ks_test_uniform(us);
            check!(
                fails,
                p > 0.001,
                "{name} coordinate {ci}: uniformity KS stat {stat:.4}, p {p:.5}"
            );
        }
        coords.push(vec![u1, u2]);
    }
    for ci in 0..2 {
        let (stat, p) = ks_test_two_sample(&coords[0][ci], &coords[1][ci]);
        check!(
            fails,
            p > 0.001,
            "settings differ on coordinate {ci}: KS stat {stat:.4}, p {p:.5}"
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    check!(fails, elapsed < 600.0, "runtime {elapsed:.1}s exceeds 10 min");
    report(
        "c06 distribution free ranks",
        &format!("(2x{reps} replications, n={n}, {elapsed:.1}s)"),
        fails,
    );
}

/// Shared deviation study for the trend and rate criteria: 20 replications
/// of U[0,1]^2 data at each n, sup deviation of the quantile map from the
/// identity over the ball B((.5,.5), .3), reduced to a per-n median.
fn deviation_medians() -> &'static Vec<(usize, f64)> {
    static STUDY: OnceLock<Vec<(usize, f64)>> = OnceLock::new();
    STUDY.get_or_init(|| {
        let cube2 = cube(2);
        let cfg = exact_cfg(Backend::Exact2d, 1e-7);
        [100usize, 400, 1600]
            .iter()
            .map(|&n| {
                let devs: Vec<f64> = (0..20u64)
                    .map(|rep| {
                        let pts = uniform_square(n, derive_seed(0xc07, "rep", n as u64 * 100 + rep));
                        let f = fit(&pts, cube2, &cfg).unwrap();
                        local_sup_deviation(&f, &[0.5, 0.5], 0.3).unwrap()
                    })
                    .collect();
                (n, median(&devs))
            })
            .collect()
    })
}

#[test]
fn c07_deviation_shrinks_with_n() {
    let mut fails = Vec::new();
    let meds = deviation_medians();
    for w in meds.windows(2) {
        check!(
            fails,
            w[1].1 < w[0].1,
            "median not decreasing: n={} gives {:.4}, n={} gives {:.4}",
            w[0].0,
            w[0].1,
            w[1].0,
            w[1].1
        );
    }
    let (first, last) = (meds[0].1, meds[2].1);
    check!(
        fails,
        last <= first * 2.0 / 3.0,
        "n=1600 median {last:.4} not <= 2/3 of n=100 median {first:.4}"
    );
    let detail: Vec<String> = meds.iter().map(|(n, m)| format!("n={n}:{m:.4}")).collect();
    report("c07 deviation shrinks with n", &format!("({})", detail.join(" ")), fails);
}

#[test]
fn c08_deviation_rate_bracket() {
    let mut fails = Vec::new();
    let meds = deviation_medians();
    let xs: Vec<f64> = meds.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = meds.iter().map(|(_, m)| m.ln()).collect();
    let slope = ols_slope(&xs, &ys);
    let psi: Vec<f64> = meds
        .iter()
        .map(|(n, _)| psi_rate(&RateSpec { n: *n as u64, d: 2, q: 6.0 }).unwrap())
        .collect();
    let psi_slope = ols_slope(&xs, &psi.iter().map(|v| v.ln()).collect::<Vec<_>>());

    // Psi(n, 2, 6) bounds the deviation from above, so the observed decay may
    // be steeper than Psi's own slope (it measurably is: a 5-replication
    // pilot gave slope -0.358 against a Psi slope of -0.143). The checks are
    // therefore one-sided: deviation decays, at least as fast as the bound
    // anchored at the smallest n, and no slower than Psi's slope plus slack.
    check!(fails, slope < 0.0, "slope {slope:.4} not negative");
    check!(
        fails,
        slope <= psi_slope + 0.15,
        "slope {slope:.4} decays slower than psi slope {psi_slope:.4} + 0.15"
    );
    let anchor = meds[0].1 / psi[0];
    for (i, (n, m)) in meds.iter().enumerate().skip(1) {
        let bound = anchor * psi[i];
        check!(
            fails,
            *m <= bound,
            "n={n}: median {m:.4} above anchored bound {bound:.4}"
        );
    }
    report(
        "c08 deviation rate bracket",
        &format!("(slope {slope:.4}, psi slope {psi_slope:.4})"),
        fails,
    );
}

#[test]
fn c09_two_sample_level_and_power() {
    let started = Instant::now();
    let mut fails = Vec::new();
    let cube2 = cube(2);
    let alpha = 0.1;

    // Level: both samples N2(0, I), n = m = 50, B = 99 permutations, 200
    // replications; the rejection rate must sit in the 99% binomial band
    // around 0.1.
    let mut rejections = 0usize;
    for rep in 0..200u64 {
        let x = gauss_mixture_2s(Setting::I, 50, derive_seed(0xc09, "x", rep)).unwrap();
        let y = gauss_mixture_2s(Setting::I, 50, derive_seed(0xc09, "y", rep)).unwrap();
        let r = two_sample_test(&x, &y, cube2, 10_000, 99, Seeds::from_master(derive_seed(0xc09, "seeds", rep))).unwrap();
        if r.p_value.unwrap() <= alpha {
            rejections += 1;
        }
    }
    let level = rejections as f64 / 200.0;
    check!(
        fails,
        (0.04..=0.17).contains(&level),
        "level {level:.3} outside [0.04, 0.17]"
    );

    // Power: mean shift (2, 0) at n = m = 100, B = 19, 100 replications.
    // Pilot run: 20 of 20 rejections, so the 0.80 floor is attainable.
    let mut power_rejections = 0usize;
    for rep in 0..100u64 {
        let mut x = gauss_mixture_2s(Setting::I, 100, derive_seed(0xc09, "px", rep)).unwrap();
        for row in x.iter_mut() {
            row[0] += 2.0;
        }
        let y = gauss_mixture_2s(Setting::I, 100, derive_seed(0xc09, "py", rep)).unwrap();
        let r = two_sample_test(&x, &y, cube2, 10_000, 19, Seeds::from_master(derive_seed(0xc09, "pseeds", rep))).unwrap();
        if r.p_value.unwrap() <= alpha {
            power_rejections += 1;
        }
    }
    let power = power_rejections as f64 / 100.0;
    check!(fails, power > 0.80, "power {power:.2} not above 0.80");

    let elapsed = started.elapsed().as_secs_f64();
    check!(fails, elapsed < 1800.0, "runtime {elapsed:.0}s exceeds 30 min");
    report(
        "c09 two sample level and power",
        &format!("(level {level:.3}, power {power:.2}, {elapsed:.0}s)"),
        fails,
    );
}

#[test]
fn c10_independence_level_and_power() {
    let started = Instant::now();
    let mut fails = Vec::new();
    let alpha = 0.1;

    // Level: independent standard normal coordinates, n = 100, B = 99, 200
    // replications, same binomial band as the two-sample level check.
    let mut rejections = 0usize;
    for rep in 0..200u64 {
        let z = indep_setting(Setting::I, 100, derive_seed(0xc10, "z", rep)).unwrap();
        let r = independence_test(&z, &[1, 1], 99, Seeds::from_master(derive_seed(0xc10, "seeds", rep))).unwrap();
        if r.p_value.unwrap() <= alpha {
            rejections += 1;
        }
    }
    let level = rejections as f64 / 200.0;
    check!(
        fails,
        (0.04..=0.17).contains(&level),
        "level {level:.3} outside [0.04, 0.17]"
    );

    // Median separation at n = 200: comonotone data against the independent
    // null. Pilot medians (20 replications each): 0.00287 under the null,
    // 0.09707 comonotone, a factor of 33.8.
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for rep in 0..30u64 {
        let z0 = indep_setting(Setting::I, 200, derive_seed(0xc10, "h0", rep)).unwrap();
        h0.push(
            independence_statistic(&z0, &[1, 1], Seeds::from_master(derive_seed(0xc10, "h0s", rep)))
                .unwrap()
                .statistic,
        );
        let z1 = comonotone_rows(200, derive_seed(0xc10, "h1", rep));
        h1.push(
            independence_statistic(&z1, &[1, 1], Seeds::from_master(derive_seed(0xc10, "h1s", rep)))
                .unwrap()
                .statistic,
        );
    }
    let (m0, m1) = (median(&h0), median(&h1));
    check!(fails, m1 > 5.0 * m0, "median ratio {:.2} not above 5", m1 / m0);

    // Power against comonotone data: B = 19, 30 replications. Pilot: 10 of
    // 10 rejections.
    let mut power_rejections = 0usize;
    for rep in 0..30u64 {
        let z = comonotone_rows(200, derive_seed(0xc10, "pw", rep));
        let r = independence_test(&z, &[1, 1], 19, Seeds::from_master(derive_seed(0xc10, "pws", rep))).unwrap();
        if r.p_value.unwrap() <= alpha {
            power_rejections += 1;
        }
    }
    let power = power_rejections as f64 / 30.0;
    check!(fails, power > 0.80, "power {power:.2} not above 0.80");

    let elapsed = started.elapsed().as_secs_f64();
    report(
        "c10 independence level and power",
        &format!("(level {level:.3}, median ratio {:.1}, power {power:.2}, {elapsed:.0}s)", m1 / m0),
        fails,
    );
}

#[test]
fn c11_backend_agreement() {
    let mut fails = Vec::new();
    let cube2 = cube(2);

    // The exact-area statistic integrates the same rank realization the
    // Monte Carlo statistic samples, so their difference is pure quadrature
    // noise. Its standard error is estimated from 10 seeds per instance and
    // the first seed's difference must sit within 4 of them.
    let mut worst_ratio = 0.0f64;
    for inst in 0..20u64 {
        let n = 30 + (inst as usize % 4) * 5;
        let m = 35 + (inst as usize % 3) * 7;
        let x = normal_points(n, 2, derive_seed(0xc11, "x", inst));
        let y = normal_points(m, 2, derive_seed(0xc11, "y", inst));
        let diffs: Vec<f64> = (0..10u64)
            .map(|k| {
                let seeds = Seeds::from_master(derive_seed(0xc11, "seeds", inst * 100 + k));
                let mc = two_sample_statistic(&x, &y, cube2, 10_000, seeds).unwrap().statistic;
                let exact = two_sample_statistic_exact_2d(&x, &y, cube2, seeds).unwrap().statistic;
                mc - exact
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let se = var.sqrt().max(1e-12);
        let ratio = diffs[0].abs() / se;
        worst_ratio = worst_ratio.max(ratio);
        check!(
            fails,
            ratio <= 4.0,
            "instance {inst}: |mc - exact| = {:.3e} is {ratio:.2} SEs (se {se:.3e})",
            diffs[0].abs()
        );
    }

    // Vertex enumeration and iterative ascent agree as rank solvers.
    let pts = normal_points(60, 2, derive_seed(0xc11, "model", 0));
    let f = fit(&pts, cube2, &exact_cfg(Backend::Exact2d, 1e-9)).unwrap();
    let mut rng = rng_from(derive_seed(0xc11, "queries", 0));
    let mut worst_gap = 0.0f64;
    for k in 0..500 {
        let y = [
            1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
            1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
        ];
        let rv = rank(&f, &y, RankMode::ExactVertex).unwrap();
        let ro = rank(&f, &y, RankMode::Optimize).unwrap();
        let gap = (rv.point[0] - ro.point[0])
            .abs()
            .max((rv.point[1] - ro.point[1]).abs())
            .max((rv.value - ro.value).abs());
        worst_gap = worst_gap.max(gap);
        check!(fails, gap <= 1e-6, "query {k}: mode gap {gap:e}");
    }

    report(
        "c11 backend agreement",
        &format!("(worst |diff|/SE {worst_ratio:.2}, worst mode gap {worst_gap:.1e})"),
        fails,
    );
}

#[test]
fn c12_cli_round_trip() {
    let mut fails = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_otranks");
    let path = |name: &str| dir.path().join(name);
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "otranks {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };

    let data = path("data.csv");
    let data_s = data.to_str().unwrap();
    run(&["synth", "standard-normal", "--n", "40", "--seed", "7", "--out", data_s]);

    // fit -> save -> load -> evaluate, against the same steps in process.
    let model = path("model.json");
    let model_s = model.to_str().unwrap();
    run(&["fit", "--input", data_s, "--out", model_s]);
    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let in_process = fit(&rows, cube(2), &SolverConfig::default()).unwrap();
    let cli_json = std::fs::read_to_string(&model).unwrap();
    check!(
        fails,
        cli_json.trim_end() == model_to_json(&in_process).unwrap(),
        "CLI model JSON differs from the in-process fit"
    );

    let ranks = path("ranks.csv");
    let ranks_s = ranks.to_str().unwrap();
    run(&["rank", "--model", model_s, "--query", data_s, "--out", ranks_s]);
    let loaded = load_model(&model).unwrap();
    for (row, line) in rows.iter().zip(std::fs::read_to_string(&ranks).unwrap().lines()) {
        let want = rank(&loaded, row, RankMode::Auto).unwrap().point;
        let got: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        check!(
            fails,
            got.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()),
            "rank CSV row differs bitwise from in-process evaluation"
        );
    }

    // Every command is seed-deterministic: byte-identical outputs on rerun.
    let reruns: Vec<(&str, Vec<String>)> = vec![
        ("synth.csv", vec!["synth".into(), "banana".into(), "--n".into(), "30".into(), "--seed".into(), "3".into()]),
        ("quantile.csv", vec!["quantile".into(), "--model".into(), model_s.into(), "--query".into(), ranks_s.into()]),
        ("depth.csv", vec!["depth".into(), "--model".into(), model_s.into(), "--grid".into(), "4".into()]),
        ("cells.json", vec!["cells".into(), "--model".into(), model_s.into()]),
        (
            "t2s.json",
            vec![
                "test2s".into(), "--x".into(), data_s.into(), "--y".into(), data_s.into(),
                "--mc".into(), "1000".into(), "--perms".into(), "19".into(), "--seed".into(), "5".into(),
            ],
        ),
        (
            "indep.json",
            vec![
                "testindep".into(), "--input".into(), data_s.into(), "--split".into(), "1,1".into(),
                "--perms".into(), "19".into(), "--seed".into(), "5".into(),
            ],
        ),
    ];
    for (name, args) in &reruns {
        let out_a = path(&format!("a_{name}"));
        let out_b = path(&format!("b_{name}"));
        for out in [&out_a, &out_b] {
            let mut full: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
            full.push("--out");
            full.push(out.to_str().unwrap());
            run(&full);
        }
        check!(
            fails,
            std::fs::read(&out_a).unwrap() == std::fs::read(&out_b).unwrap(),
            "{name}: reruns differ"
        );
    }

    report("c12 cli round trip", "(fit/rank bitwise, 6 commands rerun byte-identical)", fails);
}

/// Centered-statistic comparison across two data families at n = m = 1000.
/// Runs for hours; kept out of the default suite.
#[test]
#[ignore = "multi-hour statistical harness; run explicitly with --ignored"]
fn c13_normalized_statistic_harness() {
    let mut fails = Vec::new();
    let cube2 = cube(2);
    let n = 1000;
    let reps = 200u64;
    let mut normalized: Vec<Vec<f64>> = Vec::new();
    for (si, setting) in [Setting::I, Setting::III].into_iter().enumerate() {
        let stats: Vec<f64> = (0..reps)
            .map(|rep| {
                let label = if si == 0 { "i" } else { "iii" };
                let x = gauss_mixture_2s(setting, n, derive_seed(0xc13, label, 2 * rep)).unwrap();
                let y = gauss_mixture_2s(setting, n, derive_seed(0xc13, label, 2 * rep + 1)).unwrap();
                let seeds = Seeds::from_master(derive_seed(0xc13, "seeds", si as u64 * reps + rep));
                two_sample_statistic(&x, &y, cube2, 10_000, seeds).unwrap().statistic
            })
            .collect();
        let center = stats.iter().sum::<f64>() / stats.len() as f64;
        normalized.push(
            stats
                .iter()
                .map(|&t| normalized_statistic(t, n, center).unwrap())
                .collect(),
        );
    }
    let mut a = normalized[0].clone();
    let mut b = normalized[1].clone();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    println!("qq pairs (sorted normalized statistic, family 1 vs family 2):");
    for (va, vb) in a.iter().zip(&b) {
        println!("{va:.6e},{vb:.6e}");
    }
    let (stat, p) = ks_test_two_sample(&normalized[0], &normalized[1]);
    println!("two-sample KS on normalized statistics: stat {stat:.4}, p {p:.6}");
    check!(fails, p >= 0.001, "normalized distributions differ: p {p:.6}");
    report("c13 normalized statistic harness", &format!("(KS p {p:.4})"), fails);
}
