//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rating_protocol::analysis::{
    long_term_utilities, specialized_stationary, stationary_distribution,
    stationary_fixed_point, utility_gap,
};
use rating_protocol::design::{
    alternate_optimize, grid_oracle, raw_constraint_slacks, select_protocol, SLACK_TOL,
};
use rating_protocol::incentives::{
    deviation_gain_direct, existence_threshold, first_stage_gain_at, is_sustainable,
    DeviationSpec,
};
use rating_protocol::model::{DesignParams, IntrinsicParams, Protocol, RecommendedStrategy};
use rating_protocol::sim::{estimate_deviation_gain, run_population, PlannedDeviation, SimConfig};

fn pass(n: usize, name: &str) {
    println!("acceptance {n:02} {name}: PASS");
}

fn random_design(rng: &mut ChaCha8Rng) -> DesignParams {
    loop {
        let v: [f64; 8] = std::array::from_fn(|_| rng.random::<f64>());
        if let Ok(d) = DesignParams::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]) {
            return d;
        }
    }
}

fn random_admissible(rng: &mut ChaCha8Rng, eps_max: f64) -> IntrinsicParams {
    loop {
        let c = rng.random::<f64>() * 0.7;
        let s = rng.random::<f64>() * 0.5;
        let eps = rng.random::<f64>() * eps_max;
        let omega = 0.1 + rng.random::<f64>() * 0.88;
        if 1.0 > (c + s) / (1.0 - eps) * 1.001 {
            if let Ok(p) = IntrinsicParams::new(1.0, c, s, eps, omega) {
                return p;
            }
        }
    }
}

#[test]
fn c01_stationary_distribution_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let d = random_design(&mut rng);
        let eps = rng.random::<f64>() * 0.49;
        let lam = rng.random::<f64>();
        let closed = stationary_distribution(&d, eps, lam);
        let iterated = stationary_fixed_point(&d, eps, lam, 1e-14, 1_000_000)
            .expect("fixed point converges");
        assert!(
            (closed.eta0 - iterated.eta0).abs() < 1e-10,
            "closed {} vs iterated {}",
            closed.eta0,
            iterated.eta0
        );
    }
    assert!(start.elapsed().as_secs_f64() < 5.0, "runtime budget exceeded");
    pass(1, "stationary distribution closed form = fixed point");
}

#[test]
fn c02_specialization_identity() {
    for k in 0..10 {
        let eps = 0.45 * k as f64 / 9.0;
        for i in 0..=100 {
            for j in 0..=100 {
                let (b0, b1) = (i as f64 / 100.0, j as f64 / 100.0);
                let special = specialized_stationary(b0, b1, eps);
                // The general closed form with alpha = gamma = delta = 1 and
                // the fair request rate.
                let phi0 = 0.5 * eps * b0;
                let phi1 = 0.5 * eps * b1;
                let general = phi1 / (1.0 + phi1 - phi0);
                assert!(
                    (special.eta0 - general).abs() < 1e-12,
                    "mismatch at ({b0}, {b1}, {eps})"
                );
            }
        }
    }
    pass(2, "specialized stationary form matches the general closed form");
}

#[test]
fn c03_utility_gap_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for k in 0..1000 {
        let params = random_admissible(&mut rng, 0.45);
        let d = random_design(&mut rng);
        let lam = rng.random::<f64>();
        let strategy = if k % 2 == 0 {
            RecommendedStrategy::Full
        } else {
            RecommendedStrategy::Strict
        };
        let proto = Protocol::new(strategy, d, lam).unwrap();
        let eta = stationary_distribution(&d, params.epsilon(), lam);
        let closed = utility_gap(&proto, &params, &eta).unwrap();
        let (lo, hi) = long_term_utilities(&proto, &params);
        assert!(
            (closed - (hi - lo)).abs() < 1e-10,
            "closed {} vs solved {}",
            closed,
            hi - lo
        );
    }
    pass(3, "utility gap closed form matches the Bellman linear solve");
}

#[test]
fn c04_existence_threshold_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let all_ones = DesignParams::all_ones();
    for k in 0..100 {
        let params = random_admissible(&mut rng, 0.3);
        let strategy = if k % 2 == 0 {
            RecommendedStrategy::Full
        } else {
            RecommendedStrategy::Strict
        };
        let sustainable_at = |omega: f64| {
            let p = params.with_omega(omega).unwrap();
            is_sustainable(&Protocol::compliant(strategy, all_ones), &p).sustainable
        };
        let (lo, hi) = (1e-9, 1.0 - 1e-9);
        match existence_threshold(&params, strategy) {
            None => assert!(!sustainable_at(hi), "threshold beyond one but sustainable"),
            Some(t) if t <= 1e-7 => assert!(sustainable_at((1e-6f64).max(t + 1e-9))),
            Some(t) => {
                assert!(!sustainable_at(lo) && sustainable_at(hi));
                let (mut lo, mut hi) = (lo, hi);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if sustainable_at(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let bisected = 0.5 * (lo + hi);
                assert!(
                    (bisected - t).abs() <= 1e-6,
                    "{strategy:?}: bisected {bisected} vs formula {t}"
                );
            }
        }
    }
    // Noiseless limits hold exactly.
    for _ in 0..10 {
        let c = rng.random::<f64>() * 0.5;
        let s = rng.random::<f64>() * 0.4;
        if 1.0 <= c + s {
            continue;
        }
        let p = IntrinsicParams::new(1.0, c, s, 0.0, 0.5).unwrap();
        let expected = (2.0 * s).max(1.0 - c + s);
        for strategy in [RecommendedStrategy::Full, RecommendedStrategy::Strict] {
            assert_eq!(existence_threshold(&p, strategy), Some(expected).filter(|t| *t < 1.0));
        }
    }
    pass(4, "existence thresholds match bisection and noiseless limits");
}

#[test]
fn c05_optimizer_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut done = 0;
    while done < 50 {
        let base = random_admissible(&mut rng, 0.25);
        let strategy = if done % 2 == 0 {
            RecommendedStrategy::Full
        } else {
            RecommendedStrategy::Strict
        };
        let Some(t) = existence_threshold(&base, strategy) else {
            continue;
        };
        if t > 0.99 {
            continue;
        }
        let omega = t + 0.002 + rng.random::<f64>() * (0.995 - t - 0.002);
        let params = base.with_omega(omega).unwrap();
        let start = Instant::now();
        let result = alternate_optimize(&params, strategy, 1e-6);
        assert!(result.feasible, "all-ones design is feasible above threshold");
        let (b0, b1) = result.betas.unwrap();
        let slacks = raw_constraint_slacks(&params, strategy, b0, b1);
        assert!(
            slacks.iter().all(|&s| s >= -SLACK_TOL),
            "raw constraint violated: {slacks:?}"
        );
        let (ob0, ob1, oracle_eta) =
            grid_oracle(&params, strategy, 1e-3).expect("oracle finds a feasible point");
        assert!(
            (result.eta0.unwrap() - oracle_eta).abs() <= 2e-3,
            "{strategy:?}: optimizer {} vs oracle {} at ({ob0}, {ob1})",
            result.eta0.unwrap(),
            oracle_eta
        );
        assert!(
            start.elapsed().as_secs_f64() < 10.0,
            "per-point runtime budget exceeded"
        );
        done += 1;
    }
    pass(5, "alternating optimizer matches the brute-force grid oracle");
}

/// Strategy regions over a (parameter, omega) grid; omega ascending per column.
fn region_columns(
    make_params: impl Fn(f64, f64) -> IntrinsicParams,
    x_range: (f64, f64),
    omega_range: (f64, f64),
    cells: usize,
) -> Vec<Vec<RecommendedStrategy>> {
    (0..cells)
        .map(|i| {
            let x = x_range.0 + (x_range.1 - x_range.0) * i as f64 / (cells - 1) as f64;
            (0..cells)
                .map(|j| {
                    let w = omega_range.0
                        + (omega_range.1 - omega_range.0) * j as f64 / (cells - 1) as f64;
                    select_protocol(&make_params(x, w), 1e-6).strategy
                })
                .collect()
        })
        .collect()
}

fn check_region_structure(columns: &[Vec<RecommendedStrategy>], full_threshold_decreasing: bool) {
    use RecommendedStrategy::*;
    let first = |col: &[RecommendedStrategy], s: RecommendedStrategy| {
        col.iter().position(|&x| x == s).unwrap_or(col.len())
    };
    let mut prev_full = None;
    let mut prev_active = None;
    for col in columns {
        // Within a column, strategies appear as NULL* STRICT* FULL*.
        let f_full = first(col, Full);
        let f_strict = first(col, Strict);
        for (j, &s) in col.iter().enumerate() {
            let expect = if j >= f_full {
                Full
            } else if j >= f_strict {
                Strict
            } else {
                Null
            };
            assert_eq!(s, expect, "interleaved regions in a column");
        }
        // Region boundaries move monotonically across columns.
        let f_active = f_strict.min(f_full);
        if let (Some(pf), Some(pa)) = (prev_full, prev_active) {
            if full_threshold_decreasing {
                assert!(f_full <= pf, "full boundary not monotone");
                assert!(f_active <= pa, "active boundary not monotone");
            } else {
                assert!(f_full >= pf, "full boundary not monotone");
                assert!(f_active >= pa, "active boundary not monotone");
            }
        }
        prev_full = Some(f_full);
        prev_active = Some(f_active);
    }
    let flat: Vec<_> = columns.iter().flatten().collect();
    for s in [Full, Strict, Null] {
        assert!(flat.iter().any(|&&x| x == s), "{s:?} region is empty");
    }
}

#[test]
fn c06_strategy_regions() {
    let cells = 60;
    // (c, omega): the full strategy needs both sufficiently large.
    let cols = region_columns(
        |c, w| IntrinsicParams::new(1.0, c, 0.2, 0.05, w).unwrap(),
        (0.05, 0.7),
        (0.4, 0.995),
        cells,
    );
    check_region_structure(&cols, true);
    assert_eq!(
        *cols.last().unwrap().last().unwrap(),
        RecommendedStrategy::Full,
        "high-(c, omega) corner"
    );
    // (s, omega): serving costs shrink the designable regions.
    let cols = region_columns(
        |s, w| IntrinsicParams::new(1.0, 0.4, s, 0.05, w).unwrap(),
        (0.01, 0.4),
        (0.4, 0.995),
        cells,
    );
    check_region_structure(&cols, false);
    // (epsilon, omega): noisier reports shrink the designable regions.
    let cols = region_columns(
        |e, w| IntrinsicParams::new(1.0, 0.4, 0.2, e, w).unwrap(),
        (0.0, 0.2),
        (0.4, 0.995),
        cells,
    );
    check_region_structure(&cols, false);
    pass(6, "strategy regions partition as NULL/STRICT/FULL with monotone boundaries");
}

/// Discount factor documented for the request-cost sweeps: it places the
/// full strategy's feasibility threshold at c = 0.305.
const DOCUMENTED_OMEGA: f64 = 0.97625;

#[test]
fn c07_punishment_factor_shapes() {
    let mut rows = Vec::new();
    for k in 0..=92 {
        let c = 0.26 + 0.005 * k as f64;
        let params = IntrinsicParams::new(1.0, c, 0.2, 0.05, DOCUMENTED_OMEGA).unwrap();
        let feasible = existence_threshold(&params, RecommendedStrategy::Full)
            .is_some_and(|t| DOCUMENTED_OMEGA >= t);
        let betas = feasible
            .then(|| alternate_optimize(&params, RecommendedStrategy::Full, 1e-6))
            .filter(|r| r.feasible)
            .and_then(|r| r.betas);
        rows.push((c, betas));
    }
    let threshold = rows
        .iter()
        .find(|(_, b)| b.is_some())
        .expect("a feasible region exists")
        .0;
    assert!(
        (threshold - 0.305).abs() <= 0.0055,
        "feasibility threshold {threshold} not near 0.305"
    );
    assert!(rows[0].1.is_none(), "infeasible below the threshold");
    let feasible: Vec<(f64, f64)> = rows.iter().filter_map(|(_, b)| *b).collect();
    const TOL: f64 = 2e-3;
    for w in feasible.windows(2) {
        assert!(w[1].0 >= w[0].0 - TOL, "beta0 not nondecreasing");
        assert!(w[1].1 <= w[0].1 + TOL, "beta1 not nonincreasing");
    }
    for &(b0, b1) in &feasible {
        assert!(b0 >= b1 - TOL, "beta0 < beta1");
    }
    pass(7, "punishment factors show the feasibility threshold and monotone shapes");
}

#[test]
fn c08_welfare_sweeps() {
    const TOL: f64 = 1e-6;
    let run = |params: IntrinsicParams| {
        let r = alternate_optimize(&params, RecommendedStrategy::Full, 1e-6);
        assert!(r.feasible, "sweep point must be designable");
        let u_c = (1.0 - params.epsilon()) * params.b() - params.c() - params.s();
        assert!(r.welfare <= u_c + 1e-12, "welfare above the cooperative bound");
        (r.welfare, u_c)
    };
    // welfare nonincreasing in the request cost
    let mut prev = f64::INFINITY;
    for k in 0..=20 {
        let c = 0.32 + 0.02 * k as f64;
        let (w, _) = run(IntrinsicParams::new(1.0, c, 0.2, 0.05, DOCUMENTED_OMEGA).unwrap());
        assert!(w <= prev + TOL, "welfare increasing in c");
        prev = w;
    }
    // nonincreasing in the service cost
    prev = f64::INFINITY;
    for k in 0..=24 {
        let s = 0.05 + 0.01 * k as f64;
        let (w, _) = run(IntrinsicParams::new(1.0, 0.4, s, 0.05, DOCUMENTED_OMEGA).unwrap());
        assert!(w <= prev + TOL, "welfare increasing in s");
        prev = w;
    }
    // nonincreasing in the report error
    prev = f64::INFINITY;
    for k in 0..=22 {
        let e = 0.005 * k as f64;
        let (w, _) = run(IntrinsicParams::new(1.0, 0.4, 0.2, e, DOCUMENTED_OMEGA).unwrap());
        assert!(w <= prev + TOL, "welfare increasing in epsilon");
        prev = w;
    }
    // nondecreasing in patience, with the gap to the bound narrowing
    let mut prev_w = f64::NEG_INFINITY;
    let mut prev_gap = f64::INFINITY;
    for k in 0..=25 {
        let omega = 0.87 + 0.005 * k as f64;
        let (w, u_c) = run(IntrinsicParams::new(1.0, 0.4, 0.2, 0.05, omega).unwrap());
        assert!(w >= prev_w - TOL, "welfare decreasing in omega");
        assert!(u_c - w <= prev_gap + TOL, "gap widening in omega");
        prev_w = w;
        prev_gap = u_c - w;
    }
    pass(8, "designed welfare moves monotonically along all four sweeps");
}

#[test]
fn c09_simulator_convergence() {
    let start = Instant::now();
    let params = IntrinsicParams::new(1.0, 0.4, 0.2, 0.05, 0.95).unwrap();
    let proto = Protocol::compliant(RecommendedStrategy::Full, DesignParams::all_ones());
    assert!(is_sustainable(&proto, &params).sustainable);
    let cfg = SimConfig::new(proto, params, 10_000, 2_000);
    let trace = run_population(&cfg).unwrap();
    let half = &trace.stats[1000..];
    let mean = half.iter().map(|s| s.eta0).sum::<f64>() / half.len() as f64;
    // Batch means over the second half give the standard error of the
    // time average.
    let batches: Vec<f64> = half
        .chunks(50)
        .map(|b| b.iter().map(|s| s.eta0).sum::<f64>() / b.len() as f64)
        .collect();
    let bm = batches.iter().sum::<f64>() / batches.len() as f64;
    let var = batches.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>()
        / (batches.len() - 1) as f64;
    let se = (var / batches.len() as f64).sqrt();
    let analytic = stationary_distribution(&cfg.protocol.design, 0.05, 0.5).eta0;
    assert!((analytic - 0.025).abs() < 1e-12);
    assert!(
        (mean - analytic).abs() <= 0.01,
        "empirical {mean} vs analytic {analytic}"
    );
    assert!(
        (mean - analytic).abs() <= 3.0 * se,
        "empirical {mean} vs analytic {analytic} with se {se}"
    );
    assert!(start.elapsed().as_secs_f64() < 60.0, "runtime budget exceeded");
    pass(9, "simulated rating distribution converges to the analytic value");
}

#[test]
fn c10_empirical_incentive_compatibility() {
    let cases = [
        (0.90, true),
        (0.92, true),
        (0.95, true),
        (0.60, false),
        (0.70, false),
        (0.78, false),
    ];
    for (i, &(omega, expect_sustainable)) in cases.iter().enumerate() {
        let params = IntrinsicParams::new(1.0, 0.4, 0.2, 0.05, omega).unwrap();
        let proto = Protocol::compliant(RecommendedStrategy::Full, DesignParams::all_ones());
        let report = is_sustainable(&proto, &params);
        assert_eq!(report.sustainable, expect_sustainable, "case {i}");
        let (spec, rating) = report
            .binding
            .deviation()
            .expect("a binding deviation exists");
        let analytic = match spec {
            DeviationSpec::FirstStage { lambda_prime } => {
                first_stage_gain_at(&proto, &params, lambda_prime, rating)
            }
            DeviationSpec::SecondStage { .. } => deviation_gain_direct(&proto, &params, spec),
        };
        assert_eq!(
            analytic <= 1e-12,
            expect_sustainable,
            "case {i}: analytic gain {analytic}"
        );
        let mut cfg = SimConfig::new(proto, params, 4_000, 260);
        cfg.seed = 1000 + i as u64;
        cfg.deviation = Some(PlannedDeviation {
            spec,
            period: 60,
            deviant_fraction: 0.05,
        });
        let est = estimate_deviation_gain(&cfg, 20).unwrap();
        let g = est.for_rating(rating).expect("enough deviants at the binding rating");
        assert!(
            (g.mean - analytic).abs() <= g.ci_half_width,
            "case {i}: empirical {} +- {} vs analytic {}",
            g.mean,
            g.ci_half_width,
            analytic
        );
        if !expect_sustainable {
            assert!(g.mean > 0.0, "case {i}: binding deviation not profitable");
        }
    }
    pass(10, "empirical deviation gains bracket the analytic oracle with correct signs");
}
