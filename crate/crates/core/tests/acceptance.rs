//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fail.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use haps_deploy::citymodel::{Point3, SpatialIndex};
use haps_deploy::cli::run_cli;
use haps_deploy::crlb::{crlb_3d, fim, CrlbValue};
use haps_deploy::errormodel::{fisher_gmm, ErrorModelSet, GmmModel, LinkWeight, QuadratureSpec};
use haps_deploy::fixtures;
use haps_deploy::geodesy::{ConicalRegion, EcefPosition, GeodeticPosition, LocalFrame};
use haps_deploy::optimizer::{self, fast_nondominated_sort, GenomeSpace, Individual};
use haps_deploy::crlb::average_crlb;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn fisher_weights() -> Outcome {
    let start = Instant::now();
    let one = |sigma: f64| {
        let m = GmmModel::from_parts(&[0.0], &[sigma], &[1.0]).unwrap();
        fisher_gmm(&m, &QuadratureSpec::default_for(&m)).unwrap().psi()
    };
    let (a, b) = (one(10.0), one(7.0));
    let elapsed = start.elapsed();
    let pass = rel(a, 0.01) < 1e-6 && rel(b, 1.0 / 49.0) < 1e-6 && elapsed < Duration::from_secs(1);
    outcome(pass, format!("sigma 10 -> {a:.10}, sigma 7 -> {b:.10}, {elapsed:.2?}"))
}

/// Trapezoid over a grid ten times finer, written independently of the
/// library routine.
fn fine_quadrature(m: &GmmModel) -> f64 {
    let comps = m.components();
    let lo = comps.iter().map(|c| c.mean - 8.0 * c.sigma).fold(f64::INFINITY, f64::min);
    let hi = comps.iter().map(|c| c.mean + 8.0 * c.sigma).fold(f64::NEG_INFINITY, f64::max);
    let n = 327_680;
    let h = (hi - lo) / (n - 1) as f64;
    let mut sum = 0.0;
    for k in 0..n {
        let z = lo + k as f64 * h;
        let mut p = 0.0;
        let mut dp = 0.0;
        for c in comps {
            let pdf = Normal::new(c.mean, c.sigma).unwrap();
            let f = c.weight * statrs::distribution::Continuous::pdf(&pdf, z);
            p += f;
            dp += -f * (z - c.mean) / (c.sigma * c.sigma);
        }
        let g = if p > 1e-300 { dp * dp / p } else { 0.0 };
        sum += if k == 0 || k == n - 1 { 0.5 * g } else { g };
    }
    sum * h
}

/// E[(d/dz log p)^2] by Monte Carlo: stratified per component, one jittered
/// draw per probability stratum through the normal quantile.
fn monte_carlo(m: &GmmModel, samples: usize, seed: u64) -> f64 {
    let comps = m.components();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut total = 0.0;
    for c in comps {
        let n = (c.weight * samples as f64).round() as usize;
        let mut acc = 0.0;
        for j in 0..n {
            let u = (j as f64 + rng.random::<f64>()) / n as f64;
            let z = c.mean + c.sigma * std.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
            let (p, dp) = m.density_and_slope(z);
            let s = dp / p;
            acc += s * s;
        }
        total += c.weight * acc / n as f64;
    }
    total
}

fn gmm_oracles() -> Outcome {
    let start = Instant::now();
    let set = ErrorModelSet::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, m) in [("satellite", &set.satellite_nlos), ("haps", &set.haps_nlos)] {
        let lib = fisher_gmm(m, &QuadratureSpec::default_for(m)).unwrap().psi();
        let fine = fine_quadrature(m);
        let mc = monte_carlo(m, 10_000_000, 7);
        pass &= rel(lib, fine) < 1e-3 && rel(lib, mc) < 1e-3;
        detail.push(format!(
            "{name}: lib {lib:.6e} fine {fine:.6e} ({:.1e}) mc {mc:.6e} ({:.1e})",
            rel(lib, fine),
            rel(lib, mc)
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{}; {elapsed:.2?}", detail.join("; ")))
}

fn closed_form_crlb() -> Outcome {
    let r = EcefPosition::new(1_334_000.0, -4_654_000.0, 4_137_000.0);
    let dirs = [
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ];
    let sources: Vec<_> = dirs
        .iter()
        .map(|d| (EcefPosition::from(r.to_vector() + d * 2.0e7), LinkWeight(0.01)))
        .collect();
    let v = crlb_3d(&fim(&r, &sources).unwrap());
    let expected = 10.0 * 1.5f64.sqrt();
    match v {
        CrlbValue::Finite(x) => outcome((x - expected).abs() < 1e-9, format!("{x:.12} vs {expected:.12}")),
        CrlbValue::Infeasible => outcome(false, "singular"),
    }
}

/// Peels non-dominated layers by direct pairwise comparison.
fn brute_ranks(rows: &[[f64; 2]]) -> Vec<usize> {
    let dom = |a: &[f64; 2], b: &[f64; 2]| a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1]);
    let n = rows.len();
    let mut rank = vec![0usize; n];
    let mut level = 1;
    while rank.iter().any(|&r| r == 0) {
        let layer: Vec<usize> = (0..n)
            .filter(|&i| rank[i] == 0)
            .filter(|&i| !(0..n).any(|j| rank[j] == 0 && j != i && dom(&rows[j], &rows[i])))
            .collect();
        for i in layer {
            rank[i] = level;
        }
        level += 1;
    }
    rank
}

fn fns_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..200 {
        let rows: Vec<[f64; 2]> = (0..50)
            .map(|_| {
                let n = rng.random_range(1..=8) as f64;
                let c = if trial % 2 == 0 {
                    rng.random_range(5.0..40.0)
                } else {
                    rng.random_range(0..6) as f64
                };
                [n, c]
            })
            .collect();
        let (fronts, ranks) = fast_nondominated_sort(&rows);
        let expected = brute_ranks(&rows);
        let mut oracle_fronts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &r) in expected.iter().enumerate() {
            oracle_fronts.entry(r).or_default().push(i);
        }
        let oracle_fronts: Vec<Vec<usize>> = oracle_fronts.into_values().collect();
        if ranks != expected || fronts != oracle_fronts {
            return outcome(false, format!("mismatch on matrix {trial}"));
        }
    }
    outcome(true, "200 matrices identical")
}

fn ray_index() -> Outcome {
    let f = fixtures::desk_scale();
    let index = SpatialIndex::build(f.mesh.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut blocked = 0;
    for k in 0..10_000 {
        let a = Point3::new(
            rng.random_range(-260.0..260.0),
            rng.random_range(-260.0..260.0),
            rng.random_range(0.0..100.0),
        );
        let b = if k % 2 == 0 {
            Point3::new(
                rng.random_range(-260.0..260.0),
                rng.random_range(-260.0..260.0),
                rng.random_range(0.0..100.0),
            )
        } else {
            let (el, az): (f64, f64) = (rng.random_range(0.0..90.0f64).to_radians(), rng.random_range(0.0..360.0f64).to_radians());
            a + Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin()) * 20_000.0
        };
        let fast = index.ray_occluded(&a, &b);
        if fast != index.ray_occluded_brute_force(&a, &b) {
            return outcome(false, format!("segment {k} disagrees: {a:?} -> {b:?}"));
        }
        blocked += fast as usize;
    }
    outcome(true, format!("10000 segments agree, {blocked} occluded"))
}

fn superset_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let weights = [0.01, 1.0 / 49.0, 0.0008, 0.002];
    let mut compared = 0;
    for trial in 0..100 {
        let rx = GeodeticPosition::new(rng.random_range(-70.0..70.0), rng.random_range(-180.0..180.0), 10.0).unwrap();
        let frame = LocalFrame::new(rx);
        let mut src = Vec::new();
        for _ in 0..rng.random_range(5..12) {
            let (el, az): (f64, f64) = (rng.random_range(5.0..90.0f64).to_radians(), rng.random_range(0.0..360.0f64).to_radians());
            let range = rng.random_range(2.0e4..2.5e7);
            let enu = Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin()) * range;
            src.push((frame.to_ecef(&enu), LinkWeight(weights[rng.random_range(0..4)])));
        }
        let r = rx.to_ecef();
        let before = crlb_3d(&fim(&r, &src[..src.len() - 1]).unwrap());
        let after = crlb_3d(&fim(&r, &src).unwrap());
        match (before, after) {
            (CrlbValue::Finite(b), CrlbValue::Finite(a)) => {
                compared += 1;
                if a > b + 1e-9 {
                    return outcome(false, format!("instance {trial}: {b} -> {a}"));
                }
            }
            (CrlbValue::Finite(_), CrlbValue::Infeasible) => {
                return outcome(false, format!("instance {trial}: adding a source made the FIM singular"));
            }
            _ => {}
        }
    }
    outcome(true, format!("{compared} finite pairs non-increasing"))
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn desk_run() -> Vec<(String, Outcome)> {
    let f = fixtures::desk_scale();
    let scenario = f.scenario().unwrap();
    let params = scenario.ga.clone();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let start = Instant::now();
    let (baseline, run) = pool.install(|| {
        let baseline = average_crlb(&[], &scenario).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        (baseline, optimizer::run(&scenario, &params, &mut rng).unwrap())
    });
    let elapsed = start.elapsed();
    let mut out = Vec::new();
    out.push((
        "7a".into(),
        outcome(
            elapsed < Duration::from_secs(600),
            format!("{} generations x {} in {elapsed:.2?}", params.n_g, params.n_pop),
        ),
    ));

    let counts: Vec<f64> = run.trace.iter().map(|t| t.best_objectives.n_haps as f64).collect();
    out.push((
        "7b".into(),
        outcome(
            non_increasing(&counts),
            format!("best count {} -> {}", counts[0], counts[counts.len() - 1]),
        ),
    ));

    let mut per_count_ok = true;
    for k in params.n_min..=params.n_max {
        let series: Vec<f64> = run
            .trace
            .iter()
            .filter_map(|t| t.per_count_best.get(&k).copied())
            .collect();
        per_count_ok &= non_increasing(&series);
    }
    out.push(("7c".into(), outcome(per_count_ok, "per-count best traces checked")));

    let last = &run.trace.last().unwrap().per_count_best;
    let curve: Vec<f64> = (params.n_min..=params.n_max)
        .map(|k| last.get(&k).copied().unwrap_or(f64::INFINITY))
        .collect();
    let gains: Vec<f64> = curve.windows(2).map(|w| w[0] - w[1]).collect();
    // gains[i] is the step from n_min + i to n_min + i + 1
    let shrinking = (4usize.saturating_sub(params.n_min)..gains.len().saturating_sub(1)).all(|i| gains[i + 1] <= gains[i]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    out.push((
        "7d".into(),
        outcome(
            non_increasing(&curve) && shrinking,
            format!(
                "curve [{}] monotone={} gains [{}] shrinking for k>=4: {}",
                fmt(&curve),
                non_increasing(&curve),
                fmt(&gains),
                shrinking
            ),
        ),
    ));

    let best_with_haps = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let below = curve.iter().all(|&c| c < baseline);
    out.push((
        "7e".into(),
        outcome(
            below,
            format!("baseline {baseline:.3} m, best with HAPS {best_with_haps:.3} m, 1 HAPS {:.3} m", curve[0]),
        ),
    ));
    out
}

fn paper_numbers_statement() -> Outcome {
    let scenario = fixtures::desk_scale().scenario().unwrap();
    let baseline = average_crlb(&[], &scenario).unwrap();
    outcome(
        baseline.is_finite(),
        format!(
            "absolute figures (31 / 26.3 / 22.9 / 17.7 / 16.3 m) depend on an unavailable mesh, receiver draw and epoch; \
             desk baseline is {baseline:.2} m and criteria 6-7 stand in for them"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = fixtures::desk_scale().write_to(&dir.path().join("fixture")).unwrap();
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "4"), ("c", "1")] {
        let out = dir.path().join(tag);
        let code = run_cli([
            "haps-deploy",
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "11",
            "--threads",
            threads,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        if code != 0 && code != 2 {
            return outcome(false, format!("run {tag} exited {code}"));
        }
        let trace = std::fs::read(out.join("trace.csv")).unwrap();
        let result = std::fs::read(out.join("result.json")).unwrap();
        outputs.push((trace, result));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(same, "trace.csv and result.json compared across --threads 1/4/1")
}

fn projection_and_repair() -> Outcome {
    let center = GeodeticPosition::from(fixtures::DESK_CENTER);
    let region = ConicalRegion::with_defaults(center).unwrap();
    let geometry = region.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for k in 0..100_000 {
        let p = GeodeticPosition {
            lat: center.lat + rng.random_range(-3.0..3.0),
            lon: center.lon + rng.random_range(-3.0..3.0),
            alt: rng.random_range(-2_000.0..60_000.0),
        };
        let q = geometry.project(&p);
        if !region.contains(&q) || geometry.project(&q) != q {
            return outcome(false, format!("point {k} {p:?} -> {q:?}"));
        }
    }
    let space = GenomeSpace::new(region, 1, 8);
    let nasty = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, -1e300, 1e300, -0.5, 1.5, 0.0, 1.0];
    for k in 0..2_000 {
        let mut pick = || {
            if rng.random_bool(0.5) {
                nasty[rng.random_range(0..nasty.len())]
            } else {
                rng.random_range(-2.0..3.0)
            }
        };
        let ind = Individual {
            slots: (0..8).map(|_| [pick(), pick(), pick()]).collect(),
            count_gene: pick() * 10.0,
        };
        let fixed = space.repair(&ind);
        if !space.is_valid(&fixed) {
            return outcome(false, format!("repair {k} left an invalid individual"));
        }
    }
    outcome(true, "100000 projections feasible and idempotent; 2000 adversarial repairs valid")
}

fn main() {
    let mut results: Vec<(String, Outcome)> = vec![
        ("1".into(), fisher_weights()),
        ("2".into(), gmm_oracles()),
        ("3".into(), closed_form_crlb()),
        ("4".into(), fns_oracle()),
        ("5".into(), ray_index()),
        ("6".into(), superset_monotonicity()),
    ];
    results.extend(desk_run());
    results.push(("8".into(), paper_numbers_statement()));
    results.push(("9".into(), determinism()));
    results.push(("10".into(), projection_and_repair()));

    let mut failed = 0;
    for (id, r) in &results {
        println!("criterion {id:>3}: {} - {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += !r.pass as usize;
    }
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
