//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria 8 and 9 are measured red at their frozen thresholds; the test
//! fails if that set changes in either direction.

use std::collections::HashSet;
use std::io::Write;
use std::time::{Duration, Instant};

use fraclab::assouad::{corollary_conditions, covering_profile, greedy_net_count, ScaleSpec, Verdict};
use fraclab::capacity::{capacity_estimate, CapacityProblem, CompactSet};
use fraclab::chains::{build_chains, john_center, verify_chain_properties, ChainDecomposition};
use fraclab::fixtures::{fixture_family, localize, Fixture};
use fraclab::functional::{a_functional_bounds, inf_shift_lq, seminorm_full, seminorm_tau, weak_quasinorm};
use fraclab::inequality::{
    counterexample_sequence, sobolev_poincare_refinement, truncation_transfer, CounterexampleOptions,
};
use fraclab::quadrature::{neumaier, pow_abs};
use fraclab::*;

mod common;
use common::{dense_capacity, SEMINORM_X1};

const GALLERY: [&str; 6] = ["unit_square", "ball(1)", "cone", "plane_minus_segment", "l_shape", "half_space"];
const BOUNDED: [&str; 3] = ["unit_square", "ball(1)", "l_shape"];
const KNOWN_RED: [u32; 2] = [8, 9];

type Outcome = std::result::Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.1}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn fixtures(d: &Domain, lat: Lattice, count: usize) -> Vec<Fixture> {
    let mut out = Vec::new();
    for fam in ["linear", "radial_bump", "log_bump", "two_level", "random_smooth(4)"] {
        out.extend(fixture_family(fam, 17, count, d, lat).unwrap());
    }
    out
}

fn finest(x: &Point, level: i32) -> DyadicCube {
    let s = 2f64.powi(level);
    DyadicCube::new(level, &[(x.get(0) * s).floor() as i64, (x.get(1) * s).floor() as i64])
}

fn whitney_invariants() -> Outcome {
    let t = Instant::now();
    let mut worst: (f64, f64) = (f64::INFINITY, 0.0);
    let mut uncovered_max = 0.0f64;
    for name in GALLERY {
        let d = make_domain(name).unwrap();
        let w = whitney_decompose(&d, 7).unwrap();
        for (q, &dist) in w.cubes().iter().zip(w.dists()) {
            worst = (worst.0.min(dist / q.diam()), worst.1.max(dist / q.diam()));
        }
        let lat = Lattice::new(d.window(), 512).unwrap();
        let tiles: HashSet<DyadicCube> = w.unresolved().iter().copied().collect();
        let mut uncovered = 0.0;
        for i in 0..lat.len() {
            let x = lat.center(i);
            if d.inside(&x) && w.locate(&x).is_none() && !tiles.contains(&finest(&x, 7)) {
                uncovered += lat.cell_volume();
            }
        }
        uncovered_max = uncovered_max.max(uncovered);
    }
    let ok = worst.0 >= 1.0 - 1e-12 && worst.1 <= 4.0 + 1e-12 && uncovered_max <= 2f64.powi(-12);
    let (fast, time) = within(t, Duration::from_secs(5));
    check(
        ok && fast,
        format!("dist/diam in [{:.4}, {:.4}], uncovered {uncovered_max:.2e}, {time}", worst.0, worst.1),
    )
}

fn embedding_sandwich() -> Outcome {
    let t = Instant::now();
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 64).unwrap();
    let fx = fixture_family("random_smooth(4)", 2024, 50, &d, lat).unwrap();
    let combos = [(0.5, 2.0, 0.5), (0.3, 1.5, 0.5), (0.25, 3.0, 0.25)];
    let mut violations = 0;
    let mut worst = 0.0f64;
    for (delta, p, tau) in combos {
        let params = FracParams::critical(2, delta, p, tau).unwrap();
        let c = 2f64.sqrt().powf(2.0 / p + delta);
        for f in &fx {
            let lower = a_functional_bounds(&f.u, &d, &params).unwrap().lower;
            let upper = c * seminorm_tau(&f.u, &d, &params).unwrap().powf(1.0 / p);
            worst = worst.max(lower / upper);
            if lower > upper * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    check(violations == 0 && fast, format!("{violations} violations, max lower/upper {worst:.3}, {time}"))
}

fn seminorm_oracle() -> Outcome {
    let d = make_domain("unit_square").unwrap();
    let params = FracParams::critical(2, 0.5, 2.0, 0.5).unwrap();
    let rel = |m: usize| {
        let u = GridFunction::from_fn(&d, Lattice::new(d.window(), m).unwrap(), |x| x.get(0)).unwrap();
        (seminorm_full(&u, &d, &params) / SEMINORM_X1 - 1.0).abs()
    };
    let (a, b) = (rel(64), rel(128));
    check(a < 0.02 && b < 0.01, format!("relative error {a:.4} at h=1/64, {b:.4} at h=1/128"))
}

fn truncation_machinery() -> Outcome {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 32).unwrap();
    let params = FracParams::critical(2, 0.5, 2.0, 0.5).unwrap();
    let mut pairs = 0;
    let mut bad = 0;
    let mut worst = 0.0f64;
    for f in fixture_family("random_smooth(4)", 11, 20, &d, lat).unwrap() {
        let t = truncation_transfer(&localize(&f.u, &d), &d, &params).unwrap();
        pairs += t.pairs_checked;
        bad += t.pointwise_violations + t.cross_level_violations;
        if !(t.factor_measured <= t.factor_bound) {
            bad += 1;
        }
        worst = worst.max(t.factor_measured / t.factor_bound);
    }
    check(bad == 0 && pairs > 0, format!("{pairs} pairs, {bad} violations, max factor/bound {worst:.2e}"))
}

fn chebyshev_and_shift() -> Outcome {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 32).unwrap();
    let hn = lat.cell_volume();
    let mut weak_bad = 0;
    let mut mean_err = 0.0f64;
    let mut median_bad = 0;
    for f in fixtures(&d, lat, 5) {
        let cells = f.u.inside_cells();
        let mut vals: Vec<f64> = cells.iter().map(|&i| f.u.value(i)).collect();
        for q in [1.0, 2.0, 4.0] {
            for a in [-1.0, 0.0, 0.3] {
                let strong = neumaier(vals.iter().map(|v| pow_abs(v - a, q) * hn));
                if weak_quasinorm(&f.u, a, q) > strong * (1.0 + 1e-12) {
                    weak_bad += 1;
                }
            }
        }
        let mean = neumaier(vals.iter().copied()) / vals.len() as f64;
        let (a2, _) = inf_shift_lq(&f.u, 2.0).unwrap();
        mean_err = mean_err.max((a2 - mean).abs());
        vals.sort_by(f64::total_cmp);
        let k = vals.len() / 2;
        let (a1, _) = inf_shift_lq(&f.u, 1.0).unwrap();
        let lo = vals[k.saturating_sub(1)];
        let hi = vals[(k + 1).min(vals.len() - 1)];
        if !(lo <= a1 && a1 <= hi) {
            median_bad += 1;
        }
    }
    check(
        weak_bad == 0 && mean_err <= 1e-8 && median_bad == 0,
        format!("{weak_bad} Chebyshev violations, |a* - mean| {mean_err:.1e}, {median_bad} median misses"),
    )
}

fn capacity_oracle() -> Outcome {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 16).unwrap();
    let params = FracParams::hardy(2, 0.5, 2.0, 0.5).unwrap();
    let prob = CapacityProblem::new(CompactSet::cell_at(&d, lat, &Point::xy(0.53, 0.53)).unwrap(), params);
    let oracle = dense_capacity(&prob);
    let est = capacity_estimate(&prob, 500).unwrap();
    let rel = (est.value_upper / oracle - 1.0).abs();
    let lat = Lattice::new(d.window(), 32).unwrap();
    let centre = Point::xy(0.5, 0.5);
    let mut caps = Vec::new();
    for r in [0.05, 0.1, 0.2] {
        let k = CompactSet::disc(&d, lat, &centre, r).unwrap();
        caps.push(capacity_estimate(&CapacityProblem::new(k, params), 2000).unwrap().value_upper);
    }
    let monotone = caps.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-3));
    check(rel < 0.01 && monotone, format!("relative error {rel:.2e}, nested capacities {caps:.4?}"))
}

fn sp_stability() -> Outcome {
    let t = Instant::now();
    let params = FracParams::critical(2, 0.5, 2.0, 0.5).unwrap();
    let mut worst = (0.0f64, String::new());
    for name in BOUNDED {
        let d = make_domain(name).unwrap();
        let side = d.window().hi[0] - d.window().lo[0];
        let cells: Vec<usize> = [64.0, 128.0].iter().map(|m| (side * m).round() as usize).collect();
        for (fam, index) in [("linear", 0), ("radial_bump", 0), ("random_smooth(4)", 0), ("random_smooth(4)", 1)] {
            let make = |lat: Lattice| Ok(fixture_family(fam, 5, 2, &d, lat)?.swap_remove(index).u);
            let rep = sobolev_poincare_refinement(&d, &params, fam, &cells, &make).unwrap();
            let change = rep.extras["max_rel_change"];
            if change > worst.0 {
                worst = (change, format!("{name}/{fam}#{index}"));
            }
        }
    }
    let (fast, time) = within(t, Duration::from_secs(600));
    check(worst.0 < 0.1 && fast, format!("max change {:.4} ({}), {time}", worst.0, worst.1))
}

fn counterexample_regression() -> Outcome {
    let t = Instant::now();
    let r = counterexample_sequence(6, 0.5, 2.0, &CounterexampleOptions::default()).unwrap();
    let (fast, time) = within(t, Duration::from_secs(300));
    check(
        r.growth_ok() && r.control_ok() && fast,
        format!(
            "increasing {}, growth {:.3} (need 3), control spread {:.3} (need 0.2), {time}",
            r.increasing, r.growth, r.control_spread
        ),
    )
}

fn chains_at(d: &Domain, level: i32) -> ChainDecomposition {
    let w = whitney_decompose(d, level).unwrap();
    build_chains(&w, &john_center(d, &w).unwrap()).unwrap()
}

fn chain_properties() -> Outcome {
    let q = 4.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for name in BOUNDED {
        let d = make_domain(name).unwrap();
        let (a, b) = (chains_at(&d, 6), chains_at(&d, 7));
        let (ra, rb) = (verify_chain_properties(&a, q), verify_chain_properties(&b, q));
        let change = (rb.sigma_measured / ra.sigma_measured - 1.0).abs();
        let dual = a.shadow_duality_holds() && b.shadow_duality_holds();
        ok &= ra.rho <= 3 && rb.rho <= 3 && ra.sigma_measured.is_finite() && dual && change <= 0.05;
        notes.push(format!("{name}: rho {}/{}, sigma {:.0}->{:.0} ({:+.1}%)", ra.rho, rb.rho, ra.sigma_measured, rb.sigma_measured, 100.0 * change));
    }
    check(ok, notes.join("; "))
}

fn assouad_estimates() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let seg: Vec<Point> = (0..10_000).map(|i| Point::xy((i as f64 + 0.5) / 1e4, 0.0)).collect();
    let sp = covering_profile(&seg, &ScaleSpec::Relative).unwrap();
    let square = covering_profile(&make_domain("unit_square").unwrap().boundary_sample(10_000).unwrap(), &ScaleSpec::Relative).unwrap();
    for (label, p) in [("segment", &sp), ("square boundary", &square)] {
        let (u, l) = (p.upper().value, p.lower().value);
        ok &= (0.85..=1.15).contains(&u) && (0.85..=1.15).contains(&l) && l <= u;
        notes.push(format!("{label} [{l:.3}, {u:.3}]"));
    }
    let point = covering_profile(&[Point::xy(0.3, 0.7)], &ScaleSpec::Relative).unwrap();
    let sparse: Vec<Point> = (0..5).map(|i| Point::xy(i as f64, 0.0)).collect();
    let below = covering_profile(&sparse, &ScaleSpec::Absolute(vec![(0.4, 0.1), (0.2, 0.05)])).unwrap();
    ok &= point.upper().value == 0.0 && below.upper().value == 0.0 && below.lower().value == 0.0;
    let refs: Vec<&Point> = sparse.iter().collect();
    ok &= greedy_net_count(&refs, 0.1) == 5;
    for s in [0.5, 2.0] {
        let scaled: Vec<Point> = seg.iter().map(|p| Point::xy(s * p.get(0), s * p.get(1))).collect();
        ok &= covering_profile(&scaled, &ScaleSpec::Relative).unwrap().counts == sp.counts;
    }
    for (dom, delta, a, b) in [
        ("plane_minus_segment", 0.3, Some(Verdict::Holds), None),
        ("plane_minus_segment", 0.5, Some(Verdict::Inconclusive), None),
        ("cone", 0.6, None, Some(Verdict::Holds)),
    ] {
        let params = FracParams::new(delta, 2.0, 0.5, 1.0, 2.0).unwrap();
        let c = corollary_conditions(&make_domain(dom).unwrap(), &params).unwrap();
        ok &= a.is_none_or(|v| c.a == v) && b.is_none_or(|v| c.b == v);
        notes.push(format!("{dom} delta={delta}: A {:?}, B {:?}", c.a, c.b));
    }
    check(ok, notes.join("; "))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "tasks = [\"whitney\", \"chains\", \"capacity\", \"check-sp\", \"check-weak\", \"check-hardy\", \
               \"check-mazya\", \"check-whitney-sum\", \"counterexample\", \"assouad\", \"exhaustion\"]\n\
               domains = [\"unit_square\", \"ball(1)\", \"cone\", \"plane_minus_segment\", \"l_shape\", \"half_space\"]\n\
               h = [\"1/16\"]\nmax_level = 4\nsamples = 2000\nseed = 7\n\
               [fixtures]\nfamilies = [\"linear\", \"random_smooth(3)\"]\ncount = 2\n\
               [counterexample]\nm_max = 4\n";
    std::fs::write(tmp.path().join("full.toml"), cfg).unwrap();
    let mut csvs = Vec::new();
    for out in ["a", "b"] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_fraclab"))
            .current_dir(tmp.path())
            .args(["run", "--config", "full.toml", "--out", out])
            .output()
            .unwrap()
            .status;
        assert!(matches!(status.code(), Some(0 | 1)));
        csvs.push(std::fs::read(tmp.path().join(out).join("results.csv")).unwrap());
    }
    let rows = csvs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    check(csvs[0] == csvs[1] && rows > 0, format!("{rows} rows, {} bytes", csvs[0].len()))
}

/// Straight to stdout, so the lines survive output capture.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

#[test]
fn acceptance() {
    let only: Option<u32> = std::env::var("CRITERION").ok().and_then(|v| v.parse().ok());
    report("");
    let criteria: [Criterion; 11] = [
        (1, "whitney invariants", whitney_invariants),
        (2, "embedding sandwich", embedding_sandwich),
        (3, "seminorm oracle", seminorm_oracle),
        (4, "truncation machinery", truncation_machinery),
        (5, "chebyshev and inf-shift", chebyshev_and_shift),
        (6, "capacity oracle", capacity_oracle),
        (7, "sobolev-poincare stability", sp_stability),
        (8, "counterexample regression", counterexample_regression),
        (9, "chain properties", chain_properties),
        (10, "assouad estimates", assouad_estimates),
        (11, "determinism", determinism),
    ];
    let mut red = Vec::new();
    for (id, name, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        match run() {
            Ok(detail) => report(&format!("PASS {id:>2} {name}: {detail}")),
            Err(detail) => {
                report(&format!("FAIL {id:>2} {name}: {detail}"));
                red.push(id);
            }
        }
    }
    let expected: Vec<u32> = KNOWN_RED.into_iter().filter(|&id| only.is_none_or(|o| o == id)).collect();
    assert_eq!(red, expected, "failing criteria changed");
}
