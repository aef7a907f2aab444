//! Invariants of the geometry, functionals and estimators.

use fraclab::assouad::{covering_profile, greedy_net_count, ScaleSpec};
use fraclab::capacity::{capacity_estimate, cutoff_phi, truncate_levels, CapacityProblem, CompactSet};
use fraclab::chains::{build_chains, john_center, telescoping_check, verify_chain_properties};
use fraclab::fixtures::{fixture_family, localize, random_smooth};
use fraclab::functional::{a_functional_bounds, seminorm_full, seminorm_tau, weak_quasinorm};
use fraclab::inequality::{
    check_hardy, check_sobolev_poincare, check_weak_sobolev_poincare, local_cube_ratios, truncation_transfer,
};
use fraclab::quadrature::{neumaier, pow_abs, KernelTable};
use fraclab::whitney::{greedy_disjoint_families, kappa_inside};
use fraclab::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GALLERY: [&str; 6] = ["unit_square", "ball(1)", "cone", "plane_minus_segment", "l_shape", "half_space"];

fn params() -> FracParams {
    FracParams::critical(2, 0.5, 2.0, 0.5).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, w: &AxisBox) -> Point {
    Point::xy(rng.random_range(w.lo[0]..w.hi[0]), rng.random_range(w.lo[1]..w.hi[1]))
}

#[test]
fn boundary_distance_is_lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in GALLERY {
        let d = make_domain(name).unwrap();
        let w = *d.window();
        for _ in 0..10_000 {
            let (x, y) = (random_point(&mut rng, &w), random_point(&mut rng, &w));
            let gap = (d.dist_boundary(&x) - d.dist_boundary(&y)).abs();
            assert!(gap <= x.dist(&y) * (1.0 + 1e-12) + 1e-15, "{name}: {x:?} {y:?}");
        }
    }
}

#[test]
fn inside_iff_positive_distance() {
    for name in GALLERY {
        let d = make_domain(name).unwrap();
        let lat = Lattice::new(d.window(), 97).unwrap();
        for i in 0..lat.len() {
            let x = lat.center(i);
            assert_eq!(d.inside(&x), d.dist_boundary(&x) > 0.0, "{name}: {x:?}");
        }
    }
}

proptest! {
    #[test]
    fn dilations_keep_center(level in -2i32..8, i in -40i64..40, j in -40i64..40, k in 0usize..3) {
        let q = DyadicCube::new(level, &[i, j]);
        let r = [9.0 / 8.0, 17.0 / 16.0, 1.5 * 9.0 / 8.0][k];
        let b = q.dilate(r);
        let c = q.center();
        prop_assert!((b.center().dist(&c)) <= 1e-12 * q.side());
        for a in 0..2 {
            prop_assert!((b.side(a) - r * q.side()).abs() <= 1e-12 * q.side());
        }
    }

    #[test]
    fn chebyshev_weak_below_strong(vals in prop::collection::vec(-3.0f64..3.0, 64), a in -1.0f64..1.0, q in 1.0f64..6.0) {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 8).unwrap();
        let u = GridFunction::from_values(&d, lat, vals.clone()).unwrap();
        let strong = neumaier(vals.iter().map(|v| pow_abs(v - a, q) / 64.0));
        prop_assert!(weak_quasinorm(&u, a, q) <= strong * (1.0 + 1e-12));
    }

    #[test]
    fn greedy_counts_are_monotone(n in 200usize..600, seed in 0u64..1000, small in 0.005f64..0.05, big in 0.1f64..0.5) {
        // sorted samples of a segment; greedy from the left is a maximal packing
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        xs.sort_by(f64::total_cmp);
        let pts: Vec<Point> = xs.iter().map(|&x| Point::xy(x, 0.0)).collect();
        let centre = Point::xy(0.5, 0.0);
        let ball = |r: f64| -> Vec<&Point> { pts.iter().filter(|p| p.dist(&centre) < r).collect() };
        let inner = ball(big);
        let outer = ball(1.5 * big);
        prop_assert!(greedy_net_count(&inner, 2.0 * small) <= greedy_net_count(&inner, small));
        prop_assert!(greedy_net_count(&inner, small) <= greedy_net_count(&outer, small));
    }

    #[test]
    fn seminorms_ignore_constants(seed in 0u64..500, c in -5.0f64..5.0) {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 16).unwrap();
        let u = random_smooth(3, seed, &d, lat).unwrap();
        let v = u.map(|x| x + c).unwrap();
        let p = params();
        let (a, b) = (seminorm_full(&u, &d, &p), seminorm_full(&v, &d, &p));
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
        let (a, b) = (seminorm_tau(&u, &d, &p).unwrap(), seminorm_tau(&v, &d, &p).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
    }

    #[test]
    fn ratios_are_scale_free(seed in 0u64..200, lambda in 0.01f64..100.0) {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 16).unwrap();
        let u = localize(&random_smooth(3, seed, &d, lat).unwrap(), &d);
        let v = u.scaled(lambda);
        let p = params();
        let pairs = [
            (check_sobolev_poincare(&u, &d, &p, "u").unwrap().ratio, check_sobolev_poincare(&v, &d, &p, "v").unwrap().ratio),
            (check_weak_sobolev_poincare(&u, &d, &p, "u").unwrap().ratio, check_weak_sobolev_poincare(&v, &d, &p, "v").unwrap().ratio),
        ];
        let h = FracParams::hardy(2, 0.5, 2.0, 0.5).unwrap();
        let hardy = (check_hardy(&u, &d, &h, "u").unwrap().ratio, check_hardy(&v, &d, &h, "v").unwrap().ratio);
        for (a, b) in pairs.into_iter().chain([hardy]) {
            prop_assert!((a / b - 1.0).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn kernel_is_symmetric() {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 16).unwrap();
    for (delta, p) in [(0.5, 2.0), (0.3, 1.5), (0.8, 2.2)] {
        let k = KernelTable::new(&lat, delta, p);
        for i in -15..=15i64 {
            for j in -15..=15i64 {
                assert_eq!(k.at([i, j, 0]), k.at([-i, -j, 0]));
                assert_eq!(k.at([i, j, 0]), k.at([j, i, 0]));
            }
        }
    }
}

#[test]
fn seminorm_grows_with_delta() {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 32).unwrap();
    for fam in ["linear", "radial_bump", "random_smooth(4)"] {
        for f in fixture_family(fam, 3, 2, &d, lat).unwrap() {
            let mut last = 0.0;
            for delta in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let p = FracParams::new(delta, 2.0, 0.5, 1.0, 2.0).unwrap();
                let v = seminorm_full(&f.u, &d, &p);
                assert!(v >= last, "{}: delta {delta}: {v} < {last}", f.id);
                last = v;
            }
        }
    }
}

#[test]
fn seminorm_refinement_trend() {
    let d = make_domain("unit_square").unwrap();
    let p = params();
    for fam in ["linear", "radial_bump"] {
        let vals: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&m| {
                let lat = Lattice::new(d.window(), m).unwrap();
                seminorm_full(&fixture_family(fam, 0, 1, &d, lat).unwrap()[0].u, &d, &p)
            })
            .collect();
        let changes: Vec<f64> = vals.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).collect();
        assert!(changes[1] < 0.05 && changes[2] < 0.025, "{fam}: {vals:?}");
    }
}

#[test]
fn whitney_cover_overlap_and_legality() {
    for name in GALLERY {
        let d = make_domain(name).unwrap();
        let w = whitney_decompose(&d, 6).unwrap();
        // cover, up to the cells of the finest level that meet the boundary
        let lat = Lattice::new(d.window(), 256).unwrap();
        let mut uncovered = 0.0;
        let mut overlap = 0usize;
        let tiles: std::collections::HashSet<DyadicCube> = w.unresolved().iter().copied().collect();
        let stars: Vec<AxisBox> = w.cubes().iter().map(|q| q.dilate(9.0 / 8.0)).collect();
        for i in 0..lat.len() {
            let x = lat.center(i);
            if !d.inside(&x) {
                continue;
            }
            if w.locate(&x).is_none() && !tiles.contains(&DyadicCube::new(6, &[(x.get(0) * 64.0).floor() as i64, (x.get(1) * 64.0).floor() as i64])) {
                uncovered += lat.cell_volume();
            }
            overlap = overlap.max(stars.iter().filter(|b| b.contains(&x)).count());
        }
        assert!(uncovered <= 2f64.powi(-12), "{name}: uncovered {uncovered}");
        assert!(overlap <= 12, "{name}: overlap {overlap}");
        let fams = greedy_disjoint_families(w.cubes(), &d, 2.0, &|q| q.side());
        for fam in &fams {
            for q in fam {
                assert!(kappa_inside(&d, q, 2.0));
                assert!(q.dilate(2.0).corners().iter().all(|c| d.dist_boundary(c) >= 0.0));
            }
        }
    }
}

#[test]
fn telescoping_holds_for_random_functions() {
    for name in ["unit_square", "ball(1)", "l_shape"] {
        let d = make_domain(name).unwrap();
        let w = whitney_decompose(&d, 5).unwrap();
        let ch = build_chains(&w, &john_center(&d, &w).unwrap()).unwrap();
        let lat = Lattice::new(d.window(), 64).unwrap();
        for seed in 0..50 {
            let u = random_smooth(4, seed, &d, lat).unwrap();
            let t = telescoping_check(&ch, &u);
            assert_eq!(t.violations, 0, "{name} seed {seed}: {t:?}");
        }
    }
}

#[test]
fn chain_constants_agree_for_equal_john_constants() {
    let mut seen = Vec::new();
    for (name, level) in [("ball(1)", 6), ("ball(2)", 5), ("ball(0.5)", 7)] {
        let d = make_domain(name).unwrap();
        let w = whitney_decompose(&d, level).unwrap();
        let ch = build_chains(&w, &john_center(&d, &w).unwrap()).unwrap();
        let r = verify_chain_properties(&ch, 4.0);
        seen.push((d.john_constant().unwrap(), r.rho as f64, r.sigma_measured));
    }
    for a in &seen {
        for b in &seen {
            assert_eq!(a.0, b.0);
            assert!(a.1.max(1.0) / b.1.max(1.0) < 2.0, "{seen:?}");
            assert!(a.2 / b.2 < 2.0, "{seen:?}");
        }
    }
}

#[test]
fn capacity_below_admissible_energies() {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 32).unwrap();
    for (delta, p) in [(0.5, 2.0), (0.4, 1.5)] {
        let params = FracParams::new(delta, p, 0.5, 1.0, p).unwrap();
        let q = DyadicCube::new(3, &[3, 3]);
        let k = CompactSet::disc(&d, lat, &q.center(), 0.05).unwrap();
        let phi = cutoff_phi(&q, &d, lat).unwrap();
        assert!(k.cells().iter().all(|&c| phi.value(c) >= 1.0));
        let cap = capacity_estimate(&CapacityProblem::new(k, params), 400).unwrap();
        let energy = seminorm_full(&phi, &d, &params);
        assert!(cap.value_upper <= energy * (1.0 + 1e-9), "p = {p}: {} > {energy}", cap.value_upper);
    }
}

#[test]
fn truncation_contracts_energy() {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 32).unwrap();
    let p = params();
    for f in fixture_family("random_smooth(4)", 9, 5, &d, lat).unwrap() {
        let u = localize(&f.u, &d);
        let e = seminorm_full(&u, &d, &p);
        for k in -6..2 {
            let ek = seminorm_full(&truncate_levels(&u, k), &d, &p);
            assert!(ek <= 2f64.powf(-(k as f64) * p.p) * e * (1.0 + 1e-9), "{} k = {k}", f.id);
        }
    }
}

#[test]
fn cross_level_and_pointwise_audits() {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 16).unwrap();
    for f in fixture_family("random_smooth(3)", 21, 4, &d, lat).unwrap() {
        let t = truncation_transfer(&localize(&f.u, &d), &d, &params()).unwrap();
        assert!(t.pairs_checked > 0);
        assert_eq!((t.pointwise_violations, t.cross_level_violations, t.stability_violations), (0, 0, 0));
    }
}

#[test]
fn geometric_series() {
    for p in [1.0, 1.5, 2.0, 3.0] {
        let s = neumaier((0..60).map(|i| 2f64.powf(-(i as f64) * p)));
        assert!((s - 1.0 / (1.0 - 2f64.powf(-p))).abs() < 1e-12);
    }
}

#[test]
fn embedding_sandwich() {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 32).unwrap();
    let p = params();
    let n = 2.0f64;
    for f in fixture_family("random_smooth(4)", 2, 5, &d, lat).unwrap() {
        let b = a_functional_bounds(&f.u, &d, &p).unwrap();
        let s = seminorm_tau(&f.u, &d, &p).unwrap();
        assert!(b.lower <= n.sqrt().powf(n / p.p + p.delta) * s.powf(1.0 / p.p) * (1.0 + 1e-12));
    }
}

fn cube_ratios(m: usize) -> Vec<Vec<f64>> {
    let d = make_domain("unit_square").unwrap();
    let w = whitney_decompose(&d, 5).unwrap();
    let lat = Lattice::new(d.window(), m).unwrap();
    let p = params();
    fixture_family("random_smooth(4)", 4, 3, &d, lat)
        .unwrap()
        .iter()
        .map(|f| local_cube_ratios(&f.u, &w, &p).into_iter().map(|e| e.1).collect())
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[test]
fn local_cube_constant_is_stable_under_refinement() {
    for (a, b) in cube_ratios(128).iter().zip(&cube_ratios(256)) {
        assert!(!a.is_empty() && a.iter().all(|v| v.is_finite() && *v > 0.0));
        let (ca, cb) = (max_of(a), max_of(b));
        assert!(ca.max(cb) / ca.min(cb) <= 2.0, "{ca} vs {cb}");
    }
}

/// Cubes near critical points of u carry peaked deviations whose ratio sits
/// 4 to 6 times above the median, at every resolution tried.
#[test]
#[ignore = "fails: spread across cubes exceeds 2x around the median"]
fn local_cube_constant_is_stable_across_cubes() {
    for r in cube_ratios(256) {
        let mut s = r.clone();
        s.sort_by(f64::total_cmp);
        let med = s[s.len() / 2];
        assert!(r.iter().all(|&v| v <= 2.0 * med && v >= med / 2.0), "median {med}, max {}", max_of(&r));
    }
}

#[test]
fn assouad_scale_covariance() {
    let seg: Vec<Point> = (0..10_000).map(|i| Point::xy((i as f64 + 0.5) / 1e4, 0.0)).collect();
    let base = covering_profile(&seg, &ScaleSpec::Relative).unwrap();
    for s in [0.5, 2.0] {
        let scaled: Vec<Point> = seg.iter().map(|p| Point::xy(p.get(0) * s, p.get(1) * s)).collect();
        let prof = covering_profile(&scaled, &ScaleSpec::Relative).unwrap();
        assert_eq!(prof.counts, base.counts);
        assert_eq!(prof.upper().value, base.upper().value);
        assert_eq!(prof.lower().value, base.lower().value);
    }
}
