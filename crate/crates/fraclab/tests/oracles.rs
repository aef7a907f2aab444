//! Comparisons against independently computed reference values.

use fraclab::capacity::{capacity_estimate, CapacityProblem, CompactSet};
use fraclab::functional::seminorm_full;
use fraclab::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{dense_capacity, SEMINORM_X1};

fn linear_seminorm(cells: usize) -> f64 {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), cells).unwrap();
    let u = GridFunction::from_fn(&d, lat, |x| x.get(0)).unwrap();
    let params = FracParams::critical(2, 0.5, 2.0, 0.5).unwrap();
    seminorm_full(&u, &d, &params)
}

#[test]
fn seminorm_of_x1_at_h_1_64() {
    let v = linear_seminorm(64);
    let rel = (v / SEMINORM_X1 - 1.0).abs();
    assert!(rel < 0.02, "I = {v}, rel {rel}");
}

#[test]
fn seminorm_of_x1_at_h_1_128() {
    let v = linear_seminorm(128);
    let rel = (v / SEMINORM_X1 - 1.0).abs();
    assert!(rel < 0.01, "I = {v}, rel {rel}");
}

#[test]
fn single_cell_capacity_matches_dense_kkt() {
    let d = make_domain("unit_square").unwrap();
    let lat = Lattice::new(d.window(), 16).unwrap();
    let params = FracParams::hardy(2, 0.5, 2.0, 0.5).unwrap();
    let k = CompactSet::cell_at(&d, lat, &Point::xy(0.53, 0.53)).unwrap();
    let prob = CapacityProblem::new(k, params);
    let oracle = dense_capacity(&prob);
    let est = capacity_estimate(&prob, 500).unwrap();
    let rel = (est.value_upper / oracle - 1.0).abs();
    assert!(est.converged);
    assert!(rel < 0.01, "estimate {} oracle {oracle}", est.value_upper);
    // the estimate is an upper bound up to solver round-off
    assert!(est.value_upper >= oracle * (1.0 - 1e-9));
}

#[test]
fn disc_capacity_matches_dense_kkt_on_the_ball() {
    let d = make_domain("ball(1)").unwrap();
    let lat = Lattice::new(d.window(), 16).unwrap();
    let params = FracParams::hardy(2, 0.3, 2.0, 0.5).unwrap();
    let k = CompactSet::disc(&d, lat, &Point::xy(0.0, 0.0), 0.3).unwrap();
    let prob = CapacityProblem::new(k, params);
    let oracle = dense_capacity(&prob);
    let est = capacity_estimate(&prob, 500).unwrap();
    assert!((est.value_upper / oracle - 1.0).abs() < 0.01, "estimate {} oracle {oracle}", est.value_upper);
}

/// Exact cube distances against the minimum over a fine sample of the cube.
#[test]
fn ball_cube_distance_matches_sampling() {
    let d = make_domain("ball(1)").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 200 {
        let level = rng.random_range(2..6);
        let m = 1i64 << level;
        let q = DyadicCube::new(level, &[rng.random_range(-m..m), rng.random_range(-m..m)]);
        let b = q.to_box();
        if b.corners().iter().any(|c| !d.inside(c)) {
            continue;
        }
        let exact = d.dist_to_cube(&q);
        let k = 64;
        let mut sampled = f64::INFINITY;
        for i in 0..=k {
            for j in 0..=k {
                let x = Point::xy(
                    b.lo[0] + q.side() * i as f64 / k as f64,
                    b.lo[1] + q.side() * j as f64 / k as f64,
                );
                sampled = sampled.min(d.dist_boundary(&x));
            }
        }
        assert!(exact <= sampled + 1e-12, "{q:?}: exact {exact} sampled {sampled}");
        assert!(sampled - exact <= q.diam() / k as f64 + 1e-12, "{q:?}: exact {exact} sampled {sampled}");
        checked += 1;
    }
}

#[test]
fn l_shape_cube_distance_matches_sampling() {
    let d = make_domain("l_shape").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 200 {
        let level = rng.random_range(2..6);
        let m = 1i64 << level;
        let q = DyadicCube::new(level, &[rng.random_range(-m..m), rng.random_range(-m..m)]);
        let b = q.to_box();
        let exact = d.dist_to_cube(&q);
        if exact <= 0.0 {
            continue;
        }
        let k = 64;
        let mut sampled = f64::INFINITY;
        for i in 0..=k {
            for j in 0..=k {
                let x = Point::xy(
                    b.lo[0] + q.side() * i as f64 / k as f64,
                    b.lo[1] + q.side() * j as f64 / k as f64,
                );
                sampled = sampled.min(d.dist_boundary(&x));
            }
        }
        assert!(exact <= sampled + 1e-12);
        assert!(sampled - exact <= q.diam() / k as f64 + 1e-12);
        checked += 1;
    }
}
