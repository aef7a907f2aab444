//! Integral functionals of grid functions.
//!
//! `seminorm_full` and `seminorm_tau` return the double integral itself, i.e.
//! the p-th power of the seminorm.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, DyadicCube};
use crate::lattice::GridFunction;
use crate::quadrature::{self, neumaier, pow_abs, PairOperator};
use crate::whitney::{greedy_disjoint_families, kappa_for_tau};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub delta: f64,
    pub p: f64,
    pub tau: f64,
    pub kappa: f64,
    pub q: f64,
}

impl FracParams {
    pub fn new(delta: f64, p: f64, tau: f64, kappa: f64, q: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta = {delta} not in (0, 1)")));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(invalid(format!("p = {p} must be at least 1")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(invalid(format!("tau = {tau} not in (0, 1)")));
        }
        if !(kappa >= 1.0) {
            return Err(invalid(format!("kappa = {kappa} must be at least 1")));
        }
        if !(q >= 1.0) || !q.is_finite() {
            return Err(invalid(format!("q = {q} must be at least 1")));
        }
        Ok(Self { delta, p, tau, kappa, q })
    }

    /// Sobolev-critical parameters with kappa = kappa(n, tau).
    pub fn critical(n: usize, delta: f64, p: f64, tau: f64) -> Result<Self> {
        let q = critical_q(delta, p, n)?;
        Self::new(delta, p, tau, kappa_for_tau(n, tau), q)
    }

    /// q = p, kappa = kappa(n, tau).
    pub fn hardy(n: usize, delta: f64, p: f64, tau: f64) -> Result<Self> {
        Self::new(delta, p, tau, kappa_for_tau(n, tau), p)
    }

    /// w = q (delta + n (1/q - 1/p)).
    pub fn weight_exponent(&self, n: usize) -> f64 {
        self.q * (self.delta + n as f64 * (1.0 / self.q - 1.0 / self.p))
    }

    /// 0 <= 1/p - 1/q <= delta/n.
    pub fn weight_admissible(&self, n: usize) -> bool {
        let gap = 1.0 / self.p - 1.0 / self.q;
        gap >= -1e-12 && gap <= self.delta / n as f64 + 1e-12
    }

    pub fn is_critical(&self, n: usize) -> bool {
        critical_q(self.delta, self.p, n).is_ok_and(|q| (q - self.q).abs() <= 1e-12 * q)
    }
}

/// q = np / (n - delta p).
pub fn critical_q(delta: f64, p: f64, n: usize) -> Result<f64> {
    let n = n as f64;
    if !(p >= 1.0) {
        return Err(invalid("p must be at least 1"));
    }
    if p * delta >= n {
        return Err(invalid(format!("p = {p} is not below n/delta = {}", n / delta)));
    }
    Ok(n * p / (n - delta * p))
}

/// Double integral over G x G (plus the exterior of the window for
/// unbounded domains, where u is extended by zero).
pub fn seminorm_full(u: &GridFunction, d: &Domain, params: &FracParams) -> f64 {
    let op = PairOperator::for_function(d, u, params.delta, params.p);
    op.energy(u.values())
}

/// Double integral restricted to y in B(x, tau dist(x)).
pub fn seminorm_tau(u: &GridFunction, d: &Domain, params: &FracParams) -> Result<f64> {
    ensure_tau_window(u, d, params.tau)?;
    Ok(quadrature::energy_tau(d, u, params.delta, params.p, params.tau))
}

/// Unbounded domains: any x in G with |x - y| < tau dist(x) for y in supp u
/// satisfies |x - y| < tau/(1-tau) dist(y), so every support cell needs that
/// much room to the window faces that cut through G.
pub fn ensure_tau_window(u: &GridFunction, d: &Domain, tau: f64) -> Result<()> {
    if d.bounded() {
        return Ok(());
    }
    let lat = u.lattice();
    let w = lat.window();
    let n = lat.dim;
    // cone and half-space windows sit on the hyperplane x_n = 0, outside G
    let floor = d.boundary_unbounded() && w.lo[n - 1] == 0.0;
    for i in u.support() {
        let b = lat.cell_box(i);
        let dist = d.dist_box(&b).max(0.0) + b.diam();
        let pad = tau / (1.0 - tau) * dist;
        for a in 0..n {
            let low_ok = (floor && a == n - 1) || b.lo[a] - w.lo[a] >= pad;
            if !low_ok || w.hi[a] - b.hi[a] < pad {
                return Err(Error::Window(format!(
                    "support cell {i} within {pad:.4} of a window face"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AFunctionalBounds {
    pub lower: f64,
    pub upper: f64,
    pub kappa: f64,
    pub family_size: usize,
    pub candidates: usize,
}

/// Lattice-aligned dyadic cubes with side >= 2h inside the window.
pub fn aligned_candidates(u: &GridFunction) -> Vec<DyadicCube> {
    let lat = u.lattice();
    let n = lat.dim;
    let w = lat.window();
    let mut out = Vec::new();
    for j in -8..40 {
        let side = 2f64.powi(-j);
        if side > w.max_side() + 1e-12 {
            continue;
        }
        let cells = side / lat.h;
        if cells < 2.0 - 1e-9 {
            break;
        }
        if (cells - cells.round()).abs() > 1e-9 {
            continue;
        }
        let aligned = (0..n).all(|i| {
            let t = lat.lo[i] / side;
            (t - t.round()).abs() < 1e-9
        });
        if !aligned {
            continue;
        }
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for i in 0..n {
            lo[i] = (w.lo[i] / side).round() as i64;
            hi[i] = (w.hi[i] / side).round() as i64;
        }
        let mut k = lo;
        'scan: loop {
            out.push(DyadicCube::new(j, &k[..n]));
            for i in 0..n {
                k[i] += 1;
                if k[i] < hi[i] {
                    continue 'scan;
                }
                k[i] = lo[i];
            }
            break;
        }
    }
    out
}

/// (mean, int |u - u_Q|) over a lattice-aligned cube.
pub fn cube_oscillation(u: &GridFunction, q: &DyadicCube) -> (f64, f64) {
    let lat = u.lattice();
    let cells = lat.overlap_weights(&q.to_box());
    let vol: f64 = cells.iter().map(|e| e.1).sum();
    let mean = neumaier(cells.iter().map(|&(i, w)| w * u.value(i))) / vol;
    let osc = neumaier(cells.iter().map(|&(i, w)| w * (u.value(i) - mean).abs()));
    (mean, osc)
}

/// Contribution |Q| (|Q|^{-1-delta/n} int_Q |u - u_Q|)^p of one cube.
pub fn cube_contribution(u: &GridFunction, q: &DyadicCube, delta: f64, p: f64) -> f64 {
    let n = q.dim as f64;
    let vol = q.volume();
    let (_, osc) = cube_oscillation(u, q);
    vol * pow_abs(vol.powf(-1.0 - delta / n) * osc, p)
}

/// Certified lower bound from greedy disjoint kappa-families and the upper
/// bound (sqrt n)^{n/p + delta} |u|_{W_tau}.
pub fn a_functional_bounds(
    u: &GridFunction,
    d: &Domain,
    params: &FracParams,
) -> Result<AFunctionalBounds> {
    let n = d.dim();
    let tau_energy = seminorm_tau(u, d, params)?;
    let upper = (n as f64).sqrt().powf(n as f64 / params.p + params.delta)
        * tau_energy.powf(1.0 / params.p);
    let candidates = aligned_candidates(u);
    let score = |q: &DyadicCube| cube_contribution(u, q, params.delta, params.p);
    let families = greedy_disjoint_families(&candidates, d, params.kappa, &score);
    let mut lower = 0.0f64;
    let mut size = 0;
    for fam in &families {
        let v = neumaier(fam.iter().map(&score)).powf(1.0 / params.p);
        if v > lower {
            lower = v;
            size = fam.len();
        }
    }
    Ok(AFunctionalBounds { lower, upper, kappa: params.kappa, family_size: size, candidates: candidates.len() })
}

/// Minimizer of phi(a) = sum |u - a|^q h^n over the inside cells.
/// Golden-section search on [min u, max u], finished by bisection on the sign
/// of the one-sided derivative inside the final bracket.
pub fn inf_shift_lq(u: &GridFunction, q: f64) -> Result<(f64, f64)> {
    let vals: Vec<f64> = u.inside_cells().iter().map(|&i| u.value(i)).collect();
    inf_shift_values(&vals, u.lattice().cell_volume(), 0.0, q)
}

/// Same minimization for cell values of volume `hn` plus a region of measure
/// `zeros` where the function vanishes.
pub fn inf_shift_values(vals: &[f64], hn: f64, zeros: f64, q: f64) -> Result<(f64, f64)> {
    if !(q >= 1.0) {
        return Err(invalid("q must be at least 1"));
    }
    if vals.is_empty() {
        return Ok((0.0, 0.0));
    }
    let phi = |a: f64| neumaier(vals.iter().map(|&v| pow_abs(v - a, q))) * hn + zeros * pow_abs(a, q);
    let mut lo0 = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi0 = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if zeros > 0.0 {
        lo0 = lo0.min(0.0);
        hi0 = hi0.max(0.0);
    }
    let range = hi0 - lo0;
    if range == 0.0 {
        return Ok((lo0, 0.0));
    }
    let tol = 1e-10 * range;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo0, hi0);
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (phi(c), phi(e));
    while b - a > tol {
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = phi(e);
        }
        if (b - a) < 1e-4 * range {
            break;
        }
    }
    // right derivative: -q sum sign(v - a)|v - a|^{q-1} (with sign(0) -> -1)
    let dphi = |t: f64| -> f64 {
        if q == 1.0 {
            if t > 0.0 { -1.0 } else { 1.0 }
        } else {
            -q * t.signum() * t.abs().powf(q - 1.0)
        }
    };
    let slope = |x: f64| -> f64 {
        neumaier(vals.iter().map(|&v| dphi(v - x) * hn)) + zeros * dphi(-x)
    };
    // widen the bracket to cover the flat tolerance of the value comparisons
    let mut lo = (a - 1e-3 * range).max(lo0);
    let mut hi = (b + 1e-3 * range).min(hi0);
    if slope(lo) > 0.0 {
        lo = lo0;
    }
    if slope(hi) < 0.0 {
        hi = hi0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut best = 0.5 * (lo + hi);
    if q == 1.0 {
        // snap to the nearest data value inside the bracket
        if let Some(v) = vals
            .iter()
            .copied()
            .filter(|&v| v >= lo - tol && v <= hi + tol)
            .min_by(|x, y| (x - best).abs().total_cmp(&(y - best).abs()))
        {
            best = v;
        }
    }
    Ok((best, phi(best)))
}

/// sup_t t^q |{|u - a| > t}| evaluated at the data values (as limits from below).
pub fn weak_quasinorm(u: &GridFunction, a: f64, q: f64) -> f64 {
    let hn = u.lattice().cell_volume();
    let mut devs: Vec<f64> = u.inside_cells().iter().map(|&i| (u.value(i) - a).abs()).collect();
    devs.sort_by(|x, y| y.total_cmp(x));
    let mut best = 0.0f64;
    let mut k = 0;
    while k < devs.len() {
        let v = devs[k];
        if v == 0.0 {
            break;
        }
        let mut j = k;
        while j < devs.len() && devs[j] == v {
            j += 1;
        }
        // t just below v: every value >= v counts
        best = best.max(pow_abs(v, q) * j as f64 * hn);
        k = j;
    }
    best
}

/// sum |u|^q dist^{-w} h^n with w = q (delta + n (1/q - 1/p)).
pub fn hardy_lhs(u: &GridFunction, d: &Domain, params: &FracParams) -> Result<f64> {
    let n = d.dim();
    if !params.weight_admissible(n) {
        return Err(Error::WeightExponent(format!(
            "1/p - 1/q = {} outside [0, delta/n]",
            1.0 / params.p - 1.0 / params.q
        )));
    }
    let w = params.weight_exponent(n);
    let lat = u.lattice();
    let hn = lat.cell_volume();
    let mut terms = Vec::new();
    for i in u.support() {
        if d.dist_box(&lat.cell_box(i)) <= 0.0 {
            return Err(Error::SupportTouchesBoundary(format!("cell {i}")));
        }
        let dist = d.dist_boundary(&lat.center(i));
        terms.push(pow_abs(u.value(i), params.q) * dist.powf(-w) * hn);
    }
    Ok(neumaier(terms))
}
