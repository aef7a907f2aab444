//! Discrete (delta, p)-capacities and the test functions built from cubes and
//! level sets.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::functional::FracParams;
use crate::geometry::{AxisBox, Domain, DyadicCube, Point};
use crate::lattice::{GridFunction, Lattice};
use crate::quadrature::{neumaier, PairOperator};

/// Lattice cells forming a compact subset of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactSet {
    cells: Vec<usize>,
    lattice: Lattice,
    domain: Domain,
}

impl CompactSet {
    pub fn new(d: &Domain, lattice: Lattice, mut cells: Vec<usize>) -> Result<Self> {
        cells.sort_unstable();
        cells.dedup();
        for &c in &cells {
            if c >= lattice.len() {
                return Err(invalid(format!("cell {c} outside the lattice")));
            }
            if d.dist_box(&lattice.cell_box(c)) <= 0.0 {
                return Err(invalid(format!("cell {c} is not strictly inside the domain")));
            }
        }
        Ok(Self { cells, lattice, domain: d.clone() })
    }

    pub fn empty(d: &Domain, lattice: Lattice) -> Self {
        Self { cells: Vec::new(), lattice, domain: d.clone() }
    }

    /// Cells whose centers lie in the closed disc (ball) B(center, radius).
    pub fn disc(d: &Domain, lattice: Lattice, center: &Point, radius: f64) -> Result<Self> {
        let cells = (0..lattice.len()).filter(|&i| lattice.center(i).dist(center) <= radius).collect();
        Self::new(d, lattice, cells)
    }

    /// The single cell containing x.
    pub fn cell_at(d: &Domain, lattice: Lattice, x: &Point) -> Result<Self> {
        let c = lattice.locate(x).ok_or_else(|| Error::PointOutside(x.coords().to_vec()))?;
        Self::new(d, lattice, vec![c])
    }

    /// Cells whose centers lie in the half-open box [lo, hi).
    pub fn intersect_box(&self, b: &AxisBox) -> CompactSet {
        let cells = self
            .cells
            .iter()
            .copied()
            .filter(|&c| {
                let x = self.lattice.center(c);
                (0..self.lattice.dim).all(|i| x.get(i) >= b.lo[i] && x.get(i) < b.hi[i])
            })
            .collect();
        CompactSet { cells, lattice: self.lattice, domain: self.domain.clone() }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    pub fn is_subset(&self, other: &CompactSet) -> bool {
        self.cells.iter().all(|&c| other.contains(c))
    }

    /// Bounding box of the cells.
    pub fn bounding_box(&self) -> Option<AxisBox> {
        let first = self.cells.first()?;
        let mut b = self.lattice.cell_box(*first);
        for &c in &self.cells[1..] {
            let cb = self.lattice.cell_box(c);
            for i in 0..b.dim {
                b.lo[i] = b.lo[i].min(cb.lo[i]);
                b.hi[i] = b.hi[i].max(cb.hi[i]);
            }
        }
        Some(b)
    }

    /// sum_K dist^{-w} h^n
    pub fn weighted_measure(&self, w: f64) -> f64 {
        let hn = self.lattice.cell_volume();
        neumaier(self.cells.iter().map(|&c| self.domain.dist_boundary(&self.lattice.center(c)).powf(-w) * hn))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "domain": self.domain.to_json(),
            "cells": self.cells,
            "h": self.lattice.h,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CapacityProblem {
    pub set: CompactSet,
    pub params: FracParams,
    /// free cells must lie in this box (whole window when absent)
    pub support: Option<AxisBox>,
}

#[derive(Clone, Debug)]
pub struct CapacityResult {
    pub value_upper: f64,
    pub minimizer: GridFunction,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Serialize)]
struct ResultRecord<'a> {
    value_upper: f64,
    trace: &'a [f64],
    converged: bool,
    iterations: usize,
}

impl CapacityResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ResultRecord {
            value_upper: self.value_upper,
            trace: &self.trace,
            converged: self.converged,
            iterations: self.iterations,
        })
        .expect("plain record")
    }
}

impl CapacityProblem {
    pub fn new(set: CompactSet, params: FracParams) -> Self {
        Self { set, params, support: None }
    }

    pub fn with_support(mut self, b: AxisBox) -> Self {
        self.support = Some(b);
        self
    }

    /// Free cells: inside, strictly interior, in the support box, not in K.
    pub fn free_cells(&self) -> Vec<usize> {
        let lat = self.set.lattice();
        let d = self.set.domain();
        (0..lat.len())
            .filter(|&i| {
                let b = lat.cell_box(i);
                !self.set.contains(i)
                    && d.dist_box(&b) > 0.0
                    && self.support.as_ref().is_none_or(|s| s.contains_box(&b))
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "set": self.set.to_json(),
            "params": self.params,
            "support": self.support.map(|b| serde_json::json!({"lo": &b.lo[..b.dim], "hi": &b.hi[..b.dim]})),
        })
    }
}

/// Relative improvement of the best value over the last tenth of the trace.
fn stalled(trace: &[f64]) -> bool {
    if trace.len() < 10 {
        return false;
    }
    let k = (trace.len() / 10).max(1);
    let before = trace[..trace.len() - k].iter().copied().fold(f64::INFINITY, f64::min);
    let after = trace.iter().copied().fold(f64::INFINITY, f64::min);
    before <= 0.0 || (before - after) / before < 1e-4
}

/// Upper estimate of the discrete capacity: minimum of the full double
/// integral over u = 1 on K, u = 0 off the free cells.
pub fn capacity_estimate(prob: &CapacityProblem, budget: usize) -> Result<CapacityResult> {
    if budget == 0 {
        return Err(invalid("budget must be positive"));
    }
    let set = &prob.set;
    let d = set.domain();
    let lat = *set.lattice();
    let zero = GridFunction::zeros(d, lat);
    if set.is_empty() {
        return Ok(CapacityResult { value_upper: 0.0, minimizer: zero, trace: vec![0.0], converged: true, iterations: 0 });
    }
    let free = prob.free_cells();
    let mut u = vec![0.0; lat.len()];
    for &c in set.cells() {
        if !zero.mask()[c] {
            return Err(Error::EmptyAdmissible(format!("cell {c} of K is outside the domain")));
        }
        u[c] = 1.0;
    }
    let op = PairOperator::new(d, &lat, zero.mask(), prob.params.delta, prob.params.p);
    let (u, trace, converged, iterations) = if prob.params.p == 2.0 {
        pcg(&op, u, &free, budget)
    } else {
        subgradient(&op, u, &free, budget)
    };
    let clamped: Vec<f64> = u.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let value = op.energy(&clamped);
    let minimizer = zero.with_values(clamped)?;
    let best = trace.iter().copied().fold(value, f64::min);
    Ok(CapacityResult { value_upper: best.min(value), minimizer, trace, converged, iterations })
}

/// Jacobi-preconditioned conjugate gradients on the free block of the
/// quadratic form; `H v` is the gradient of v.
fn pcg(op: &PairOperator, mut u: Vec<f64>, free: &[usize], budget: usize) -> (Vec<f64>, Vec<f64>, bool, usize) {
    let diag = op.hessian_diagonal();
    let restrict = |g: &[f64]| -> Vec<f64> { free.iter().map(|&i| g[i]).collect() };
    let dot = |a: &[f64], b: &[f64]| neumaier(a.iter().zip(b).map(|(x, y)| x * y));
    let g = op.gradient(&u);
    let mut r: Vec<f64> = restrict(&g).iter().map(|v| -v).collect();
    let mut z: Vec<f64> = r.iter().zip(free).map(|(v, &i)| v / diag[i]).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let r0 = dot(&r, &r).sqrt();
    let mut trace = vec![op.energy(&u)];
    let mut iterations = 0;
    let mut converged = r0 == 0.0;
    let mut full = vec![0.0; u.len()];
    while !converged && iterations < budget {
        for (k, &i) in free.iter().enumerate() {
            full[i] = dir[k];
        }
        let hd = restrict(&op.gradient(&full));
        let denom = dot(&dir, &hd);
        if denom <= 0.0 {
            break;
        }
        let alpha = rz / denom;
        for (k, &i) in free.iter().enumerate() {
            u[i] += alpha * dir[k];
            r[k] -= alpha * hd[k];
        }
        iterations += 1;
        let g = op.gradient(&u);
        trace.push(0.5 * dot(&u, &g));
        if dot(&r, &r).sqrt() <= 1e-10 * r0 {
            converged = true;
            break;
        }
        z = r.iter().zip(free).map(|(v, &i)| v / diag[i]).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..dir.len() {
            dir[k] = z[k] + beta * dir[k];
        }
    }
    if !converged {
        converged = stalled(&trace);
    }
    (u, trace, converged, iterations)
}

/// Projected subgradient with steps s0 / sqrt(t), s0 = 1 / |g_1|.
fn subgradient(op: &PairOperator, mut u: Vec<f64>, free: &[usize], budget: usize) -> (Vec<f64>, Vec<f64>, bool, usize) {
    let mut best = u.clone();
    let mut best_val = op.energy(&u);
    let mut trace = vec![best_val];
    let mut s0 = 0.0;
    for t in 1..=budget {
        let g = op.gradient(&u);
        let norm = neumaier(free.iter().map(|&i| g[i] * g[i])).sqrt();
        if norm == 0.0 {
            return (best, trace, true, t - 1);
        }
        if t == 1 {
            s0 = 1.0 / norm;
        }
        let step = s0 / (t as f64).sqrt();
        for &i in free {
            u[i] = (u[i] - step * g[i]).clamp(0.0, 1.0);
        }
        let v = op.energy(&u);
        trace.push(v);
        if v < best_val {
            best_val = v;
            best.clone_from(&u);
        }
    }
    let converged = stalled(&trace);
    (best, trace, converged, budget)
}

/// 1 on Q, 0 off (17/16) Q, linear in the sup-distance to Q in between.
pub fn cutoff_phi(q: &DyadicCube, d: &Domain, lattice: Lattice) -> Result<GridFunction> {
    let hat = q.dilate(17.0 / 16.0);
    if !lattice.window().contains_box(&hat) {
        return Err(Error::Window(format!("(17/16)Q of {q:?} leaves the window")));
    }
    let b = q.to_box();
    let width = q.side() / 32.0;
    GridFunction::from_fn(d, lattice, |x| {
        let mut t = 0.0f64;
        for i in 0..b.dim {
            let v = x.get(i);
            t = t.max(b.lo[i] - v).max(v - b.hi[i]);
        }
        (1.0 - t / width).clamp(0.0, 1.0)
    })
}

/// Level truncation: 0 for |u| <= 2^k, |u|/2^k - 1 in between, 1 for |u| >= 2^{k+1}.
pub fn truncate_levels(u: &GridFunction, k: i32) -> GridFunction {
    let lo = 2f64.powi(k);
    u.map(|v| (v.abs() / lo - 1.0).clamp(0.0, 1.0)).expect("truncation is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_domain;

    fn square16() -> (Domain, Lattice) {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 16).unwrap();
        (d, lat)
    }

    #[test]
    fn truncation_examples() {
        let (d, lat) = square16();
        let u = GridFunction::from_fn(&d, lat, |x| if x.get(0) < 0.3 { 0.0 } else if x.get(0) < 0.6 { 1.0 } else { 3.0 }).unwrap();
        let t = truncate_levels(&u, 0);
        for i in 0..lat.len() {
            let want = if u.value(i) == 3.0 { 1.0 } else { 0.0 };
            assert_eq!(t.value(i), want);
        }
    }

    #[test]
    fn cutoff_values() {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 256).unwrap();
        let q = DyadicCube::new(2, &[1, 1]);
        let phi = cutoff_phi(&q, &d, lat).unwrap();
        let c = lat.locate(&q.center()).unwrap();
        assert_eq!(phi.value(c), 1.0);
        let far = lat.locate(&Point::xy(0.9, 0.9)).unwrap();
        assert_eq!(phi.value(far), 0.0);
        assert!(cutoff_phi(&DyadicCube::new(1, &[0, 0]), &d, lat).is_err());
    }

    #[test]
    fn empty_set_has_zero_capacity() {
        let (d, lat) = square16();
        let pr = FracParams::hardy(2, 0.5, 2.0, 0.5).unwrap();
        let r = capacity_estimate(&CapacityProblem::new(CompactSet::empty(&d, lat), pr), 5).unwrap();
        assert_eq!(r.value_upper, 0.0);
        assert!(r.minimizer.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pcg_beats_indicator() {
        let (d, lat) = square16();
        let pr = FracParams::hardy(2, 0.5, 2.0, 0.5).unwrap();
        let k = CompactSet::cell_at(&d, lat, &Point::xy(0.5, 0.5)).unwrap();
        let ind = GridFunction::from_fn(&d, lat, |x| if lat.locate(x) == Some(k.cells()[0]) { 1.0 } else { 0.0 }).unwrap();
        let r = capacity_estimate(&CapacityProblem::new(k, pr), 200).unwrap();
        assert!(r.converged);
        let e = crate::functional::seminorm_full(&ind, &d, &pr);
        assert!(r.value_upper <= e && r.value_upper > 0.0);
    }
}
