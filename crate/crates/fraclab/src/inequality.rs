//! Checkers for the Sobolev-Poincare, weak-type, Hardy and capacity
//! inequalities, each producing an [`InequalityReport`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capacity::{capacity_estimate, truncate_levels, CapacityProblem, CompactSet};
use crate::error::{invalid, Error, Result};
use crate::functional::{
    a_functional_bounds, cube_oscillation, ensure_tau_window, hardy_lhs, inf_shift_lq, inf_shift_values, seminorm_full,
    seminorm_tau, weak_quasinorm, FracParams,
};
use crate::geometry::{AxisBox, Domain, DyadicCube, Shape};
use crate::lattice::{GridFunction, Lattice};
use crate::quadrature::{neumaier, pow_abs, PairOperator};
use crate::whitney::WhitneyFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// 0/0: the inequality says nothing
    Vacuous,
}

/// Assertion rows gate the exit status; measured rows only record constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Assertion,
    Measured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub domain: String,
    pub delta: f64,
    pub p: f64,
    pub q: f64,
    pub tau: f64,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub fixture: String,
    /// (h, ratio), coarsest first
    pub refinement_trace: Vec<(f64, f64)>,
    pub status: Status,
    pub tier: Tier,
    pub passed: bool,
    pub note: String,
    pub extras: BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn new(name: &str, d: &Domain, params: &FracParams, h: f64, lhs: f64, rhs: f64, fixture: &str) -> Self {
        let (ratio, status) = if rhs > 0.0 {
            (lhs / rhs, Status::Ok)
        } else if lhs == 0.0 {
            (f64::NAN, Status::Vacuous)
        } else {
            (f64::INFINITY, Status::Ok)
        };
        Self {
            name: name.to_string(),
            domain: d.name().to_string(),
            delta: params.delta,
            p: params.p,
            q: params.q,
            tau: params.tau,
            h,
            lhs,
            rhs,
            ratio,
            fixture: fixture.to_string(),
            refinement_trace: vec![(h, if status == Status::Vacuous { f64::NAN } else { lhs / rhs })],
            status,
            tier: Tier::Measured,
            passed: true,
            note: if status == Status::Vacuous { "degenerate 0/0, inequality vacuous".into() } else { String::new() },
            extras: BTreeMap::new(),
        }
    }

    pub fn assertion(mut self, passed: bool) -> Self {
        self.tier = Tier::Assertion;
        self.passed = passed;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if self.note.is_empty() {
            self.note = note;
        } else if !note.is_empty() {
            self.note = format!("{}; {}", self.note, note);
        }
        self
    }

    pub fn extra(mut self, key: &str, v: f64) -> Self {
        self.extras.insert(key.to_string(), v);
        self
    }

    /// Rows failing an assertion.
    pub fn failed(&self) -> bool {
        self.tier == Tier::Assertion && !self.passed
    }
}

fn require_critical(d: &Domain, params: &FracParams) -> Result<()> {
    if !params.is_critical(d.dim()) {
        return Err(invalid(format!(
            "q = {} is not the critical exponent for delta = {}, p = {}, n = {}",
            params.q,
            params.delta,
            params.p,
            d.dim()
        )));
    }
    Ok(())
}

/// Shift used on the left-hand side: the mean on bounded domains, the
/// L^q-optimal constant otherwise.
fn sp_shift(u: &GridFunction, d: &Domain, q: f64) -> Result<f64> {
    if d.bounded() {
        Ok(u.mean())
    } else {
        Ok(inf_shift_lq(u, q)?.0)
    }
}

fn shifted_lq(u: &GridFunction, a: f64, q: f64) -> f64 {
    let hn = u.lattice().cell_volume();
    neumaier(u.inside_cells().iter().map(|&i| pow_abs(u.value(i) - a, q) * hn))
}

/// sum |u - a|^q h^n  versus  (tau-seminorm)^{q/p}.
pub fn check_sobolev_poincare(u: &GridFunction, d: &Domain, params: &FracParams, fixture: &str) -> Result<InequalityReport> {
    require_critical(d, params)?;
    let a = sp_shift(u, d, params.q)?;
    let lhs = shifted_lq(u, a, params.q);
    let rhs = seminorm_tau(u, d, params)?.powf(params.q / params.p);
    if rhs == 0.0 && lhs > 0.0 {
        return Err(Error::Quadrature(format!("tau-seminorm vanishes while lhs = {lhs}")));
    }
    Ok(InequalityReport::new("sobolev_poincare", d, params, u.lattice().h, lhs, rhs, fixture).extra("shift", a))
}

/// Sobolev-Poincare ratios over a resolution ladder; the report carries the
/// finest resolution and the whole trace.
pub fn sobolev_poincare_refinement(
    d: &Domain,
    params: &FracParams,
    fixture: &str,
    cells: &[usize],
    make: &dyn Fn(Lattice) -> Result<GridFunction>,
) -> Result<InequalityReport> {
    let mut ladder = cells.to_vec();
    ladder.sort_unstable();
    let mut trace = Vec::new();
    let mut last = None;
    for &m in &ladder {
        let lat = Lattice::new(d.window(), m)?;
        let u = make(lat)?;
        let r = check_sobolev_poincare(&u, d, params, fixture)?;
        trace.push((r.h, r.ratio));
        last = Some(r);
    }
    let mut rep = last.ok_or_else(|| invalid("empty resolution ladder"))?;
    let change = trace
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / w[0].1).abs())
        .fold(0.0f64, f64::max);
    rep.refinement_trace = trace;
    Ok(rep.extra("max_rel_change", change))
}

/// Weak-type lhs min_a sup_t t^q |{|u - a| > t}| against the tau-seminorm and
/// the A-functional upper bound; asserts the Chebyshev comparison.
pub fn check_weak_sobolev_poincare(u: &GridFunction, d: &Domain, params: &FracParams, fixture: &str) -> Result<InequalityReport> {
    require_critical(d, params)?;
    let q = params.q;
    let (astar, _) = inf_shift_lq(u, q)?;
    let shifts = [u.mean(), astar];
    let weak: Vec<f64> = shifts.iter().map(|&a| weak_quasinorm(u, a, q)).collect();
    let strong: Vec<f64> = shifts.iter().map(|&a| shifted_lq(u, a, q)).collect();
    let chebyshev = weak.iter().zip(&strong).all(|(w, s)| *w <= s * (1.0 + 1e-12));
    let lhs = weak[0].min(weak[1]);
    let tau_energy = seminorm_tau(u, d, params)?;
    let rhs = tau_energy.powf(q / params.p);
    let ab = a_functional_bounds(u, d, params)?;
    let rhs_a = ab.upper.powf(q);
    let mut rep = InequalityReport::new("weak_sobolev_poincare", d, params, u.lattice().h, lhs, rhs, fixture)
        .assertion(chebyshev)
        .extra("strong_lhs", strong[0].min(strong[1]))
        .extra("a_lower", ab.lower)
        .extra("a_upper", ab.upper)
        .extra("ratio_afunctional", if rhs_a > 0.0 { lhs / rhs_a } else { f64::NAN });
    if !chebyshev {
        rep = rep.with_note("weak quasinorm exceeds the strong integral");
    }
    Ok(rep)
}

/// Level sets A_k = {2^k < |u| <= 2^{k+1}} and the zero set F, with the
/// numbered steps of the level-truncation argument evaluated on the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationReport {
    pub levels: Vec<i32>,
    /// sum |u|^q w h^n
    pub strong: f64,
    /// sum_k 2^{(k+2)q} w(A_{k+1})
    pub level_bound: f64,
    /// max_k w(A_{k+1}) / E(u_k)^{q/p}
    pub c2_measured: f64,
    /// E(u)
    pub energy: f64,
    /// strong / E^{q/p}
    pub c1_measured: f64,
    pub factor_measured: f64,
    /// 2^{3q + 2q/p} (1 - 2^{-p})^{-q/p}
    pub factor_bound: f64,
    pub geometric_sum: f64,
    /// (label, left, right) for every intermediate inequality
    pub steps: Vec<(String, f64, f64)>,
    pub pointwise_violations: usize,
    pub cross_level_violations: usize,
    pub stability_violations: usize,
    pub pairs_checked: usize,
    pub single_level: bool,
}

impl TruncationReport {
    pub fn steps_hold(&self) -> bool {
        self.steps.iter().all(|(_, l, r)| *l <= r * (1.0 + 1e-9) + 1e-300)
    }

    pub fn all_hold(&self) -> bool {
        self.steps_hold()
            && self.pointwise_violations == 0
            && self.cross_level_violations == 0
            && self.stability_violations == 0
            && self.factor_measured <= self.factor_bound * (1.0 + 1e-9)
    }
}

/// Level index of |v| > 0: k with 2^k < |v| <= 2^{k+1}.
fn level_of(v: f64) -> i32 {
    let a = v.abs();
    let mut k = a.log2().ceil() as i32 - 1;
    while 2f64.powi(k) >= a {
        k -= 1;
    }
    while 2f64.powi(k + 1) < a {
        k += 1;
    }
    k
}

/// Sum over labelled pairs: out[a][b] = sum_{x in a, y in b, x != y} |v_x - v_y|^p W,
/// and tail[b] = sum_{y in b} |v_y|^p T(y) h^n (one orientation).
fn labelled_pair_sums(op: &PairOperator, v: &[f64], labels: &[usize], nl: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let lat = op.lattice();
    let act = op.active();
    let coords: Vec<[i64; 3]> = act
        .iter()
        .map(|&i| {
            let c = lat.coords(i);
            [c[0] as i64, c[1] as i64, c[2] as i64]
        })
        .collect();
    let p = op.p();
    let mut terms = vec![vec![Vec::new(); nl]; nl];
    for (a, &x) in act.iter().enumerate() {
        for (b, &y) in act.iter().enumerate() {
            if a == b {
                continue;
            }
            let t = pow_abs(v[x] - v[y], p);
            if t == 0.0 {
                continue;
            }
            let (cx, cy) = (coords[a], coords[b]);
            let w = op.kernel().at([cx[0] - cy[0], cx[1] - cy[1], cx[2] - cy[2]]);
            terms[labels[x]][labels[y]].push(t * w);
        }
    }
    let sums = terms.into_iter().map(|row| row.into_iter().map(neumaier).collect()).collect();
    let mut tail = vec![0.0; nl];
    if let Some(t) = op.tail() {
        let mut tt = vec![Vec::new(); nl];
        for &x in act {
            tt[labels[x]].push(0.5 * pow_abs(v[x], p) * t[x]);
        }
        tail = tt.into_iter().map(neumaier).collect();
    }
    (sums, tail)
}

/// Runs the level-truncation argument on u with the Hardy weight of `params`.
pub fn truncation_transfer(u: &GridFunction, d: &Domain, params: &FracParams) -> Result<TruncationReport> {
    let n = d.dim();
    let (p, q) = (params.p, params.q);
    if q < p {
        return Err(invalid("the level argument needs q >= p"));
    }
    let w = params.weight_exponent(n);
    let lat = *u.lattice();
    let hn = lat.cell_volume();
    let cells = u.inside_cells();
    let omega: Vec<f64> = (0..lat.len())
        .map(|i| if w == 0.0 { 1.0 } else { d.dist_boundary(&lat.center(i)).powf(-w) })
        .collect();
    if w != 0.0 {
        for i in u.support() {
            if d.dist_box(&lat.cell_box(i)) <= 0.0 {
                return Err(Error::SupportTouchesBoundary(format!("cell {i}")));
            }
        }
    }
    // labels: 0 = F, 1 + (k - kmin) = A_k
    let lv: Vec<Option<i32>> = (0..lat.len()).map(|i| (u.value(i) != 0.0).then(|| level_of(u.value(i)))).collect();
    let mut levels: Vec<i32> = lv.iter().flatten().copied().collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.is_empty() {
        return Err(invalid("u vanishes identically"));
    }
    let kmin = levels[0];
    let nl = (levels[levels.len() - 1] - kmin + 2) as usize;
    let labels: Vec<usize> = lv.iter().map(|l| l.map_or(0, |k| (k - kmin + 1) as usize)).collect();
    let k_of = |label: usize| kmin + label as i32 - 1;

    let strong = neumaier(cells.iter().map(|&i| pow_abs(u.value(i), q) * omega[i] * hn));
    let mut w_level = vec![Vec::new(); nl];
    for &i in &cells {
        w_level[labels[i]].push(omega[i] * hn);
    }
    let w_level: Vec<f64> = w_level.into_iter().map(neumaier).collect();
    // k runs over the levels with A_{k+1} nonempty
    let ks: Vec<i32> = levels.iter().map(|&l| l - 1).collect();
    let level_bound = neumaier(ks.iter().map(|&k| 2f64.powf((k + 2) as f64 * q) * w_level[(k + 1 - kmin + 1) as usize]));

    let op = PairOperator::for_function(d, u, params.delta, p);
    let energy = op.energy(u.values());
    let (base, base_tail) = labelled_pair_sums(&op, u.values(), &labels, nl);
    let geometric = 1.0 / (1.0 - 2f64.powf(-p));

    let mut c2 = 0.0f64;
    let mut e_k = Vec::new();
    let mut x_k = Vec::new();
    let mut y_k = Vec::new();
    let mut stability_violations = 0;
    let mut pointwise_violations = 0;
    let mut cross_violations = 0;
    let mut pairs = 0;
    let vals = u.values();
    for &k in &ks {
        let uk = truncate_levels(u, k);
        let e = op.energy(uk.values());
        if e > 2f64.powf(-(k as f64) * p) * energy * (1.0 + 1e-9) + 1e-300 {
            stability_violations += 1;
        }
        let wa = w_level[(k + 1 - kmin + 1) as usize];
        c2 = c2.max(wa / e.powf(q / p));
        let (s, t) = labelled_pair_sums(&op, uk.values(), &labels, nl);
        // X_k: i <= k <= j over A-labels (F counted separately)
        let lk = (k - kmin + 1) as i64;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for j in 1..nl {
            if (j as i64) < lk {
                continue;
            }
            for (i, row) in s.iter().enumerate().skip(1) {
                if (i as i64) <= lk {
                    xs.push(row[j]);
                }
            }
            ys.push(s[0][j] + t[j]);
        }
        e_k.push(e);
        x_k.push(neumaier(xs));
        y_k.push(neumaier(ys));
        // pointwise audits
        let uk_v = uk.values();
        let scale = 2f64.powi(-k);
        for &x in &cells {
            for &y in &cells {
                if x >= y {
                    continue;
                }
                pairs += 1;
                let du = (vals[x] - vals[y]).abs();
                let dk = (uk_v[x] - uk_v[y]).abs();
                let slack = 1e-12 * (1.0 + dk);
                if dk > scale * du + slack {
                    pointwise_violations += 1;
                }
                let (li, lj) = (lv[x], lv[y]);
                // i <= k <= j with F as level -infinity
                let (lo, hi) = match (li, lj) {
                    (None, None) => continue,
                    (None, Some(b)) | (Some(b), None) => (None, b),
                    (Some(a), Some(b)) => (Some(a.min(b)), a.max(b)),
                };
                if lo.is_none_or(|a| a <= k) && k <= hi && dk > 2.0 * 2f64.powi(-hi) * du + slack {
                    cross_violations += 1;
                }
            }
        }
    }

    let mut steps = Vec::new();
    steps.push(("strong <= level bound".to_string(), strong, level_bound));
    let s3 = c2 * 2f64.powf(2.0 * q) * neumaier(ks.iter().zip(&e_k).map(|(&k, &e)| 2f64.powf(k as f64 * q) * e.powf(q / p)));
    steps.push(("level bound <= C2 4^q sum 2^{kq} E(u_k)^{q/p}".into(), level_bound, s3));
    for (i, &k) in ks.iter().enumerate() {
        steps.push((format!("E(u_{k}) <= 2 X + 2 Y"), e_k[i], 2.0 * x_k[i] + 2.0 * y_k[i]));
    }
    // termwise: I(A_i, A_j; u_k) <= (2 2^{-j})^p I(A_i, A_j; u)
    let mut xx = Vec::new();
    let mut yy = Vec::new();
    for &k in &ks {
        let lk = (k - kmin + 1) as i64;
        for j in 1..nl {
            if (j as i64) < lk {
                continue;
            }
            let gj = 2f64.powf((k - k_of(j)) as f64 * p);
            for (i, row) in base.iter().enumerate().skip(1) {
                if (i as i64) <= lk {
                    xx.push(gj * row[j]);
                }
            }
            yy.push(gj * (base[0][j] + base_tail[j]));
        }
    }
    let xx = neumaier(xx);
    let yy = neumaier(yy);
    let lhs_x = neumaier(ks.iter().zip(&x_k).map(|(&k, &x)| 2f64.powf(k as f64 * q) * x.powf(q / p)));
    let lhs_y = neumaier(ks.iter().zip(&y_k).map(|(&k, &y)| 2f64.powf(k as f64 * q) * y.powf(q / p)));
    steps.push(("sum 2^{kq} X_k^{q/p} <= 2^q (sum 2^{(k-j)p} I)^{q/p}".into(), lhs_x, 2f64.powf(q) * xx.powf(q / p)));
    steps.push(("sum 2^{kq} Y_k^{q/p} <= 2^q (sum 2^{(k-j)p} I_F)^{q/p}".into(), lhs_y, 2f64.powf(q) * yy.powf(q / p)));
    // geometric series then disjointness of the ordered pair sets
    let ordered = neumaier((1..nl).flat_map(|j| (1..=j).map(move |i| (i, j))).map(|(i, j)| base[i][j]));
    let from_f = neumaier((1..nl).map(|j| base[0][j] + base_tail[j]));
    steps.push(("sum 2^{(k-j)p} I <= G sum_{i<=j} I".into(), xx, geometric * ordered));
    steps.push(("sum 2^{(k-j)p} I_F <= G sum_j I_F".into(), yy, geometric * from_f));
    steps.push(("sum_{i<=j} I + sum_j I_F <= E(u)".into(), ordered + from_f, energy));
    let factor_bound = 2f64.powf(3.0 * q + 2.0 * q / p) * geometric.powf(q / p);
    steps.push(("strong <= C1 E^{q/p}".into(), strong, c2 * factor_bound * energy.powf(q / p)));
    let c1 = strong / energy.powf(q / p);
    let geometric_sum = neumaier((0..60).map(|m| 2f64.powf(-(m as f64) * p)));
    Ok(TruncationReport {
        levels,
        strong,
        level_bound,
        c2_measured: c2,
        energy,
        c1_measured: c1,
        factor_measured: c1 / c2,
        factor_bound,
        geometric_sum,
        steps,
        pointwise_violations,
        cross_level_violations: cross_violations,
        stability_violations,
        pairs_checked: pairs,
        single_level: ks.len() == 1,
    })
}

pub fn check_truncation_transfer(u: &GridFunction, d: &Domain, params: &FracParams, fixture: &str) -> Result<(InequalityReport, TruncationReport)> {
    let t = truncation_transfer(u, d, params)?;
    let rhs = t.c2_measured * t.factor_bound * t.energy.powf(params.q / params.p);
    let rep = InequalityReport::new("truncation_transfer", d, params, u.lattice().h, t.strong, rhs, fixture)
        .assertion(t.all_hold())
        .extra("c1_measured", t.c1_measured)
        .extra("c2_measured", t.c2_measured)
        .extra("factor_measured", t.factor_measured)
        .extra("factor_bound", t.factor_bound)
        .extra("levels", t.levels.len() as f64);
    Ok((rep, t))
}

/// Hardy lhs against E(u)^{q/p}.
pub fn check_hardy(u: &GridFunction, d: &Domain, params: &FracParams, fixture: &str) -> Result<InequalityReport> {
    let lhs = hardy_lhs(u, d, params)?;
    let rhs = seminorm_full(u, d, params).powf(params.q / params.p);
    Ok(InequalityReport::new("hardy", d, params, u.lattice().h, lhs, rhs, fixture)
        .extra("weight_exponent", params.weight_exponent(d.dim())))
}

/// sum_K dist^{-w} h^n against the capacity upper estimate^{q/p}.
pub fn check_mazya_criterion(k: &CompactSet, d: &Domain, params: &FracParams, budget: usize, fixture: &str) -> Result<InequalityReport> {
    let w = params.weight_exponent(d.dim());
    let lhs = k.weighted_measure(w);
    let cap = capacity_estimate(&CapacityProblem::new(k.clone(), *params), budget)?;
    let rhs = cap.value_upper.powf(params.q / params.p);
    let mut rep = InequalityReport::new("mazya", d, params, k.lattice().h, lhs, rhs, fixture)
        .with_note("capacity is an upper estimate: necessary-direction check only")
        .extra("capacity_upper", cap.value_upper)
        .extra("cells", k.len() as f64);
    if !cap.converged {
        rep = rep.with_note("capacity not converged");
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneySumReport {
    pub terms: Vec<(DyadicCube, f64)>,
    pub total: f64,
    pub capacity: f64,
    pub n_measured: f64,
    pub uncovered_cells: usize,
    pub monotonicity_violations: usize,
    pub all_converged: bool,
}

/// (sum_Q cap(K n Q)^{q/p})^{p/q} against cap(K); cells of K are assigned to
/// Whitney cubes by half-open membership of their centers.
pub fn check_whitney_capacity_sum(
    k: &CompactSet,
    d: &Domain,
    params: &FracParams,
    w: &WhitneyFamily,
    budget: usize,
    fixture: &str,
) -> Result<(InequalityReport, WhitneySumReport)> {
    let r = params.q / params.p;
    let whole = capacity_estimate(&CapacityProblem::new(k.clone(), *params), budget)?;
    let mut converged = whole.converged;
    let mut terms = Vec::new();
    let mut covered = 0;
    for q in w.cubes() {
        let part = k.intersect_box(&q.to_box());
        if part.is_empty() {
            continue;
        }
        covered += part.len();
        let c = capacity_estimate(&CapacityProblem::new(part, *params), budget)?;
        converged &= c.converged;
        terms.push((*q, c.value_upper));
    }
    let total = neumaier(terms.iter().map(|t| t.1.powf(r)));
    let cap = whole.value_upper;
    let n_measured = if cap > 0.0 { total.powf(1.0 / r) / cap } else { f64::NAN };
    let violations = terms.iter().filter(|t| t.1 > cap * (1.0 + 1e-3)).count();
    let rep = InequalityReport::new("whitney_capacity_sum", d, params, k.lattice().h, total, cap.powf(r), fixture)
        .assertion(violations == 0)
        .extra("n_measured", n_measured)
        .extra("terms", terms.len() as f64)
        .with_note("capacities are upper estimates");
    let rep = if converged { rep } else { rep.with_note("capacity not converged") };
    Ok((
        rep,
        WhitneySumReport {
            terms,
            total,
            capacity: cap,
            n_measured,
            uncovered_cells: k.len() - covered,
            monotonicity_violations: violations,
            all_converged: converged,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleOptions {
    /// cells per side (odd puts the slit on a row of cell centers)
    pub cells: usize,
    pub window: f64,
    /// outer radius R of the logarithmic profile
    pub outer_radius: f64,
    pub control_delta: f64,
}

impl Default for CounterexampleOptions {
    fn default() -> Self {
        Self { cells: 257, window: 3.5, outer_radius: 1.0, control_delta: 0.3 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleReport {
    pub m: Vec<u32>,
    pub ratios: Vec<f64>,
    pub control_ratios: Vec<f64>,
    pub growth: f64,
    pub increasing: bool,
    pub control_spread: f64,
    pub reports: Vec<InequalityReport>,
}

impl CounterexampleReport {
    pub fn growth_ok(&self) -> bool {
        self.increasing && self.growth >= 3.0
    }

    pub fn control_ok(&self) -> bool {
        self.control_spread <= 0.2
    }
}

/// u_m = clamp(1 - log(dist(x, L)/r_m) / log(R/r_m), 0, 1), r_m = 2^{-m}.
pub fn log_profile(d: &Domain, lattice: Lattice, m: u32, outer: f64) -> Result<GridFunction> {
    let r = 2f64.powi(-(m as i32));
    if r >= outer {
        return Err(invalid("r_m must be below the outer radius"));
    }
    GridFunction::from_fn(d, lattice, |x| {
        let t = d.dist_boundary(x);
        (1.0 - (t / r).ln() / (outer / r).ln()).clamp(0.0, 1.0)
    })
}

/// Cell-center Hardy sum without the compact-support requirement.
fn hardy_sum(u: &GridFunction, d: &Domain, w: f64, q: f64) -> f64 {
    let lat = u.lattice();
    let hn = lat.cell_volume();
    neumaier(u.support().iter().map(|&i| pow_abs(u.value(i), q) * d.dist_boundary(&lat.center(i)).powf(-w) * hn))
}

/// Hardy ratios of the truncated logarithms collapsing onto the slit, with a
/// control run at `control_delta`.
pub fn counterexample_sequence(m_max: u32, delta: f64, p: f64, opts: &CounterexampleOptions) -> Result<CounterexampleReport> {
    if (delta - 1.0 / p).abs() > 1e-12 {
        return Err(invalid(format!("delta = {delta} differs from 1/p = {}", 1.0 / p)));
    }
    if m_max < 1 {
        return Err(invalid("m_max must be at least 1"));
    }
    let d = Domain::new(Shape::PlaneMinusSegment { window_size: opts.window }, 2)?;
    let lat = Lattice::new(d.window(), opts.cells)?;
    let zero = GridFunction::zeros(&d, lat);
    let run = |delta: f64| -> Result<(Vec<f64>, Vec<InequalityReport>)> {
        let params = FracParams::new(delta, p, 0.5, 1.0, p)?;
        let w = params.weight_exponent(2);
        let op = PairOperator::new(&d, &lat, zero.mask(), delta, p);
        let mut ratios = Vec::new();
        let mut reps = Vec::new();
        for m in 1..=m_max {
            let u = log_profile(&d, lat, m, opts.outer_radius)?;
            let lhs = hardy_sum(&u, &d, w, p);
            let rhs = op.energy(u.values());
            let rep = InequalityReport::new("counterexample", &d, &params, lat.h, lhs, rhs, &format!("log_profile(m={m})"))
                .extra("m", m as f64);
            ratios.push(rep.ratio);
            reps.push(rep);
        }
        Ok((ratios, reps))
    };
    let (ratios, mut reports) = run(delta)?;
    let (control, control_reps) = run(opts.control_delta)?;
    let growth = ratios[ratios.len() - 1] / ratios[0];
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let cmax = control.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmin = control.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = cmax / cmin - 1.0;
    let last = reports.len() - 1;
    let head = std::mem::take(&mut reports[last]);
    reports[last] = head
        .assertion(increasing && growth >= 3.0)
        .extra("growth", growth)
        .with_note("cell-center weights; the profile equals 1 next to the slit");
    for (i, mut r) in control_reps.into_iter().enumerate() {
        r.name = "counterexample_control".into();
        if i == control.len() - 1 {
            r = r.assertion(spread <= 0.2).extra("spread", spread);
        }
        reports.push(r);
    }
    Ok(CounterexampleReport {
        m: (1..=m_max).collect(),
        ratios,
        control_ratios: control,
        growth,
        increasing,
        control_spread: spread,
        reports,
    })
}

impl Default for InequalityReport {
    fn default() -> Self {
        Self {
            name: String::new(),
            domain: String::new(),
            delta: 0.0,
            p: 0.0,
            q: 0.0,
            tau: 0.0,
            h: 0.0,
            lhs: 0.0,
            rhs: 0.0,
            ratio: 0.0,
            fixture: String::new(),
            refinement_trace: Vec::new(),
            status: Status::Ok,
            tier: Tier::Measured,
            passed: true,
            note: String::new(),
            extras: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExhaustionLevel {
    pub size: f64,
    pub measure: f64,
    pub mean: f64,
    pub holder_bound: f64,
    pub shift: f64,
    pub lhs_zero: f64,
    pub lhs_shift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExhaustionReport {
    pub levels: Vec<ExhaustionLevel>,
    pub rhs: f64,
    pub means_decreasing: bool,
    pub holder_holds: bool,
    /// lhs(a = 0) / lhs(a = a*) at the largest window
    pub final_ratio: f64,
}

/// Means and Sobolev left-hand sides of a compactly supported u over nested
/// windows of an unbounded domain. u lives on the lattice of the smallest
/// window; larger windows extend it by zero on the same grid.
/// Copy u onto an aligned lattice of spacing h over a larger window.
fn embed(u: &GridFunction, d: &Domain, window: &AxisBox) -> Result<GridFunction> {
    let lat = *u.lattice();
    let outer = Lattice::with_spacing(window, lat.h)?;
    let mut offset = [0usize; 3];
    for a in 0..lat.dim {
        let t = (lat.window().lo[a] - outer.lo[a]) / lat.h;
        if t < -1e-6 || (t - t.round()).abs() > 1e-6 {
            return Err(Error::Window("nested windows are not aligned with the grid".into()));
        }
        offset[a] = t.round() as usize;
    }
    let mut values = vec![0.0; outer.len()];
    for i in u.support() {
        let c = lat.coords(i);
        let mut k = [0usize; 3];
        for a in 0..lat.dim {
            k[a] = c[a] + offset[a];
        }
        values[outer.index(k)] = u.value(i);
    }
    GridFunction::from_values(d, outer, values)
}

/// tau-seminorm of u on the first window (the function's own, then the
/// nested sizes) wide enough for every restricted ball.
fn exhaustion_rhs(u: &GridFunction, d: &Domain, params: &FracParams, sorted: &[f64]) -> Result<f64> {
    if ensure_tau_window(u, d, params.tau).is_ok() {
        return seminorm_tau(u, d, params);
    }
    for &s in sorted {
        let wi = *d.with_window_size(s)?.window();
        if !wi.contains_box(&u.lattice().window()) {
            continue;
        }
        let big = embed(u, d, &wi)?;
        if ensure_tau_window(&big, d, params.tau).is_ok() {
            return seminorm_tau(&big, d, params);
        }
    }
    Err(Error::Window("no nested window contains the restricted balls of the support".into()))
}

pub fn exhaustion_study(u: &GridFunction, d: &Domain, params: &FracParams, sizes: &[f64]) -> Result<ExhaustionReport> {
    if d.bounded() {
        return Err(invalid("exhaustion needs an unbounded domain"));
    }
    require_critical(d, params)?;
    let lat = *u.lattice();
    let inner = lat.window();
    for i in u.support() {
        let b = lat.cell_box(i);
        if d.dist_box(&b) <= 0.0 {
            return Err(Error::SupportTouchesBoundary(format!("cell {i}")));
        }
        for a in 0..lat.dim {
            if b.lo[a] <= inner.lo[a] && !(a == lat.dim - 1 && d.boundary_unbounded()) || b.hi[a] >= inner.hi[a] {
                return Err(invalid("u is not compactly supported in the lattice window"));
            }
        }
    }
    let hn = lat.cell_volume();
    let q = params.q;
    let vals: Vec<f64> = u.inside_cells().iter().map(|&i| u.value(i)).collect();
    let inner_measure = vals.len() as f64 * hn;
    let total = neumaier(vals.iter().copied()) * hn;
    let lp = u.lq_power(params.p).powf(1.0 / params.p);
    let mut levels = Vec::new();
    let mut sorted = sizes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rhs = exhaustion_rhs(u, d, params, &sorted)?.powf(q / params.p);
    for &s in &sorted {
        let di = d.with_window_size(s)?;
        let wi = di.window();
        if !wi.contains_box(&inner) {
            return Err(Error::Window(format!("window of size {s} does not contain the function window")));
        }
        let outer = Lattice::with_spacing(wi, lat.h)?;
        for a in 0..lat.dim {
            let t = (inner.lo[a] - outer.lo[a]) / lat.h;
            if (t - t.round()).abs() > 1e-6 {
                return Err(Error::Window("nested windows are not aligned with the grid".into()));
            }
        }
        let count = (0..outer.len()).filter(|&i| di.inside(&outer.center(i))).count();
        let measure = count as f64 * hn;
        let zeros = measure - inner_measure;
        let (shift, lhs_shift) = inf_shift_values(&vals, hn, zeros, q)?;
        let lhs_zero = neumaier(vals.iter().map(|&v| pow_abs(v, q) * hn));
        levels.push(ExhaustionLevel {
            size: s,
            measure,
            mean: total / measure,
            holder_bound: measure.powf(-1.0 / params.p) * lp,
            shift,
            lhs_zero,
            lhs_shift,
        });
    }
    let means_decreasing = levels.windows(2).all(|w| w[1].mean.abs() <= w[0].mean.abs());
    let holder_holds = levels.iter().all(|l| l.mean.abs() <= l.holder_bound * (1.0 + 1e-12));
    let last = levels.last().ok_or_else(|| invalid("no window sizes"))?;
    let final_ratio = last.lhs_zero / last.lhs_shift;
    Ok(ExhaustionReport { levels, rhs, means_decreasing, holder_holds, final_ratio })
}

/// Per Whitney cube: weak quasinorm of u - u_Q over Q divided by the q-th power
/// of the single-cube A-functional term.
pub fn local_cube_ratios(u: &GridFunction, w: &WhitneyFamily, params: &FracParams) -> Vec<(DyadicCube, f64)> {
    let lat = u.lattice();
    let n = lat.dim as f64;
    let mut out = Vec::new();
    for q in w.cubes() {
        if q.side() < 4.0 * lat.h - 1e-12 {
            continue;
        }
        let cells = lat.overlap_weights(&q.to_box());
        let (mean, osc) = cube_oscillation(u, q);
        if osc == 0.0 {
            continue;
        }
        // weighted level function of |u - u_Q| over the cube
        let mut devs: Vec<(f64, f64)> = cells.iter().map(|&(i, wt)| ((u.value(i) - mean).abs(), wt)).collect();
        devs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut weak = 0.0f64;
        let mut acc = 0.0;
        let mut i = 0;
        while i < devs.len() {
            let v = devs[i].0;
            if v == 0.0 {
                break;
            }
            while i < devs.len() && devs[i].0 == v {
                acc += devs[i].1;
                i += 1;
            }
            weak = weak.max(pow_abs(v, params.q) * acc);
        }
        let vol = q.volume();
        let a = vol.powf(1.0 / params.p - 1.0 - params.delta / n) * osc;
        out.push((*q, weak / a.powf(params.q)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_domain;

    #[test]
    fn constant_is_vacuous() {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 16).unwrap();
        let u = GridFunction::from_fn(&d, lat, |_| 2.0).unwrap();
        let pr = FracParams::critical(2, 0.5, 2.0, 0.5).unwrap();
        let r = check_sobolev_poincare(&u, &d, &pr, "const").unwrap();
        assert_eq!(r.status, Status::Vacuous);
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn level_indices() {
        assert_eq!(level_of(1.0), -1);
        assert_eq!(level_of(1.5), 0);
        assert_eq!(level_of(2.0), 0);
        assert_eq!(level_of(3.0), 1);
        assert_eq!(level_of(-0.3), -2);
    }

    #[test]
    fn two_valued_collapses() {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 16).unwrap();
        let u = GridFunction::from_fn(&d, lat, |x| if x.get(0) < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let pr = FracParams::critical(2, 0.5, 2.0, 0.5).unwrap();
        let t = truncation_transfer(&u, &d, &pr).unwrap();
        assert!(t.single_level);
        assert!((t.strong - t.level_bound).abs() <= 1e-9 * t.strong);
        assert!((t.c1_measured - t.c2_measured).abs() <= 1e-9 * t.c1_measured);
        assert!(t.all_hold(), "{:?}", t.steps);
    }

    #[test]
    fn counterexample_rejects_off_regime() {
        assert!(counterexample_sequence(3, 0.3, 2.0, &CounterexampleOptions::default()).is_err());
    }
}
