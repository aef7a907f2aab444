//! Batch execution of an [`ExperimentConfig`].

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::assouad::{boundary_profile, conditions_from_profile};
use crate::capacity::{capacity_estimate, CapacityProblem, CompactSet};
use crate::chains::{build_chains, john_center, telescoping_check, verify_chain_properties};
use crate::config::{ExperimentConfig, Task};
use crate::error::{Error, Result};
use crate::fixtures::{generate, localize, Family, Fixture};
use crate::functional::FracParams;
use crate::geometry::{make_domain, Domain, Point};
use crate::inequality::{
    check_hardy, check_mazya_criterion, check_sobolev_poincare, check_weak_sobolev_poincare,
    check_whitney_capacity_sum, counterexample_sequence, exhaustion_study, InequalityReport,
};
use crate::lattice::{GridFunction, Lattice};
use crate::report::{save_csv, save_json};
use crate::whitney::whitney_decompose;

#[derive(Clone, Debug, Serialize)]
pub struct Skip {
    pub task: String,
    pub domain: String,
    pub detail: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Detail {
    pub task: String,
    pub domain: String,
    pub data: Value,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunOutcome {
    pub reports: Vec<InequalityReport>,
    pub details: Vec<Detail>,
    pub skipped: Vec<Skip>,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| r.failed()).count()
    }

    /// 0 when every assertion row passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Exponent {
    /// q = np/(n - delta p)
    Critical,
    /// q = p unless given
    Hardy,
}

#[derive(Clone, Debug)]
struct FixtureRef {
    family: Family,
    seed: u64,
    index: usize,
    count: usize,
}

#[derive(Clone, Debug)]
struct Job {
    task: Task,
    domain: Domain,
    params: Option<FracParams>,
    h: Option<f64>,
    fixture: Option<FixtureRef>,
}

impl Job {
    fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(p) = &self.params {
            parts.push(format!("delta={} p={} q={} tau={}", p.delta, p.p, p.q, p.tau));
        }
        if let Some(h) = self.h {
            parts.push(format!("h={h}"));
        }
        if let Some(f) = &self.fixture {
            parts.push(format!("fixture={}#{}+{}", f.family, f.seed, f.index));
        }
        parts.join(" ")
    }
}

struct JobOutput {
    reports: Vec<InequalityReport>,
    detail: Option<Value>,
}

fn rows(reports: Vec<InequalityReport>) -> JobOutput {
    JobOutput { reports, detail: None }
}

fn combos(cfg: &ExperimentConfig, n: usize, kind: Exponent) -> Vec<std::result::Result<FracParams, String>> {
    let g = &cfg.params;
    let mut out = Vec::new();
    for &delta in &g.delta {
        for &p in &g.p {
            for &tau in &g.tau {
                for &kappa in &g.kappa {
                    let qs: Vec<Option<f64>> =
                        if g.q.is_empty() { vec![None] } else { g.q.iter().copied().map(Some).collect() };
                    for q in qs {
                        out.push(make_params(n, delta, p, tau, kappa, q, kind).map_err(|e| e.to_string()));
                    }
                }
            }
        }
    }
    out
}

fn make_params(n: usize, delta: f64, p: f64, tau: f64, kappa: f64, q: Option<f64>, kind: Exponent) -> Result<FracParams> {
    match kind {
        Exponent::Critical => {
            let c = FracParams::critical(n, delta, p, tau)?;
            let params = FracParams::new(delta, p, tau, kappa, q.unwrap_or(c.q))?;
            if !params.is_critical(n) {
                return Err(Error::InvalidParameter(format!(
                    "q = {} differs from the critical exponent {}",
                    params.q, c.q
                )));
            }
            Ok(params)
        }
        Exponent::Hardy => {
            let params = FracParams::new(delta, p, tau, kappa, q.unwrap_or(p))?;
            if !params.weight_admissible(n) {
                return Err(Error::WeightExponent(format!(
                    "1/p - 1/q = {} exceeds delta/n = {}",
                    1.0 / p - 1.0 / params.q,
                    delta / n as f64
                )));
            }
            Ok(params)
        }
    }
}

fn exponent_kind(task: Task) -> Exponent {
    match task {
        Task::CheckSp | Task::CheckWeak | Task::Chains | Task::Exhaustion => Exponent::Critical,
        _ => Exponent::Hardy,
    }
}

/// Jobs in a fixed order, plus the combinations rejected up front.
fn plan(cfg: &ExperimentConfig) -> Result<(Vec<Job>, Vec<Skip>)> {
    let hs = cfg.resolutions()?;
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    let families: Vec<Family> = cfg
        .fixtures
        .families
        .iter()
        .map(|f| f.parse().map_err(|e: Error| Error::Config(e.to_string())))
        .collect::<Result<_>>()?;
    let mut fixtures = Vec::new();
    for &family in &families {
        if family.is_random() {
            for seed in cfg.fixture_seeds() {
                for index in 0..cfg.fixtures.count {
                    fixtures.push(FixtureRef { family, seed, index, count: cfg.fixtures.count });
                }
            }
        } else {
            fixtures.push(FixtureRef { family, seed: 0, index: 0, count: 1 });
        }
    }
    for &task in &cfg.tasks {
        if task == Task::Counterexample {
            let d = make_domain("plane_minus_segment")?;
            jobs.push(Job { task, domain: d, params: None, h: None, fixture: None });
            continue;
        }
        for name in &cfg.domains {
            let d = make_domain(name)?;
            let skip = |reason: String, detail: String| Skip {
                task: task.to_string(),
                domain: d.name().to_string(),
                detail,
                reason,
            };
            match task {
                Task::Chains if !d.bounded() => {
                    skipped.push(skip("chains need a bounded domain".into(), String::new()));
                    continue;
                }
                Task::Exhaustion if d.bounded() => {
                    skipped.push(skip("exhaustion needs an unbounded domain".into(), String::new()));
                    continue;
                }
                Task::Assouad if d.dim() != 2 => {
                    skipped.push(skip("boundary samplers are planar".into(), String::new()));
                    continue;
                }
                _ => {}
            }
            if task == Task::Whitney {
                jobs.push(Job { task, domain: d.clone(), params: None, h: None, fixture: None });
                continue;
            }
            for combo in combos(cfg, d.dim(), exponent_kind(task)) {
                let params = match combo {
                    Ok(p) => p,
                    Err(reason) => {
                        skipped.push(skip(reason, String::new()));
                        continue;
                    }
                };
                let base = Job { task, domain: d.clone(), params: Some(params), h: None, fixture: None };
                match task {
                    Task::Chains | Task::Assouad => jobs.push(base),
                    _ => {
                        for &h in &hs {
                            let at_h = Job { h: Some(h), ..base.clone() };
                            if task.uses_fixtures() {
                                for f in &fixtures {
                                    jobs.push(Job { fixture: Some(f.clone()), ..at_h.clone() });
                                }
                            } else {
                                jobs.push(at_h);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((jobs, skipped))
}

fn lattice(d: &Domain, h: f64) -> Result<Lattice> {
    Lattice::with_spacing(d.window(), h)
}

fn fixture(f: &FixtureRef, d: &Domain, lat: Lattice) -> Result<Fixture> {
    let mut all = generate(f.family, f.seed, f.count, d, lat)?;
    Ok(all.swap_remove(f.index))
}

/// Disc at the anchor with radius `frac` times its boundary distance.
fn anchor_disc(d: &Domain, lat: Lattice, frac: f64) -> Result<(CompactSet, String)> {
    let a = d.anchor();
    let r = frac * d.dist_boundary(&a);
    let k = CompactSet::disc(d, lat, &a, r)?;
    if k.is_empty() {
        return Err(Error::EmptyAdmissible(format!("disc of radius {r} holds no cell center")));
    }
    Ok((k, format!("disc(r={r})")))
}

fn dump(cfg: &ExperimentConfig, name: &str, write: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    if !cfg.output.dumps {
        return Ok(());
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(cfg.output.dir.join(name))?);
    write(&mut f)
}

fn plain_row(name: &str, d: &Domain, lhs: f64, rhs: f64) -> InequalityReport {
    InequalityReport {
        name: name.into(),
        domain: d.name().into(),
        delta: f64::NAN,
        p: f64::NAN,
        q: f64::NAN,
        tau: f64::NAN,
        h: f64::NAN,
        lhs,
        rhs,
        ratio: lhs / rhs,
        ..Default::default()
    }
}

fn execute(cfg: &ExperimentConfig, job: &Job) -> Result<JobOutput> {
    let d = &job.domain;
    let params = job.params;
    let need = || params.ok_or_else(|| Error::Config("missing parameters".into()));
    let need_h = || job.h.ok_or_else(|| Error::Config("missing resolution".into()));
    match job.task {
        Task::Whitney => {
            let w = whitney_decompose(d, cfg.max_level)?;
            let ratios: Vec<f64> = w.cubes().iter().zip(w.dists()).map(|(q, &t)| t / q.diam()).collect();
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            let ok = lo >= 1.0 - 1e-12 && hi <= 4.0 + 1e-12;
            dump(cfg, &format!("whitney_{}.jsonl", d.name()), |f| w.write_jsonl(f))?;
            let row = plain_row("whitney", d, hi, 4.0)
                .assertion(ok)
                .extra("min_dist_over_diam", lo)
                .extra("cubes", w.len() as f64)
                .extra("unresolved_measure", w.unresolved_measure())
                .extra("max_level", cfg.max_level as f64);
            Ok(rows(vec![row]))
        }
        Task::Chains => {
            let params = need()?;
            let w = whitney_decompose(d, cfg.max_level)?;
            let c0 = john_center(d, &w)?;
            let ch = build_chains(&w, &c0)?.with_exponent(params.q);
            let rep = verify_chain_properties(&ch, params.q);
            let lat = Lattice::new(d.window(), 64)?;
            let u = GridFunction::from_fn(d, lat, |x| x.get(0))?;
            let tele = telescoping_check(&ch, &u);
            dump(cfg, &format!("chains_{}.jsonl", d.name()), |f| ch.write_jsonl(f))?;
            let ok = ch.shadow_duality_holds() && ch.chains_well_formed() && tele.violations == 0;
            let mut row = InequalityReport::new("chains", d, &params, f64::NAN, rep.rho as f64, 3.0, "")
                .assertion(ok)
                .extra("sigma", rep.sigma_measured)
                .extra("per_level_max", rep.per_level_max as f64)
                .extra("max_length", rep.max_length as f64)
                .extra("telescoping_constant", tele.constant)
                .extra("telescoping_worst", tele.worst_ratio);
            if rep.rho > 3 {
                row = row.with_note(format!("measured rho = {}", rep.rho));
            }
            Ok(JobOutput { reports: vec![row], detail: Some(serde_json::to_value((&rep, &tele))?) })
        }
        Task::Capacity => {
            let params = need()?;
            let lat = lattice(d, need_h()?)?;
            let (small, label) = anchor_disc(d, lat, cfg.set_radius)?;
            let (big, _) = anchor_disc(d, lat, 2.0 * cfg.set_radius)?;
            let a = capacity_estimate(&CapacityProblem::new(small.clone(), params), cfg.budget)?;
            let b = capacity_estimate(&CapacityProblem::new(big, params), cfg.budget)?;
            let ok = a.value_upper <= b.value_upper * (1.0 + 1e-3);
            let mut row = InequalityReport::new("capacity_monotone", d, &params, lat.h, a.value_upper, b.value_upper, &label)
                .assertion(ok)
                .extra("iterations", a.iterations as f64);
            if !(a.converged && b.converged) {
                row = row.with_note("capacity not converged");
            }
            Ok(JobOutput {
                reports: vec![row],
                detail: Some(json!({"set": small.to_json(), "small": a.to_json(), "large": b.to_json()})),
            })
        }
        Task::CheckSp | Task::CheckWeak | Task::CheckHardy => {
            let params = need()?;
            let lat = lattice(d, need_h()?)?;
            let fref = job.fixture.as_ref().ok_or_else(|| Error::Config("missing fixture".into()))?;
            let f = fixture(fref, d, lat)?;
            let rep = match job.task {
                Task::CheckSp => check_sobolev_poincare(&f.u, d, &params, &f.id)?,
                Task::CheckWeak => check_weak_sobolev_poincare(&f.u, d, &params, &f.id)?,
                _ => {
                    let u = localize(&f.u, d);
                    check_hardy(&u, d, &params, &format!("localized {}", f.id))?
                }
            };
            Ok(rows(vec![rep]))
        }
        Task::CheckMazya => {
            let params = need()?;
            let lat = lattice(d, need_h()?)?;
            let (k, label) = anchor_disc(d, lat, cfg.set_radius)?;
            Ok(rows(vec![check_mazya_criterion(&k, d, &params, cfg.budget, &label)?]))
        }
        Task::CheckWhitneySum => {
            let params = need()?;
            let lat = lattice(d, need_h()?)?;
            let (k, label) = anchor_disc(d, lat, cfg.set_radius)?;
            let w = whitney_decompose(d, cfg.max_level)?;
            let (rep, sum) = check_whitney_capacity_sum(&k, d, &params, &w, cfg.budget, &label)?;
            Ok(JobOutput { reports: vec![rep], detail: Some(serde_json::to_value(&sum)?) })
        }
        Task::Counterexample => {
            let s = &cfg.counterexample;
            let r = counterexample_sequence(s.m_max, 1.0 / s.p, s.p, &s.options())?;
            let detail = json!({
                "m": r.m,
                "ratios": r.ratios,
                "control_ratios": r.control_ratios,
                "growth": r.growth,
                "increasing": r.increasing,
                "control_spread": r.control_spread,
            });
            Ok(JobOutput { reports: r.reports, detail: Some(detail) })
        }
        Task::Assouad => {
            let params = need()?;
            let profile = boundary_profile(d, cfg.samples)?;
            let c = conditions_from_profile(d, &params, &profile);
            dump(cfg, &format!("covering_{}.csv", d.name()), |f| profile.write_csv(f))?;
            let note = format!("A={:?} B={:?}", c.a, c.b).to_lowercase();
            let row = InequalityReport::new("assouad", d, &params, f64::NAN, c.upper.value, c.threshold, "boundary sample")
                .with_note(note)
                .extra("upper_lo", c.upper.lo)
                .extra("upper_hi", c.upper.hi)
                .extra("lower", c.lower.value)
                .extra("lower_lo", c.lower.lo)
                .extra("lower_hi", c.lower.hi);
            Ok(JobOutput { reports: vec![row], detail: Some(serde_json::to_value(&c)?) })
        }
        Task::Exhaustion => {
            let params = need()?;
            let sizes = &cfg.exhaustion.sizes;
            let first = sizes.iter().copied().fold(f64::INFINITY, f64::min);
            let d1 = d.with_window_size(first)?;
            let lat = lattice(&d1, need_h()?)?;
            let centre = d1.anchor();
            let rb = cfg.exhaustion.bump_radius;
            let u = bump(&d1, lat, &centre, rb)?;
            let r = exhaustion_study(&u, d, &params, sizes)?;
            let last = r.levels.last().ok_or_else(|| Error::Config("no window sizes".into()))?;
            let close = (r.final_ratio - 1.0).abs() <= 0.05;
            let row = InequalityReport::new("exhaustion", d, &params, lat.h, last.lhs_zero, last.lhs_shift, &format!("bump(r={rb})"))
                .assertion(r.means_decreasing && r.holder_holds)
                .with_note(if close { "a = 0 within 5% of a*" } else { "a = 0 not within 5% of a*" })
                .extra("means_decreasing", r.means_decreasing as u8 as f64)
                .extra("holder_holds", r.holder_holds as u8 as f64)
                .extra("seminorm_rhs", r.rhs);
            Ok(JobOutput { reports: vec![row], detail: Some(serde_json::to_value(&r)?) })
        }
    }
}

/// cos^2 bump of radius `r` at `c`.
pub fn bump(d: &Domain, lat: Lattice, c: &Point, r: f64) -> Result<GridFunction> {
    GridFunction::from_fn(d, lat, |x| {
        let t = x.dist(c) / r;
        if t >= 1.0 {
            0.0
        } else {
            (0.5 * std::f64::consts::PI * t).cos().powi(2)
        }
    })
}

/// Run every job; rows keep the job order whatever the completion order.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    let (jobs, mut skipped) = plan(cfg)?;
    for s in &skipped {
        eprintln!("skip {} {}: {}", s.task, s.domain, s.reason);
    }
    let results: Vec<Result<JobOutput>> = jobs.par_iter().map(|j| execute(cfg, j)).collect();
    let mut out = RunOutcome::default();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(o) => {
                out.reports.extend(o.reports);
                if let Some(data) = o.detail {
                    out.details.push(Detail { task: job.task.to_string(), domain: job.domain.name().into(), data });
                }
            }
            Err(e) => {
                eprintln!("skip {} {} {}: {e}", job.task, job.domain.name(), job.label());
                skipped.push(Skip {
                    task: job.task.to_string(),
                    domain: job.domain.name().into(),
                    detail: job.label(),
                    reason: e.to_string(),
                });
            }
        }
    }
    out.skipped = skipped;
    save_csv(&out.reports, &cfg.output.dir.join(&cfg.output.csv))?;
    save_json(&json!({"config": cfg, "reports": out.reports, "details": out.details, "skipped": out.skipped}), &cfg.output.dir.join(&cfg.output.json))?;
    Ok(out)
}

/// Worker count from FRACLAB_THREADS, when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FRACLAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("FRACLAB_THREADS = `{v}` is not a count")))?;
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run_file(path: &Path) -> Result<RunOutcome> {
    run(&ExperimentConfig::load(path)?)
}
