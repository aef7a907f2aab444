//! Covering-count estimates of upper and lower Assouad dimensions.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::functional::FracParams;
use crate::geometry::{Domain, Point};

/// Half-width of the estimate interval, relative: one half octave over the
/// mean ladder separation of 3.5 octaves.
pub const INTERVAL_OVERHEAD: f64 = 1.0 / 7.0;

/// Minimum sample size for a continuum boundary.
pub const MIN_POINTS: usize = 1000;

/// Default number of boundary samples used by `corollary_conditions`.
pub const DEFAULT_SAMPLES: usize = 10_000;

const CENTERS: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum ScaleSpec {
    /// (R, r) = (2^-a, 2^-a-b) diam(E), a in 1..=4, b in 2..=5
    Relative,
    /// explicit (R, r) pairs
    Absolute(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringProfile {
    pub scale_pairs: Vec<(f64, f64)>,
    /// sample index of each center
    pub centers: Vec<usize>,
    /// counts[c][k] = N(x_c, R_k, r_k)
    pub counts: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssouadEstimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    /// rms residual of the extremal center's regression
    pub residual: f64,
    pub center: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorollaryConditions {
    pub threshold: f64,
    pub upper: AssouadEstimate,
    pub lower: AssouadEstimate,
    pub boundary_unbounded: bool,
    pub a: Verdict,
    pub b: Verdict,
}

fn grid_key(p: &Point, cell: f64) -> [i64; 3] {
    let c = p.raw();
    [(c[0] / cell).floor() as i64, (c[1] / cell).floor() as i64, (c[2] / cell).floor() as i64]
}

fn neighbours(k: [i64; 3], dim: usize) -> impl Iterator<Item = [i64; 3]> {
    let r = move |i: usize| if i < dim { -1..=1i64 } else { 0..=0 };
    r(0).flat_map(move |a| r(1).flat_map(move |b| r(2).map(move |c| [k[0] + a, k[1] + b, k[2] + c])))
}

/// Size of a greedy r-net of `pts`, taken in order.
pub fn greedy_net_count(pts: &[&Point], r: f64) -> usize {
    if pts.is_empty() {
        return 0;
    }
    let dim = pts[0].dim();
    let mut grid: HashMap<[i64; 3], Vec<&Point>> = HashMap::new();
    let mut count = 0;
    for &p in pts {
        let k = grid_key(p, r);
        let covered = neighbours(k, dim).any(|nk| grid.get(&nk).is_some_and(|v| v.iter().any(|s| s.dist(p) < r)));
        if !covered {
            grid.entry(k).or_default().push(p);
            count += 1;
        }
    }
    count
}

pub fn diameter(pts: &[Point]) -> f64 {
    pts.par_iter()
        .enumerate()
        .map(|(i, a)| pts[i + 1..].iter().map(|b| a.dist(b)).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

/// Largest nearest-neighbour distance in the sample.
pub fn sample_resolution(pts: &[Point]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let dim = pts[0].dim();
    // coarse cell from the bounding box and sample size
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for i in 0..dim {
            lo[i] = lo[i].min(p.get(i));
            hi[i] = hi[i].max(p.get(i));
        }
    }
    let extent = (0..dim).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    if extent == 0.0 {
        return 0.0;
    }
    let mut cell = extent / pts.len() as f64;
    loop {
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            grid.entry(grid_key(p, cell)).or_default().push(i);
        }
        let nn: Vec<f64> = pts
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                neighbours(grid_key(p, cell), dim)
                    .filter_map(|k| grid.get(&k))
                    .flatten()
                    .filter(|&&j| j != i)
                    .map(|&j| p.dist(&pts[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let worst = nn.iter().copied().fold(0.0, f64::max);
        // a neighbour found within one cell is the true nearest one
        if worst <= cell {
            return worst;
        }
        cell *= 2.0;
    }
}

fn ladder(spec: &ScaleSpec, pts: &[Point]) -> Result<Vec<(f64, f64)>> {
    let pairs = match spec {
        ScaleSpec::Relative => {
            let diam = diameter(pts);
            if diam == 0.0 {
                return Ok(Vec::new());
            }
            if pts.len() < MIN_POINTS {
                return Err(invalid(format!("{} sample points, need at least {MIN_POINTS}", pts.len())));
            }
            let pairs: Vec<(f64, f64)> = (1..=4)
                .flat_map(|a| (2..=5).map(move |b| (diam * 2f64.powi(-a), diam * 2f64.powi(-a - b))))
                .collect();
            let res = sample_resolution(pts);
            let rmin = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            if rmin < 2.0 * res {
                return Err(Error::Resolution(format!(
                    "smallest scale {rmin:.3e} below twice the sample spacing {res:.3e}"
                )));
            }
            pairs
        }
        ScaleSpec::Absolute(pairs) => {
            for &(big, small) in pairs {
                if !(small > 0.0 && big >= 4.0 * small && big.is_finite()) {
                    return Err(invalid(format!("scale pair ({big}, {small}) needs 0 < 4r <= R")));
                }
            }
            pairs.clone()
        }
    };
    Ok(pairs)
}

pub fn covering_profile(pts: &[Point], spec: &ScaleSpec) -> Result<CoveringProfile> {
    if pts.is_empty() {
        return Err(Error::EmptyFamily("boundary sample".into()));
    }
    let dim = pts[0].dim();
    if pts.iter().any(|p| p.dim() != dim) {
        return Err(invalid("sample points of mixed dimension"));
    }
    let scale_pairs = ladder(spec, pts)?;
    let stride = pts.len().div_ceil(CENTERS);
    let centers: Vec<usize> = (0..pts.len()).step_by(stride).collect();
    let counts = centers
        .par_iter()
        .map(|&c| {
            let x = &pts[c];
            scale_pairs
                .iter()
                .map(|&(big, small)| {
                    let ball: Vec<&Point> = pts.iter().filter(|p| p.dist(x) < big).collect();
                    greedy_net_count(&ball, small)
                })
                .collect()
        })
        .collect();
    Ok(CoveringProfile { scale_pairs, centers, counts })
}

/// Least-squares slope of ln N against ln(R/r), with rms residual.
fn regression(pairs: &[(f64, f64)], counts: &[usize]) -> (f64, f64) {
    let xs: Vec<f64> = pairs.iter().map(|(a, b)| (a / b).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    (slope, (rss / m).sqrt())
}

impl CoveringProfile {
    /// Per-center (slope, residual).
    pub fn slopes(&self) -> Vec<(f64, f64)> {
        self.counts.iter().map(|c| regression(&self.scale_pairs, c)).collect()
    }

    fn pick(&self, upper: bool) -> AssouadEstimate {
        let slopes = self.slopes();
        let best = (0..slopes.len()).reduce(|a, b| {
            let better = if upper { slopes[b].0 > slopes[a].0 } else { slopes[b].0 < slopes[a].0 };
            if better {
                b
            } else {
                a
            }
        });
        let (value, residual, center) = match best {
            Some(i) => (slopes[i].0.max(0.0), slopes[i].1, self.centers[i]),
            None => (0.0, 0.0, 0),
        };
        AssouadEstimate {
            value,
            lo: value / (1.0 + INTERVAL_OVERHEAD),
            hi: value * (1.0 + INTERVAL_OVERHEAD),
            residual,
            center,
        }
    }

    pub fn upper(&self) -> AssouadEstimate {
        self.pick(true)
    }

    pub fn lower(&self) -> AssouadEstimate {
        self.pick(false)
    }

    /// Rows {center_id, R, r, count}.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["center_id", "R", "r", "count"])?;
        for (c, row) in self.centers.iter().zip(&self.counts) {
            for (&(big, small), n) in self.scale_pairs.iter().zip(row) {
                w.write_record([c.to_string(), big.to_string(), small.to_string(), n.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn upper_assouad_estimate(pts: &[Point], spec: &ScaleSpec) -> Result<AssouadEstimate> {
    Ok(covering_profile(pts, spec)?.upper())
}

pub fn lower_assouad_estimate(pts: &[Point], spec: &ScaleSpec) -> Result<AssouadEstimate> {
    Ok(covering_profile(pts, spec)?.lower())
}

fn verdict(holds: bool, fails: bool) -> Verdict {
    if holds {
        Verdict::Holds
    } else if fails {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    }
}

/// (A): upper dimension of the boundary below n - delta p.
/// (B): lower dimension above n - delta p, boundary unbounded.
pub fn corollary_conditions(d: &Domain, params: &FracParams) -> Result<CorollaryConditions> {
    let pts = d.boundary_sample(DEFAULT_SAMPLES)?;
    Ok(conditions_from_profile(d, params, &covering_profile(&pts, &ScaleSpec::Relative)?))
}

pub fn boundary_profile(d: &Domain, samples: usize) -> Result<CoveringProfile> {
    covering_profile(&d.boundary_sample(samples)?, &ScaleSpec::Relative)
}

pub fn conditions_from_profile(d: &Domain, params: &FracParams, profile: &CoveringProfile) -> CorollaryConditions {
    let (upper, lower) = (profile.upper(), profile.lower());
    let threshold = d.dim() as f64 - params.delta * params.p;
    let unbounded = d.boundary_unbounded();
    let a = verdict(upper.hi < threshold, upper.lo > threshold);
    let b = if unbounded {
        verdict(lower.lo > threshold, lower.hi < threshold)
    } else {
        Verdict::Fails
    };
    CorollaryConditions { threshold, upper, lower, boundary_unbounded: unbounded, a, b }
}
