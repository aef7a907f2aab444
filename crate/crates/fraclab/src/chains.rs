//! Chain decompositions of a Whitney family and their audit.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Domain, DyadicCube};
use crate::lattice::GridFunction;
use crate::quadrature::neumaier;
use crate::whitney::{Adjacency, WhitneyFamily};

const STAR: f64 = 9.0 / 8.0;

/// Chains C(Q) joining the center cube to every cube, with shadows S(R).
#[derive(Clone, Debug)]
pub struct ChainDecomposition {
    pub center: usize,
    pub cubes: Vec<DyadicCube>,
    /// chain of cube i, from the center to i
    pub chains: Vec<Vec<usize>>,
    /// shadow of cube i, ascending
    pub shadows: Vec<Vec<usize>>,
    pub rho: i32,
    pub sigma: f64,
    pub q_exponent: f64,
    adjacency: Adjacency,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainReport {
    pub rho: i32,
    /// largest number of same-level cubes in one chain
    pub per_level_max: usize,
    /// max over chains of level(R) - level(Q), floored at 0
    pub level_excess: i32,
    pub sigma_measured: f64,
    pub q: f64,
    pub max_length: usize,
    pub cubes: usize,
}

/// Cube of maximal side; ties by distance to the boundary, then index.
pub fn john_center(d: &Domain, w: &WhitneyFamily) -> Result<DyadicCube> {
    let _ = d;
    let best = (0..w.len()).min_by(|&a, &b| {
        let (qa, qb) = (&w.cubes()[a], &w.cubes()[b]);
        qa.level
            .cmp(&qb.level)
            .then(w.dists()[b].total_cmp(&w.dists()[a]))
            .then(qa.cmp(qb))
    });
    best.map(|i| w.cubes()[i]).ok_or_else(|| Error::EmptyFamily("whitney family".into()))
}

/// Shortest paths from the center in the adjacency graph, stepping onto R at
/// cost 1/l(R).
pub fn build_chains(w: &WhitneyFamily, center: &DyadicCube) -> Result<ChainDecomposition> {
    if w.is_empty() {
        return Err(Error::EmptyFamily("whitney family".into()));
    }
    let cubes = w.cubes().to_vec();
    let c = cubes
        .iter()
        .position(|q| q == center)
        .ok_or_else(|| crate::error::invalid("center is not a cube of the family"))?;
    let adjacency = Adjacency::build(w);
    let comps = adjacency.components();
    if comps.len() > 1 {
        return Err(Error::Disconnected { components: comps.len() });
    }
    let inv_side: Vec<f64> = cubes.iter().map(|q| 1.0 / q.side()).collect();
    let (_, prev) = adjacency.dijkstra(c, &|_, j| inv_side[j]);
    let mut chains = Vec::with_capacity(cubes.len());
    for i in 0..cubes.len() {
        let mut path = vec![i];
        let mut cur = i;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        chains.push(path);
    }
    let mut shadows = vec![Vec::new(); cubes.len()];
    for (q, chain) in chains.iter().enumerate() {
        for &r in chain {
            shadows[r].push(q);
        }
    }
    let mut out = ChainDecomposition {
        center: c,
        cubes,
        chains,
        shadows,
        rho: 0,
        sigma: 0.0,
        q_exponent: 1.0,
        adjacency,
    };
    out.rho = out.measured_rho().0;
    out.sigma = out.sigma_for(1.0);
    Ok(out)
}

impl ChainDecomposition {
    pub fn center_cube(&self) -> &DyadicCube {
        &self.cubes[self.center]
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn index_of(&self, q: &DyadicCube) -> Option<usize> {
        self.cubes.iter().position(|c| c == q)
    }

    pub fn chain(&self, i: usize) -> Vec<DyadicCube> {
        self.chains[i].iter().map(|&k| self.cubes[k]).collect()
    }

    pub fn shadow(&self, i: usize) -> Vec<DyadicCube> {
        self.shadows[i].iter().map(|&k| self.cubes[k]).collect()
    }

    /// (rho, per-level maximum, level excess).
    fn measured_rho(&self) -> (i32, usize, i32) {
        let mut excess = 0i32;
        let mut per_level = 0usize;
        for (q, chain) in self.chains.iter().enumerate() {
            let lq = self.cubes[q].level;
            let mut counts: HashMap<i32, usize> = HashMap::new();
            for &r in chain {
                let lr = self.cubes[r].level;
                excess = excess.max(lr - lq);
                *counts.entry(lr).or_default() += 1;
            }
            per_level = per_level.max(counts.values().copied().max().unwrap_or(0));
        }
        let mult = (per_level.max(1) as f64).log2().ceil() as i32;
        (excess.max(mult).max(0), per_level, excess.max(0))
    }

    /// max_R |R|^{-1} sum_{Q in S(R)} |Q| (rho + 1 + k - j)^q.
    pub fn sigma_for(&self, q: f64) -> f64 {
        let rho = self.rho as f64;
        let mut best = 0.0f64;
        for (r, shadow) in self.shadows.iter().enumerate() {
            let rc = &self.cubes[r];
            let j = rc.level as f64;
            let s = neumaier(shadow.iter().map(|&k| {
                let qc = &self.cubes[k];
                qc.volume() * (rho + 1.0 + qc.level as f64 - j).powf(q)
            })) / rc.volume();
            best = best.max(s);
        }
        best
    }

    pub fn with_exponent(mut self, q: f64) -> Self {
        self.sigma = self.sigma_for(q);
        self.q_exponent = q;
        self
    }

    pub fn shadow_duality_holds(&self) -> bool {
        for (q, chain) in self.chains.iter().enumerate() {
            for &r in chain {
                if self.shadows[r].binary_search(&q).is_err() {
                    return false;
                }
            }
        }
        for (r, shadow) in self.shadows.iter().enumerate() {
            for &q in shadow {
                if !self.chains[q].contains(&r) {
                    return false;
                }
            }
        }
        true
    }

    pub fn chains_well_formed(&self) -> bool {
        self.chains.iter().enumerate().all(|(q, chain)| {
            chain.first() == Some(&self.center)
                && chain.last() == Some(&q)
                && chain.windows(2).all(|w| self.cubes[w[0]].touches(&self.cubes[w[1]]))
        })
    }

    /// One JSON line per chain: {"level", "index", "chain": [[level, index...], ...]}.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (q, chain) in self.chains.iter().enumerate() {
            let c = &self.cubes[q];
            let path: Vec<serde_json::Value> = chain
                .iter()
                .map(|&k| {
                    let r = &self.cubes[k];
                    serde_json::json!({"level": r.level, "index": &r.index[..r.dim]})
                })
                .collect();
            let line = serde_json::json!({
                "level": c.level,
                "index": &c.index[..c.dim],
                "chain": path,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// max over adjacent pairs of |R*| / |R* n R'*| (both orders).
    pub fn adjacency_constant(&self) -> f64 {
        let mut c = 1.0f64;
        for (a, nb) in self.adjacency.neighbors.iter().enumerate() {
            let ra = self.cubes[a].dilate(STAR);
            for &b in nb {
                let rb = self.cubes[b].dilate(STAR);
                let i = ra.overlap(&rb);
                c = c.max(ra.volume() / i);
            }
        }
        c
    }
}

pub fn verify_chain_properties(c: &ChainDecomposition, q: f64) -> ChainReport {
    let (rho, per_level_max, level_excess) = c.measured_rho();
    ChainReport {
        rho,
        per_level_max,
        level_excess,
        sigma_measured: c.sigma_for(q),
        q,
        max_length: c.chains.iter().map(Vec::len).max().unwrap_or(0),
        cubes: c.cubes.len(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelescopingReport {
    /// constant used: twice the adjacency constant
    pub constant: f64,
    /// worst lhs / (sum of oscillations), over cubes with positive sum
    pub worst_ratio: f64,
    pub violations: usize,
    pub checked: usize,
}

/// |u_{Q*} - u_{Q0*}| <= C sum_{R in C(Q)} |R*|^{-1} int_{R*} |u - u_{R*}| with
/// C = 2 max |R*| / |R* n R'*|, using exact box integrals of the grid function.
pub fn telescoping_check(c: &ChainDecomposition, u: &GridFunction) -> TelescopingReport {
    let lat = u.lattice();
    let mut means = Vec::with_capacity(c.cubes.len());
    let mut oscs = Vec::with_capacity(c.cubes.len());
    for q in &c.cubes {
        let b = q.dilate(STAR);
        let cells = lat.overlap_weights(&b);
        let vol = b.volume();
        let m = neumaier(cells.iter().map(|&(i, w)| w * u.value(i))) / vol;
        let o = neumaier(cells.iter().map(|&(i, w)| w * (u.value(i) - m).abs())) / vol;
        means.push(m);
        oscs.push(o);
    }
    let constant = 2.0 * c.adjacency_constant();
    let m0 = means[c.center];
    let mut worst = 0.0f64;
    let mut violations = 0;
    for (q, chain) in c.chains.iter().enumerate() {
        let lhs = (means[q] - m0).abs();
        let sum = neumaier(chain.iter().map(|&r| oscs[r]));
        if lhs > constant * sum * (1.0 + 1e-12) + 1e-14 {
            violations += 1;
        }
        if sum > 0.0 {
            worst = worst.max(lhs / sum);
        }
    }
    TelescopingReport { constant, worst_ratio: worst, violations, checked: c.chains.len() }
}

/// Per-level cube counts.
pub fn level_histogram(c: &ChainDecomposition) -> BTreeMap<i32, usize> {
    let mut h = BTreeMap::new();
    for q in &c.cubes {
        *h.entry(q.level).or_default() += 1;
    }
    h
}
