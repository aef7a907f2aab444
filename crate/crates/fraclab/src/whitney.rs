//! Whitney decompositions, the kappa-refined family and disjoint cube families.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{AxisBox, Domain, DyadicCube, Point};

const STAR: f64 = 9.0 / 8.0;

#[derive(Clone, Debug)]
pub struct WhitneyFamily {
    cubes: Vec<DyadicCube>,
    dists: Vec<f64>,
    unresolved: Vec<DyadicCube>,
    domain: Domain,
    kappa: f64,
    max_level: i32,
    top_level: i32,
    by_level: BTreeMap<i32, Vec<usize>>,
    lookup: HashMap<DyadicCube, usize>,
}

#[derive(Serialize)]
struct CubeRecord<'a> {
    level: i32,
    index: &'a [i64],
    dist: f64,
    kappa_ok: bool,
}

impl WhitneyFamily {
    fn assemble(
        cubes: Vec<DyadicCube>,
        unresolved: Vec<DyadicCube>,
        domain: Domain,
        kappa: f64,
        max_level: i32,
        top_level: i32,
    ) -> Self {
        let dists = cubes.iter().map(|q| domain.dist_to_cube(q)).collect();
        let mut by_level: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, q) in cubes.iter().enumerate() {
            by_level.entry(q.level).or_default().push(i);
        }
        let mut lookup = HashMap::with_capacity(cubes.len());
        for (i, q) in cubes.iter().enumerate() {
            lookup.entry(*q).or_insert(i);
        }
        Self { cubes, dists, unresolved, domain, kappa, max_level, top_level, by_level, lookup }
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    /// inf of the boundary distance over each cube.
    pub fn dists(&self) -> &[f64] {
        &self.dists
    }

    pub fn unresolved(&self) -> &[DyadicCube] {
        &self.unresolved
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn max_level(&self) -> i32 {
        self.max_level
    }

    pub fn top_level(&self) -> i32 {
        self.top_level
    }

    pub fn by_level(&self) -> &BTreeMap<i32, Vec<usize>> {
        &self.by_level
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Measure of the unresolved boundary layer.
    pub fn unresolved_measure(&self) -> f64 {
        self.unresolved.iter().map(|q| q.volume()).sum()
    }

    /// Index of the accepted cube containing `x`, or of the accepted cube
    /// with the nearest center when `x` lies in the unresolved layer.
    pub fn nearest_cube(&self, x: &Point) -> Option<usize> {
        if let Some(i) = self.locate(x) {
            return Some(i);
        }
        (0..self.cubes.len()).min_by(|&a, &b| {
            let da = self.cubes[a].center().dist(x);
            let db = self.cubes[b].center().dist(x);
            da.total_cmp(&db).then(a.cmp(&b))
        })
    }

    /// Accepted cube whose closed box contains `x` (lowest index wins).
    pub fn locate(&self, x: &Point) -> Option<usize> {
        let mut best = None;
        for &level in self.by_level.keys() {
            let s = 2f64.powi(level);
            let mut k = [0i64; 3];
            for i in 0..self.domain.dim() {
                k[i] = (x.get(i) * s).floor() as i64;
            }
            let q = DyadicCube::new(level, &k[..self.domain.dim()]);
            if let Some(&i) = self.lookup.get(&q) {
                best = Some(best.map_or(i, |b: usize| b.min(i)));
            }
        }
        best
    }

    /// JSON lines `{level, index, dist, kappa_ok}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (q, &d) in self.cubes.iter().zip(&self.dists) {
            let rec = CubeRecord {
                level: q.level,
                index: &q.index[..q.dim],
                dist: d,
                kappa_ok: kappa_star_inside(&self.domain, q, self.kappa),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Closed box kappa*(9/8)Q lies in the domain.
pub fn kappa_star_inside(d: &Domain, q: &DyadicCube, kappa: f64) -> bool {
    d.dist_box(&q.dilate(kappa * STAR)) > 0.0
}

/// Closed box kappa*Q lies in the domain.
pub fn kappa_inside(d: &Domain, q: &DyadicCube, kappa: f64) -> bool {
    d.dist_box(&q.dilate(kappa)) > 0.0
}

/// Coarsest dyadic level whose grid is aligned with the window.
pub fn window_level(w: &AxisBox) -> Result<i32> {
    for j in -16..=40 {
        let s = 2f64.powi(j);
        let aligned = (0..w.dim).all(|i| {
            let (a, b) = (w.lo[i] * s, w.hi[i] * s);
            (a - a.round()).abs() < 1e-9 && (b - b.round()).abs() < 1e-9
        });
        if aligned {
            return Ok(j);
        }
    }
    Err(Error::Window("window corners are not dyadic".into()))
}

/// Top-down dyadic Whitney decomposition with the convention
/// diam Q <= dist(Q, boundary) <= 4 diam Q.
pub fn whitney_decompose(d: &Domain, max_level: i32) -> Result<WhitneyFamily> {
    let w = d.window();
    let top = window_level(w)?;
    if max_level < top {
        return Err(invalid(format!("max_level {max_level} is coarser than the window level {top}")));
    }
    let n = d.dim();
    let s = 2f64.powi(top);
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for i in 0..n {
        lo[i] = (w.lo[i] * s).round() as i64;
        hi[i] = (w.hi[i] * s).round() as i64;
    }
    let mut frontier = Vec::new();
    let mut k = lo;
    'outer: loop {
        frontier.push(DyadicCube::new(top, &k[..n]));
        for i in 0..n {
            k[i] += 1;
            if k[i] < hi[i] {
                continue 'outer;
            }
            k[i] = lo[i];
        }
        break;
    }
    let mut accepted = Vec::new();
    let mut unresolved = Vec::new();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for q in frontier {
            let b = q.to_box();
            if !d.box_meets(&b) {
                continue;
            }
            let dist = d.dist_box(&b);
            if dist >= q.diam() {
                accepted.push(q);
            } else if q.level >= max_level {
                unresolved.push(q);
            } else {
                next.extend(q.children());
            }
        }
        frontier = next;
    }
    accepted.sort();
    unresolved.sort();
    Ok(WhitneyFamily::assemble(accepted, unresolved, d.clone(), 1.0, max_level, top))
}

/// Splits every cube into its 2^{sn} dyadic descendants with the minimal s
/// for which all of them satisfy kappa*(9/8)C inside the domain.
pub fn refine_kappa(w: &WhitneyFamily, kappa: f64) -> Result<WhitneyFamily> {
    if !(kappa >= 1.0) {
        return Err(invalid("kappa must be at least 1"));
    }
    let d = w.domain();
    let mut out = Vec::new();
    let mut deepest = w.max_level;
    for q in w.cubes() {
        let s = refinement_depth(d, q, kappa);
        let mut gen = vec![*q];
        for _ in 0..s {
            gen = gen.iter().flat_map(|c| c.children()).collect();
        }
        deepest = deepest.max(q.level + s);
        out.extend(gen);
    }
    out.sort();
    Ok(WhitneyFamily::assemble(
        out,
        w.unresolved.clone(),
        d.clone(),
        kappa,
        deepest,
        w.top_level,
    ))
}

/// Minimal s such that every level-(j+s) descendant C of q has kappa C* inside.
pub fn refinement_depth(d: &Domain, q: &DyadicCube, kappa: f64) -> i32 {
    let mut s = 0;
    loop {
        let mut gen = vec![*q];
        for _ in 0..s {
            gen = gen.iter().flat_map(|c| c.children()).collect();
        }
        if gen.iter().all(|c| kappa_star_inside(d, c, kappa)) {
            return s;
        }
        s += 1;
        assert!(s < 24, "refinement did not terminate");
    }
}

/// Smallest kappa with Q inside B(x, tau dist(x)) for all x in Q and every
/// Whitney-type cube: the worst corner is at distance sqrt(n) l from x while
/// dist(x) >= (kappa - 1) l / 2, hence kappa = 1 + 2 sqrt(n) / tau.
pub fn kappa_for_tau(n: usize, tau: f64) -> f64 {
    1.0 + 2.0 * (n as f64).sqrt() / tau
}

/// Greedy pairwise-disjoint families among the kappa-admissible candidates.
/// Returns the global greedy family (descending score, ties by level and index)
/// followed by one family per level.
pub fn greedy_disjoint_families(
    candidates: &[DyadicCube],
    d: &Domain,
    kappa: f64,
    score: &dyn Fn(&DyadicCube) -> f64,
) -> Vec<Vec<DyadicCube>> {
    let mut scored: Vec<(f64, DyadicCube)> = candidates
        .iter()
        .filter(|q| kappa_inside(d, q, kappa))
        .map(|q| (score(q), *q))
        .collect();
    if scored.is_empty() {
        return Vec::new();
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    let mut families = vec![greedy_pick(&scored)];
    let mut levels: BTreeMap<i32, Vec<(f64, DyadicCube)>> = BTreeMap::new();
    for e in &scored {
        levels.entry(e.1.level).or_default().push(*e);
    }
    if levels.len() > 1 {
        for (_, group) in levels {
            families.push(greedy_pick(&group));
        }
    }
    families
}

fn greedy_pick(sorted: &[(f64, DyadicCube)]) -> Vec<DyadicCube> {
    let mut chosen: HashSet<DyadicCube> = HashSet::new();
    let mut ancestors: HashSet<DyadicCube> = HashSet::new();
    let min_level = sorted.iter().map(|e| e.1.level).min().unwrap_or(0);
    let mut out = Vec::new();
    for &(_, q) in sorted {
        if ancestors.contains(&q) || chosen.contains(&q) {
            continue;
        }
        if (min_level..q.level).any(|l| chosen.contains(&q.ancestor(l))) {
            continue;
        }
        chosen.insert(q);
        for l in min_level..q.level {
            ancestors.insert(q.ancestor(l));
        }
        out.push(q);
    }
    out
}

/// Adjacency (touching closures) between accepted cubes.
#[derive(Clone, Debug)]
pub struct Adjacency {
    pub neighbors: Vec<Vec<usize>>,
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Adjacency {
    pub fn build(w: &WhitneyFamily) -> Self {
        let cubes = w.cubes();
        let lookup: HashMap<DyadicCube, usize> =
            cubes.iter().enumerate().map(|(i, q)| (*q, i)).collect();
        let levels: Vec<i32> = w.by_level().keys().copied().collect();
        let mut neighbors = vec![Vec::new(); cubes.len()];
        for (a, q) in cubes.iter().enumerate() {
            let n = q.dim;
            // only neighbours at coarser or equal levels; symmetry adds the rest
            for &lv in levels.iter().filter(|&&l| l <= q.level) {
                let f = 1i64 << (q.level - lv);
                let mut ranges = [(0i64, 0i64); 3];
                for i in 0..n {
                    let k = q.index[i];
                    let lo = div_ceil(k, f) - 1;
                    let hi = (k + 1).div_euclid(f);
                    ranges[i] = (lo, hi);
                }
                let mut m = [ranges[0].0, ranges[1].0, ranges[2].0];
                'scan: loop {
                    let cand = DyadicCube::new(lv, &m[..n]);
                    if let Some(&b) = lookup.get(&cand) {
                        if b != a && q.touches(&cand) {
                            neighbors[a].push(b);
                            neighbors[b].push(a);
                        }
                    }
                    for i in 0..n {
                        m[i] += 1;
                        if m[i] <= ranges[i].1 {
                            continue 'scan;
                        }
                        m[i] = ranges[i].0;
                    }
                    break;
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    /// Connected components (as sorted node lists).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.neighbors.len()];
        let mut out = Vec::new();
        for s in 0..self.neighbors.len() {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut i = 0;
            while i < comp.len() {
                for &b in &self.neighbors[comp[i]] {
                    if !seen[b] {
                        seen[b] = true;
                        comp.push(b);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Single-source Dijkstra; `weight(i, j)` is the cost of stepping from i to j.
    /// Equal-cost ties keep the first predecessor found (deterministic order).
    pub fn dijkstra(
        &self,
        source: usize,
        weight: &dyn Fn(usize, usize) -> f64,
    ) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.neighbors.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem { cost: 0.0, node: source });
        while let Some(HeapItem { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &b in &self.neighbors[node] {
                let c = cost + weight(node, b);
                if c < dist[b] {
                    dist[b] = c;
                    prev[b] = Some(node);
                    heap.push(HeapItem { cost: c, node: b });
                }
            }
        }
        (dist, prev)
    }

    pub fn shortest_path(
        &self,
        from: usize,
        to: usize,
        weight: &dyn Fn(usize, usize) -> f64,
    ) -> Option<Vec<usize>> {
        let (dist, prev) = self.dijkstra(from, weight);
        if !dist[to].is_finite() {
            return None;
        }
        let mut path = vec![to];
        let mut cur = to;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_domain;

    #[test]
    fn unit_square_central_cubes() {
        let d = make_domain("unit_square").unwrap();
        let w = whitney_decompose(&d, 6).unwrap();
        let central = DyadicCube::new(1, &[0, 0]);
        assert!(!w.cubes().contains(&central));
        // side-1/4 cubes next to the centre have dist 1/4 < diam
        assert!(!w.cubes().contains(&DyadicCube::new(2, &[1, 1])));
        assert!(w.cubes().contains(&DyadicCube::new(3, &[3, 3])));
        for (q, &dist) in w.cubes().iter().zip(w.dists()) {
            assert!(q.diam() <= dist && dist <= 4.0 * q.diam(), "{q:?} {dist}");
        }
    }

    #[test]
    fn neighbours_have_comparable_sides() {
        let d = make_domain("l_shape").unwrap();
        let w = whitney_decompose(&d, 6).unwrap();
        let g = Adjacency::build(&w);
        for (a, list) in g.neighbors.iter().enumerate() {
            for &b in list {
                let dl = (w.cubes()[a].level - w.cubes()[b].level).abs();
                assert!(dl <= 1);
            }
        }
        // brute-force adjacency agrees
        let cubes = w.cubes();
        for a in 0..cubes.len() {
            let brute: Vec<usize> =
                (0..cubes.len()).filter(|&b| b != a && cubes[a].touches(&cubes[b])).collect();
            assert_eq!(brute, g.neighbors[a]);
        }
        assert_eq!(g.components().len(), 1);
    }

    #[test]
    fn refine_examples() {
        let d = make_domain("unit_square").unwrap();
        let w = whitney_decompose(&d, 5).unwrap();
        for q in w.cubes() {
            assert_eq!(refinement_depth(&d, q, 1.0), 0);
        }
        let r = refine_kappa(&w, 2.0).unwrap();
        assert!(r.cubes().iter().all(|q| kappa_star_inside(&d, q, 2.0)));
        let vol: f64 = r.cubes().iter().map(|q| q.volume()).sum();
        let vol0: f64 = w.cubes().iter().map(|q| q.volume()).sum();
        assert!((vol - vol0).abs() < 1e-12);
    }

    #[test]
    fn greedy_examples() {
        let d = make_domain("unit_square").unwrap();
        let q = DyadicCube::new(3, &[3, 3]);
        let fams = greedy_disjoint_families(&[q], &d, 1.5, &|_| 1.0);
        assert_eq!(fams, vec![vec![q]]);
        let big = DyadicCube::new(2, &[1, 1]);
        let small = DyadicCube::new(3, &[2, 2]);
        let fams = greedy_disjoint_families(&[big, small], &d, 1.0, &|c| c.level as f64);
        assert_eq!(fams[0], vec![small]);
    }
}
