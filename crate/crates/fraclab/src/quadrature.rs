//! Cell-pair quadrature for the singular kernel |x-y|^{-n-s}.
//!
//! Pairs of distinct cells are summed by the midpoint rule. The mass of the
//! kernel inside a single cell is folded into the nearest-neighbour weights:
//! for an affine function the same-cell integral equals
//! `h^{2n} h^{p-n-s} |g|^p S(g)` and the direction average of `S` is
//! `c_{n,p} R_p` with `R_p = int_{[-1,1]^n} prod(1-|z_i|) |z|^{p-n-s} dz`,
//! while the 2n axis neighbours contribute `2 |g|^p h^p sum_i |g_i/g|^p`,
//! whose direction average is `2 n c_{n,p}`. Boosting those weights by
//! `R_p / 2n` keeps the sum a symmetric nonnegative pair sum (every discrete
//! inequality used by the checkers survives) and makes it exact for affine
//! functions when p = 2.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::geometry::Domain;
use crate::lattice::{GridFunction, Lattice};

/// Compensated (Neumaier) summation in iteration order.
pub fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[inline]
pub fn pow_abs(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else if a == 0.0 {
        0.0
    } else {
        a.powf(p)
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// `R_p = int_{[-1,1]^n} prod(1-|z_i|) |z|^{p-n-s} dz`, evaluated on the n
/// pyramids {z_1 = max} of the positive orthant, z = t (1, s'), where the
/// radial integral is a polynomial moment.
pub fn same_cell_moment(n: usize, delta: f64, p: f64) -> f64 {
    let alpha = p - n as f64 - delta * p;
    let (x, w) = gauss_legendre(40);
    let radial = |s: &[f64]| -> f64 {
        // (1 - t) prod (1 - s_i t) as coefficients in t
        let mut poly = vec![1.0, -1.0];
        for &si in s {
            let mut next = vec![0.0; poly.len() + 1];
            for (k, &c) in poly.iter().enumerate() {
                next[k] += c;
                next[k + 1] -= c * si;
            }
            poly = next;
        }
        let moments: f64 = poly
            .iter()
            .enumerate()
            .map(|(k, &c)| c / (k as f64 + alpha + n as f64))
            .sum();
        let r2: f64 = 1.0 + s.iter().map(|v| v * v).sum::<f64>();
        r2.powf(alpha / 2.0) * moments
    };
    let inner = match n {
        2 => (0..x.len()).map(|i| w[i] * radial(&[x[i]])).sum::<f64>(),
        3 => {
            let mut acc = 0.0;
            for i in 0..x.len() {
                for j in 0..x.len() {
                    acc += w[i] * w[j] * radial(&[x[i], x[j]]);
                }
            }
            acc
        }
        _ => panic!("dimension {n} not supported"),
    };
    (1u32 << n) as f64 * n as f64 * inner
}

/// Relative boost of the axis-neighbour weights.
pub fn near_field_gain(n: usize, delta: f64, p: f64) -> f64 {
    same_cell_moment(n, delta, p) / (2 * n) as f64
}

/// Pair weights `h^{2n} |h d|^{-n-s}` over all lattice offsets, with the
/// near-field boost on the 2n axis neighbours.
#[derive(Clone, Debug)]
pub struct KernelTable {
    extent: [usize; 3],
    half: [i64; 3],
    weights: Vec<f64>,
}

impl KernelTable {
    pub fn new(lattice: &Lattice, delta: f64, p: f64) -> Self {
        let n = lattice.dim;
        let s = delta * p;
        let gain = near_field_gain(n, delta, p);
        let mut extent = [1usize; 3];
        let mut half = [0i64; 3];
        for i in 0..n {
            extent[i] = 2 * lattice.shape[i] - 1;
            half[i] = lattice.shape[i] as i64 - 1;
        }
        let h = lattice.h;
        let scale = h.powi(2 * n as i32) * h.powf(-(n as f64) - s);
        let mut weights = vec![0.0; extent.iter().product()];
        for k in 0..extent[2] {
            for j in 0..extent[1] {
                for i in 0..extent[0] {
                    let d = [i as i64 - half[0], j as i64 - half[1], k as i64 - half[2]];
                    let r2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64;
                    if r2 == 0.0 {
                        continue;
                    }
                    let mut wgt = scale * r2.powf(-0.5 * (n as f64 + s));
                    if r2 == 1.0 {
                        wgt *= 1.0 + gain;
                    }
                    weights[i + extent[0] * (j + extent[1] * k)] = wgt;
                }
            }
        }
        Self { extent, half, weights }
    }

    #[inline]
    pub fn at(&self, d: [i64; 3]) -> f64 {
        let i = (d[0] + self.half[0]) as usize;
        let j = (d[1] + self.half[1]) as usize;
        let k = (d[2] + self.half[2]) as usize;
        self.weights[i + self.extent[0] * (j + self.extent[1] * k)]
    }
}

/// Zero-padded n-dimensional FFT convolution with a fixed kernel table.
struct Convolver {
    shape: [usize; 3],
    pad: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    spectrum: Vec<Complex64>,
}

impl Convolver {
    fn new(lattice: &Lattice, kernel: &KernelTable) -> Self {
        let mut planner = FftPlanner::new();
        let mut pad = [1usize; 3];
        for i in 0..lattice.dim {
            pad[i] = 2 * lattice.shape[i];
        }
        let forward = [0, 1, 2].map(|i| planner.plan_fft_forward(pad[i]));
        let inverse = [0, 1, 2].map(|i| planner.plan_fft_inverse(pad[i]));
        let mut spectrum = vec![Complex64::new(0.0, 0.0); pad.iter().product()];
        let sh = lattice.shape;
        let range = |i: usize| -(sh[i] as i64 - 1)..=(sh[i] as i64 - 1);
        for dz in if lattice.dim == 3 { range(2) } else { 0..=0 } {
            for dy in range(1) {
                for dx in range(0) {
                    let w = kernel.at([dx, dy, dz]);
                    let ix = dx.rem_euclid(pad[0] as i64) as usize;
                    let iy = dy.rem_euclid(pad[1] as i64) as usize;
                    let iz = dz.rem_euclid(pad[2] as i64) as usize;
                    spectrum[ix + pad[0] * (iy + pad[1] * iz)] = Complex64::new(w, 0.0);
                }
            }
        }
        let mut conv = Self { shape: sh, pad, forward, inverse, spectrum: Vec::new() };
        conv.transform(&mut spectrum, false);
        conv.spectrum = spectrum;
        conv
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let p = self.pad;
        for axis in 0..3 {
            if p[axis] == 1 {
                continue;
            }
            let plan = if inverse { &self.inverse[axis] } else { &self.forward[axis] };
            let stride = match axis {
                0 => 1,
                1 => p[0],
                _ => p[0] * p[1],
            };
            let len = p[axis];
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            let total: usize = p.iter().product();
            for base in 0..total {
                // visit each line once: its first element has axis coordinate 0
                if (base / stride) % len != 0 {
                    continue;
                }
                for t in 0..len {
                    buf[t] = data[base + t * stride];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for t in 0..len {
                    data[base + t * stride] = buf[t];
                }
            }
        }
    }

    /// (W * v)(x) for every lattice cell x.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let p = self.pad;
        let sh = self.shape;
        let mut data = vec![Complex64::new(0.0, 0.0); p.iter().product()];
        for k in 0..sh[2] {
            for j in 0..sh[1] {
                for i in 0..sh[0] {
                    data[i + p[0] * (j + p[1] * k)] =
                        Complex64::new(v[i + sh[0] * (j + sh[1] * k)], 0.0);
                }
            }
        }
        self.transform(&mut data, false);
        for (a, b) in data.iter_mut().zip(&self.spectrum) {
            *a *= b;
        }
        self.transform(&mut data, true);
        let norm = 1.0 / data.len() as f64;
        let mut out = vec![0.0; v.len()];
        for k in 0..sh[2] {
            for j in 0..sh[1] {
                for i in 0..sh[0] {
                    out[i + sh[0] * (j + sh[1] * k)] = data[i + p[0] * (j + p[1] * k)].re * norm;
                }
            }
        }
        out
    }
}

/// Full-seminorm operator on a fixed lattice and domain:
/// `E(u) = sum_{x != y} |u_x - u_y|^p W(x - y) + 2 sum_x |u_x|^p T(x) h^n`,
/// where the second term integrates the kernel over the part of the domain
/// outside the window (u is extended by zero there).
pub struct PairOperator {
    lattice: Lattice,
    p: f64,
    s: f64,
    active: Vec<usize>,
    coords: Vec<[i64; 3]>,
    mask: Vec<bool>,
    kernel: KernelTable,
    conv: Convolver,
    mass: Vec<f64>,
    tail: Option<Vec<f64>>,
}

/// Problems at least this large use the FFT path when p = 2.
pub const FFT_THRESHOLD: usize = 2048;

impl PairOperator {
    pub fn new(d: &Domain, lattice: &Lattice, mask: &[bool], delta: f64, p: f64) -> Self {
        let kernel = KernelTable::new(lattice, delta, p);
        let conv = Convolver::new(lattice, &kernel);
        let active: Vec<usize> = (0..lattice.len()).filter(|&i| mask[i]).collect();
        let coords = active
            .iter()
            .map(|&i| {
                let c = lattice.coords(i);
                [c[0] as i64, c[1] as i64, c[2] as i64]
            })
            .collect();
        let ind: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let full = conv.apply(&ind);
        let mass = full.iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
        let s = delta * p;
        let tail = (!d.bounded()).then(|| exterior_tail(d, lattice, mask, s));
        Self { lattice: *lattice, p, s, active, coords, mask: mask.to_vec(), kernel, conv, mass, tail }
    }

    pub fn for_function(d: &Domain, u: &GridFunction, delta: f64, p: f64) -> Self {
        Self::new(d, u.lattice(), u.mask(), delta, p)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    /// Sum of pair weights from x to every other active cell.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `2 T(x) h^n` per cell for unbounded domains.
    pub fn tail(&self) -> Option<&[f64]> {
        self.tail.as_deref()
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        if self.p == 2.0 && self.active.len() >= FFT_THRESHOLD {
            self.energy_fft(u)
        } else {
            self.energy_direct(u)
        }
    }

    fn tail_energy(&self, u: &[f64]) -> f64 {
        match &self.tail {
            Some(t) => neumaier(self.active.iter().map(|&i| pow_abs(u[i], self.p) * t[i])),
            None => 0.0,
        }
    }

    /// Pair sum in fixed order: rows by x, then y ascending.
    pub fn energy_direct(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let support: Vec<usize> =
            (0..self.active.len()).filter(|&a| u[self.active[a]] != 0.0).collect();
        let rows: Vec<f64> = (0..self.active.len())
            .into_par_iter()
            .map(|a| {
                let ux = u[self.active[a]];
                let cx = self.coords[a];
                let row = |b: usize| {
                    let cy = self.coords[b];
                    let w = self.kernel.at([cx[0] - cy[0], cx[1] - cy[1], cx[2] - cy[2]]);
                    pow_abs(ux - u[self.active[b]], p) * w
                };
                if ux == 0.0 {
                    neumaier(support.iter().map(|&b| row(b)))
                } else {
                    neumaier((0..self.active.len()).map(row))
                }
            })
            .collect();
        neumaier(rows) + self.tail_energy(u)
    }

    /// p = 2 only: `2 sum c_x^2 M_x - 2 sum c_x (W*c)_x` with c = u - mean.
    pub fn energy_fft(&self, u: &[f64]) -> f64 {
        assert_eq!(self.p, 2.0, "the spectral path needs p = 2");
        let mean = neumaier(self.active.iter().map(|&i| u[i])) / self.active.len().max(1) as f64;
        let c: Vec<f64> = (0..u.len()).map(|i| if self.mask[i] { u[i] - mean } else { 0.0 }).collect();
        let wc = self.conv.apply(&c);
        let pairs = neumaier(
            self.active.iter().map(|&i| 2.0 * c[i] * (c[i] * self.mass[i] - wc[i])),
        );
        pairs.max(0.0) + self.tail_energy(u)
    }

    /// Gradient of the energy (a subgradient at kinks when p = 1).
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        let p = self.p;
        if p == 2.0 {
            let wu = self.conv.apply(&self.masked(u));
            for &i in &self.active {
                g[i] = 4.0 * (self.mass[i] * u[i] - wu[i]);
            }
        } else {
            let dphi = |t: f64| {
                if t == 0.0 {
                    0.0
                } else {
                    p * t.abs().powf(p - 1.0) * t.signum()
                }
            };
            let vals: Vec<f64> = (0..self.active.len())
                .into_par_iter()
                .map(|a| {
                    let ux = u[self.active[a]];
                    let cx = self.coords[a];
                    2.0 * neumaier((0..self.active.len()).map(|b| {
                        let cy = self.coords[b];
                        let w = self.kernel.at([cx[0] - cy[0], cx[1] - cy[1], cx[2] - cy[2]]);
                        dphi(ux - u[self.active[b]]) * w
                    }))
                })
                .collect();
            for (a, &i) in self.active.iter().enumerate() {
                g[i] = vals[a];
            }
        }
        if let Some(t) = &self.tail {
            for &i in &self.active {
                let v = u[i];
                if v != 0.0 {
                    g[i] += p * v.abs().powf(p - 1.0) * v.signum() * t[i];
                }
            }
        }
        g
    }

    /// Diagonal of the p = 2 Hessian.
    pub fn hessian_diagonal(&self) -> Vec<f64> {
        let mut dg = vec![0.0; self.mass.len()];
        for &i in &self.active {
            dg[i] = 4.0 * self.mass[i] + self.tail.as_ref().map_or(0.0, |t| 2.0 * t[i]);
        }
        dg
    }

    fn masked(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect()
    }

    pub fn delta_p(&self) -> f64 {
        self.s
    }
}

/// `2 h^n T(x)` with `T(x) = int_{G outside window} |x-y|^{-n-s} dy`,
/// by angular quadrature of the radial integral
/// `int_{rho_W}^{rho_G} r^{-1-s} dr = (rho_W^{-s} - rho_G^{-s}) / s`.
fn exterior_tail(d: &Domain, lattice: &Lattice, mask: &[bool], s: f64) -> Vec<f64> {
    let dirs = sphere_directions(lattice.dim);
    let window = lattice.window();
    let hn = lattice.cell_volume();
    (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            if !mask[i] {
                return 0.0;
            }
            let x = lattice.center(i).raw();
            let t = neumaier(dirs.iter().map(|(dir, w)| {
                let rw = window.exit_distance(&x, dir);
                let rg = d.exterior_exit(&x, dir, rw);
                let far = if rg.is_finite() { rg.powf(-s) } else { 0.0 };
                w * (rw.powf(-s) - far) / s
            }));
            2.0 * hn * t
        })
        .collect()
}

fn sphere_directions(n: usize) -> Vec<([f64; 3], f64)> {
    if n == 2 {
        let m = 1440;
        (0..m)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                ([a.cos(), a.sin(), 0.0], 2.0 * PI / m as f64)
            })
            .collect()
    } else {
        let m = 2048;
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..m)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / m as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64;
                ([r * a.cos(), r * a.sin(), z], 4.0 * PI / m as f64)
            })
            .collect()
    }
}

/// Offsets sorted by length, up to `radius` cells.
fn offsets_within(n: usize, radius: f64) -> Vec<([i64; 3], f64)> {
    let r = radius.ceil() as i64;
    let rz = if n == 3 { r } else { 0 };
    let mut out = Vec::new();
    for k in -rz..=rz {
        for j in -r..=r {
            for i in -r..=r {
                let len = ((i * i + j * j + k * k) as f64).sqrt();
                if len > 0.0 && len <= radius {
                    out.push(([i, j, k], len));
                }
            }
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// tau-restricted pair sum: y ranges over cells with |x-y| < tau dist(x).
pub fn energy_tau(d: &Domain, u: &GridFunction, delta: f64, p: f64, tau: f64) -> f64 {
    let lat = u.lattice();
    let kernel = KernelTable::new(lat, delta, p);
    let active = u.inside_cells();
    let dist: Vec<f64> = active.iter().map(|&i| d.dist_boundary(&lat.center(i))).collect();
    let max_r = dist.iter().fold(0.0f64, |a, &b| a.max(b)) * tau / lat.h;
    let offsets = offsets_within(lat.dim, max_r);
    let vals = u.values();
    let mask = u.mask();
    let sh = lat.shape;
    let rows: Vec<f64> = (0..active.len())
        .into_par_iter()
        .map(|a| {
            let x = active[a];
            let ux = vals[x];
            let c = lat.coords(x);
            let rho = tau * dist[a] / lat.h;
            let mut terms = Vec::new();
            for (off, len) in &offsets {
                if *len >= rho {
                    break;
                }
                let mut y = [0usize; 3];
                let mut ok = true;
                for i in 0..3 {
                    let v = c[i] as i64 + off[i];
                    if v < 0 || v >= sh[i] as i64 {
                        ok = false;
                        break;
                    }
                    y[i] = v as usize;
                }
                if !ok {
                    continue;
                }
                let yi = lat.index(y);
                if mask[yi] {
                    terms.push(pow_abs(ux - vals[yi], p) * kernel.at(*off));
                }
            }
            neumaier(terms)
        })
        .collect();
    neumaier(rows)
}

/// Analytic bound on the same-cell contribution that the midpoint rule
/// cannot see: Lip^p |A| int_{|z| < h sqrt(n)} |z|^{p-n-s} dz.
pub fn same_cell_band(u: &GridFunction, delta: f64, p: f64) -> f64 {
    let lat = u.lattice();
    let n = lat.dim;
    let vals = u.values();
    let mask = u.mask();
    let mut lip = 0.0f64;
    for x in u.inside_cells() {
        let c = lat.coords(x);
        for axis in 0..n {
            if c[axis] + 1 < lat.shape[axis] {
                let mut cy = c;
                cy[axis] += 1;
                let y = lat.index(cy);
                if mask[y] {
                    lip = lip.max((vals[x] - vals[y]).abs() / lat.h);
                }
            }
        }
    }
    let s = delta * p;
    let sphere = if n == 2 { 2.0 * PI } else { 4.0 * PI };
    let radial = (lat.h * (n as f64).sqrt()).powf(p - s) / (p - s);
    lip.powf(p) * u.inside_measure() * sphere * radial
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_domain;

    #[test]
    fn same_cell_moment_planar() {
        // closed form for n = 2, delta = 1/2, p = 2
        let exact = 8.0 * (0.5 * 1f64.asinh() - (2f64.sqrt() - 1.0) / 6.0);
        assert!((same_cell_moment(2, 0.5, 2.0) - exact).abs() < 1e-12);
        assert!((same_cell_moment(2, 0.3, 2.0) - 1.766911362425289).abs() < 1e-9);
        assert!((same_cell_moment(2, 0.75, 3.0) - 4.55638370337791).abs() < 1e-9);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier(v), 2.0);
    }

    #[test]
    fn fft_matches_direct() {
        for spec in ["unit_square", "ball(1)", "cone(pi/4,2)"] {
            let d = make_domain(spec).unwrap();
            let lat = Lattice::new(d.window(), 24).unwrap();
            let u = GridFunction::from_fn(&d, lat, |x| (3.0 * x.get(0)).sin() + x.get(1).powi(2))
                .unwrap();
            let op = PairOperator::for_function(&d, &u, 0.4, 2.0);
            let a = op.energy_direct(u.values());
            let b = op.energy_fft(u.values());
            assert!((a - b).abs() <= 1e-10 * a, "{spec}: {a} vs {b}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 8).unwrap();
        let u = GridFunction::from_fn(&d, lat, |x| x.get(0) * x.get(1) + 0.3 * x.get(0)).unwrap();
        for p in [2.0, 1.5] {
            let op = PairOperator::for_function(&d, &u, 0.5, p);
            let g = op.gradient(u.values());
            for i in [0, 9, 27, 63] {
                let mut up = u.values().to_vec();
                let mut dn = up.clone();
                up[i] += 1e-6;
                dn[i] -= 1e-6;
                let fd = (op.energy_direct(&up) - op.energy_direct(&dn)) / 2e-6;
                assert!((fd - g[i]).abs() < 1e-5 * (1.0 + g[i].abs()), "p={p} i={i}");
            }
        }
    }

    #[test]
    fn tail_vanishes_for_bounded_domains() {
        let d = make_domain("unit_square").unwrap();
        let lat = Lattice::new(d.window(), 4).unwrap();
        let op = PairOperator::new(&d, &lat, &vec![true; 16], 0.5, 2.0);
        assert!(op.tail().is_none());
    }
}
