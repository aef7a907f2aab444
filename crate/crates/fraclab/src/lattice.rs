//! Uniform cell lattices over a window and grid functions on their cell centers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{AxisBox, Domain, Point};

const MAGIC: &[u8; 8] = b"FRACGRID";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub dim: usize,
    pub lo: [f64; 3],
    pub h: f64,
    pub shape: [usize; 3],
}

impl Lattice {
    /// `cells` per axis over a cubical window.
    pub fn new(window: &AxisBox, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(invalid("lattice needs at least one cell per axis"));
        }
        let side = window.side(0);
        if (1..window.dim).any(|i| (window.side(i) - side).abs() > 1e-12 * side) {
            return Err(Error::Window("lattice windows must be cubes".into()));
        }
        let mut shape = [1; 3];
        shape[..window.dim].fill(cells);
        Ok(Self { dim: window.dim, lo: window.lo, h: side / cells as f64, shape })
    }

    /// Spacing `h`; the window side must be an integer multiple of it.
    pub fn with_spacing(window: &AxisBox, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(invalid("lattice spacing must be positive"));
        }
        let m = window.side(0) / h;
        if (m - m.round()).abs() > 1e-9 * m.max(1.0) {
            return Err(Error::Window(format!("window side is not a multiple of h = {h}")));
        }
        Self::new(window, m.round() as usize)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let (m0, m1) = (self.shape[0], self.shape[1]);
        [idx % m0, (idx / m0) % m1, idx / (m0 * m1)]
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.shape[0] * (c[1] + self.shape[1] * c[2])
    }

    pub fn center(&self, idx: usize) -> Point {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for i in 0..self.dim {
            x[i] = self.lo[i] + (c[i] as f64 + 0.5) * self.h;
        }
        Point::from_raw(x, self.dim)
    }

    pub fn cell_box(&self, idx: usize) -> AxisBox {
        let c = self.coords(idx);
        let mut b = AxisBox { lo: [0.0; 3], hi: [0.0; 3], dim: self.dim };
        for i in 0..self.dim {
            b.lo[i] = self.lo[i] + c[i] as f64 * self.h;
            b.hi[i] = b.lo[i] + self.h;
        }
        b
    }

    pub fn window(&self) -> AxisBox {
        let mut b = AxisBox { lo: self.lo, hi: self.lo, dim: self.dim };
        for i in 0..self.dim {
            b.hi[i] = self.lo[i] + self.shape[i] as f64 * self.h;
        }
        b
    }

    /// Cell containing `x` (half-open cells).
    pub fn locate(&self, x: &Point) -> Option<usize> {
        let mut c = [0usize; 3];
        for i in 0..self.dim {
            let t = ((x.get(i) - self.lo[i]) / self.h).floor();
            if t < 0.0 || t >= self.shape[i] as f64 {
                return None;
            }
            c[i] = t as usize;
        }
        Some(self.index(c))
    }

    /// Cells overlapping a box, with overlap volumes.
    pub fn overlap_weights(&self, b: &AxisBox) -> Vec<(usize, f64)> {
        let mut ranges = [(0usize, 1usize); 3];
        for i in 0..self.dim {
            let a = ((b.lo[i] - self.lo[i]) / self.h).floor().max(0.0) as usize;
            let z = ((b.hi[i] - self.lo[i]) / self.h).ceil().min(self.shape[i] as f64);
            if z <= a as f64 {
                return Vec::new();
            }
            ranges[i] = (a, z as usize);
        }
        let mut out = Vec::new();
        for k in ranges[2].0..ranges[2].1 {
            for j in ranges[1].0..ranges[1].1 {
                for i in ranges[0].0..ranges[0].1 {
                    let idx = self.index([i, j, k]);
                    let w = self.cell_box(idx).overlap(b);
                    if w > 0.0 {
                        out.push((idx, w));
                    }
                }
            }
        }
        out
    }
}

/// Values on the inside cells of a lattice; outside cells carry zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    lattice: Lattice,
    mask: Vec<bool>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dim: usize,
    shape: Vec<usize>,
    h: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    inside_cells: usize,
    support_cells: usize,
    domain: Option<serde_json::Value>,
}

impl GridFunction {
    /// Inside mask of a domain on a lattice.
    pub fn domain_mask(d: &Domain, lattice: &Lattice) -> Vec<bool> {
        (0..lattice.len()).map(|i| d.inside(&lattice.center(i))).collect()
    }

    pub fn zeros(d: &Domain, lattice: Lattice) -> Self {
        let mask = Self::domain_mask(d, &lattice);
        Self { values: vec![0.0; lattice.len()], mask, lattice }
    }

    pub fn from_fn(d: &Domain, lattice: Lattice, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let mask = Self::domain_mask(d, &lattice);
        let values: Vec<f64> = (0..lattice.len())
            .map(|i| if mask[i] { f(&lattice.center(i)) } else { 0.0 })
            .collect();
        Self::from_parts(lattice, mask, values)
    }

    pub fn from_values(d: &Domain, lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        let mask = Self::domain_mask(d, &lattice);
        Self::from_parts(lattice, mask, values)
    }

    pub fn from_parts(lattice: Lattice, mask: Vec<bool>, values: Vec<f64>) -> Result<Self> {
        if mask.len() != lattice.len() || values.len() != lattice.len() {
            return Err(invalid("value count does not match the lattice"));
        }
        for (i, (&m, &v)) in mask.iter().zip(&values).enumerate() {
            if !v.is_finite() {
                return Err(invalid(format!("non-finite value at cell {i}")));
            }
            if !m && v != 0.0 {
                return Err(invalid(format!("cell {i} lies outside the domain but carries a value")));
            }
        }
        Ok(Self { lattice, mask, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn inside_cells(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] != 0.0).collect()
    }

    pub fn support_mask(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0.0).collect()
    }

    pub fn inside_measure(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 * self.lattice.cell_volume()
    }

    /// Pointwise map on inside cells.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { f(v) } else { 0.0 })
            .collect();
        Self::from_parts(self.lattice, self.mask.clone(), values)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        self.map(|v| lambda * v).expect("scaling keeps values finite")
    }

    /// Same mask, new values (zero forced outside).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.lattice, self.mask.clone(), values)
    }

    /// Mean over inside cells.
    pub fn mean(&self) -> f64 {
        let cells = self.inside_cells();
        if cells.is_empty() {
            return 0.0;
        }
        crate::quadrature::neumaier(cells.iter().map(|&i| self.values[i])) / cells.len() as f64
    }

    /// Integral of |u|^q over the inside cells.
    pub fn lq_power(&self, q: f64) -> f64 {
        let hn = self.lattice.cell_volume();
        crate::quadrature::neumaier(
            self.values.iter().map(|&v| crate::quadrature::pow_abs(v, q) * hn),
        )
    }

    /// Exact integral over a box of the piecewise-constant extension.
    pub fn box_integral(&self, b: &AxisBox) -> f64 {
        crate::quadrature::neumaier(
            self.lattice.overlap_weights(b).into_iter().map(|(i, w)| w * self.values[i]),
        )
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&(self.lattice.dim as u32).to_le_bytes())?;
        for s in self.lattice.shape {
            f.write_all(&(s as u64).to_le_bytes())?;
        }
        f.write_all(&self.lattice.h.to_le_bytes())?;
        for v in self.lattice.lo {
            f.write_all(&v.to_le_bytes())?;
        }
        for &m in &self.mask {
            f.write_all(&[m as u8])?;
        }
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut f = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(invalid("not a grid function file"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        f.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        let mut shape = [0usize; 3];
        for s in &mut shape {
            f.read_exact(&mut b8)?;
            *s = u64::from_le_bytes(b8) as usize;
        }
        f.read_exact(&mut b8)?;
        let h = f64::from_le_bytes(b8);
        let mut lo = [0.0; 3];
        for v in &mut lo {
            f.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        let lattice = Lattice { dim, lo, h, shape };
        let mut mask_bytes = vec![0u8; lattice.len()];
        f.read_exact(&mut mask_bytes)?;
        let mut values = Vec::with_capacity(lattice.len());
        for _ in 0..lattice.len() {
            f.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Self::from_parts(lattice, mask_bytes.into_iter().map(|b| b != 0).collect(), values)
    }

    pub fn write_sidecar(&self, path: &Path, d: Option<&Domain>) -> Result<()> {
        let w = self.lattice.window();
        let n = self.lattice.dim;
        let car = Sidecar {
            dim: n,
            shape: self.lattice.shape[..n].to_vec(),
            h: self.lattice.h,
            lo: w.lo[..n].to_vec(),
            hi: w.hi[..n].to_vec(),
            inside_cells: self.mask.iter().filter(|&&m| m).count(),
            support_cells: self.values.iter().filter(|&&v| v != 0.0).count(),
            domain: d.map(Domain::to_json),
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &car)?;
        Ok(())
    }

    /// One row per inside cell: index, center coordinates, value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let axes = ["x", "y", "z"];
        let mut header = vec!["cell".to_string()];
        header.extend(axes[..self.lattice.dim].iter().map(|s| s.to_string()));
        header.push("value".into());
        w.write_record(&header)?;
        for i in self.inside_cells() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.lattice.center(i).coords().iter().map(|v| v.to_string()));
            rec.push(self.values[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
