//! Points, boxes, dyadic cubes and the domain gallery.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, Error, Result};

/// A point of R^n, n in {2, 3}. Unused trailing coordinates are zero.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    c: [f64; 3],
    n: usize,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&coords.len()) {
            return Err(invalid(format!("point dimension {} not in {{2, 3}}", coords.len())));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite point coordinate"));
        }
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self { c, n: coords.len() })
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self { c: [x, y, 0.0], n: 2 }
    }

    pub fn xyz(x: f64, y: f64, z: f64) -> Self {
        Self { c: [x, y, z], n: 3 }
    }

    pub(crate) fn from_raw(c: [f64; 3], n: usize) -> Self {
        Self { c, n }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.n]
    }

    pub fn raw(&self) -> [f64; 3] {
        self.c
    }

    pub fn get(&self, i: usize) -> f64 {
        self.c[i]
    }

    pub fn norm(&self) -> f64 {
        self.coords().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (0..self.n)
            .map(|i| (self.c[i] - other.c[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + t * dir`
    pub fn along(&self, dir: &[f64; 3], t: f64) -> Point {
        let mut c = self.c;
        for i in 0..self.n {
            c[i] += t * dir[i];
        }
        Point { c, n: self.n }
    }

    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        let mut c = self.c;
        for i in 0..self.n {
            c[i] += t * (other.c[i] - self.c[i]);
        }
        Point { c, n: self.n }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub dim: usize,
}

impl AxisBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let n = lo.len();
        if n != hi.len() || !(2..=3).contains(&n) {
            return Err(invalid("box corners must share dimension 2 or 3"));
        }
        let mut b = AxisBox { lo: [0.0; 3], hi: [0.0; 3], dim: n };
        for i in 0..n {
            if !(lo[i] < hi[i]) {
                return Err(invalid(format!("degenerate box along axis {i}")));
            }
            b.lo[i] = lo[i];
            b.hi[i] = hi[i];
        }
        Ok(b)
    }

    pub fn cube(center: &[f64], side: f64) -> Self {
        let n = center.len();
        let mut b = AxisBox { lo: [0.0; 3], hi: [0.0; 3], dim: n };
        for i in 0..n {
            b.lo[i] = center[i] - side / 2.0;
            b.hi[i] = center[i] + side / 2.0;
        }
        b
    }

    pub fn side(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn max_side(&self) -> f64 {
        (0..self.dim).map(|i| self.side(i)).fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|i| self.side(i)).product()
    }

    pub fn diam(&self) -> f64 {
        (0..self.dim).map(|i| self.side(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; 3];
        for i in 0..self.dim {
            c[i] = 0.5 * (self.lo[i] + self.hi[i]);
        }
        Point::from_raw(c, self.dim)
    }

    /// Dilation about the center by factor `r`.
    pub fn dilate(&self, r: f64) -> AxisBox {
        let mut b = *self;
        for i in 0..self.dim {
            let m = 0.5 * (self.lo[i] + self.hi[i]);
            let h = 0.5 * r * self.side(i);
            b.lo[i] = m - h;
            b.hi[i] = m + h;
        }
        b
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|i| self.lo[i] <= x.get(i) && x.get(i) <= self.hi[i])
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        (0..self.dim).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Volume of the intersection.
    pub fn overlap(&self, other: &AxisBox) -> f64 {
        let mut v = 1.0;
        for i in 0..self.dim {
            let w = self.hi[i].min(other.hi[i]) - self.lo[i].max(other.lo[i]);
            if w <= 0.0 {
                return 0.0;
            }
            v *= w;
        }
        v
    }

    /// Euclidean gap between two closed boxes (0 when they meet).
    pub fn gap(&self, other: &AxisBox) -> f64 {
        (0..self.dim)
            .map(|i| {
                let g = (other.lo[i] - self.hi[i]).max(self.lo[i] - other.hi[i]).max(0.0);
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Distance from a point to the closed box.
    pub fn dist_to(&self, x: &Point) -> f64 {
        (0..self.dim)
            .map(|i| {
                let g = (self.lo[i] - x.get(i)).max(x.get(i) - self.hi[i]).max(0.0);
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn corners(&self) -> Vec<Point> {
        (0..1usize << self.dim)
            .map(|mask| {
                let mut c = [0.0; 3];
                for i in 0..self.dim {
                    c[i] = if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] };
                }
                Point::from_raw(c, self.dim)
            })
            .collect()
    }

    /// Distance along `dir` (unit) from an interior point to the box boundary.
    pub fn exit_distance(&self, x: &[f64; 3], dir: &[f64; 3]) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..self.dim {
            if dir[i] > 0.0 {
                t = t.min((self.hi[i] - x[i]) / dir[i]);
            } else if dir[i] < 0.0 {
                t = t.min((self.lo[i] - x[i]) / dir[i]);
            }
        }
        t.max(0.0)
    }
}

/// Dyadic cube 2^{-level}(index + [0,1]^n).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: i32,
    pub index: [i64; 3],
    pub dim: usize,
}

impl fmt::Debug for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q(j={}, k={:?})", self.level, &self.index[..self.dim])
    }
}

impl DyadicCube {
    pub fn new(level: i32, index: &[i64]) -> Self {
        let mut k = [0; 3];
        k[..index.len()].copy_from_slice(index);
        Self { level, index: k, dim: index.len() }
    }

    pub fn side(&self) -> f64 {
        2f64.powi(-self.level)
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim as i32)
    }

    pub fn diam(&self) -> f64 {
        self.side() * (self.dim as f64).sqrt()
    }

    pub fn to_box(&self) -> AxisBox {
        let s = self.side();
        let mut b = AxisBox { lo: [0.0; 3], hi: [0.0; 3], dim: self.dim };
        for i in 0..self.dim {
            b.lo[i] = self.index[i] as f64 * s;
            b.hi[i] = (self.index[i] + 1) as f64 * s;
        }
        b
    }

    pub fn center(&self) -> Point {
        self.to_box().center()
    }

    /// The dilated box rQ.
    pub fn dilate(&self, r: f64) -> AxisBox {
        self.to_box().dilate(r)
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        (0..1usize << self.dim)
            .map(|mask| {
                let mut k = [0; 3];
                for i in 0..self.dim {
                    k[i] = 2 * self.index[i] + (mask >> i & 1) as i64;
                }
                DyadicCube { level: self.level + 1, index: k, dim: self.dim }
            })
            .collect()
    }

    pub fn parent(&self) -> DyadicCube {
        let mut k = [0; 3];
        for i in 0..self.dim {
            k[i] = self.index[i].div_euclid(2);
        }
        DyadicCube { level: self.level - 1, index: k, dim: self.dim }
    }

    /// Ancestor at a coarser (or equal) level.
    pub fn ancestor(&self, level: i32) -> DyadicCube {
        debug_assert!(level <= self.level);
        let f = 1i64 << (self.level - level);
        let mut k = [0; 3];
        for i in 0..self.dim {
            k[i] = self.index[i].div_euclid(f);
        }
        DyadicCube { level, index: k, dim: self.dim }
    }

    /// Integer interval of axis `i` in units of 2^{-fine}.
    fn span(&self, i: usize, fine: i32) -> (i64, i64) {
        let f = 1i64 << (fine - self.level);
        (self.index[i] * f, (self.index[i] + 1) * f)
    }

    /// Closures intersect.
    pub fn touches(&self, other: &DyadicCube) -> bool {
        let fine = self.level.max(other.level);
        (0..self.dim).all(|i| {
            let (a0, a1) = self.span(i, fine);
            let (b0, b1) = other.span(i, fine);
            a0 <= b1 && b0 <= a1
        })
    }

    /// Interiors intersect.
    pub fn overlaps(&self, other: &DyadicCube) -> bool {
        let fine = self.level.max(other.level);
        (0..self.dim).all(|i| {
            let (a0, a1) = self.span(i, fine);
            let (b0, b1) = other.span(i, fine);
            a0 < b1 && b0 < a1
        })
    }

    /// Closures share a piece of positive (n-1)-dimensional measure.
    pub fn shares_face(&self, other: &DyadicCube) -> bool {
        let fine = self.level.max(other.level);
        let mut touching_axes = 0;
        for i in 0..self.dim {
            let (a0, a1) = self.span(i, fine);
            let (b0, b1) = other.span(i, fine);
            if a1 < b0 || b1 < a0 {
                return false;
            }
            if a1 == b0 || b1 == a0 {
                touching_axes += 1;
            }
        }
        touching_axes == 1
    }
}

/// Gallery member and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Shape {
    /// (0,1)^n
    UnitSquare,
    /// B(0, radius)
    Ball { radius: f64 },
    /// {x_n > |x'| cot(aperture)}, aperture = half-angle
    Cone { aperture: f64, window_size: f64 },
    /// R^2 minus [0,1]x{0}
    PlaneMinusSegment { window_size: f64 },
    /// (-1,1)^2 minus [0,1]x[-1,0]
    LShape,
    /// {x_n > 0}
    HalfSpace { window_size: f64 },
}

/// Open set with exact distance to the boundary and a finite computation window.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    shape: Shape,
    dim: usize,
    window: AxisBox,
}

const SEGMENT: AxisBox = AxisBox { lo: [0.0, 0.0, 0.0], hi: [1.0, 0.0, 0.0], dim: 2 };
const NOTCH: AxisBox = AxisBox { lo: [0.0, -1.0, 0.0], hi: [1.0, 0.0, 0.0], dim: 2 };

impl Domain {
    pub fn new(shape: Shape, dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(invalid(format!("dimension {dim} not in {{2, 3}}")));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let n = dim;
        let window = match &shape {
            Shape::UnitSquare => AxisBox::new(&vec![0.0; n], &vec![1.0; n])?,
            Shape::Ball { radius } => {
                positive("radius", *radius)?;
                AxisBox::new(&vec![-radius; n], &vec![*radius; n])?
            }
            Shape::Cone { aperture, window_size } => {
                positive("window_size", *window_size)?;
                if !(*aperture > 0.0 && *aperture < PI / 2.0) {
                    return Err(invalid("cone aperture must lie in (0, pi/2)"));
                }
                let mut lo = vec![-window_size / 2.0; n];
                let mut hi = vec![window_size / 2.0; n];
                lo[n - 1] = 0.0;
                hi[n - 1] = *window_size;
                AxisBox::new(&lo, &hi)?
            }
            Shape::PlaneMinusSegment { window_size } => {
                positive("window_size", *window_size)?;
                if n != 2 {
                    return Err(invalid("plane_minus_segment is planar"));
                }
                if *window_size <= 1.0 {
                    return Err(invalid("plane_minus_segment window must exceed the slit"));
                }
                let w = window_size / 2.0;
                AxisBox::new(&[0.5 - w, -w], &[0.5 + w, w])?
            }
            Shape::LShape => {
                if n != 2 {
                    return Err(invalid("l_shape is planar"));
                }
                AxisBox::new(&[-1.0, -1.0], &[1.0, 1.0])?
            }
            Shape::HalfSpace { window_size } => {
                positive("window_size", *window_size)?;
                let mut lo = vec![-window_size / 2.0; n];
                let mut hi = vec![window_size / 2.0; n];
                lo[n - 1] = 0.0;
                hi[n - 1] = *window_size;
                AxisBox::new(&lo, &hi)?
            }
        };
        Ok(Self { shape, dim, window })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            Shape::UnitSquare => "unit_square",
            Shape::Ball { .. } => "ball",
            Shape::Cone { .. } => "cone",
            Shape::PlaneMinusSegment { .. } => "plane_minus_segment",
            Shape::LShape => "l_shape",
            Shape::HalfSpace { .. } => "half_space",
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> &AxisBox {
        &self.window
    }

    pub fn bounded(&self) -> bool {
        matches!(self.shape, Shape::UnitSquare | Shape::Ball { .. } | Shape::LShape)
    }

    /// Annotated John constant (an upper estimate, not a verified value).
    pub fn john_constant(&self) -> Option<f64> {
        let n = self.dim as f64;
        match self.shape {
            Shape::UnitSquare => Some(2.0 * n.sqrt()),
            Shape::Ball { .. } => Some(2.0),
            Shape::Cone { aperture, .. } => Some(1.0 / aperture.sin()),
            Shape::PlaneMinusSegment { .. } => Some(4.0),
            Shape::LShape => Some(4.0 * 2f64.sqrt()),
            Shape::HalfSpace { .. } => Some(1.0),
        }
    }

    /// Same shape with a different window size (unbounded members only).
    pub fn with_window_size(&self, size: f64) -> Result<Domain> {
        let shape = match self.shape {
            Shape::Cone { aperture, .. } => Shape::Cone { aperture, window_size: size },
            Shape::PlaneMinusSegment { .. } => Shape::PlaneMinusSegment { window_size: size },
            Shape::HalfSpace { .. } => Shape::HalfSpace { window_size: size },
            _ => return Err(invalid("bounded domains have a fixed window")),
        };
        Domain::new(shape, self.dim)
    }

    pub fn inside(&self, x: &Point) -> bool {
        self.dist_boundary(x) > 0.0
    }

    /// Exact distance to the boundary; 0 outside the domain.
    pub fn dist_boundary(&self, x: &Point) -> f64 {
        let n = self.dim;
        match &self.shape {
            Shape::UnitSquare => (0..n)
                .map(|i| x.get(i).min(1.0 - x.get(i)))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
            Shape::Ball { radius } => (radius - x.norm()).max(0.0),
            Shape::Cone { aperture, .. } => {
                let rho = (0..n - 1).map(|i| x.get(i).powi(2)).sum::<f64>().sqrt();
                (x.get(n - 1) * aperture.sin() - rho * aperture.cos()).max(0.0)
            }
            Shape::PlaneMinusSegment { .. } => SEGMENT.dist_to(x),
            Shape::LShape => {
                let big = (0..2)
                    .map(|i| (1.0 + x.get(i)).min(1.0 - x.get(i)))
                    .fold(f64::INFINITY, f64::min);
                if big <= 0.0 {
                    return 0.0;
                }
                big.min(NOTCH.dist_to(x))
            }
            Shape::HalfSpace { .. } => x.get(n - 1).max(0.0),
        }
    }

    /// Infimum of `dist_boundary` over a closed box (exact for every gallery member).
    pub fn dist_box(&self, b: &AxisBox) -> f64 {
        match &self.shape {
            Shape::PlaneMinusSegment { .. } => b.gap(&SEGMENT),
            Shape::LShape => {
                let big = (0..2)
                    .map(|i| (1.0 + b.lo[i]).min(1.0 - b.hi[i]))
                    .fold(f64::INFINITY, f64::min);
                if big <= 0.0 {
                    return 0.0;
                }
                big.min(b.gap(&NOTCH))
            }
            // convex members: the distance is concave on the domain, so its
            // minimum over a box inside the domain sits at a corner
            _ => {
                let mut m = f64::INFINITY;
                for c in b.corners() {
                    let d = self.dist_boundary(&c);
                    if d <= 0.0 {
                        return 0.0;
                    }
                    m = m.min(d);
                }
                m
            }
        }
    }

    /// Whether the open box meets the domain.
    pub fn box_meets(&self, b: &AxisBox) -> bool {
        let n = self.dim;
        match &self.shape {
            Shape::UnitSquare => (0..n).all(|i| b.lo[i] < 1.0 && b.hi[i] > 0.0),
            Shape::Ball { radius } => b.dist_to(&Point::from_raw([0.0; 3], n)) < *radius,
            Shape::Cone { aperture, .. } => {
                let rho = (0..n - 1)
                    .map(|i| (0.0f64).clamp(b.lo[i], b.hi[i]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                b.hi[n - 1] * aperture.sin() - rho * aperture.cos() > 0.0
            }
            Shape::PlaneMinusSegment { .. } => true,
            Shape::LShape => {
                let lo = [b.lo[0].max(-1.0), b.lo[1].max(-1.0)];
                let hi = [b.hi[0].min(1.0), b.hi[1].min(1.0)];
                if lo[0] >= hi[0] || lo[1] >= hi[1] {
                    return false;
                }
                let in_notch = lo[0] >= NOTCH.lo[0]
                    && hi[0] <= NOTCH.hi[0]
                    && lo[1] >= NOTCH.lo[1]
                    && hi[1] <= NOTCH.hi[1];
                !in_notch
            }
            Shape::HalfSpace { .. } => b.hi[n - 1] > 0.0,
        }
    }

    /// Infimum of the boundary distance over the closed cube.
    pub fn dist_to_cube(&self, q: &DyadicCube) -> f64 {
        self.dist_box(&q.to_box())
    }

    /// First parameter t >= t0 at which x + t*dir leaves the domain, for a
    /// ray that has already left the window at t0. Infinity if it never does.
    pub fn exterior_exit(&self, x: &[f64; 3], dir: &[f64; 3], t0: f64) -> f64 {
        let n = self.dim;
        match &self.shape {
            Shape::PlaneMinusSegment { .. } => f64::INFINITY,
            Shape::HalfSpace { .. } => {
                if dir[n - 1] >= 0.0 {
                    f64::INFINITY
                } else {
                    (x[n - 1] / -dir[n - 1]).max(t0)
                }
            }
            Shape::Cone { aperture, .. } => cone_exit(x, dir, n, *aperture).max(t0),
            _ => t0,
        }
    }

    /// A point well inside the domain used to place fixtures.
    pub fn anchor(&self) -> Point {
        let n = self.dim;
        let mut c = [0.0; 3];
        match &self.shape {
            Shape::UnitSquare => c[..n].fill(0.5),
            Shape::Ball { .. } => {}
            Shape::Cone { window_size, .. } | Shape::HalfSpace { window_size } => {
                c[n - 1] = window_size / 2.0
            }
            Shape::PlaneMinusSegment { window_size } => c[..2].copy_from_slice(&[0.5, window_size / 4.0]),
            Shape::LShape => c[..2].copy_from_slice(&[-0.5, 0.5]),
        }
        Point::from_raw(c, n)
    }

    /// Whether the boundary is unbounded (as a subset of R^n).
    pub fn boundary_unbounded(&self) -> bool {
        matches!(self.shape, Shape::Cone { .. } | Shape::HalfSpace { .. })
    }

    /// Evenly spaced sample of the boundary (restricted to the window).
    pub fn boundary_sample(&self, count: usize) -> Result<Vec<Point>> {
        if self.dim != 2 {
            return Err(invalid("boundary samplers are planar"));
        }
        let w = &self.window;
        let poly: Vec<[f64; 2]> = match &self.shape {
            Shape::UnitSquare => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]],
            Shape::Ball { radius } => {
                return Ok((0..count)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / count as f64;
                        Point::xy(radius * t.cos(), radius * t.sin())
                    })
                    .collect())
            }
            Shape::Cone { aperture, .. } => {
                // the two rays, cut where they leave the window
                let s = (w.hi[0] / aperture.sin()).min(w.hi[1] / aperture.cos());
                let (a, b) = (s * aperture.sin(), s * aperture.cos());
                vec![[-a, b], [0.0, 0.0], [a, b]]
            }
            Shape::PlaneMinusSegment { .. } => vec![[0.0, 0.0], [1.0, 0.0]],
            Shape::LShape => vec![
                [-1.0, -1.0],
                [0.0, -1.0],
                [0.0, 0.0],
                [1.0, 0.0],
                [1.0, 1.0],
                [-1.0, 1.0],
                [-1.0, -1.0],
            ],
            Shape::HalfSpace { .. } => vec![[w.lo[0], 0.0], [w.hi[0], 0.0]],
        };
        Ok(sample_polyline(&poly, count))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let params = match &self.shape {
            Shape::UnitSquare | Shape::LShape => json!({}),
            Shape::Ball { radius } => json!({ "radius": radius }),
            Shape::Cone { aperture, window_size } => {
                json!({ "aperture": aperture, "window_size": window_size })
            }
            Shape::PlaneMinusSegment { window_size } | Shape::HalfSpace { window_size } => {
                json!({ "window_size": window_size })
            }
        };
        json!({
            "name": self.name(),
            "dim": self.dim,
            "params": params,
            "window": { "lo": &self.window.lo[..self.dim], "hi": &self.window.hi[..self.dim] },
            "john_constant": self.john_constant(),
        })
    }
}

fn sample_polyline(poly: &[[f64; 2]], count: usize) -> Vec<Point> {
    let lens: Vec<f64> = poly
        .windows(2)
        .map(|s| ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt())
        .collect();
    let total: f64 = lens.iter().sum();
    let closed = poly.first() == poly.last();
    let steps = if closed { count } else { count.max(2) - 1 };
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut start = 0.0;
    for i in 0..count {
        let s = total * i as f64 / steps as f64;
        while seg + 1 < lens.len() && s > start + lens[seg] {
            start += lens[seg];
            seg += 1;
        }
        let t = ((s - start) / lens[seg]).clamp(0.0, 1.0);
        let (a, b) = (poly[seg], poly[seg + 1]);
        out.push(Point::xy(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])));
    }
    out
}

/// Exit parameter of the ray x + t*dir from the cone {x_n sin a > |x'| cos a}.
fn cone_exit(x: &[f64; 3], dir: &[f64; 3], n: usize, aperture: f64) -> f64 {
    let (s2, c2) = (aperture.sin().powi(2), aperture.cos().powi(2));
    let z = x[n - 1];
    let wz = dir[n - 1];
    let (mut xx, mut xw, mut ww) = (0.0, 0.0, 0.0);
    for i in 0..n - 1 {
        xx += x[i] * x[i];
        xw += x[i] * dir[i];
        ww += dir[i] * dir[i];
    }
    let a = wz * wz * s2 - ww * c2;
    let b = 2.0 * (z * wz * s2 - xw * c2);
    let c = z * z * s2 - xx * c2;
    let mut roots = Vec::with_capacity(2);
    if a.abs() < 1e-14 {
        if b.abs() > 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // numerically stable pair
            let qq = -0.5 * (b + b.signum() * sq);
            if qq != 0.0 {
                roots.push(qq / a);
                roots.push(c / qq);
            } else {
                roots.push(0.0);
            }
        }
    }
    roots
        .into_iter()
        .filter(|&t| t > 0.0 && z + t * wz >= 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Builds a gallery domain from a textual spec such as `ball(1)` or `cone(0.785,4)`.
pub fn make_domain(spec: &str) -> Result<Domain> {
    let spec = spec.trim();
    let (name, args) = match spec.find('(') {
        Some(i) => {
            if !spec.ends_with(')') {
                return Err(invalid(format!("malformed domain spec `{spec}`")));
            }
            (&spec[..i], &spec[i + 1..spec.len() - 1])
        }
        None => (spec, ""),
    };
    let mut dim = 2;
    let mut nums = Vec::new();
    for a in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        if let Some(d) = a.strip_prefix("dim=") {
            dim = d.parse().map_err(|_| invalid(format!("bad dimension `{d}`")))?;
            continue;
        }
        nums.push(parse_number(a)?);
    }
    let arg = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
    let shape = match name {
        "unit_square" | "unit_cube" => Shape::UnitSquare,
        "ball" => Shape::Ball { radius: arg(0, 1.0) },
        "cone" => Shape::Cone { aperture: arg(0, FRAC_PI_4), window_size: arg(1, 4.0) },
        "plane_minus_segment" => Shape::PlaneMinusSegment { window_size: arg(0, 4.0) },
        "l_shape" => Shape::LShape,
        "half_space" => Shape::HalfSpace { window_size: arg(0, 4.0) },
        other => return Err(Error::UnknownDomain(other.to_string())),
    };
    Domain::new(shape, dim)
}

/// Parses `0.25`, `1/64` or `pi/4`.
pub fn parse_number(s: &str) -> Result<f64> {
    let atom = |t: &str| -> Result<f64> {
        match t.trim() {
            "pi" => Ok(PI),
            t => t.parse::<f64>().map_err(|_| invalid(format!("not a number: `{t}`"))),
        }
    };
    match s.split_once('/') {
        Some((a, b)) => Ok(atom(a)? / atom(b)?),
        None => atom(s),
    }
}

/// Witness search for the cigar condition dist(g(t)) >= min(t, l - t)/c.
#[derive(Clone, Debug)]
pub struct JohnWitness {
    pub found: bool,
    pub curve: Vec<Point>,
}

pub fn john_curve_exists(
    d: &Domain,
    x1: &Point,
    x2: &Point,
    c: f64,
    max_level: i32,
) -> Result<JohnWitness> {
    for x in [x1, x2] {
        if !d.inside(x) {
            return Err(Error::PointOutside(x.coords().to_vec()));
        }
    }
    if !(c >= 1.0) {
        return Err(invalid("John constant must be at least 1"));
    }
    if x1 == x2 {
        return Ok(JohnWitness { found: true, curve: vec![*x1] });
    }
    let direct = vec![*x1, *x2];
    if cigar_holds(d, &direct, c) {
        return Ok(JohnWitness { found: true, curve: direct });
    }
    let w = crate::whitney::whitney_decompose(d, max_level)?;
    let graph = crate::whitney::Adjacency::build(&w);
    let (Some(a), Some(b)) = (w.nearest_cube(x1), w.nearest_cube(x2)) else {
        return Ok(JohnWitness { found: false, curve: vec![] });
    };
    let centers: Vec<Point> = w.cubes().iter().map(|q| q.center()).collect();
    let dists = w.dists();
    let weights: [&dyn Fn(usize, usize) -> f64; 3] = [
        &|i, j| centers[i].dist(&centers[j]) / dists[i].min(dists[j]),
        &|i, j| centers[i].dist(&centers[j]),
        &|_, j| w.cubes()[j].side().recip(),
    ];
    for weight in weights {
        let Some(path) = graph.shortest_path(a, b, weight) else {
            continue;
        };
        let mut curve = vec![*x1];
        curve.extend(path.iter().map(|&i| centers[i]));
        curve.push(*x2);
        let curve = shortcut(d, curve, c);
        if cigar_holds(d, &curve, c) {
            return Ok(JohnWitness { found: true, curve });
        }
    }
    Ok(JohnWitness { found: false, curve: vec![] })
}

/// Greedy string pulling: drop interior vertices while the condition survives.
fn shortcut(d: &Domain, curve: Vec<Point>, c: f64) -> Vec<Point> {
    let mut cur = curve;
    let mut i = 1;
    while i + 1 < cur.len() {
        let mut trial = cur.clone();
        trial.remove(i);
        if cigar_holds(d, &trial, c) {
            cur = trial;
        } else {
            i += 1;
        }
    }
    cur
}

/// Sound check of the cigar condition along a polyline: samples every step
/// `delta` and demands the slack to exceed what a 1-Lipschitz drift allows.
pub fn cigar_holds(d: &Domain, curve: &[Point], c: f64) -> bool {
    let lens: Vec<f64> = curve.windows(2).map(|s| s[0].dist(&s[1])).collect();
    let total: f64 = lens.iter().sum();
    if total == 0.0 {
        return d.inside(&curve[0]);
    }
    let d0 = d.dist_boundary(&curve[0]);
    let d1 = d.dist_boundary(&curve[curve.len() - 1]);
    let delta = (total / 4000.0).min(d0 / 4.0).min(d1 / 4.0);
    if delta <= 0.0 {
        return false;
    }
    let margin = (1.0 + 1.0 / c) * delta / 2.0;
    let mut start = 0.0;
    for (k, seg) in curve.windows(2).enumerate() {
        let len = lens[k];
        let steps = (len / delta).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = len * s as f64 / steps as f64;
            let arc = start + t;
            let x = seg[0].lerp(&seg[1], t / len.max(f64::MIN_POSITIVE));
            let need = arc.min(total - arc) / c;
            let have = d.dist_boundary(&x);
            // endpoints are inside by assumption; elsewhere keep the drift margin
            let slack = if arc < margin || total - arc < margin { 0.0 } else { margin };
            if have <= 0.0 || have - need < slack {
                return false;
            }
        }
        start += len;
    }
    true
}
