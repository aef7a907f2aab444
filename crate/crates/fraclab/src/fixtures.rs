//! Seeded test-function families on a domain lattice.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::lattice::{GridFunction, Lattice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Family {
    /// u(x) = x_1
    Linear,
    /// cos^2 bump centred at the domain anchor
    RadialBump,
    /// truncated logarithm centred at the anchor
    LogBump,
    /// indicator of the left half of the window
    TwoLevel,
    /// low-frequency cosine mixture with k modes
    RandomSmooth(u32),
}

impl Family {
    pub fn is_random(&self) -> bool {
        matches!(self, Family::RandomSmooth(_))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Linear => write!(f, "linear"),
            Family::RadialBump => write!(f, "radial_bump"),
            Family::LogBump => write!(f, "log_bump"),
            Family::TwoLevel => write!(f, "two_level"),
            Family::RandomSmooth(k) => write!(f, "random_smooth({k})"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "linear" => return Ok(Family::Linear),
            "radial_bump" => return Ok(Family::RadialBump),
            "log_bump" => return Ok(Family::LogBump),
            "two_level" => return Ok(Family::TwoLevel),
            "random_smooth" => return Ok(Family::RandomSmooth(4)),
            _ => {}
        }
        if let Some(arg) = t.strip_prefix("random_smooth(").and_then(|r| r.strip_suffix(')')) {
            if let Ok(k) = arg.trim().parse::<u32>() {
                if k >= 1 {
                    return Ok(Family::RandomSmooth(k));
                }
            }
        }
        Err(Error::UnknownFixture(s.to_string()))
    }
}

impl TryFrom<String> for Family {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.to_string()
    }
}

/// A generated function with its identifier.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub id: String,
    pub u: GridFunction,
}

/// Radius of the anchor bumps.
pub fn bump_radius(d: &Domain) -> f64 {
    0.75 * d.dist_boundary(&d.anchor())
}

fn radial(d: &Domain, x: &Point) -> f64 {
    let r = x.dist(&d.anchor()) / bump_radius(d);
    if r >= 1.0 {
        0.0
    } else {
        (0.5 * PI * r).cos().powi(2)
    }
}

fn log_bump(d: &Domain, x: &Point) -> f64 {
    let big = bump_radius(d);
    let small = big / 16.0;
    let r = x.dist(&d.anchor()).max(small);
    ((big / r).ln() / (big / small).ln()).max(0.0)
}

/// Deterministic families yield one function; random families yield `count`.
pub fn fixture_family(name: &str, seed: u64, count: usize, d: &Domain, lattice: Lattice) -> Result<Vec<Fixture>> {
    let family: Family = name.parse()?;
    generate(family, seed, count, d, lattice)
}

pub fn generate(family: Family, seed: u64, count: usize, d: &Domain, lattice: Lattice) -> Result<Vec<Fixture>> {
    let one = |u: GridFunction| Ok(vec![Fixture { id: family.to_string(), u }]);
    match family {
        Family::Linear => one(GridFunction::from_fn(d, lattice, |x| x.get(0))?),
        Family::RadialBump => one(GridFunction::from_fn(d, lattice, |x| radial(d, x))?),
        Family::LogBump => one(GridFunction::from_fn(d, lattice, |x| log_bump(d, x))?),
        Family::TwoLevel => {
            let w = d.window();
            let mid = 0.5 * (w.lo[0] + w.hi[0]);
            one(GridFunction::from_fn(d, lattice, |x| if x.get(0) < mid { 1.0 } else { 0.0 })?)
        }
        Family::RandomSmooth(k) => (0..count)
            .map(|i| {
                let u = random_smooth(k, seed.wrapping_add(i as u64), d, lattice)?;
                Ok(Fixture { id: format!("{family}#{seed}+{i}"), u })
            })
            .collect(),
    }
}

/// sum_j a_j cos(2 pi f_j . (x - lo) / W + phi_j), integer f_j in [-k, k].
pub fn random_smooth(k: u32, seed: u64, d: &Domain, lattice: Lattice) -> Result<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = d.dim();
    let w = d.window();
    let scale = w.max_side();
    let modes: Vec<([f64; 3], f64, f64)> = (0..k)
        .map(|_| {
            let mut f = [0.0; 3];
            for v in f.iter_mut().take(n) {
                *v = rng.random_range(-(k as i64)..=(k as i64)) as f64;
            }
            let a: f64 = StandardNormal.sample(&mut rng);
            let phase = rng.random_range(0.0..2.0 * PI);
            (f, a / (k as f64).sqrt(), phase)
        })
        .collect();
    GridFunction::from_fn(d, lattice, |x| {
        modes
            .iter()
            .map(|(f, a, phase)| {
                let arg: f64 = (0..n).map(|i| f[i] * (x.get(i) - w.lo[i])).sum::<f64>();
                a * (2.0 * PI * arg / scale + phase).cos()
            })
            .sum()
    })
}

/// Multiply by the anchor bump so the result is compactly supported.
pub fn localize(u: &GridFunction, d: &Domain) -> GridFunction {
    let lat = *u.lattice();
    let values = (0..lat.len()).map(|i| u.value(i) * radial(d, &lat.center(i))).collect();
    u.with_values(values).expect("product of finite values")
}
