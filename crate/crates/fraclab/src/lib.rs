//! Numerical lab for fractional Sobolev-Poincare and Hardy inequalities on
//! John domains.

pub mod assouad;
pub mod capacity;
pub mod chains;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod functional;
pub mod geometry;
pub mod inequality;
pub mod lattice;
pub mod quadrature;
pub mod report;
pub mod runner;
pub mod whitney;

pub use error::{Error, Result};
pub use functional::FracParams;
pub use geometry::{make_domain, AxisBox, Domain, DyadicCube, Point, Shape};
pub use lattice::{GridFunction, Lattice};
pub use whitney::{whitney_decompose, WhitneyFamily};
