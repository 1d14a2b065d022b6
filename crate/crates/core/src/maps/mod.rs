//! Fiber maps and the skew products built from them.

mod conjugacy;
mod coupled;
mod simple;
mod skew;
mod standard;
mod twist;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::TorusVector;

pub use conjugacy::{ConjugacyFamily, Reversibility};
pub use coupled::{CoupledP, CoupledQ};
pub use simple::{IdentityMap, LinearFiber};
pub use skew::{KickProjection, SkewProduct, SkewScratch};
pub use standard::StandardMap;
pub use twist::{FourierPotential, FourierTerm, TwistMap};

/// `sin(x + h) - sin(x)` without cancellation for small `h`.
#[inline]
pub fn sin_diff(x: f64, h: f64) -> f64 {
    2.0 * (x + 0.5 * h).cos() * (0.5 * h).sin()
}

/// Coordinates of one invariant block; `coords[0]` is the designated
/// coordinate that kicks enter and that the critical region lives on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub coords: Vec<usize>,
}

impl Block {
    pub fn new(coords: Vec<usize>) -> Self {
        Block { coords }
    }

    pub fn designated(&self) -> usize {
        self.coords[0]
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockStructure {
    Diagonal,
    LowerTriangular,
    Coupled,
}

/// Analytic sup-bounds, valid for both the Euclidean and the l1 operator norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub d: f64,
    pub d_inv: f64,
    pub d2: f64,
    pub d2_inv: f64,
}

pub trait FiberMap: Send + Sync + std::fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn blocks(&self) -> Vec<Block>;
    /// Lifted map on `R^d`, no reduction.
    fn eval_lift(&self, y: &[f64], out: &mut [f64]);
    /// Lifted inverse.
    fn inverse_lift(&self, y: &[f64], out: &mut [f64]);
    /// Row-major Jacobian.
    fn jacobian(&self, y: &[f64], out: &mut [f64]);
    fn norm_bounds(&self) -> NormBounds;
    /// Coordinates on which the diagonal Jacobian block of `block` depends.
    fn depends_on(&self, block: usize) -> Vec<usize>;
    fn block_structure(&self) -> BlockStructure;
    /// Kick amplitude seen by `block`; sets its critical region and cone.
    fn amplitude(&self, block: usize) -> f64;

    /// `S(y + h) - S(y)` on the lift.
    fn eval_offset(&self, y: &[f64], h: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let yh: Vec<f64> = y.iter().zip(h).map(|(a, b)| a + b).collect();
        let mut base = vec![0.0; d];
        self.eval_lift(&yh, out);
        self.eval_lift(y, &mut base);
        for (o, b) in out.iter_mut().zip(&base) {
            *o -= b;
        }
    }
}

fn check_dim(map: &dyn FiberMap, n: usize) -> Result<()> {
    if map.dim() != n {
        return Err(Error::Dimension(format!("{} expects {} coordinates, got {}", map.name(), map.dim(), n)));
    }
    Ok(())
}

pub fn eval(map: &dyn FiberMap, y: &TorusVector) -> Result<TorusVector> {
    check_dim(map, y.dim())?;
    let mut out = vec![0.0; map.dim()];
    map.eval_lift(y.coords(), &mut out);
    TorusVector::reduce(&out)
}

pub fn inverse(map: &dyn FiberMap, y: &TorusVector) -> Result<TorusVector> {
    check_dim(map, y.dim())?;
    let mut out = vec![0.0; map.dim()];
    map.inverse_lift(y.coords(), &mut out);
    TorusVector::reduce(&out)
}

pub fn jacobian_matrix(map: &dyn FiberMap, y: &[f64]) -> DMatrix<f64> {
    let d = map.dim();
    let mut j = vec![0.0; d * d];
    map.jacobian(y, &mut j);
    DMatrix::from_row_slice(d, d, &j)
}

/// `d_y(S^{-1}) = (d_{S^{-1} y} S)^{-1}`.
pub fn inverse_jacobian_matrix(map: &dyn FiberMap, y: &[f64]) -> Result<DMatrix<f64>> {
    let mut pre = vec![0.0; map.dim()];
    map.inverse_lift(y, &mut pre);
    jacobian_matrix(map, &pre)
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{} Jacobian", map.name())))
}

/// Diagonal Jacobian block `(rows, cols) = block coords`, row-major.
pub fn block_jacobian(map: &dyn FiberMap, block: &Block, y: &[f64], full: &mut [f64], out: &mut [f64]) {
    let d = map.dim();
    map.jacobian(y, full);
    let s = block.len();
    for (a, &i) in block.coords.iter().enumerate() {
        for (b, &j) in block.coords.iter().enumerate() {
            out[a * s + b] = full[i * d + j];
        }
    }
}
