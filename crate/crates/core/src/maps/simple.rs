use nalgebra::DMatrix;

use super::{Block, BlockStructure, FiberMap, NormBounds};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityMap {
    pub dim: usize,
}

fn pair_blocks(d: usize) -> Vec<Block> {
    (0..d).step_by(2).map(|i| Block::new((i..(i + 2).min(d)).collect())).collect()
}

impl FiberMap for IdentityMap {
    fn name(&self) -> String {
        format!("identity({})", self.dim)
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn blocks(&self) -> Vec<Block> {
        pair_blocks(self.dim)
    }
    fn eval_lift(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
    fn inverse_lift(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
    fn jacobian(&self, _y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.iter_mut().enumerate().for_each(|(i, v)| *v = if i / d == i % d { 1.0 } else { 0.0 });
    }
    fn eval_offset(&self, _y: &[f64], h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(h);
    }
    fn norm_bounds(&self) -> NormBounds {
        NormBounds { d: 1.0, d_inv: 1.0, d2: 0.0, d2_inv: 0.0 }
    }
    fn depends_on(&self, _block: usize) -> Vec<usize> {
        Vec::new()
    }
    fn block_structure(&self) -> BlockStructure {
        BlockStructure::Diagonal
    }
    fn amplitude(&self, _block: usize) -> f64 {
        0.0
    }
}

/// Constant linear fiber map (integer matrices descend to the torus).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFiber {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    blocks: Vec<Block>,
}

impl LinearFiber {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("linear fiber must be square".into()));
        }
        let inverse = matrix.clone().try_inverse().ok_or_else(|| Error::Singular("linear fiber".into()))?;
        let blocks = pair_blocks(matrix.nrows());
        Ok(LinearFiber { matrix, inverse, blocks })
    }
}

impl FiberMap for LinearFiber {
    fn name(&self) -> String {
        "linear".into()
    }
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn blocks(&self) -> Vec<Block> {
        self.blocks.clone()
    }
    fn eval_lift(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            out[i] = (0..d).map(|j| self.matrix[(i, j)] * y[j]).sum();
        }
    }
    fn inverse_lift(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            out[i] = (0..d).map(|j| self.inverse[(i, j)] * y[j]).sum();
        }
    }
    fn jacobian(&self, _y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.matrix[(i, j)];
            }
        }
    }
    fn eval_offset(&self, _y: &[f64], h: &[f64], out: &mut [f64]) {
        self.eval_lift(h, out);
    }
    fn norm_bounds(&self) -> NormBounds {
        let n = linalg::l1_op_norm(&self.matrix).max(linalg::l1_op_norm(&self.matrix.transpose()));
        let ni = linalg::l1_op_norm(&self.inverse).max(linalg::l1_op_norm(&self.inverse.transpose()));
        NormBounds { d: n, d_inv: ni, d2: 0.0, d2_inv: 0.0 }
    }
    fn depends_on(&self, _block: usize) -> Vec<usize> {
        Vec::new()
    }
    fn block_structure(&self) -> BlockStructure {
        BlockStructure::Coupled
    }
    fn amplitude(&self, _block: usize) -> f64 {
        0.0
    }
}
