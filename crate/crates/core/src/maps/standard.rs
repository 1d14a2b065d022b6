use super::{sin_diff, Block, BlockStructure, FiberMap, NormBounds};

/// `s(x, y) = (2x - y + k sin x, x)`. The amplitude is `k = floor(r)` so that
/// the map is well defined on the torus for every real `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardMap {
    pub r: f64,
    pub k: f64,
}

impl StandardMap {
    pub fn new(r: f64) -> Self {
        StandardMap { r, k: r.floor() }
    }

    /// Exact kick amplitude, no flooring.
    pub fn with_kick(k: f64) -> Self {
        StandardMap { r: k, k }
    }
}

impl FiberMap for StandardMap {
    fn name(&self) -> String {
        format!("standard(r={})", self.r)
    }

    fn dim(&self) -> usize {
        2
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::new(vec![0, 1])]
    }

    #[inline]
    fn eval_lift(&self, y: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * y[0] - y[1] + self.k * y[0].sin();
        out[1] = y[0];
    }

    #[inline]
    fn inverse_lift(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[1];
        out[1] = 2.0 * y[1] - y[0] + self.k * y[1].sin();
    }

    #[inline]
    fn jacobian(&self, y: &[f64], out: &mut [f64]) {
        out[0] = 2.0 + self.k * y[0].cos();
        out[1] = -1.0;
        out[2] = 1.0;
        out[3] = 0.0;
    }

    fn eval_offset(&self, y: &[f64], h: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * h[0] - h[1] + self.k * sin_diff(y[0], h[0]);
        out[1] = h[0];
    }

    fn norm_bounds(&self) -> NormBounds {
        let k = self.k.abs();
        NormBounds { d: k + 3.0, d_inv: k + 3.0, d2: k, d2_inv: k }
    }

    fn depends_on(&self, _block: usize) -> Vec<usize> {
        vec![0]
    }

    fn block_structure(&self) -> BlockStructure {
        BlockStructure::Diagonal
    }

    fn amplitude(&self, _block: usize) -> f64 {
        self.k.abs()
    }
}
