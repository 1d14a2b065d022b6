use std::sync::Arc;

use nalgebra::DMatrix;

use super::FiberMap;
use crate::error::{Error, Result};
use crate::linalg::ScaledMatrix;
use crate::torus::{wrap, ToralAutomorphism, TorusVector};

/// Integer `d x l` matrix sending base coordinates to fiber coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct KickProjection {
    pub d: usize,
    pub l: usize,
    pub entries: Vec<i64>,
}

impl KickProjection {
    pub fn zero(d: usize, l: usize) -> Self {
        KickProjection { d, l, entries: vec![0; d * l] }
    }

    /// Ones at the given `(fiber, base)` positions.
    pub fn select(d: usize, l: usize, pairs: &[(usize, usize)]) -> Self {
        let mut p = Self::zero(d, l);
        for &(i, j) in pairs {
            p.entries[i * l + j] = 1;
        }
        p
    }

    /// `(x_1, ...) -> (x_1, 0, ...)`
    pub fn first_coordinate(d: usize, l: usize) -> Self {
        Self::select(d, l, &[(0, 0)])
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.d, self.l, self.entries.iter().map(|&v| v as f64))
    }

    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            let row = &self.entries[i * self.l..(i + 1) * self.l];
            out[i] = row.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
        }
    }
}

/// `f(x, y) = (A^L x, S(y) + P(A^K x))` on `T^l x T^d`.
#[derive(Clone, Debug)]
pub struct SkewProduct {
    pub base: ToralAutomorphism,
    pub base_iterates: usize,
    pub kick_iterates: usize,
    pub projection: KickProjection,
    pub fiber: Arc<dyn FiberMap>,
    base_power: ScaledMatrix,
    kick_power: ScaledMatrix,
}

impl SkewProduct {
    pub fn new(
        base: ToralAutomorphism,
        base_iterates: usize,
        kick_iterates: usize,
        projection: KickProjection,
        fiber: Arc<dyn FiberMap>,
    ) -> Result<Self> {
        if projection.l != base.dim() || projection.d != fiber.dim() {
            return Err(Error::Dimension(format!(
                "projection is {}x{}, base dim {}, fiber dim {}",
                projection.d,
                projection.l,
                base.dim(),
                fiber.dim()
            )));
        }
        if base_iterates == 0 {
            return Err(Error::InvalidParameter("base_iterates must be positive".into()));
        }
        let base_power = base.power(base_iterates as i64);
        let kick_power = base.power(kick_iterates as i64).left_mul(&projection.matrix());
        Ok(SkewProduct { base, base_iterates, kick_iterates, projection, fiber, base_power, kick_power })
    }

    /// Cat base, `L = 2 floor(r)`, `K = floor(r)`, kick into the first fiber coordinate.
    pub fn standard_family(fiber: Arc<dyn FiberMap>, r: f64) -> Result<Self> {
        let k = r.floor().max(1.0) as usize;
        let d = fiber.dim();
        Self::new(ToralAutomorphism::cat_map(), 2 * k, k, KickProjection::first_coordinate(d, 2), fiber)
    }

    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber.dim()
    }

    pub fn dim(&self) -> usize {
        self.base_dim() + self.fiber_dim()
    }

    /// `A^L` with log scale.
    pub fn base_power(&self) -> &ScaledMatrix {
        &self.base_power
    }

    /// `P A^K` with log scale.
    pub fn kick_power(&self) -> &ScaledMatrix {
        &self.kick_power
    }

    /// Kick value `P(A^K x)` on the lift (not reduced).
    pub fn kick(&self, x: &[f64], out: &mut [f64]) {
        let mut ax = x.to_vec();
        let mut buf = vec![0.0; x.len()];
        self.base.iterate_in_place(self.kick_iterates, &mut ax, &mut buf);
        self.projection.apply(&ax, out);
    }

    pub fn eval(&self, m: &TorusVector) -> Result<TorusVector> {
        if m.dim() != self.dim() {
            return Err(Error::Dimension(format!("skew product expects {} coordinates", self.dim())));
        }
        let mut v = m.coords().to_vec();
        let mut scratch = SkewScratch::new(self);
        self.step_in_place(&mut v, &mut scratch);
        Ok(TorusVector::from_lift(&v))
    }

    pub fn inverse(&self, m: &TorusVector) -> Result<TorusVector> {
        if m.dim() != self.dim() {
            return Err(Error::Dimension(format!("skew product expects {} coordinates", self.dim())));
        }
        let l = self.base_dim();
        let d = self.fiber_dim();
        let mut x = m.coords()[..l].to_vec();
        let mut buf = vec![0.0; l];
        self.base.iterate_inverse_in_place(self.base_iterates, &mut x, &mut buf);
        let mut k = vec![0.0; d];
        self.kick(&x, &mut k);
        let y: Vec<f64> = m.coords()[l..].iter().zip(&k).map(|(a, b)| a - b).collect();
        let mut yp = vec![0.0; d];
        self.fiber.inverse_lift(&y, &mut yp);
        x.extend(yp);
        Ok(TorusVector::from_lift(&x))
    }

    /// One step on a reduced point, in place.
    pub fn step_in_place(&self, v: &mut [f64], s: &mut SkewScratch) {
        let l = self.base_dim();
        let (x, y) = v.split_at_mut(l);
        s.kx.copy_from_slice(x);
        self.base.iterate_in_place(self.kick_iterates, &mut s.kx, &mut s.bbuf);
        self.projection.apply(&s.kx, &mut s.kick);
        // A^L x: reuse the K iterates when K <= L
        if self.kick_iterates <= self.base_iterates {
            x.copy_from_slice(&s.kx);
            self.base.iterate_in_place(self.base_iterates - self.kick_iterates, x, &mut s.bbuf);
        } else {
            self.base.iterate_in_place(self.base_iterates, x, &mut s.bbuf);
        }
        self.fiber.eval_lift(y, &mut s.fy);
        for ((yo, f), k) in y.iter_mut().zip(&s.fy).zip(&s.kick) {
            *yo = wrap(f + k);
        }
    }

    /// Full derivative `[[A^L, 0], [P A^K, dS]]`. Entries overflow for very large L.
    pub fn jacobian(&self, m: &[f64]) -> DMatrix<f64> {
        let l = self.base_dim();
        let d = self.fiber_dim();
        let n = l + d;
        let mut j = DMatrix::zeros(n, n);
        j.view_mut((0, 0), (l, l)).copy_from(&self.base_power.to_matrix());
        j.view_mut((l, 0), (d, l)).copy_from(&self.kick_power.to_matrix());
        j.view_mut((l, l), (d, d)).copy_from(&super::jacobian_matrix(self.fiber.as_ref(), &m[l..]));
        j
    }
}

/// Buffers for allocation-free stepping.
#[derive(Clone, Debug)]
pub struct SkewScratch {
    kx: Vec<f64>,
    bbuf: Vec<f64>,
    kick: Vec<f64>,
    fy: Vec<f64>,
}

impl SkewScratch {
    pub fn new(f: &SkewProduct) -> Self {
        let (l, d) = (f.base_dim(), f.fiber_dim());
        SkewScratch { kx: vec![0.0; l], bbuf: vec![0.0; l], kick: vec![0.0; d], fy: vec![0.0; d] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{CoupledP, StandardMap};
    use crate::torus::wrap_signed;

    #[test]
    fn eval_inverse_round_trip() {
        let f = SkewProduct::standard_family(Arc::new(StandardMap::new(10.0)), 10.0).unwrap();
        let m = TorusVector::reduce(&[0.4, 1.3, 2.0, 5.0]).unwrap();
        let back = f.inverse(&f.eval(&m).unwrap()).unwrap();
        // base iterates amplify rounding by λ^L; compare the fiber at a loose scale
        assert!(back.distance(&m) < 1e-4);
    }

    #[test]
    fn jacobian_is_block_lower_triangular() {
        let f = SkewProduct::new(
            ToralAutomorphism::cat_map(),
            4,
            2,
            KickProjection::first_coordinate(2, 2),
            Arc::new(StandardMap::new(10.0)),
        )
        .unwrap();
        let j = f.jacobian(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(j.view((0, 2), (2, 2)).norm(), 0.0);
        // P A^2 = [[5, 3], [0, 0]]
        assert_eq!(j[(2, 0)], 5.0);
        assert_eq!(j[(2, 1)], 3.0);
        assert_eq!(j[(3, 0)], 0.0);
        assert!((j.determinant() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kick_matches_definition() {
        let f = SkewProduct::new(
            ToralAutomorphism::cat_map(),
            2,
            1,
            KickProjection::first_coordinate(2, 2),
            Arc::new(StandardMap::new(3.0)),
        )
        .unwrap();
        let m = TorusVector::reduce(&[1.0, 2.0, 0.5, 0.25]).unwrap();
        let out = f.eval(&m).unwrap();
        // A(1,2) = (4,3); A^2 (1,2) = (11, 7); fiber = s(0.5,0.25) + (4, 0)
        let fy0 = 2.0 * 0.5 - 0.25 + 3.0 * 0.5f64.sin() + 4.0;
        assert!(wrap_signed(out.coords()[0] - 11.0).abs() < 1e-12);
        assert!(wrap_signed(out.coords()[1] - 7.0).abs() < 1e-12);
        assert!(wrap_signed(out.coords()[2] - fy0).abs() < 1e-12);
        assert!(wrap_signed(out.coords()[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = SkewProduct::new(
            ToralAutomorphism::cat_map(),
            2,
            1,
            KickProjection::first_coordinate(2, 2),
            Arc::new(CoupledP::new(3.0, 0.0)),
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
