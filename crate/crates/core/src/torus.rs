//! Points on the flat torus `R^n / 2π Z^n` and integer automorphisms acting on it.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ScaledMatrix};

/// Reduce a real number into `[0, 2π)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    // rem_euclid rounds tiny negatives up to exactly TAU
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Signed representative of `x` in `[-π, π)`.
#[inline]
pub fn wrap_signed(x: f64) -> f64 {
    let y = wrap(x + std::f64::consts::PI) - std::f64::consts::PI;
    if y >= std::f64::consts::PI {
        y - TAU
    } else {
        y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusVector(Vec<f64>);

impl TorusVector {
    pub fn zeros(n: usize) -> Self {
        TorusVector(vec![0.0; n])
    }

    /// Reduce raw coordinates; fails on NaN or infinities.
    pub fn reduce(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(TorusVector(raw.iter().map(|&v| wrap(v)).collect()))
    }

    /// Wrap coordinates that are already known to be finite.
    pub(crate) fn from_lift(raw: &[f64]) -> Self {
        TorusVector(raw.iter().map(|&v| wrap(v)).collect())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Translate by a real vector and reduce.
    pub fn translate(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim() {
            return Err(Error::Dimension(format!("translate {} by {}", self.dim(), v.len())));
        }
        let raw: Vec<f64> = self.0.iter().zip(v).map(|(a, b)| a + b).collect();
        Self::reduce(&raw)
    }

    /// Flat metric distance (shortest lift).
    pub fn distance(&self, other: &TorusVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| wrap_signed(a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn reduce_mod_torus(raw: &[f64]) -> Result<TorusVector> {
    TorusVector::reduce(raw)
}

/// Hyperbolic splitting `E^s ⊕ E^u` with orthonormal bases and the
/// restrictions of the automorphism to each bundle.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub unstable_basis: DMatrix<f64>,
    pub stable_basis: DMatrix<f64>,
    /// `U^T A U`
    pub unstable_restriction: DMatrix<f64>,
    /// `S^T A S`
    pub stable_restriction: DMatrix<f64>,
    /// m(A|E^u)
    pub lambda: f64,
    /// ||A|E^u||
    pub unstable_norm: f64,
    /// ||A|E^s||
    pub tau: f64,
    /// m(A|E^s)
    pub stable_conorm: f64,
    /// max ||A B - B (B^T A B)|| over both bundles
    pub invariance_residual: f64,
}

impl Splitting {
    pub fn unstable_dim(&self) -> usize {
        self.unstable_basis.ncols()
    }

    pub fn stable_dim(&self) -> usize {
        self.stable_basis.ncols()
    }

    /// `A^n` restricted to E^u, in the orthonormal basis, with log scale.
    pub fn unstable_power(&self, n: i64) -> ScaledMatrix {
        linalg::scaled_power(&self.unstable_restriction, n)
    }

    pub fn stable_power(&self, n: i64) -> ScaledMatrix {
        linalg::scaled_power(&self.stable_restriction, n)
    }

    /// Component of `v` along E^u and along E^s (coefficients in the bases).
    pub fn decompose(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let l = v.len();
        let mut basis = DMatrix::zeros(l, l);
        let du = self.unstable_dim();
        basis.view_mut((0, 0), (l, du)).copy_from(&self.unstable_basis);
        basis.view_mut((0, du), (l, l - du)).copy_from(&self.stable_basis);
        let c = basis
            .lu()
            .solve(v)
            .expect("splitting bases span the space");
        (c.rows(0, du).into_owned(), c.rows(du, l - du).into_owned())
    }
}

#[derive(Clone, Debug)]
pub struct ToralAutomorphism {
    dim: usize,
    entries: Vec<i64>,
    inverse: Vec<i64>,
    splitting: Option<Splitting>,
}

impl ToralAutomorphism {
    /// Integer matrix given row-major. Requires |det| = 1.
    pub fn new(dim: usize, entries: Vec<i64>) -> Result<Self> {
        if entries.len() != dim * dim || dim == 0 {
            return Err(Error::Dimension(format!("{} entries for dim {}", entries.len(), dim)));
        }
        let det = linalg::integer_det(dim, &entries);
        if det.abs() != 1 {
            return Err(Error::NotUnimodular(det));
        }
        let inverse = linalg::integer_inverse_unimodular(dim, &entries, det);
        let mut a = ToralAutomorphism { dim, entries, inverse, splitting: None };
        a.splitting = hyperbolic_splitting(&a).ok();
        Ok(a)
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("matrix rows must be square".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn cat_map() -> Self {
        Self::new(2, vec![2, 1, 1, 1]).expect("cat map is unimodular")
    }

    /// `B = [[A, I], [0, A]]` for a 2x2 block `A`.
    pub fn block_upper(a: [i64; 4]) -> Result<Self> {
        Self::new(
            4,
            vec![
                a[0], a[1], 1, 0, //
                a[2], a[3], 0, 1, //
                0, 0, a[0], a[1], //
                0, 0, a[2], a[3],
            ],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn inverse_entries(&self) -> &[i64] {
        &self.inverse
    }

    pub fn inverse(&self) -> ToralAutomorphism {
        ToralAutomorphism::new(self.dim, self.inverse.clone()).expect("inverse is unimodular")
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.dim, self.dim, self.entries.iter().map(|&v| v as f64))
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.dim, self.dim, self.inverse.iter().map(|&v| v as f64))
    }

    /// Scaled real matrix of `A^n` (n may be negative).
    pub fn power(&self, n: i64) -> ScaledMatrix {
        let ent = if n >= 0 { &self.entries } else { &self.inverse };
        if let Some(p) = linalg::integer_power(self.dim, ent, n.unsigned_abs() as usize) {
            return ScaledMatrix { m: DMatrix::from_row_iterator(self.dim, self.dim, p.into_iter().map(|v| v as f64)), log_scale: 0.0 };
        }
        if n >= 0 {
            linalg::scaled_power(&self.matrix(), n)
        } else {
            linalg::scaled_power(&self.inverse_matrix(), -n)
        }
    }

    pub fn splitting(&self) -> Result<&Splitting> {
        self.splitting.as_ref().ok_or_else(|| {
            let m = linalg::eigen_moduli(&self.matrix())
                .into_iter()
                .min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
                .unwrap_or(1.0);
            Error::NotHyperbolic(m)
        })
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.splitting.is_some()
    }

    /// Lifted action on `R^n` (no reduction).
    #[inline]
    pub fn apply_lift(&self, x: &[f64], out: &mut [f64]) {
        mat_vec_int(self.dim, &self.entries, x, out);
    }

    #[inline]
    pub fn apply_inverse_lift(&self, x: &[f64], out: &mut [f64]) {
        mat_vec_int(self.dim, &self.inverse, x, out);
    }

    /// `A^k x` reduced after every step so the iterate stays in range.
    pub fn apply_iterated(&self, k: usize, x: &TorusVector) -> TorusVector {
        let mut cur = x.coords().to_vec();
        let mut next = vec![0.0; self.dim];
        for _ in 0..k {
            self.apply_lift(&cur, &mut next);
            for (c, n) in cur.iter_mut().zip(&next) {
                *c = wrap(*n);
            }
        }
        TorusVector(cur)
    }

    pub fn apply_inverse_iterated(&self, k: usize, x: &TorusVector) -> TorusVector {
        let mut cur = x.coords().to_vec();
        let mut next = vec![0.0; self.dim];
        for _ in 0..k {
            self.apply_inverse_lift(&cur, &mut next);
            for (c, n) in cur.iter_mut().zip(&next) {
                *c = wrap(*n);
            }
        }
        TorusVector(cur)
    }

    /// In-place variant used on hot paths; `buf` must have length `dim`.
    #[inline]
    pub(crate) fn iterate_in_place(&self, k: usize, x: &mut [f64], buf: &mut [f64]) {
        for _ in 0..k {
            self.apply_lift(x, buf);
            for (c, n) in x.iter_mut().zip(buf.iter()) {
                *c = wrap(*n);
            }
        }
    }

    #[inline]
    pub(crate) fn iterate_inverse_in_place(&self, k: usize, x: &mut [f64], buf: &mut [f64]) {
        for _ in 0..k {
            self.apply_inverse_lift(x, buf);
            for (c, n) in x.iter_mut().zip(buf.iter()) {
                *c = wrap(*n);
            }
        }
    }
}

#[inline]
fn mat_vec_int(n: usize, m: &[i64], x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        out[i] = row.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
    }
}

/// Stable/unstable bundles by subspace iteration with `A` and `A^{-1}`.
///
/// Subspace iteration converges to the full generalized eigenspace, so
/// Jordan blocks (e.g. `[[A, I], [0, A]]`) are handled.
pub fn hyperbolic_splitting(a: &ToralAutomorphism) -> Result<Splitting> {
    let m = a.matrix();
    let minv = a.inverse_matrix();
    let moduli = linalg::eigen_moduli(&m);
    let n = a.dim();
    let mut du = 0;
    for &mu in &moduli {
        if (mu - 1.0).abs() < 1e-9 {
            return Err(Error::NotHyperbolic(mu));
        }
        if mu > 1.0 {
            du += 1;
        }
    }
    if du == 0 || du == n {
        return Err(Error::NotHyperbolic(moduli[0]));
    }
    let u = linalg::dominant_subspace(&m, du);
    let s = linalg::dominant_subspace(&minv, n - du);
    let au = u.transpose() * &m * &u;
    let as_ = s.transpose() * &m * &s;
    let res_u = (&m * &u - &u * &au).norm();
    let res_s = (&m * &s - &s * &as_).norm();
    let su = linalg::singular_values(&au);
    let ss = linalg::singular_values(&as_);
    Ok(Splitting {
        lambda: *su.last().unwrap(),
        unstable_norm: su[0],
        tau: ss[0],
        stable_conorm: *ss.last().unwrap(),
        unstable_basis: u,
        stable_basis: s,
        unstable_restriction: au,
        stable_restriction: as_,
        invariance_residual: res_u.max(res_s),
    })
}

/// Whether `A|E^u` is conformal, with margin `||A|E^u|| - m(A|E^u)`.
pub fn is_u_conformal(a: &ToralAutomorphism, tol: f64) -> Result<(bool, f64)> {
    let s = a.splitting()?;
    let margin = s.unstable_norm - s.lambda;
    Ok((margin <= tol * s.unstable_norm, margin))
}

pub fn is_s_conformal(a: &ToralAutomorphism, tol: f64) -> Result<(bool, f64)> {
    let s = a.splitting()?;
    let margin = s.tau - s.stable_conorm;
    Ok((margin <= tol * s.tau, margin))
}
