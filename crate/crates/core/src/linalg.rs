//! Small dense linear-algebra helpers.

use nalgebra::DMatrix;

/// A matrix stored as `exp(log_scale) * m`, used for large powers.
#[derive(Clone, Debug)]
pub struct ScaledMatrix {
    pub m: DMatrix<f64>,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn identity(n: usize) -> Self {
        ScaledMatrix { m: DMatrix::identity(n, n), log_scale: 0.0 }
    }

    /// Plain matrix; overflows to inf for very large scales.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        &self.m * self.log_scale.exp()
    }

    pub fn left_mul(&self, p: &DMatrix<f64>) -> ScaledMatrix {
        ScaledMatrix { m: p * &self.m, log_scale: self.log_scale }.normalized()
    }

    pub fn mul(&self, other: &ScaledMatrix) -> ScaledMatrix {
        ScaledMatrix { m: &self.m * &other.m, log_scale: self.log_scale + other.log_scale }.normalized()
    }

    fn normalized(mut self) -> Self {
        let s = self.m.amax();
        // rescale only far from 1 so exact integer matrices stay exact
        if s > 0.0 && s.is_finite() && !(1e-150..=1e150).contains(&s) {
            self.m /= s;
            self.log_scale += s.ln();
        }
        self
    }

    /// ln of the largest singular value.
    pub fn ln_norm(&self) -> f64 {
        singular_values(&self.m)[0].ln() + self.log_scale
    }

    /// ln of the conorm `inf ||Mv||/||v||`.
    pub fn ln_conorm(&self) -> f64 {
        conorm(&self.m).ln() + self.log_scale
    }
}

/// `m^n` with renormalisation after every product.
pub fn scaled_power(m: &DMatrix<f64>, n: i64) -> ScaledMatrix {
    assert!(n >= 0 || m.is_square());
    let base = if n >= 0 {
        m.clone()
    } else {
        m.clone().try_inverse().expect("invertible restriction")
    };
    let mut acc = ScaledMatrix::identity(m.nrows());
    let mut sq = ScaledMatrix { m: base, log_scale: 0.0 }.normalized();
    let mut k = n.unsigned_abs();
    while k > 0 {
        if k & 1 == 1 {
            acc = acc.mul(&sq);
        }
        k >>= 1;
        if k > 0 {
            sq = sq.mul(&sq);
        }
    }
    acc
}

/// Exact integer power when every intermediate entry stays below 2^53.
pub fn integer_power(n: usize, a: &[i64], k: usize) -> Option<Vec<i64>> {
    const LIMIT: i128 = 1 << 53;
    let mut acc: Vec<i128> = (0..n * n).map(|i| if i / n == i % n { 1 } else { 0 }).collect();
    for _ in 0..k {
        let mut next = vec![0i128; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0i128;
                for l in 0..n {
                    s += acc[i * n + l] * a[l * n + j] as i128;
                }
                if s.abs() >= LIMIT {
                    return None;
                }
                next[i * n + j] = s;
            }
        }
        acc = next;
    }
    Some(acc.into_iter().map(|v| v as i64).collect())
}

/// Singular values in decreasing order. Single columns use the Euclidean
/// norm directly so that identical inputs give identical outputs everywhere.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.ncols() == 1 || m.nrows() == 1 {
        return vec![m.norm()];
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `inf_{|v|=1} |Mv|`; zero when M has a kernel.
pub fn conorm(m: &DMatrix<f64>) -> f64 {
    if m.ncols() > m.nrows() {
        return 0.0;
    }
    *singular_values(m).last().unwrap()
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m)[0]
}

/// Operator norm induced by the l1 vector norm (max column sum).
pub fn l1_op_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn eigen_moduli(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Orthonormal basis of the dominant `k`-dimensional invariant subspace.
pub fn dominant_subspace(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    // deterministic, generic starting block
    let mut q = DMatrix::from_fn(n, k, |i, j| ((i * 7 + j * 13 + 1) as f64).sin() + if i == j { 2.0 } else { 0.0 });
    q = orthonormalize(&q);
    for _ in 0..400 {
        let next = orthonormalize(&(m * &q));
        let diff = (&next - &q * (q.transpose() * &next)).norm();
        q = next;
        if diff < 1e-15 {
            break;
        }
    }
    q
}

fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = a.clone();
    mgs(q.as_mut_slice(), a.nrows(), a.ncols(), None);
    q
}

/// Modified Gram-Schmidt on a column-major `n x k` frame. Writes the log
/// of each diagonal entry of R into `log_diag` when given.
pub fn mgs(frame: &mut [f64], n: usize, k: usize, mut log_diag: Option<&mut [f64]>) {
    for j in 0..k {
        for i in 0..j {
            let (head, tail) = frame.split_at_mut(j * n);
            let qi = &head[i * n..(i + 1) * n];
            let vj = &mut tail[..n];
            let d: f64 = qi.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
            for (v, q) in vj.iter_mut().zip(qi) {
                *v -= d * q;
            }
        }
        let col = &mut frame[j * n..(j + 1) * n];
        let nrm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if let Some(ld) = log_diag.as_deref_mut() {
            ld[j] = nrm.ln();
        }
        if nrm > 0.0 {
            for v in col.iter_mut() {
                *v /= nrm;
            }
        }
    }
}

/// Exact determinant of an integer matrix (fraction-free elimination).
pub fn integer_det(n: usize, a: &[i64]) -> i128 {
    let mut m: Vec<i128> = a.iter().map(|&v| v as i128).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k * n + k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| m[i * n + k] != 0) else {
                return 0;
            };
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i * n + j] = (m[i * n + j] * m[k * n + k] - m[i * n + k] * m[k * n + j]) / prev;
            }
        }
        prev = m[k * n + k];
    }
    sign * m[n * n - 1]
}

/// Inverse of a matrix with determinant `det = ±1`, via cofactors.
pub fn integer_inverse_unimodular(n: usize, a: &[i64], det: i128) -> Vec<i64> {
    if n == 1 {
        return vec![(1 / det) as i64];
    }
    let mut inv = vec![0i64; n * n];
    let mut minor = vec![0i64; (n - 1) * (n - 1)];
    for i in 0..n {
        for j in 0..n {
            let mut idx = 0;
            for r in (0..n).filter(|&r| r != i) {
                for c in (0..n).filter(|&c| c != j) {
                    minor[idx] = a[r * n + c];
                    idx += 1;
                }
            }
            let cof = integer_det(n - 1, &minor) * if (i + j) % 2 == 0 { 1 } else { -1 };
            // adjugate is the transposed cofactor matrix
            inv[j * n + i] = (cof * det) as i64;
        }
    }
    inv
}

/// `inf` of `|Mv|/|v|` over the planar double cone `|v_2| <= a |v_1|`,
/// where `M` is 2x2 row-major. Closed form via the critical points of a
/// ratio of quadratics in the slope.
pub fn cone_conorm_2x2(m: &[f64; 4], aperture: f64) -> f64 {
    let (c1, c2) = ([m[0], m[2]], [m[1], m[3]]);
    let a = c2[0] * c2[0] + c2[1] * c2[1];
    let b = 2.0 * (c1[0] * c2[0] + c1[1] * c2[1]);
    let c = c1[0] * c1[0] + c1[1] * c1[1];
    let ratio = |n: f64| (a * n * n + b * n + c) / (1.0 + n * n);
    let mut best = ratio(aperture).min(ratio(-aperture));
    // stationary points solve -b/2 n^2 + (a - c) n + b/2 = 0
    let (qa, qb, qc) = (-0.5 * b, a - c, 0.5 * b);
    let mut roots = Vec::with_capacity(2);
    if qa.abs() < 1e-300 {
        if qb.abs() > 1e-300 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * s);
            roots.push(q / qa);
            if q != 0.0 {
                roots.push(qc / q);
            }
        }
    }
    for n in roots {
        if n.abs() <= aperture {
            best = best.min(ratio(n));
        }
    }
    best.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_inverse() {
        assert_eq!(integer_det(2, &[2, 1, 1, 1]), 1);
        assert_eq!(integer_det(3, &[0, 1, 0, 1, 0, 0, 0, 0, 1]), -1);
        assert_eq!(integer_inverse_unimodular(2, &[2, 1, 1, 1], 1), vec![1, -1, -1, 2]);
        assert_eq!(integer_inverse_unimodular(3, &[0, 1, 0, 1, 0, 0, 0, 0, 1], -1), vec![0, 1, 0, 1, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn scaled_power_matches_direct() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let p = scaled_power(&m, 10).to_matrix();
        // A^10 = [[F21, F20], [F20, F19]]
        assert!((p[(0, 0)] - 10946.0).abs() < 1e-6);
        assert!((p[(0, 1)] - 6765.0).abs() < 1e-6);
        let q = scaled_power(&m, -3).to_matrix() * scaled_power(&m, 3).to_matrix();
        assert!((q - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn cone_conorm_matches_brute_force() {
        let m = [3.0, -1.0, 1.0, 0.0];
        let ap = 0.7;
        let mut brute = f64::INFINITY;
        for i in 0..=200_000 {
            let n = -ap + 2.0 * ap * i as f64 / 200_000.0;
            let v = [m[0] + m[1] * n, m[2] + m[3] * n];
            brute = brute.min((v[0] * v[0] + v[1] * v[1]).sqrt() / (1.0 + n * n).sqrt());
        }
        assert!((cone_conorm_2x2(&m, ap) - brute).abs() < 1e-9);
    }

    #[test]
    fn mgs_orthonormal() {
        let mut f = vec![1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let mut ld = vec![0.0; 2];
        mgs(&mut f, 3, 2, Some(&mut ld));
        let d: f64 = (0..3).map(|i| f[i] * f[3 + i]).sum();
        assert!(d.abs() < 1e-15);
        assert!((ld[0] - 2f64.sqrt().ln()).abs() < 1e-15);
    }
}
