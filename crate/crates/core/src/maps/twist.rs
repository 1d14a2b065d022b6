use serde::{Deserialize, Serialize};

use super::{sin_diff, Block, BlockStructure, FiberMap, NormBounds};

/// `a cos(k·q + phase)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub amplitude: f64,
    pub wavevector: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierPotential {
    pub dim: usize,
    pub terms: Vec<FourierTerm>,
}

impl FourierPotential {
    /// `V = t1 cos x + t2 cos y + t3 cos(x + y)`
    pub fn froeschle(t1: f64, t2: f64, t3: f64) -> Self {
        let term = |a, k: Vec<i32>| FourierTerm { amplitude: a, wavevector: k, phase: 0.0 };
        FourierPotential { dim: 2, terms: vec![term(t1, vec![1, 0]), term(t2, vec![0, 1]), term(t3, vec![1, 1])] }
    }

    pub fn cosine(a: f64) -> Self {
        FourierPotential { dim: 1, terms: vec![FourierTerm { amplitude: a, wavevector: vec![1], phase: 0.0 }] }
    }

    fn angle(&self, t: &FourierTerm, q: &[f64]) -> f64 {
        t.wavevector.iter().zip(q).map(|(&k, &x)| k as f64 * x).sum::<f64>() + t.phase
    }

    pub fn value(&self, q: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.amplitude * self.angle(t, q).cos()).sum()
    }

    pub fn gradient(&self, q: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let s = -t.amplitude * self.angle(t, q).sin();
            for (o, &k) in out.iter_mut().zip(&t.wavevector) {
                *o += s * k as f64;
            }
        }
    }

    /// Row-major Hessian.
    pub fn hessian(&self, q: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let c = -t.amplitude * self.angle(t, q).cos();
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += c * (t.wavevector[i] * t.wavevector[j]) as f64;
                }
            }
        }
    }

    fn l1(k: &[i32]) -> f64 {
        k.iter().map(|v| v.unsigned_abs() as f64).sum()
    }
}

/// Twist map `S_V(q, p) = (2q - p + ∇V(q), q)` on `T^{2d}`, coordinates
/// ordered `(q_1..q_d, p_1..p_d)`. Block `i` is `(q_i, p_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwistMap {
    pub potential: FourierPotential,
    label: String,
}

impl TwistMap {
    pub fn new(potential: FourierPotential) -> Self {
        TwistMap { potential, label: "twist".into() }
    }

    pub fn froeschle(t1: f64, t2: f64, t3: f64) -> Self {
        TwistMap { potential: FourierPotential::froeschle(t1, t2, t3), label: format!("froeschle({t1},{t2},{t3})") }
    }

    fn d(&self) -> usize {
        self.potential.dim
    }
}

impl FiberMap for TwistMap {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn dim(&self) -> usize {
        2 * self.d()
    }

    fn blocks(&self) -> Vec<Block> {
        let d = self.d();
        (0..d).map(|i| Block::new(vec![i, d + i])).collect()
    }

    fn eval_lift(&self, v: &[f64], out: &mut [f64]) {
        let d = self.d();
        let (q, p) = v.split_at(d);
        let (oq, op) = out.split_at_mut(d);
        self.potential.gradient(q, oq);
        for i in 0..d {
            oq[i] += 2.0 * q[i] - p[i];
            op[i] = q[i];
        }
    }

    fn inverse_lift(&self, v: &[f64], out: &mut [f64]) {
        let d = self.d();
        let (q, p) = v.split_at(d);
        let (oq, op) = out.split_at_mut(d);
        self.potential.gradient(p, op);
        for i in 0..d {
            oq[i] = p[i];
            op[i] += 2.0 * p[i] - q[i];
        }
    }

    fn jacobian(&self, v: &[f64], out: &mut [f64]) {
        let d = self.d();
        let n = 2 * d;
        let mut h = vec![0.0; d * d];
        self.potential.hessian(&v[..d], &mut h);
        out.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..d {
            for j in 0..d {
                out[i * n + j] = h[i * d + j] + if i == j { 2.0 } else { 0.0 };
            }
            out[i * n + d + i] = -1.0;
            out[(d + i) * n + i] = 1.0;
        }
    }

    fn eval_offset(&self, v: &[f64], h: &[f64], out: &mut [f64]) {
        let d = self.d();
        for i in 0..d {
            out[i] = 2.0 * h[i] - h[d + i];
            out[d + i] = h[i];
        }
        for t in &self.potential.terms {
            let th = self.potential.angle(t, &v[..d]);
            let dh: f64 = t.wavevector.iter().zip(&h[..d]).map(|(&k, &x)| k as f64 * x).sum();
            let s = -t.amplitude * sin_diff(th, dh);
            for (i, &k) in t.wavevector.iter().enumerate() {
                out[i] += s * k as f64;
            }
        }
    }

    fn norm_bounds(&self) -> NormBounds {
        let h: f64 = self.potential.terms.iter().map(|t| t.amplitude.abs() * FourierPotential::l1(&t.wavevector).powi(2)).sum();
        let h3: f64 = self.potential.terms.iter().map(|t| t.amplitude.abs() * FourierPotential::l1(&t.wavevector).powi(3)).sum();
        NormBounds { d: 3.0 + h, d_inv: 3.0 + h, d2: h3, d2_inv: h3 }
    }

    fn depends_on(&self, block: usize) -> Vec<usize> {
        let mut c: Vec<usize> = vec![block];
        for t in &self.potential.terms {
            if t.amplitude != 0.0 && t.wavevector[block] != 0 {
                for (j, &k) in t.wavevector.iter().enumerate() {
                    if k != 0 && !c.contains(&j) {
                        c.push(j);
                    }
                }
            }
        }
        c.sort_unstable();
        c
    }

    fn block_structure(&self) -> BlockStructure {
        let mixed = self
            .potential
            .terms
            .iter()
            .any(|t| t.amplitude != 0.0 && t.wavevector.iter().filter(|&&k| k != 0).count() > 1);
        if mixed {
            BlockStructure::Coupled
        } else {
            BlockStructure::Diagonal
        }
    }

    fn amplitude(&self, block: usize) -> f64 {
        self.potential
            .terms
            .iter()
            .filter(|t| t.wavevector.iter().enumerate().all(|(j, &k)| (j == block) == (k != 0)))
            .map(|t| t.amplitude.abs() * (t.wavevector[block] as f64).powi(2))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{eval, inverse, jacobian_matrix, StandardMap};
    use crate::torus::TorusVector;

    #[test]
    fn froeschle_oracle() {
        let f = TwistMap::froeschle(5.0, 5.0, 0.1);
        let v = eval(&f, &TorusVector::reduce(&[1.0, 1.0, 0.0, 0.0]).unwrap()).unwrap();
        // 2 - 5 sin 1 - 0.1 sin 2, mod 2π
        let expect = (2.0 - 5.0 * 1f64.sin() - 0.1 * 2f64.sin()).rem_euclid(std::f64::consts::TAU);
        assert!((v.coords()[0] - expect).abs() < 1e-12);
        assert!((expect - 3.98490).abs() < 1e-5);
        assert_eq!(v.coords()[2], 1.0);
    }

    #[test]
    fn origin_q_maps_to_minus_p() {
        let f = TwistMap::froeschle(5.0, 5.0, 0.1);
        let v = eval(&f, &TorusVector::reduce(&[0.0, 0.0, 1.0, 2.0]).unwrap()).unwrap();
        assert!((v.coords()[0] - (std::f64::consts::TAU - 1.0)).abs() < 1e-12);
        assert!((v.coords()[1] - (std::f64::consts::TAU - 2.0)).abs() < 1e-12);
        assert_eq!(&v.coords()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn cosine_potential_is_signed_standard_map() {
        let t = TwistMap::new(FourierPotential::cosine(7.5));
        let s = StandardMap::with_kick(-7.5);
        let p = TorusVector::reduce(&[0.7, 2.9]).unwrap();
        assert!(eval(&t, &p).unwrap().distance(&eval(&s, &p).unwrap()) < 1e-12);
    }

    #[test]
    fn symplectic_and_invertible() {
        let f = TwistMap::froeschle(5.0, 5.0, 0.1);
        let y = [0.3, 2.2, 4.0, 1.0];
        assert!((jacobian_matrix(&f, &y).determinant() - 1.0).abs() < 1e-10);
        let p = TorusVector::reduce(&y).unwrap();
        assert!(inverse(&f, &eval(&f, &p).unwrap()).unwrap().distance(&p) < 1e-12);
    }

    #[test]
    fn structure_flags() {
        let f = TwistMap::froeschle(5.0, 5.0, 0.1);
        assert_eq!(f.block_structure(), BlockStructure::Coupled);
        assert_eq!(f.depends_on(0), vec![0, 1]);
        assert_eq!(f.amplitude(0), 5.0);
        let g = TwistMap::froeschle(5.0, 5.0, 0.0);
        assert_eq!(g.block_structure(), BlockStructure::Diagonal);
    }
}
