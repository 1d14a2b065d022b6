use super::{sin_diff, Block, BlockStructure, FiberMap, NormBounds};

/// `p = T_τ ∘ R ∘ J` on `T^4`, coordinates `(x, y, z, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledP {
    pub r: f64,
    pub k: f64,
    pub tau: f64,
}

impl CoupledP {
    pub fn new(r: f64, tau: f64) -> Self {
        CoupledP { r, k: r.floor(), tau }
    }

    /// `J(x,y,z,w) = (x, 2x - y + k sin x, z, 2z - w + k sin z)`
    pub fn j_map(&self, v: [f64; 4]) -> [f64; 4] {
        let k = self.k;
        [v[0], 2.0 * v[0] - v[1] + k * v[0].sin(), v[2], 2.0 * v[2] - v[3] + k * v[2].sin()]
    }

    /// `R(x,y,z,w) = (y,x,w,z)`
    pub fn r_map(v: [f64; 4]) -> [f64; 4] {
        [v[1], v[0], v[3], v[2]]
    }

    /// `T_t(v) = v + t (sin(y + w), 0, sin(y + w), 0)`
    pub fn t_map(t: f64, v: [f64; 4]) -> [f64; 4] {
        let s = t * (v[1] + v[3]).sin();
        [v[0] + s, v[1], v[2] + s, v[3]]
    }
}

impl FiberMap for CoupledP {
    fn name(&self) -> String {
        format!("coupled-p(r={}, tau={})", self.r, self.tau)
    }

    fn dim(&self) -> usize {
        4
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::new(vec![0, 1]), Block::new(vec![2, 3])]
    }

    #[inline]
    fn eval_lift(&self, v: &[f64], out: &mut [f64]) {
        let (x, y, z, w) = (v[0], v[1], v[2], v[3]);
        let s = self.tau * (x + z).sin();
        out[0] = 2.0 * x - y + self.k * x.sin() + s;
        out[1] = x;
        out[2] = 2.0 * z - w + self.k * z.sin() + s;
        out[3] = z;
    }

    #[inline]
    fn inverse_lift(&self, v: &[f64], out: &mut [f64]) {
        // J ∘ R ∘ T_{-τ}
        let (x, y, z, w) = (v[0], v[1], v[2], v[3]);
        let s = self.tau * (y + w).sin();
        out[0] = y;
        out[1] = 2.0 * y - x + s + self.k * y.sin();
        out[2] = w;
        out[3] = 2.0 * w - z + s + self.k * w.sin();
    }

    #[inline]
    fn jacobian(&self, v: &[f64], out: &mut [f64]) {
        let c = self.tau * (v[0] + v[2]).cos();
        out.copy_from_slice(&[
            2.0 + self.k * v[0].cos() + c, -1.0, c, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            c, 0.0, 2.0 + self.k * v[2].cos() + c, -1.0, //
            0.0, 0.0, 1.0, 0.0,
        ]);
    }

    fn eval_offset(&self, v: &[f64], h: &[f64], out: &mut [f64]) {
        let ds = self.tau * sin_diff(v[0] + v[2], h[0] + h[2]);
        out[0] = 2.0 * h[0] - h[1] + self.k * sin_diff(v[0], h[0]) + ds;
        out[1] = h[0];
        out[2] = 2.0 * h[2] - h[3] + self.k * sin_diff(v[2], h[2]) + ds;
        out[3] = h[2];
    }

    fn norm_bounds(&self) -> NormBounds {
        let (k, t) = (self.k.abs(), self.tau.abs());
        NormBounds { d: k + 3.0 + 2.0 * t, d_inv: k + 3.0 + 2.0 * t, d2: k + 4.0 * t, d2_inv: k + 4.0 * t }
    }

    fn depends_on(&self, block: usize) -> Vec<usize> {
        match (self.tau == 0.0, block) {
            (true, 0) => vec![0],
            (true, _) => vec![2],
            _ => vec![0, 2],
        }
    }

    fn block_structure(&self) -> BlockStructure {
        if self.tau == 0.0 {
            BlockStructure::Diagonal
        } else {
            BlockStructure::Coupled
        }
    }

    fn amplitude(&self, _block: usize) -> f64 {
        self.k.abs()
    }
}

/// `q(x,y,z,w) = (s(x,y), s(z,w) + (x, 0))`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledQ {
    pub r: f64,
    pub k: f64,
}

impl CoupledQ {
    pub fn new(r: f64) -> Self {
        CoupledQ { r, k: r.floor() }
    }

    pub fn j_map(&self, v: [f64; 4]) -> [f64; 4] {
        CoupledP::new(self.r, 0.0).j_map(v)
    }

    /// Translation closing the factorisation `q = E ∘ R ∘ J`: after `R ∘ J`
    /// the old `x` sits in the second slot, so `E` adds it to the third.
    pub fn e_map(v: [f64; 4]) -> [f64; 4] {
        [v[0], v[1], v[2] + v[1], v[3]]
    }
}

impl FiberMap for CoupledQ {
    fn name(&self) -> String {
        format!("coupled-q(r={})", self.r)
    }

    fn dim(&self) -> usize {
        4
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::new(vec![0, 1]), Block::new(vec![2, 3])]
    }

    #[inline]
    fn eval_lift(&self, v: &[f64], out: &mut [f64]) {
        let (x, y, z, w) = (v[0], v[1], v[2], v[3]);
        out[0] = 2.0 * x - y + self.k * x.sin();
        out[1] = x;
        out[2] = 2.0 * z - w + self.k * z.sin() + x;
        out[3] = z;
    }

    #[inline]
    fn inverse_lift(&self, v: &[f64], out: &mut [f64]) {
        let (x, y, z, w) = (v[0], v[1], v[2], v[3]);
        out[0] = y;
        out[1] = 2.0 * y - x + self.k * y.sin();
        out[2] = w;
        out[3] = 2.0 * w - z + self.k * w.sin() + y;
    }

    #[inline]
    fn jacobian(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[
            2.0 + self.k * v[0].cos(), -1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            1.0, 0.0, 2.0 + self.k * v[2].cos(), -1.0, //
            0.0, 0.0, 1.0, 0.0,
        ]);
    }

    fn eval_offset(&self, v: &[f64], h: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * h[0] - h[1] + self.k * sin_diff(v[0], h[0]);
        out[1] = h[0];
        out[2] = 2.0 * h[2] - h[3] + self.k * sin_diff(v[2], h[2]) + h[0];
        out[3] = h[2];
    }

    fn norm_bounds(&self) -> NormBounds {
        let k = self.k.abs();
        NormBounds { d: k + 4.0, d_inv: k + 4.0, d2: k, d2_inv: k }
    }

    fn depends_on(&self, block: usize) -> Vec<usize> {
        vec![if block == 0 { 0 } else { 2 }]
    }

    fn block_structure(&self) -> BlockStructure {
        BlockStructure::LowerTriangular
    }

    fn amplitude(&self, _block: usize) -> f64 {
        self.k.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{eval, inverse, jacobian_matrix, StandardMap};
    use crate::torus::{wrap_signed, TorusVector};

    fn close4(a: [f64; 4], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| wrap_signed(x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn p_oracle_and_factorisation() {
        let p = CoupledP::new(10.0, 0.1);
        let v = [1.0, 0.0, 2.0, 0.0];
        let mut out = [0.0; 4];
        p.eval_lift(&v, &mut out);
        // 2 + 10 sin 1 + 0.1 sin 3
        let first = 2.0 + 10.0 * 1f64.sin() + 0.1 * 3f64.sin();
        assert!((out[0] - first).abs() < 1e-14);
        assert!((first.rem_euclid(std::f64::consts::TAU) - 4.145636541705).abs() < 1e-11);
        assert!((first.rem_euclid(std::f64::consts::TAU) - 4.14567).abs() < 1e-4);
        assert_eq!(out[3], 2.0);
        let f = CoupledP::t_map(0.1, CoupledP::r_map(p.j_map(v)));
        assert!(close4(f, &out) < 1e-12);
    }

    #[test]
    fn p_tau_zero_is_product() {
        let p = CoupledP::new(50.0, 0.0);
        let s = StandardMap::new(50.0);
        let v = [0.4, 1.1, 2.5, 5.9];
        let mut a = [0.0; 4];
        p.eval_lift(&v, &mut a);
        let mut b = [0.0; 2];
        s.eval_lift(&v[..2], &mut b);
        assert_eq!(&a[..2], &b);
        s.eval_lift(&v[2..], &mut b);
        assert_eq!(&a[2..], &b);
    }

    #[test]
    fn q_oracle_factorisation_and_structure() {
        let q = CoupledQ::new(10.0);
        let v = [1.0, 0.5, 2.0, 0.3];
        let mut out = [0.0; 4];
        q.eval_lift(&v, &mut out);
        let mut s2 = [0.0; 2];
        StandardMap::new(10.0).eval_lift(&v[2..], &mut s2);
        assert!((out[2] - (s2[0] + 1.0)).abs() < 1e-14);
        let f = CoupledQ::e_map(CoupledP::r_map(q.j_map(v)));
        assert!(close4(f, &out) < 1e-12);
        let j = jacobian_matrix(&q, &v);
        assert_eq!(j[(2, 0)], 1.0);
        assert_eq!(j[(2, 1)], 0.0);
        assert_eq!(j[(3, 0)], 0.0);
        assert_eq!(j[(0, 2)], 0.0);
    }

    #[test]
    fn inverses() {
        let p = CoupledP::new(200.0, 1e-3);
        let q = CoupledQ::new(200.0);
        let pt = TorusVector::reduce(&[0.1, 2.0, 4.0, 6.0]).unwrap();
        assert!(inverse(&p, &eval(&p, &pt).unwrap()).unwrap().distance(&pt) < 1e-10);
        assert!(inverse(&q, &eval(&q, &pt).unwrap()).unwrap().distance(&pt) < 1e-10);
    }

    #[test]
    fn j_and_r_are_involutions() {
        let p = CoupledP::new(10.0, 0.0);
        let v = [0.3, 1.7, 4.2, 2.2];
        assert!(close4(p.j_map(p.j_map(v)), &v) < 1e-12);
        assert_eq!(CoupledP::r_map(CoupledP::r_map(v)), v);
    }
}
