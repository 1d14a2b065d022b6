use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CoupledP, CoupledQ, FiberMap, KickProjection, SkewProduct};
use crate::error::Result;
use crate::torus::{ToralAutomorphism, TorusVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConjugacyFamily {
    /// fiber map `p`, conjugacy `T_τ ∘ R`
    P,
    /// fiber map `q`, conjugacy `R`
    Q,
    /// skew product over `B` with fiber `p`
    G,
    /// skew product over `B` with fiber `q`
    H,
}

/// A conjugacy `Γ` together with the closed form of `Γ^{-1} ∘ F^{-1} ∘ Γ`.
#[derive(Clone, Debug)]
pub struct Reversibility {
    pub family: ConjugacyFamily,
    pub r: f64,
    pub tau: f64,
    p: CoupledP,
    q: CoupledQ,
    skew: Option<SkewProduct>,
}

impl Reversibility {
    pub fn new(family: ConjugacyFamily, r: f64, tau: f64) -> Result<Self> {
        let p = CoupledP::new(r, tau);
        let q = CoupledQ::new(r);
        let skew = match family {
            ConjugacyFamily::G | ConjugacyFamily::H => {
                let k = r.floor().max(1.0) as usize;
                let fiber: Arc<dyn FiberMap> = if family == ConjugacyFamily::G { Arc::new(p.clone()) } else { Arc::new(q.clone()) };
                Some(SkewProduct::new(
                    ToralAutomorphism::block_upper([2, 1, 1, 1])?,
                    2 * k,
                    k,
                    KickProjection::select(4, 4, &[(0, 0), (2, 2)]),
                    fiber,
                )?)
            }
            _ => None,
        };
        Ok(Reversibility { family, r, tau, p, q, skew })
    }

    pub fn dim(&self) -> usize {
        if self.skew.is_some() {
            8
        } else {
            4
        }
    }

    pub fn skew(&self) -> Option<&SkewProduct> {
        self.skew.as_ref()
    }

    fn fiber_gamma(&self, v: [f64; 4]) -> [f64; 4] {
        match self.family {
            ConjugacyFamily::P | ConjugacyFamily::G => CoupledP::t_map(self.tau, CoupledP::r_map(v)),
            _ => CoupledP::r_map(v),
        }
    }

    fn fiber_gamma_inverse(&self, v: [f64; 4]) -> [f64; 4] {
        match self.family {
            ConjugacyFamily::P | ConjugacyFamily::G => CoupledP::r_map(CoupledP::t_map(-self.tau, v)),
            _ => CoupledP::r_map(v),
        }
    }

    fn split(&self, v: &[f64]) -> (Vec<f64>, [f64; 4]) {
        let n = v.len();
        (v[..n - 4].to_vec(), [v[n - 4], v[n - 3], v[n - 2], v[n - 1]])
    }

    pub fn gamma(&self, v: &[f64]) -> Vec<f64> {
        let (mut m, f) = self.split(v);
        m.extend(self.fiber_gamma(f));
        m
    }

    pub fn gamma_inverse(&self, v: &[f64]) -> Vec<f64> {
        let (mut m, f) = self.split(v);
        m.extend(self.fiber_gamma_inverse(f));
        m
    }

    /// `Γ^{-1} ∘ F^{-1} ∘ Γ` by composition.
    pub fn conjugated_inverse(&self, v: &[f64]) -> Result<TorusVector> {
        let g = TorusVector::reduce(&self.gamma(v))?;
        let finv = match &self.skew {
            Some(f) => f.inverse(&g)?,
            None => match self.family {
                ConjugacyFamily::P => super::inverse(&self.p, &g)?,
                _ => super::inverse(&self.q, &g)?,
            },
        };
        TorusVector::reduce(&self.gamma_inverse(finv.coords()))
    }

    /// Closed form of the conjugated inverse.
    pub fn closed_form(&self, v: &[f64]) -> Result<TorusVector> {
        let k = self.p.k;
        let (m, f) = self.split(v);
        let (x, y, z, w) = (f[0], f[1], f[2], f[3]);
        let (mp, a, b) = match &self.skew {
            Some(s) => {
                let mut mp = m.clone();
                let mut buf = vec![0.0; 4];
                s.base.iterate_inverse_in_place(s.base_iterates, &mut mp, &mut buf);
                let mut kick = vec![0.0; 4];
                s.kick(&mp, &mut kick);
                (mp, kick[0], kick[2])
            }
            None => (Vec::new(), 0.0, 0.0),
        };
        let fiber = match self.family {
            ConjugacyFamily::P | ConjugacyFamily::G => {
                // R ∘ T_{-τ} ∘ (J + kick in slots 2, 4)
                let u2 = 2.0 * x - y + k * x.sin() + a;
                let u4 = 2.0 * z - w + k * z.sin() + b;
                let s = self.tau * (u2 + u4).sin();
                [u2, x - s, u4, z - s]
            }
            ConjugacyFamily::Q | ConjugacyFamily::H => {
                // q itself plus the kick pulled back along B^{-L}
                [2.0 * x - y + k * x.sin() + a, x, 2.0 * z - w + k * z.sin() + b + x, z]
            }
        };
        let mut out = mp;
        out.extend(fiber);
        TorusVector::reduce(&out)
    }

    pub fn discrepancy(&self, v: &[f64]) -> Result<f64> {
        Ok(self.conjugated_inverse(v)?.distance(&self.closed_form(v)?))
    }

    /// Max discrepancy over `n` uniform points from `seed`.
    pub fn max_discrepancy(&self, n: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut v = vec![0.0; self.dim()];
        for _ in 0..n {
            v.iter_mut().for_each(|c| *c = rng.random_range(0.0..std::f64::consts::TAU));
            worst = worst.max(self.discrepancy(&v)?);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fiber_p_conjugacy() {
        let c = Reversibility::new(ConjugacyFamily::P, 10.0, 0.01).unwrap();
        assert!(c.max_discrepancy(2000, 1).unwrap() < 1e-10);
    }

    #[test]
    fn q_is_reversible() {
        let c = Reversibility::new(ConjugacyFamily::Q, 10.0, 0.0).unwrap();
        assert!(c.max_discrepancy(2000, 2).unwrap() < 1e-10);
    }

    #[test]
    fn skew_conjugacies() {
        for fam in [ConjugacyFamily::G, ConjugacyFamily::H] {
            let c = Reversibility::new(fam, 10.0, 0.01).unwrap();
            assert!(c.max_discrepancy(500, 3).unwrap() < 1e-9, "{fam:?}");
        }
    }

    #[test]
    fn gamma_round_trip() {
        let c = Reversibility::new(ConjugacyFamily::G, 10.0, 0.3).unwrap();
        let v = [0.1, 0.2, 0.3, 0.4, 1.0, 2.0, 3.0, 4.0];
        let back = c.gamma_inverse(&c.gamma(&v));
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-14));
    }
}
