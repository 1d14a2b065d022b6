//! Cones `C_E(α) = {v : |v_F| < α |v_E|}`, their images under linear maps,
//! and critical regions on the designated coordinate of a block.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug)]
pub struct Cone {
    axis: DMatrix<f64>,
    complement: DMatrix<f64>,
    pub aperture: f64,
}

impl Cone {
    /// `axis` and `complement` must be orthonormal and span the space together.
    pub fn new(axis: DMatrix<f64>, complement: DMatrix<f64>, aperture: f64) -> Result<Self> {
        let n = axis.nrows();
        if complement.nrows() != n || axis.ncols() + complement.ncols() != n || axis.ncols() == 0 {
            return Err(Error::Dimension("cone bases must split the space".into()));
        }
        if !(aperture > 0.0) || !aperture.is_finite() {
            return Err(Error::InvalidParameter(format!("cone aperture {aperture}")));
        }
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((0, 0), (n, axis.ncols())).copy_from(&axis);
        full.view_mut((0, axis.ncols()), (n, complement.ncols())).copy_from(&complement);
        if (full.transpose() * &full - DMatrix::identity(n, n)).norm() > 1e-9 {
            return Err(Error::InvalidParameter("cone bases are not orthonormal".into()));
        }
        Ok(Cone { axis, complement, aperture })
    }

    /// Cone around the span of the listed coordinate axes of `R^n`.
    pub fn axis_aligned(n: usize, axis_coords: &[usize], aperture: f64) -> Result<Self> {
        let comp: Vec<usize> = (0..n).filter(|i| !axis_coords.contains(i)).collect();
        let pick = |cs: &[usize]| DMatrix::from_fn(n, cs.len(), |i, j| if cs[j] == i { 1.0 } else { 0.0 });
        Self::new(pick(axis_coords), pick(&comp), aperture)
    }

    /// Planar cone on the first axis with aperture `r^{1/4}`.
    pub fn delta(r: f64) -> Result<Self> {
        Self::axis_aligned(2, &[0], r.powf(0.25))
    }

    pub fn dim(&self) -> usize {
        self.axis.nrows()
    }

    pub fn axis_dim(&self) -> usize {
        self.axis.ncols()
    }

    /// `C_F(1/α)`, whose closure is the closure of the complement.
    pub fn complement(&self) -> Cone {
        Cone { axis: self.complement.clone(), complement: self.axis.clone(), aperture: 1.0 / self.aperture }
    }

    pub fn axis_basis(&self) -> &DMatrix<f64> {
        &self.axis
    }

    pub fn complement_basis(&self) -> &DMatrix<f64> {
        &self.complement
    }

    fn parts(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (self.axis.transpose() * v, self.complement.transpose() * v)
    }

    /// `(α|v_E| - |v_F|) / |v|`; positive inside.
    pub fn slack(&self, v: &DVector<f64>) -> f64 {
        let (e, f) = self.parts(v);
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        (self.aperture * e.norm() - f.norm()) / n
    }

    /// The zero vector always belongs to the cone.
    pub fn contains(&self, v: &DVector<f64>, closed: bool) -> bool {
        if v.iter().all(|&c| c == 0.0) {
            return true;
        }
        let (e, f) = self.parts(v);
        if closed {
            f.norm() <= self.aperture * e.norm()
        } else {
            f.norm() < self.aperture * e.norm()
        }
    }

    /// The two boundary rays of a planar cone.
    pub fn boundary_rays(&self) -> Option<[DVector<f64>; 2]> {
        if self.dim() != 2 {
            return None;
        }
        let a = self.axis.column(0).into_owned();
        let c = self.complement.column(0).into_owned();
        Some([&a + &c * self.aperture, &a - &c * self.aperture])
    }

    /// Deterministic sample of unit vectors in the closed cone.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, m) = (self.axis.ncols(), self.complement.ncols());
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let e = unit_gaussian(&mut rng, k);
            let f = unit_gaussian(&mut rng, m);
            // every fourth sample on the boundary, rest spread over radii
            let rho = if i % 4 == 0 { self.aperture } else { self.aperture * rng.random::<f64>().sqrt() };
            let v = &self.axis * e + &self.complement * f * rho;
            let nv = v.norm();
            out.push(v / nv);
        }
        out
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    if k == 0 {
        return DVector::zeros(0);
    }
    loop {
        // Box-Muller pairs
        let v = DVector::from_fn(k, |_, _| {
            let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
            (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
        });
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeImage {
    pub contained: bool,
    /// Smallest target slack over the tested rays (negative when violated).
    pub margin: f64,
    /// True when decided from the boundary rays (planar case).
    pub exact: bool,
    pub tested: usize,
}

/// Decide `M(source) ⊂ target`. Planar cones are decided exactly from the
/// two boundary rays; otherwise by deterministic sampling.
pub fn cone_image(m: &DMatrix<f64>, source: &Cone, target: &Cone, closed: bool) -> ConeImage {
    if let Some([p, q]) = source.boundary_rays() {
        if target.dim() == 2 {
            let (wp, wq) = (m * p, m * q);
            let (sp, sq) = (target.slack(&wp), target.slack(&wq));
            let ap = (target.axis.transpose() * &wp)[0];
            let aq = (target.axis.transpose() * &wq)[0];
            let same_side = ap * aq > 0.0 || (closed && (ap == 0.0 || aq == 0.0));
            let inside = |s: f64| if closed { s >= -1e-15 } else { s > 0.0 };
            let margin = if same_side {
                sp.min(sq)
            } else {
                -(ap.abs() / wp.norm()).min(aq.abs() / wq.norm()) - f64::EPSILON
            };
            return ConeImage { contained: same_side && inside(sp) && inside(sq), margin, exact: true, tested: 2 };
        }
    }
    let samples = source.sample(4096, 0x5eed);
    let mut margin = f64::INFINITY;
    let mut ok = true;
    for v in &samples {
        let w = m * v;
        let s = target.slack(&w);
        margin = margin.min(s);
        if !target.contains(&w, closed) {
            ok = false;
        }
    }
    ConeImage { contained: ok, margin, exact: false, tested: samples.len() }
}

/// `m(M|C) = inf_{v ∈ C} |Mv|/|v|`.
pub fn cone_conorm(m: &DMatrix<f64>, cone: &Cone) -> f64 {
    if cone.dim() == 2 && m.nrows() == 2 && m.ncols() == 2 {
        // rotate into (axis, complement) coordinates
        let mut basis = DMatrix::zeros(2, 2);
        basis.column_mut(0).copy_from(&cone.axis.column(0));
        basis.column_mut(1).copy_from(&cone.complement.column(0));
        let mb = m * basis;
        return linalg::cone_conorm_2x2(&[mb[(0, 0)], mb[(0, 1)], mb[(1, 0)], mb[(1, 1)]], cone.aperture);
    }
    cone.sample(4096, 0xc0de).iter().map(|v| (m * v).norm()).fold(f64::INFINITY, f64::min)
}

/// Closed arc `[lo, hi]` of the circle with `0 <= lo <= hi <= 2π`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub block: usize,
    /// Fiber coordinate the bands live on.
    pub coordinate: usize,
    pub bands: Vec<Band>,
}

impl CriticalRegion {
    pub fn length(&self) -> f64 {
        self.bands.iter().map(Band::len).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let x = crate::torus::wrap(x);
        self.bands.iter().any(|b| b.lo <= x && x <= b.hi)
    }

    /// Band endpoints, useful as grid points for infima off the region.
    pub fn endpoints(&self) -> Vec<f64> {
        self.bands.iter().flat_map(|b| [b.lo, b.hi]).filter(|v| *v > 0.0 && *v < TAU).collect()
    }

    pub fn with_block(mut self, block: usize, coordinate: usize) -> Self {
        self.block = block;
        self.coordinate = coordinate;
        self
    }
}

/// `{x : |cos x| <= 1/√r}` as two closed bands.
pub fn standard_critical_region(r: f64) -> Result<CriticalRegion> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("critical region needs r > 0, got {r}")));
    }
    let c = 1.0 / r.sqrt();
    if c >= 1.0 {
        return Ok(CriticalRegion { block: 0, coordinate: 0, bands: vec![Band { lo: 0.0, hi: TAU }] });
    }
    let b1 = c.acos();
    let b2 = (-c).acos();
    Ok(CriticalRegion {
        block: 0,
        coordinate: 0,
        bands: vec![Band { lo: b1, hi: b2 }, Band { lo: TAU - b2, hi: TAU - b1 }],
    })
}

/// Longest run of `true` in a circular mask: `(start, len)`. A full mask
/// returns `(0, n)`.
pub fn longest_circular_run(mask: &[bool]) -> (usize, usize) {
    let n = mask.len();
    if n == 0 {
        return (0, 0);
    }
    if mask.iter().all(|&b| b) {
        return (0, n);
    }
    let first_false = mask.iter().position(|&b| !b).unwrap();
    let mut best = (0, 0);
    let mut run_start = 0;
    let mut run = 0;
    for step in 1..=n {
        let i = (first_false + step) % n;
        if mask[i] {
            if run == 0 {
                run_start = i;
            }
            run += 1;
            if run > best.1 {
                best = (run_start, run);
            }
        } else {
            run = 0;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_region_length_oracle() {
        let c = standard_critical_region(100.0).unwrap();
        assert!((c.length() - 0.40067).abs() < 1e-5);
        // independent: 2 (acos(-0.1) - acos(0.1)) = 4 asin(0.1)
        assert!((c.length() - 4.0 * 0.1f64.asin()).abs() < 1e-14);
        for r in [1e2, 1e4, 1e6] {
            assert!(standard_critical_region(r).unwrap().length() <= 8.0 / r.sqrt());
        }
        assert!(c.contains(std::f64::consts::FRAC_PI_2));
        assert!(!c.contains(0.0));
    }

    #[test]
    fn small_r_covers_circle() {
        assert!((standard_critical_region(0.5).unwrap().length() - TAU).abs() < 1e-15);
        assert!(standard_critical_region(0.0).is_err());
    }

    #[test]
    fn membership_and_complement() {
        let c = Cone::delta(16.0).unwrap();
        assert_eq!(c.aperture, 2.0);
        assert!(c.contains(&DVector::from_vec(vec![1.0, 1.9]), false));
        assert!(!c.contains(&DVector::from_vec(vec![1.0, 2.0]), false));
        assert!(c.contains(&DVector::from_vec(vec![1.0, 2.0]), true));
        let d = c.complement();
        assert!(d.contains(&DVector::from_vec(vec![1.0, 2.1]), false));
        assert_eq!(d.aperture, 0.5);
    }

    #[test]
    fn identity_image_margin_zero() {
        let c = Cone::delta(16.0).unwrap();
        let img = cone_image(&DMatrix::identity(2, 2), &c, &c, true);
        assert!(img.contained && img.margin.abs() < 1e-15);
        assert!(!cone_image(&DMatrix::identity(2, 2), &c, &c, false).contained);
    }

    #[test]
    fn rotation_leaves_cone() {
        let c = Cone::delta(1.0).unwrap();
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(!cone_image(&rot, &c, &c, true).contained);
    }

    #[test]
    fn circular_runs() {
        assert_eq!(longest_circular_run(&[true, false, true, true, false, true, true]), (5, 3));
        assert_eq!(longest_circular_run(&[true, false, true, true, false, true]), (2, 2));
        assert_eq!(longest_circular_run(&[true; 4]), (0, 4));
        assert_eq!(longest_circular_run(&[false; 3]), (0, 0));
    }
}
