//! Grid estimates of the constants β, ζ, K, ξ, Q and checks of the
//! cone, critical-set and coupling conditions.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{cone_conorm, cone_image, longest_circular_run, standard_critical_region, Cone, CriticalRegion};
use crate::error::{Error, Result};
use crate::linalg::{self, ScaledMatrix};
use crate::maps::{block_jacobian, FiberMap, SkewProduct};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridEstimate {
    pub value: f64,
    pub location: Vec<f64>,
    pub grid_n: usize,
    pub evaluations: usize,
}

/// `Δ_i`: planar cone on the designated axis of block `i` with aperture `k^{1/4}`.
pub fn delta_cone(map: &dyn FiberMap, block: usize) -> Result<Cone> {
    let b = &map.blocks()[block];
    let a = map.amplitude(block);
    if b.len() != 2 {
        return Cone::axis_aligned(b.len(), &[0], a.powf(0.25).max(f64::MIN_POSITIVE));
    }
    Cone::delta(a)
}

/// Critical bands `|cos x| <= 1/√k` on the designated coordinate of block `i`.
pub fn critical_region(map: &dyn FiberMap, block: usize) -> Result<CriticalRegion> {
    let b = &map.blocks()[block];
    Ok(standard_critical_region(map.amplitude(block))?.with_block(block, b.designated()))
}

struct Domain {
    coords: Vec<usize>,
    designated: Option<usize>,
    axes: Vec<Vec<f64>>,
}

impl Domain {
    fn new(map: &dyn FiberMap, block: usize, crit: Option<&CriticalRegion>, grid_n: usize) -> Result<Self> {
        let coords = map.depends_on(block);
        let designated = crit.map(|c| c.coordinate).filter(|c| coords.contains(c));
        let mut axes = Vec::with_capacity(coords.len());
        for &c in &coords {
            let mut ax: Vec<f64> = (0..grid_n).map(|j| TAU * j as f64 / grid_n as f64).collect();
            if Some(c) == designated {
                let cr = crit.unwrap();
                if cr.length() >= TAU {
                    return Err(Error::EmptyRegion("critical region covers the circle".into()));
                }
                ax.extend(cr.endpoints());
                ax.retain(|&x| !in_interior(cr, x));
                ax.sort_by(f64::total_cmp);
                if ax.is_empty() {
                    return Err(Error::EmptyRegion("critical region covers the circle".into()));
                }
            }
            axes.push(ax);
        }
        Ok(Domain { coords, designated, axes })
    }

    fn size(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    fn point(&self, mut idx: usize, d: usize) -> Vec<f64> {
        let mut y = vec![0.0; d];
        for (ax, &c) in self.axes.iter().zip(&self.coords) {
            y[c] = ax[idx % ax.len()];
            idx /= ax.len();
        }
        y
    }
}

fn in_interior(c: &CriticalRegion, x: f64) -> bool {
    let x = crate::torus::wrap(x);
    c.bands.iter().any(|b| b.lo < x && x < b.hi)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid minimum over the domain followed by coordinate-wise golden-section
/// refinement, kept out of the critical interior.
fn minimize(
    map: &dyn FiberMap,
    dom: &Domain,
    crit: Option<&CriticalRegion>,
    grid_n: usize,
    eval: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> GridEstimate {
    let d = map.dim();
    let n = dom.size();
    let vals: Vec<f64> = (0..n).into_par_iter().map(|i| eval(&dom.point(i, d))).collect();
    let (best_i, mut best) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let mut y = dom.point(best_i, d);
    let mut evaluations = n;
    let h = TAU / grid_n as f64;
    for _pass in 0..2 {
        for &c in &dom.coords {
            let x0 = y[c];
            let (mut a, mut b) = (x0 - h, x0 + h);
            if Some(c) == dom.designated {
                let cr = crit.unwrap();
                for band in &cr.bands {
                    for shift in [-TAU, 0.0, TAU] {
                        let (lo, hi) = (band.lo + shift, band.hi + shift);
                        if x0 <= lo && lo < b {
                            b = lo;
                        }
                        if x0 >= hi && hi > a {
                            a = hi;
                        }
                    }
                }
            }
            let f = |t: f64| {
                let mut z = y.clone();
                z[c] = t;
                eval(&z)
            };
            let (t, v) = golden_min(&f, a, b);
            evaluations += 82;
            let allowed = Some(c) != dom.designated || !in_interior(crit.unwrap(), t);
            if v < best && allowed {
                best = v;
                y[c] = crate::torus::wrap(t);
            }
        }
    }
    GridEstimate { value: best, location: y, grid_n, evaluations }
}

fn block_matrix(map: &dyn FiberMap, block: usize, y: &[f64]) -> DMatrix<f64> {
    let b = &map.blocks()[block];
    let d = map.dim();
    let s = b.len();
    let mut full = vec![0.0; d * d];
    let mut out = vec![0.0; s * s];
    block_jacobian(map, b, y, &mut full, &mut out);
    DMatrix::from_row_slice(s, s, &out)
}

/// `β_i = inf { m(d_y S_i | Δ_i) : y ∉ Crit }`.
pub fn estimate_beta(map: &dyn FiberMap, block: usize, cone: &Cone, crit: &CriticalRegion, grid_n: usize) -> Result<GridEstimate> {
    let dom = Domain::new(map, block, Some(crit), grid_n)?;
    let eval = |y: &[f64]| cone_conorm(&block_matrix(map, block, y), cone);
    Ok(minimize(map, &dom, Some(crit), grid_n, &eval))
}

/// `ζ_i = inf_y m(d_y S_i)`.
pub fn estimate_zeta(map: &dyn FiberMap, block: usize, grid_n: usize) -> Result<GridEstimate> {
    let dom = Domain::new(map, block, None, grid_n)?;
    let eval = |y: &[f64]| linalg::conorm(&block_matrix(map, block, y));
    Ok(minimize(map, &dom, None, grid_n, &eval))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
    /// Positive exactly when the clause passes.
    pub margin: f64,
}

impl Clause {
    /// `value < bound`, margin `bound - value`.
    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        let margin = bound - value;
        Clause { name: name.into(), pass: margin > 0.0, value, bound, margin }
    }

    pub fn above(name: impl Into<String>, value: f64, bound: f64) -> Self {
        let margin = value - bound;
        Clause { name: name.into(), pass: margin > 0.0, value, bound, margin }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub clauses: Vec<Clause>,
}

impl Verdict {
    fn from(clauses: Vec<Clause>) -> Self {
        Verdict { pass: clauses.iter().all(|c| c.pass), clauses }
    }
}

/// The three clauses per block: small critical set (as a fraction of the
/// circle below `threshold`), `β^6 ζ^{1/σ} > 1` (compared in logs) and `β > ζ`.
pub fn check_s1(betas: &[f64], zetas: &[f64], crit_lengths: &[f64], sigma: f64, threshold: f64) -> Result<Verdict> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if betas.len() != zetas.len() || betas.len() != crit_lengths.len() {
        return Err(Error::Dimension("one beta, zeta and critical length per block".into()));
    }
    let mut cl = Vec::new();
    for i in 0..betas.len() {
        cl.push(Clause::below(format!("block{i}: crit fraction"), crit_lengths[i] / TAU, threshold));
        cl.push(Clause::above(format!("block{i}: log(beta^6 zeta^(1/sigma))"), s1_log_product(betas[i], zetas[i], sigma), 0.0));
        cl.push(Clause::above(format!("block{i}: beta - zeta"), betas[i] - zetas[i], 0.0));
    }
    Ok(Verdict::from(cl))
}

pub fn s1_log_product(beta: f64, zeta: f64, sigma: f64) -> f64 {
    6.0 * beta.ln() + zeta.ln() / sigma
}

/// `Q = min_i 0.99σ/(σ+1) log(β_i^6 ζ_i^{1/σ})`.
pub fn q_bound(betas: &[f64], zetas: &[f64], sigma: f64) -> Result<f64> {
    if betas.is_empty() || betas.len() != zetas.len() {
        return Err(Error::Dimension("q_bound needs matching non-empty lists".into()));
    }
    let mut q = f64::INFINITY;
    for (&b, &z) in betas.iter().zip(zetas) {
        let lp = s1_log_product(b, z, sigma);
        if lp < -1e-12 {
            return Err(Error::InvalidParameter(format!("S-1 product below one (log = {lp})")));
        }
        q = q.min(0.99 * sigma / (sigma + 1.0) * lp.max(0.0));
    }
    Ok(q)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryBand {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    /// Direction (angle in the block plane) attaining the smallest widest band.
    pub worst_direction: f64,
    pub directions: usize,
    pub sweep_n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct S2Report {
    pub block: usize,
    pub invariance: Verdict,
    pub samples: usize,
    pub band: RecoveryBand,
    pub band_verdict: Verdict,
    pub pass: bool,
}

fn halton(i: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, i + 1);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 6] = [2, 3, 5, 7, 11, 13];

/// (a) cone invariance at `sample_n` deterministic points off the critical
/// set; (b) per direction, the widest band of the designated coordinate on
/// which the direction is mapped into the cone; the verdict uses the
/// narrowest of those bands.
pub fn check_s2(
    map: &dyn FiberMap,
    block: usize,
    cone: &Cone,
    crit: &CriticalRegion,
    r_target: f64,
    sample_n: usize,
    sweep_n: usize,
) -> Result<S2Report> {
    let d = map.dim();
    let coords = map.depends_on(block);
    let designated = crit.coordinate;
    // (a)
    let mut pts = Vec::with_capacity(sample_n);
    let mut i = 0;
    while pts.len() < sample_n && i < 50 * sample_n {
        let mut y = vec![0.0; d];
        for (k, &c) in coords.iter().enumerate() {
            y[c] = TAU * halton(i, PRIMES[k % PRIMES.len()]);
        }
        i += 1;
        if coords.contains(&designated) && crit.contains(y[designated]) {
            continue;
        }
        pts.push(y);
    }
    if pts.is_empty() {
        return Err(Error::EmptyRegion("no sample points off the critical region".into()));
    }
    let margin = pts
        .par_iter()
        .map(|y| {
            let img = cone_image(&block_matrix(map, block, y), cone, cone, false);
            if img.contained {
                img.margin
            } else {
                img.margin.min(-f64::EPSILON)
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let invariance = Verdict::from(vec![Clause::above("min cone-image slack", margin, 0.0)]);

    // (b)
    let others: Vec<usize> = coords.iter().copied().filter(|&c| c != designated).collect();
    let other_n: usize = if others.is_empty() { 1 } else { 16 };
    let n_other_pts = other_n.pow(others.len() as u32);
    let xs: Vec<f64> = (0..sweep_n).map(|j| TAU * (j as f64 + 0.5) / sweep_n as f64).collect();
    let mats: Vec<Vec<DMatrix<f64>>> = xs
        .par_iter()
        .map(|&x| {
            (0..n_other_pts)
                .map(|mut k| {
                    let mut y = vec![0.0; d];
                    y[designated] = x;
                    for &c in &others {
                        y[c] = TAU * (k % other_n) as f64 / other_n as f64;
                        k /= other_n;
                    }
                    block_matrix(map, block, &y)
                })
                .collect()
        })
        .collect();
    let s = cone.dim();
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    if s == 2 {
        let n_dir = 256;
        for j in 0..n_dir {
            let t = std::f64::consts::PI * j as f64 / n_dir as f64;
            dirs.push(DVector::from_vec(vec![t.cos(), t.sin()]));
        }
        if let Some(rays) = cone.complement().boundary_rays() {
            dirs.extend(rays.iter().map(|v| v.normalize()));
        }
        // the direction each sweep point sends to the cone's complement axis
        let perp = cone.complement_basis().column(0).into_owned();
        for ms in &mats {
            if let Some(inv) = ms[0].clone().try_inverse() {
                let v = inv * &perp;
                if v.norm() > 0.0 {
                    dirs.push(v.normalize());
                }
            }
        }
    } else {
        dirs = cone.sample(256, 7);
        dirs.extend(cone.complement().sample(256, 8));
    }
    let runs: Vec<(usize, usize)> = dirs
        .par_iter()
        .map(|v| {
            let mask: Vec<bool> = mats.iter().map(|ms| ms.iter().all(|m| cone.contains(&(m * v), true))).collect();
            longest_circular_run(&mask)
        })
        .collect();
    let (worst, &(start, len)) = runs.iter().enumerate().min_by_key(|(_, r)| r.1).unwrap();
    let h = TAU / sweep_n as f64;
    let width = len as f64 * h;
    let lo = start as f64 * h;
    let v = &dirs[worst];
    let band = RecoveryBand {
        lo,
        hi: lo + width,
        width,
        worst_direction: v[1].atan2(v[0]),
        directions: dirs.len(),
        sweep_n,
    };
    let band_verdict = Verdict::from(vec![Clause::above("narrowest recovery band width", width, r_target)]);
    let pass = invariance.pass && band_verdict.pass;
    Ok(S2Report { block, invariance, samples: pts.len(), band, band_verdict, pass })
}

fn ln_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Norm from Euclidean coefficients to the l1 fiber norm (sum of row norms).
fn ln_norm_to_l1(s: &ScaledMatrix) -> f64 {
    let v: f64 = s.m.row_iter().map(|r| r.norm()).sum();
    v.ln() + s.log_scale
}

/// Restricted linear data of a skew product, all in log scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingRates {
    pub ln_lambda_r: f64,
    pub ln_unstable_norm_r: f64,
    pub ln_tau_r: f64,
    pub ln_dphi: f64,
    pub ln_dphi_u: f64,
    pub ln_m_dphi_u: f64,
    pub ln_dphi_s: f64,
    pub unstable_dim: usize,
}

pub fn coupling_rates(f: &SkewProduct) -> Result<CouplingRates> {
    let sp = f.base.splitting()?;
    let l = f.base_iterates as i64;
    let k = f.kick_iterates as i64;
    let p = f.projection.matrix();
    let au = sp.unstable_power(l);
    let as_ = sp.stable_power(l);
    let pu = sp.unstable_power(k).left_mul(&(&p * &sp.unstable_basis));
    let ps = sp.stable_power(k).left_mul(&(&p * &sp.stable_basis));
    Ok(CouplingRates {
        ln_lambda_r: au.ln_conorm(),
        ln_unstable_norm_r: au.ln_norm(),
        ln_tau_r: as_.ln_norm(),
        ln_dphi: f.kick_power().ln_norm(),
        ln_dphi_u: pu.ln_norm(),
        ln_m_dphi_u: pu.ln_conorm(),
        ln_dphi_s: ps.ln_norm(),
        unstable_dim: sp.unstable_dim(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A1Report {
    pub rates: CouplingRates,
    /// ln of `(|dφ|E^s| + |dS|^3) / m(dφ|E^u)`
    pub ln_ratio1: f64,
    /// ln of `|dφ| / λ_r`
    pub ln_ratio2: f64,
    pub p_witness: Option<u32>,
    pub verdict: Verdict,
    pub diagnostic: Option<String>,
}

pub fn check_a1(f: &SkewProduct, p_max: u32, threshold: f64) -> Result<A1Report> {
    let rates = coupling_rates(f)?;
    let nb = f.fiber.norm_bounds();
    let lt = threshold.ln();
    let ln_ratio1 = ln_add(rates.ln_dphi_s, 3.0 * nb.d.ln()) - rates.ln_m_dphi_u;
    let ln_ratio2 = rates.ln_dphi - rates.ln_lambda_r;
    let degenerate = !rates.ln_m_dphi_u.is_finite();
    let mut p_witness = None;
    for p in 1..=p_max {
        let pf = p as f64;
        let q1 = rates.ln_lambda_r - pf * rates.ln_dphi;
        let q2 = ln_add(3.0 * pf * (nb.d_inv * nb.d).ln(), 3.0 * pf * (nb.d_inv * nb.d2).ln()) - rates.ln_lambda_r;
        if q1 < 0.0 && q2 < 0.0 {
            p_witness = Some(p);
            break;
        }
    }
    let mut cl = vec![
        Clause::below("ln ratio (|dphi|E^s| + |dS|^3)/m(dphi|E^u)", if degenerate { f64::INFINITY } else { ln_ratio1 }, lt),
        Clause::below("ln ratio |dphi|/lambda_r", ln_ratio2, lt),
    ];
    cl.push(Clause::above("p witness found", p_witness.map_or(0.0, |_| 1.0), 0.5));
    Ok(A1Report {
        rates,
        ln_ratio1,
        ln_ratio2,
        p_witness,
        verdict: Verdict::from(cl),
        diagnostic: degenerate.then(|| "degenerate coupling: m(dphi|E^u) = 0".to_string()),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A2Report {
    /// `|dφ|E^u| / min_i m(P_i dφ|E^u)`; infinite when some conorm vanishes.
    pub k: f64,
    /// Same numerator over `min_i |P_i dφ|E^u|` (largest singular value instead
    /// of the conorm); informative when `dim E^u` exceeds the rank of `P_i`.
    pub k_rank_one: f64,
    pub block_conorms: Vec<f64>,
    pub verdict: Verdict,
    pub diagnostic: Option<String>,
}

pub fn check_a2(f: &SkewProduct) -> Result<A2Report> {
    let sp = f.base.splitting()?;
    let p = f.projection.matrix();
    // K is scale invariant, so the normalised factor is enough
    let m = sp.unstable_power(f.kick_iterates as i64).left_mul(&(&p * &sp.unstable_basis)).m;
    let top = linalg::op_norm(&m);
    let top = if top > 0.0 { top } else { f64::INFINITY };
    let mut conorms = Vec::new();
    let mut norms = Vec::new();
    for b in f.fiber.blocks() {
        let pb = DMatrix::from_fn(b.len(), m.ncols(), |i, j| m[(b.coords[i], j)]);
        conorms.push(linalg::conorm(&pb) / top);
        norms.push(linalg::op_norm(&pb) / top);
    }
    let min_c = conorms.iter().copied().fold(f64::INFINITY, f64::min);
    let min_n = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let k = if min_c > 0.0 { 1.0 / min_c } else { f64::INFINITY };
    let k_rank_one = if min_n > 0.0 { 1.0 / min_n } else { f64::INFINITY };
    let diagnostic = if min_c > 0.0 {
        None
    } else if min_n > 0.0 {
        Some(format!("m(P_i dphi|E^u) = 0: dim E^u = {} exceeds the rank of P_i dphi", sp.unstable_dim()))
    } else {
        Some("P_i dphi|E^u vanishes".to_string())
    };
    let verdict = Verdict::from(vec![Clause::above("min_i m(P_i dphi|E^u) / |dphi|E^u|", min_c, 0.0)]);
    Ok(A2Report { k, k_rank_one, block_conorms: conorms, verdict, diagnostic })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A34Report {
    pub ln_tau_r: f64,
    pub ln_a3_ratio1: f64,
    pub ln_a3_ratio2: f64,
    pub q_witness: Option<u32>,
    pub a3: Verdict,
    /// `min_i m(P_i dS^{-1} dφ|E^s)`, normalised by `|A^K|E^s|`.
    pub a4_min_conorm: f64,
    pub a4_k: f64,
    pub a4: Verdict,
    pub ln_xi_inverse: f64,
    pub ph: Verdict,
    pub grid_n: usize,
}

pub fn check_a3_a4(f: &SkewProduct, q_max: u32, threshold: f64, grid_n: usize) -> Result<A34Report> {
    let sp = f.base.splitting()?;
    let fib = f.fiber.as_ref();
    let d = fib.dim();
    let nb = fib.norm_bounds();
    let p = f.projection.matrix();
    let (l, k) = (f.base_iterates as i64, f.kick_iterates as i64);
    let ln_tau_r = sp.stable_power(l).ln_norm();
    // dφ∘A^{-L} on E^u, and on the whole space; dφ on E^s
    let phi_ainv_u = sp.unstable_power(k - l).left_mul(&(&p * &sp.unstable_basis));
    let phi_ainv = f.base.power(k - l).left_mul(&p);
    let phi_s = sp.stable_power(k).left_mul(&(&p * &sp.stable_basis));
    let coords: Vec<usize> = {
        let mut c: Vec<usize> = (0..fib.blocks().len()).flat_map(|b| fib.depends_on(b)).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let n_pts = grid_n.pow(coords.len() as u32).max(1);
    struct Acc {
        m1: f64,
        m2: f64,
        m3: f64,
        m4: f64,
        m5: Vec<f64>,
    }
    let blocks = fib.blocks();
    let accs: Vec<Acc> = (0..n_pts)
        .into_par_iter()
        .map(|mut idx| {
            let mut y = vec![0.0; d];
            for &c in &coords {
                y[c] = TAU * (idx % grid_n) as f64 / grid_n as f64;
                idx /= grid_n;
            }
            let j = crate::maps::jacobian_matrix(fib, &y);
            let jinv = j.try_inverse().unwrap_or_else(|| DMatrix::from_element(d, d, f64::INFINITY));
            let a = &jinv * &phi_s.m;
            let m5 = blocks
                .iter()
                .map(|b| {
                    let mut pb = DMatrix::zeros(b.len(), a.ncols());
                    pb.row_mut(0).copy_from(&a.row(b.designated()));
                    linalg::conorm(&pb)
                })
                .collect();
            Acc {
                m1: linalg::op_norm(&(&jinv * &phi_ainv_u.m)),
                m2: linalg::conorm(&a),
                m3: linalg::op_norm(&(&jinv * &phi_ainv.m)),
                m4: linalg::op_norm(&a),
                m5,
            }
        })
        .collect();
    let nb_blocks = blocks.len();
    let mut g = Acc { m1: 0.0, m2: f64::INFINITY, m3: 0.0, m4: 0.0, m5: vec![f64::INFINITY; nb_blocks] };
    for a in &accs {
        g.m1 = g.m1.max(a.m1);
        g.m2 = g.m2.min(a.m2);
        g.m3 = g.m3.max(a.m3);
        g.m4 = g.m4.max(a.m4);
        for (x, y) in g.m5.iter_mut().zip(&a.m5) {
            *x = x.min(*y);
        }
    }
    let ln_m1 = g.m1.ln() + phi_ainv_u.log_scale;
    let ln_m2 = g.m2.ln() + phi_s.log_scale;
    let ln_m3 = g.m3.ln() + phi_ainv.log_scale;
    let ln_m4 = g.m4.ln() + phi_s.log_scale;
    let lt = threshold.ln();
    let ln_a3_ratio1 = ln_tau_r + ln_add(ln_m1, 3.0 * nb.d_inv.ln()) - ln_m2;
    let ln_a3_ratio2 = ln_tau_r + ln_m3;
    let mut q_witness = None;
    for q in 1..=q_max {
        let qf = q as f64;
        let q1 = ln_tau_r + qf * ln_m3;
        let q2 = ln_tau_r + ln_add(3.0 * qf * (nb.d * nb.d_inv).ln(), 3.0 * qf * (nb.d * nb.d2_inv).ln());
        if q1 > 0.0 && q2 < 0.0 {
            q_witness = Some(q);
            break;
        }
    }
    let a3 = Verdict::from(vec![
        Clause::below("ln A-3 ratio 1", if g.m2 > 0.0 { ln_a3_ratio1 } else { f64::INFINITY }, lt),
        Clause::below("ln A-3 ratio 2", ln_a3_ratio2, lt),
        Clause::above("q witness found", q_witness.map_or(0.0, |_| 1.0), 0.5),
    ]);
    let min5 = g.m5.iter().copied().fold(f64::INFINITY, f64::min);
    let a4_k = if min5 > 0.0 { g.m4 / min5 } else { f64::INFINITY };
    let a4 = Verdict::from(vec![
        Clause::above("min_i m(P_i dS^-1 dphi|E^s) (normalised)", min5, 0.0),
        Clause::below("A-4 ratio - 1", a4_k - 1.0, threshold),
    ]);
    // ξ_{f^{-1}} = |dS^{-1} dφ|E^s| / (1 - τ_r |df^{-1}|E'|)
    let ln_df_inv_e = ln_add(ln_add(ln_m3, nb.d_inv.ln()), 0.0);
    let denom = 1.0 - (ln_tau_r + ln_df_inv_e).exp();
    let ln_xi_inverse = if denom > 0.0 { ln_m4 - denom.ln() } else { f64::INFINITY };
    let ph = Verdict::from(vec![
        Clause::above("1 - tau_r |df^-1|E'|", denom, 0.0),
        Clause::below("ln xi_inverse", ln_xi_inverse, 0.0),
    ]);
    Ok(A34Report {
        ln_tau_r,
        ln_a3_ratio1,
        ln_a3_ratio2,
        q_witness,
        a3,
        a4_min_conorm: min5,
        a4_k,
        a4,
        ln_xi_inverse,
        ph,
        grid_n,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendReport {
    pub r: Vec<f64>,
    pub ln_values: Vec<f64>,
    pub decreasing: bool,
    pub final_below_threshold: bool,
}

/// A-3 ratio 1 along a grid of parameters; the limit is read as a trend.
pub fn a3_trend(build: &dyn Fn(f64) -> Result<SkewProduct>, rs: &[f64], threshold: f64, grid_n: usize) -> Result<TrendReport> {
    let mut vals = Vec::new();
    for &r in rs {
        vals.push(check_a3_a4(&build(r)?, 1, threshold, grid_n)?.ln_a3_ratio1);
    }
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let final_below_threshold = vals.last().is_some_and(|&v| v < threshold.ln());
    Ok(TrendReport { r: rs.to_vec(), ln_values: vals, decreasing, final_below_threshold })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct XiReport {
    pub xi: f64,
    pub ln_lambda_r: f64,
    /// `|df|E| / λ_r`
    pub df_e_over_lambda: f64,
    pub cone: Verdict,
    pub expansion: Verdict,
    pub samples: usize,
}

/// `ξ = 2|dφ|E^u| / (λ_r - |df|E|)` in the l1 decomposition norm, with a
/// sampled check of cone invariance and of the two-sided expansion bound.
/// `ξ` and `|df|E| / λ_r`; errors when the splitting is not dominated.
pub fn xi_constant(f: &SkewProduct) -> Result<(f64, f64)> {
    let sp = f.base.splitting()?;
    let nb = f.fiber.norm_bounds();
    let (l, k) = (f.base_iterates as i64, f.kick_iterates as i64);
    let p = f.projection.matrix();
    let ln_lam = sp.unstable_power(l).ln_conorm();
    let pu = sp.unstable_power(k).left_mul(&(&p * &sp.unstable_basis));
    let ps = sp.stable_power(k).left_mul(&(&p * &sp.stable_basis));
    let rel = |x: f64| (x - ln_lam).exp();
    let df_e = rel(nb.d.ln()) + rel(ln_norm_to_l1(&ps)) + rel(sp.stable_power(l).ln_norm());
    if df_e >= 1.0 {
        return Err(Error::NotDominated { xi: f64::INFINITY, fiber_norm: nb.d, base_rate: ln_lam.exp() });
    }
    let xi = 2.0 * rel(ln_norm_to_l1(&pu)) / (1.0 - df_e);
    if !(xi < 1.0) {
        return Err(Error::NotDominated { xi, fiber_norm: nb.d, base_rate: ln_lam.exp() });
    }
    Ok((xi, df_e))
}

pub fn xi_and_unstable_cone(f: &SkewProduct, samples: usize, seed: u64) -> Result<XiReport> {
    let (xi, df_e) = xi_constant(f)?;
    let sp = f.base.splitting()?;
    let fib = f.fiber.as_ref();
    let (l, k) = (f.base_iterates as i64, f.kick_iterates as i64);
    let p = f.projection.matrix();
    let au = sp.unstable_power(l);
    let as_ = sp.stable_power(l);
    let pu = sp.unstable_power(k).left_mul(&(&p * &sp.unstable_basis));
    let ps = sp.stable_power(k).left_mul(&(&p * &sp.stable_basis));
    let ln_lam = au.ln_conorm();
    let ln_u_norm = au.ln_norm();
    let rel = |x: f64| (x - ln_lam).exp();
    let scale = |s: &ScaledMatrix| &s.m * rel(s.log_scale);
    let (au_s, as_s, pu_s, ps_s) = (scale(&au), scale(&as_), scale(&pu), scale(&ps));
    let (du, ds, d) = (sp.unstable_dim(), sp.stable_dim(), fib.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cone_margin = f64::INFINITY;
    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    let upper = (1.0 + xi) * (ln_u_norm - ln_lam).exp();
    let lower = (1.0 - xi) / (1.0 + xi);
    let gauss = |rng: &mut ChaCha8Rng, n: usize| -> DVector<f64> {
        let v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let nv = v.norm();
        if nv > 0.0 {
            v / nv
        } else {
            v
        }
    };
    for i in 0..samples {
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..TAU)).collect();
        let j = crate::maps::jacobian_matrix(fib, &y) * (-ln_lam).exp();
        let vu = gauss(&mut rng, du);
        let rho = if i % 3 == 0 { 1.0 } else { rng.random::<f64>() };
        let split = rng.random::<f64>();
        let vs = gauss(&mut rng, ds) * (rho * xi * split);
        let w = gauss(&mut rng, d);
        let w = &w / w.iter().map(|c| c.abs()).sum::<f64>().max(f64::MIN_POSITIVE) * (rho * xi * (1.0 - split));
        let u2 = &au_s * &vu;
        let s2 = &as_s * &vs;
        let w2 = &pu_s * &vu + &ps_s * &vs + &j * &w;
        let e_norm = s2.norm() + w2.iter().map(|c| c.abs()).sum::<f64>();
        let img = u2.norm() + e_norm;
        let vnorm = vu.norm() + vs.norm() + w.iter().map(|c| c.abs()).sum::<f64>();
        cone_margin = cone_margin.min((xi * u2.norm() - e_norm) / u2.norm());
        lower_margin = lower_margin.min(img / vnorm - lower);
        upper_margin = upper_margin.min(upper - img / vnorm);
    }
    let tol = 1e-12 + 64.0 * f64::EPSILON * ln_lam.abs();
    Ok(XiReport {
        xi,
        ln_lambda_r: ln_lam,
        df_e_over_lambda: df_e,
        // the cone is closed; rescaling by exp(log_scale - ln λ) costs about ε·ln λ
        cone: Verdict::from(vec![Clause { pass: cone_margin >= 0.0, ..Clause::above("min normalised cone slack", cone_margin, 0.0) }]),
        expansion: Verdict::from(vec![
            Clause::above("lower expansion slack", lower_margin, -tol),
            Clause::above("upper expansion slack", upper_margin, -tol),
        ]),
        samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockConstants {
    pub block: usize,
    pub beta: GridEstimate,
    /// `k^{1/6} - 2`
    pub beta_paper_bound: f64,
    pub zeta: GridEstimate,
    /// `1/(2k)`
    pub zeta_paper_scale: f64,
    pub crit_length: f64,
    pub s1_product: f64,
    pub s1_product_paper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryParams {
    pub sigma: f64,
    pub grid_n: usize,
    pub sample_n: usize,
    pub sweep_n: usize,
    pub r_target: f64,
    pub threshold: f64,
    pub p_max: u32,
    pub xi_samples: usize,
    pub seed: u64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            sigma: 2.0,
            grid_n: 2048,
            sample_n: 10_000,
            sweep_n: 2048,
            r_target: std::f64::consts::FRAC_PI_2,
            threshold: 0.1,
            p_max: 20,
            xi_samples: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub map: String,
    pub r: f64,
    pub params: BatteryParams,
    pub blocks: Vec<BlockConstants>,
    pub s1: Verdict,
    pub s1_paper_bounds: Verdict,
    pub s2: Vec<S2Report>,
    pub a1: Option<A1Report>,
    pub a2: Option<A2Report>,
    pub a3_a4: Option<A34Report>,
    pub xi: Option<XiReport>,
    pub xi_error: Option<String>,
    pub q_bound: Option<f64>,
    pub pass: bool,
}

/// Fiber checks for every block, plus coupling checks when a skew product is given.
pub fn run_battery(fiber: &dyn FiberMap, r: f64, skew: Option<&SkewProduct>, params: &BatteryParams) -> Result<HypothesisReport> {
    let nblocks = fiber.blocks().len();
    let mut blocks = Vec::new();
    let mut s2 = Vec::new();
    for i in 0..nblocks {
        let cone = delta_cone(fiber, i)?;
        let crit = critical_region(fiber, i)?;
        let beta = estimate_beta(fiber, i, &cone, &crit, params.grid_n)?;
        let zeta = estimate_zeta(fiber, i, params.grid_n)?;
        let a = fiber.amplitude(i);
        let bp = a.powf(1.0 / 6.0) - 2.0;
        let zp = 1.0 / (2.0 * a);
        blocks.push(BlockConstants {
            block: i,
            s1_product: s1_log_product(beta.value, zeta.value, params.sigma).exp(),
            s1_product_paper: s1_log_product(bp, zp, params.sigma).exp(),
            beta,
            beta_paper_bound: bp,
            zeta,
            zeta_paper_scale: zp,
            crit_length: crit.length(),
        });
        s2.push(check_s2(fiber, i, &cone, &crit, params.r_target, params.sample_n, params.sweep_n)?);
    }
    let betas: Vec<f64> = blocks.iter().map(|b| b.beta.value).collect();
    let zetas: Vec<f64> = blocks.iter().map(|b| b.zeta.value).collect();
    let crits: Vec<f64> = blocks.iter().map(|b| b.crit_length).collect();
    let s1 = check_s1(&betas, &zetas, &crits, params.sigma, params.threshold)?;
    let bps: Vec<f64> = blocks.iter().map(|b| b.beta_paper_bound.max(f64::MIN_POSITIVE)).collect();
    let zps: Vec<f64> = blocks.iter().map(|b| b.zeta_paper_scale).collect();
    let s1_paper_bounds = check_s1(&bps, &zps, &crits, params.sigma, params.threshold)?;
    let q = if s1.pass { q_bound(&betas, &zetas, params.sigma).ok() } else { None };
    let (mut a1, mut a2, mut a34, mut xi, mut xi_error) = (None, None, None, None, None);
    if let Some(f) = skew {
        a1 = Some(check_a1(f, params.p_max, params.threshold)?);
        a2 = Some(check_a2(f)?);
        a34 = Some(check_a3_a4(f, params.p_max, params.threshold, params.grid_n.min(256))?);
        match xi_and_unstable_cone(f, params.xi_samples, params.seed) {
            Ok(x) => xi = Some(x),
            Err(e) => xi_error = Some(e.to_string()),
        }
    }
    let pass = s1.pass
        && s2.iter().all(|s| s.pass)
        && a1.as_ref().is_none_or(|a| a.verdict.pass)
        && a2.as_ref().is_none_or(|a| a.verdict.pass)
        && xi_error.is_none()
        && xi.as_ref().is_none_or(|x| x.cone.pass && x.expansion.pass);
    Ok(HypothesisReport {
        map: fiber.name(),
        r,
        params: params.clone(),
        blocks,
        s1,
        s1_paper_bounds,
        s2,
        a1,
        a2,
        a3_a4: a34,
        xi,
        xi_error,
        q_bound: q,
        pass,
    })
}
