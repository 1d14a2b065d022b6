//! Unstable curves of a skew product, their images under iteration, pushed
//! vertical fields and the good/bad bookkeeping along them.
//!
//! Curves are represented through charts: a reference orbit plus offsets
//! that are pushed with exact differences, so pieces whose parameter width is
//! far below machine precision of the absolute position stay resolvable.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::error::{Error, Result};
use crate::hypotheses::{delta_cone, xi_constant, Clause};
use crate::linalg;
use crate::maps::{SkewProduct, SkewScratch};
use crate::torus::{wrap, TorusVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveParams {
    /// Forward steps used to grow the curve from its seed segment.
    pub n_pre: usize,
    /// Largest arclength gap between consecutive curve samples.
    pub h: f64,
    pub min_samples: usize,
    /// Initial samples per piece (odd); refined by doubling.
    pub piece_samples: usize,
    pub quad_tol: f64,
    pub max_refine: usize,
    /// Pieces drawn per level when the level is too large to enumerate.
    pub sampled_pieces: usize,
    pub max_enumerated: usize,
    pub theta: f64,
    pub p: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            n_pre: 4,
            h: 1.0,
            min_samples: 1025,
            piece_samples: 17,
            quad_tol: 1e-4,
            max_refine: 6,
            sampled_pieces: 256,
            max_enumerated: 400_000,
            theta: 0.9,
            p: 3.0,
            sigma: 2.0,
            seed: 0,
        }
    }
}

/// Linear data shared by every curve computation on one skew product.
#[derive(Clone, Debug)]
struct Setup {
    l: usize,
    d: usize,
    xi: f64,
    /// `m(A^L|E^u)`, `|A^L|E^u|`
    lambda_lo: f64,
    lambda_hi: f64,
    e_u: Vec<f64>,
    /// maps base vectors to (E^u, E^s) coefficients
    split_inv: DMatrix<f64>,
    du: usize,
    d_norm: f64,
    phi_u: DMatrix<f64>,
    phi_s_norm: f64,
}

impl Setup {
    fn new(f: &SkewProduct) -> Result<Self> {
        let (xi, _) = xi_constant(f)?;
        let sp = f.base.splitting()?;
        let l = f.base_dim();
        let du = sp.unstable_dim();
        let lu = sp.unstable_power(f.base_iterates as i64);
        let mut basis = DMatrix::zeros(l, l);
        basis.view_mut((0, 0), (l, du)).copy_from(&sp.unstable_basis);
        basis.view_mut((0, du), (l, l - du)).copy_from(&sp.stable_basis);
        let split_inv = basis.try_inverse().ok_or_else(|| Error::Singular("splitting basis".into()))?;
        let p = f.projection.matrix();
        let k = f.kick_iterates as i64;
        let phi_u = sp.unstable_power(k).left_mul(&(&p * &sp.unstable_basis)).to_matrix();
        let phi_s_norm = sp.stable_power(k).left_mul(&(&p * &sp.stable_basis)).ln_norm().exp();
        Ok(Setup {
            l,
            d: f.fiber_dim(),
            xi,
            lambda_lo: lu.ln_conorm().exp(),
            lambda_hi: lu.ln_norm().exp(),
            e_u: sp.unstable_basis.column(0).iter().copied().collect(),
            split_inv,
            du,
            d_norm: f.fiber.norm_bounds().d,
            phi_u,
            phi_s_norm,
        })
    }

    /// `|s| + |w|_1 <= ξ|u|` with a little rounding slack.
    fn in_cone(&self, v: &[f64]) -> bool {
        let c = &self.split_inv * DVector::from_column_slice(&v[..self.l]);
        let u = c.rows(0, self.du).norm();
        let s = c.rows(self.du, self.l - self.du).norm();
        let w: f64 = v[self.l..].iter().map(|x| x.abs()).sum();
        s + w <= self.xi * u * (1.0 + 1e-9) + 1e-300
    }

    fn cone_slack(&self) -> f64 {
        (self.d_norm + self.phi_s_norm) * self.xi
    }

    /// Bounds for `|γ'| / |P_i γ'|` along unstable curves of block `coords`.
    fn rho_bounds(&self, coords: &[usize]) -> (f64, f64) {
        let pi = DMatrix::from_fn(coords.len(), self.phi_u.ncols(), |i, j| self.phi_u[(coords[i], j)]);
        let c = self.cone_slack();
        let hi_n = linalg::op_norm(&pi) + c;
        let lo_m = linalg::conorm(&pi) - c;
        let lo = self.lambda_lo / hi_n;
        let hi = if lo_m > 0.0 { (1.0 + self.xi) * self.lambda_hi / lo_m } else { f64::INFINITY };
        (lo, hi)
    }
}

/// Reference orbit plus exactly pushed offsets along a direction.
struct Chart<'a> {
    f: &'a SkewProduct,
    refs: Vec<Vec<f64>>,
    dir: Vec<f64>,
    curve_level: usize,
    des: usize,
    x0: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Eval {
    s: f64,
    point: Vec<f64>,
    hx: f64,
    tau_c: Vec<f64>,
    tau: Vec<f64>,
    field: Vec<f64>,
}

impl<'a> Chart<'a> {
    fn new(f: &'a SkewProduct, start: &[f64], dir: Vec<f64>, curve_level: usize, top: usize, des: usize, x0: Vec<f64>) -> Self {
        let mut refs = Vec::with_capacity(top + 1);
        let mut v: Vec<f64> = start.iter().map(|&c| wrap(c)).collect();
        let mut sc = SkewScratch::new(f);
        refs.push(v.clone());
        for _ in 0..top {
            f.step_in_place(&mut v, &mut sc);
            refs.push(v.clone());
        }
        Chart { f, refs, dir, curve_level, des, x0 }
    }

    fn push_base(&self, x: &mut [f64], kick: &mut [f64], buf: &mut [f64], tmp: &mut [f64]) {
        tmp.copy_from_slice(x);
        for _ in 0..self.f.kick_iterates {
            self.f.base.apply_lift(tmp, buf);
            tmp.copy_from_slice(buf);
        }
        self.f.projection.apply(tmp, kick);
        for _ in 0..self.f.base_iterates {
            self.f.base.apply_lift(x, buf);
            x.copy_from_slice(buf);
        }
    }

    fn eval(&self, s: f64, level: usize) -> Eval {
        let f = self.f;
        let (l, d) = (f.base_dim(), f.fiber_dim());
        let mut h: Vec<f64> = self.dir.iter().map(|c| c * s).collect();
        let mut tau = self.dir.clone();
        let mut tau_c = tau.clone();
        let mut field = self.x0.clone();
        let mut y = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        let mut kick = vec![0.0; d];
        let mut off = vec![0.0; d];
        let mut nt = vec![0.0; d];
        let (mut buf, mut tmp) = (vec![0.0; l], vec![0.0; l]);
        for j in 0..level {
            if j == self.curve_level {
                tau_c.copy_from_slice(&tau);
            }
            let r = &self.refs[j];
            for i in 0..d {
                y[i] = r[l + i] + h[l + i];
            }
            f.fiber.jacobian(&y, &mut jac);
            if j >= self.curve_level {
                mat_vec(&jac, &field, &mut nt);
                let n = nt.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (a, b) in field.iter_mut().zip(&nt) {
                    *a = b / n;
                }
            }
            // tangent
            self.push_base(&mut tau[..l], &mut kick, &mut buf, &mut tmp);
            mat_vec(&jac, &tau[l..], &mut nt);
            for i in 0..d {
                tau[l + i] = nt[i] + kick[i];
            }
            // offset
            f.fiber.eval_offset(&r[l..], &h[l..], &mut off);
            self.push_base(&mut h[..l], &mut kick, &mut buf, &mut tmp);
            for i in 0..d {
                h[l + i] = off[i] + kick[i];
            }
        }
        if level == self.curve_level {
            tau_c.copy_from_slice(&tau);
        }
        let point = self.refs[level].iter().zip(&h).map(|(a, b)| wrap(a + b)).collect();
        Eval { s, point, hx: h[l + self.des], tau_c, tau, field }
    }
}

fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for i in 0..out.len() {
        out[i] = m[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `g(s) = target` for increasing `g` bracketed by `[a, b]`.
fn solve_increasing(g: &dyn Fn(f64) -> (f64, f64), target: f64, mut a: f64, mut b: f64, mut s: f64) -> f64 {
    for _ in 0..200 {
        let (v, dv) = g(s);
        let err = v - target;
        if err.abs() <= 1e-12 * target.abs().max(1.0) {
            return s;
        }
        if err < 0.0 {
            a = s;
        } else {
            b = s;
        }
        let mut next = s - err / dv;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if next == s || b - a <= f64::EPSILON * s.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        s = next;
    }
    s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveSample {
    /// Chart parameter.
    pub u: f64,
    pub point: Vec<f64>,
    /// Tangent scaled so that `|P_i γ'| = 1`.
    pub tangent: Vec<f64>,
    /// `P_i`-arclength from the start.
    pub t: f64,
    /// Arclength from the start.
    pub s: f64,
    pub in_cone: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibleCurve {
    pub block: usize,
    pub samples: Vec<CurveSample>,
    pub length: f64,
    pub p_length: f64,
    /// Lifted displacement of the designated coordinate; `2π` by construction.
    pub displacement: f64,
    /// Seed of the chart; the curve is `f^{n_pre}(seed + u·dir)`.
    pub seed_point: Vec<f64>,
    pub dir: Vec<f64>,
    pub n_pre: usize,
    pub u_max: f64,
    pub xi: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Length bounds from measured linear constants.
    pub length_bounds: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveChecks {
    pub unit_speed_error: f64,
    pub tangents_in_cone: bool,
    pub length_within_bounds: bool,
    pub pass: bool,
}

impl AdmissibleCurve {
    fn chart<'a>(&self, f: &'a SkewProduct, extra: usize, x0: Vec<f64>) -> Chart<'a> {
        let des = f.fiber.blocks()[self.block].designated();
        Chart::new(f, &self.seed_point, self.dir.clone(), self.n_pre, self.n_pre + extra, des, x0)
    }

    pub fn checks(&self, f: &SkewProduct) -> CurveChecks {
        let coords = f.fiber.blocks()[self.block].coords.clone();
        let l = f.base_dim();
        let unit_speed_error = self
            .samples
            .iter()
            .map(|s| (coords.iter().map(|&c| s.tangent[l + c].powi(2)).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max);
        let tangents_in_cone = self.samples.iter().all(|s| s.in_cone);
        let (lo, hi) = self.length_bounds;
        let length_within_bounds = self.length >= lo * (1.0 - 1e-9) && self.length <= hi * (1.0 + 1e-9);
        CurveChecks {
            unit_speed_error,
            tangents_in_cone,
            length_within_bounds,
            pass: unit_speed_error < 1e-8 && tangents_in_cone && length_within_bounds,
        }
    }

    pub fn points(&self) -> Vec<TorusVector> {
        self.samples.iter().map(|s| TorusVector::reduce(&s.point).expect("finite curve point")).collect()
    }
}

/// Grows an unstable curve through `f^{n_pre}(start)` whose designated
/// coordinate of block `block` turns once around the circle.
pub fn grow_admissible_curve(f: &SkewProduct, start: &TorusVector, block: usize, params: &CurveParams) -> Result<AdmissibleCurve> {
    let setup = Setup::new(f)?;
    let blocks = f.fiber.blocks();
    let b = blocks.get(block).ok_or_else(|| Error::InvalidParameter(format!("no block {block}")))?;
    if start.dim() != f.dim() {
        return Err(Error::Dimension(format!("start point needs {} coordinates", f.dim())));
    }
    let (l, d) = (setup.l, setup.d);
    let scale = setup.lambda_lo.powi(-(params.n_pre as i32));
    let mut dir = vec![0.0; l + d];
    for i in 0..l {
        dir[i] = setup.e_u[i] * scale;
    }
    let des = b.designated();
    let mut x0 = vec![0.0; d];
    x0[des] = 1.0;
    let mut chart = Chart::new(f, start.coords(), dir.clone(), params.n_pre, params.n_pre, des, x0.clone());
    let e0 = chart.eval(0.0, params.n_pre);
    let speed0 = e0.tau[l + des];
    let p_speed: f64 = b.coords.iter().map(|&c| e0.tau[l + c].powi(2)).sum::<f64>().sqrt();
    if !(p_speed > 1e-300) || speed0 == 0.0 {
        return Err(Error::Degenerate("block speed of the unstable direction vanishes".into()));
    }
    if speed0 < 0.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
        chart = Chart::new(f, start.coords(), dir.clone(), params.n_pre, params.n_pre, des, x0);
    }
    let lvl = params.n_pre;
    let g = |u: f64| {
        let e = chart.eval(u, lvl);
        (e.hx, e.tau[l + des])
    };
    let rate = speed0.abs();
    let mut hi = TAU / rate;
    let mut it = 0;
    while g(hi).0 < TAU {
        hi *= 2.0;
        it += 1;
        if it > 60 {
            return Err(Error::CurveAborted("designated coordinate does not complete a turn".into()));
        }
    }
    let u_max = solve_increasing(&g, TAU, 0.0, hi, TAU / rate);
    let est_len = u_max * norm(&e0.tau);
    let mut n = params.min_samples.max((est_len / params.h).ceil() as usize + 1);
    if n % 2 == 0 {
        n += 1;
    }
    let evals: Vec<Eval> = (0..n)
        .into_par_iter()
        .map(|i| chart.eval(u_max * i as f64 / (n - 1) as f64, lvl))
        .collect();
    let mut samples = Vec::with_capacity(n);
    let (mut t, mut s) = (0.0, 0.0);
    let (mut rho_min, mut rho_max) = (f64::INFINITY, 0.0f64);
    for (i, e) in evals.iter().enumerate() {
        let ps: f64 = b.coords.iter().map(|&c| e.tau[l + c].powi(2)).sum::<f64>().sqrt();
        let full = norm(&e.tau);
        if i > 0 {
            let p = &evals[i - 1];
            let pps: f64 = b.coords.iter().map(|&c| p.tau[l + c].powi(2)).sum::<f64>().sqrt();
            let du = e.s - p.s;
            t += 0.5 * du * (ps + pps);
            s += 0.5 * du * (full + norm(&p.tau));
        }
        rho_min = rho_min.min(full / ps);
        rho_max = rho_max.max(full / ps);
        samples.push(CurveSample {
            u: e.s,
            point: e.point.clone(),
            tangent: e.tau.iter().map(|v| v / ps).collect(),
            t,
            s,
            in_cone: setup.in_cone(&e.tau),
        });
    }
    let (lo, hi) = setup.rho_bounds(&b.coords);
    let displacement = evals.last().unwrap().hx - evals[0].hx;
    Ok(AdmissibleCurve {
        block,
        samples,
        length: s,
        p_length: t,
        displacement,
        seed_point: start.coords().to_vec(),
        dir,
        n_pre: params.n_pre,
        u_max,
        xi: setup.xi,
        rho_min,
        rho_max,
        length_bounds: (lo * t, hi * t),
    })
}

/// Unit vertical field on a curve, constant in the block coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptedField {
    /// Fiber vector (unit) shared by every sample.
    pub vector: Vec<f64>,
    pub theta: f64,
    pub p: f64,
    /// `λ^{-θ(1 - 1/(2p))}`
    pub c_x: f64,
    pub holder_ratio: f64,
}

impl AdaptedField {
    /// `v` lives in the fiber block `block` of the curve.
    pub fn constant(f: &SkewProduct, curve: &AdmissibleCurve, v: &[f64], theta: f64, p: f64) -> Result<Self> {
        let blocks = f.fiber.blocks();
        let coords = &blocks[curve.block].coords;
        if v.len() != f.fiber_dim() {
            return Err(Error::Dimension("field vector must live in the fiber".into()));
        }
        if v.iter().enumerate().any(|(i, x)| *x != 0.0 && !coords.contains(&i)) {
            return Err(Error::InvalidParameter("field vector must lie in the curve's block".into()));
        }
        let n = norm(v);
        if n == 0.0 {
            return Err(Error::Degenerate("zero field".into()));
        }
        let lam = Setup::new(f)?.lambda_lo;
        Ok(AdaptedField {
            vector: v.iter().map(|x| x / n).collect(),
            theta,
            p,
            c_x: lam.powf(-theta * (1.0 - 1.0 / (2.0 * p))),
            holder_ratio: 0.0,
        })
    }

    /// `e_i` on the designated coordinate of the curve's block.
    pub fn designated(f: &SkewProduct, curve: &AdmissibleCurve, theta: f64, p: f64) -> Result<Self> {
        let mut v = vec![0.0; f.fiber_dim()];
        v[f.fiber.blocks()[curve.block].designated()] = 1.0;
        Self::constant(f, curve, &v, theta, p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldClass {
    Good,
    AlmostGood,
    Bad,
}

impl FieldClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldClass::Good => "good",
            FieldClass::AlmostGood => "almost-good",
            FieldClass::Bad => "bad",
        }
    }
}

/// Good when every block component of every sample lies in its cone;
/// almost good (two or more blocks) when some block passes everywhere.
/// A block without a cone (no kick) accepts everything.
pub fn classify_field(samples: &[Vec<f64>], blocks: &[Vec<usize>], cones: &[Option<Cone>]) -> FieldClass {
    let ok: Vec<bool> = blocks
        .iter()
        .zip(cones)
        .map(|(c, cone)| match cone {
            None => true,
            Some(cone) => samples.iter().all(|y| cone.contains(&DVector::from_iterator(c.len(), c.iter().map(|&i| y[i])), true)),
        })
        .collect();
    if ok.iter().all(|&b| b) {
        FieldClass::Good
    } else if blocks.len() >= 2 && ok.iter().any(|&b| b) {
        FieldClass::AlmostGood
    } else {
        FieldClass::Bad
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Piece {
    pub level: usize,
    pub index: usize,
    pub class: FieldClass,
    /// Parameter interval of the piece in its chart.
    pub s0: f64,
    pub s1: f64,
    /// Number of pieces this one stands for (1 when enumerated).
    pub weight: f64,
    pub full: bool,
    pub min_j: f64,
    pub max_j: f64,
    /// `∫ J^u_{f^{-k}}` over the piece.
    pub j_integral: f64,
    pub length: f64,
    pub p_length: f64,
    pub displacement: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub e_integral: f64,
    pub samples: usize,
    pub holder_ratio: f64,
    pub variation: f64,
    pub tangents_in_cone: bool,
    pub unit_speed_error: f64,
    pub monotone: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<Vec<f64>>>,
}

struct Ctx<'a> {
    f: &'a SkewProduct,
    setup: Setup,
    coords: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    cones: Vec<Option<Cone>>,
    params: &'a CurveParams,
}

impl<'a> Ctx<'a> {
    fn new(f: &'a SkewProduct, block: usize, params: &'a CurveParams) -> Result<Self> {
        let bl = f.fiber.blocks();
        let cones = (0..bl.len()).map(|i| delta_cone(f.fiber.as_ref(), i).ok()).collect();
        Ok(Ctx {
            f,
            setup: Setup::new(f)?,
            coords: bl[block].coords.clone(),
            blocks: bl.iter().map(|b| b.coords.clone()).collect(),
            cones,
            params,
        })
    }

    fn p_norm(&self, tau: &[f64]) -> f64 {
        self.coords.iter().map(|&c| tau[self.setup.l + c].powi(2)).sum::<f64>().sqrt()
    }

    /// `log |dS Y|` at the point of `e`.
    fn log_growth(&self, e: &Eval) -> Result<f64> {
        let d = self.setup.d;
        let mut jac = vec![0.0; d * d];
        self.f.fiber.jacobian(&e.point[self.setup.l..], &mut jac);
        let mut out = vec![0.0; d];
        mat_vec(&jac, &e.field, &mut out);
        let n = norm(&out);
        if !(n > 0.0) {
            return Err(Error::Degenerate("pushed field vanished".into()));
        }
        Ok(n.ln())
    }

    fn measure(&self, chart: &Chart, level: usize, s0: f64, s1: f64, full: bool, keep_field: bool) -> Result<Piece> {
        let p = self.params;
        let mut n = p.piece_samples.max(3) | 1;
        let mut evals: Vec<Eval> = (0..n).map(|i| chart.eval(s0 + (s1 - s0) * i as f64 / (n - 1) as f64, level)).collect();
        let mut logs: Vec<f64> = evals.iter().map(|e| self.log_growth(e)).collect::<Result<_>>()?;
        let initial = evals.clone();
        let mut e_int = self.e_integral(&evals, &logs);
        for _ in 0..p.max_refine {
            let m = 2 * (n - 1) + 1;
            let mut ne = Vec::with_capacity(m);
            let mut nl = Vec::with_capacity(m);
            for i in 0..n {
                ne.push(evals[i].clone());
                nl.push(logs[i]);
                if i + 1 < n {
                    let e = chart.eval(s0 + (s1 - s0) * (2 * i + 1) as f64 / (m - 1) as f64, level);
                    nl.push(self.log_growth(&e)?);
                    ne.push(e);
                }
            }
            evals = ne;
            logs = nl;
            n = m;
            let e_new = self.e_integral(&evals, &logs);
            let done = (e_new - e_int).abs() < p.quad_tol;
            e_int = e_new;
            if done {
                break;
            }
        }
        let js: Vec<f64> = evals.iter().map(|e| norm(&e.tau_c) / norm(&e.tau)).collect();
        let (mut length, mut p_length, mut j_integral) = (0.0, 0.0, 0.0);
        for i in 1..n {
            let ds = evals[i].s - evals[i - 1].s;
            let (a, b) = (norm(&evals[i].tau), norm(&evals[i - 1].tau));
            length += 0.5 * ds * (a + b);
            p_length += 0.5 * ds * (self.p_norm(&evals[i].tau) + self.p_norm(&evals[i - 1].tau));
            j_integral += 0.5 * ds * (js[i] * a + js[i - 1] * b);
        }
        let rho: Vec<f64> = evals.iter().map(|e| norm(&e.tau) / self.p_norm(&e.tau)).collect();
        let des = chart.des;
        let l = self.setup.l;
        let sign = evals[0].tau[l + des].signum();
        let fields: Vec<Vec<f64>> = evals.iter().map(|e| e.field.clone()).collect();
        let (holder_ratio, variation) = self.holder(&initial);
        Ok(Piece {
            level,
            index: 0,
            class: classify_field(&fields, &self.blocks, &self.cones),
            s0,
            s1,
            weight: 1.0,
            full,
            min_j: js.iter().copied().fold(f64::INFINITY, f64::min),
            max_j: js.iter().copied().fold(0.0, f64::max),
            j_integral,
            length,
            p_length,
            displacement: evals[n - 1].hx - evals[0].hx,
            rho_min: rho.iter().copied().fold(f64::INFINITY, f64::min),
            rho_max: rho.iter().copied().fold(0.0, f64::max),
            e_integral: e_int,
            samples: n,
            holder_ratio,
            variation,
            tangents_in_cone: evals.iter().all(|e| self.setup.in_cone(&e.tau)),
            unit_speed_error: 0.0,
            monotone: evals.iter().all(|e| e.tau[l + des].signum() == sign),
            field: keep_field.then_some(fields),
        })
    }

    fn e_integral(&self, evals: &[Eval], logs: &[f64]) -> f64 {
        let (mut len, mut acc) = (0.0, 0.0);
        for i in 1..evals.len() {
            let ds = evals[i].s - evals[i - 1].s;
            let (a, b) = (norm(&evals[i].tau), norm(&evals[i - 1].tau));
            len += 0.5 * ds * (a + b);
            acc += 0.5 * ds * (a * logs[i] + b * logs[i - 1]);
        }
        acc / len
    }

    /// Largest `|Y_m - Y_m'| / d(m, m')^θ` over pairs closer than half the
    /// piece, and the largest `|Y_m - Y_m'|`.
    fn holder(&self, evals: &[Eval]) -> (f64, f64) {
        let n = evals.len();
        let mut arc = vec![0.0; n];
        for i in 1..n {
            arc[i] = arc[i - 1] + 0.5 * (evals[i].s - evals[i - 1].s) * (norm(&evals[i].tau) + norm(&evals[i - 1].tau));
        }
        let half = 0.5 * arc[n - 1];
        let (mut ratio, mut var) = (0.0f64, 0.0f64);
        for a in 0..n {
            for b in a + 1..n {
                let diff = evals[a].field.iter().zip(&evals[b].field).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                var = var.max(diff);
                let dist = arc[b] - arc[a];
                if dist <= half && dist > 0.0 {
                    ratio = ratio.max(diff / dist.powf(self.params.theta));
                }
            }
        }
        (ratio, var)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decomposition {
    pub level: usize,
    pub exact: bool,
    /// Number of full pieces (estimated when sampled).
    pub count: f64,
    pub pieces: Vec<Piece>,
}

fn decompose_with(ctx: &Ctx, curve: &AdmissibleCurve, field: &AdaptedField, k: usize, keep_field: bool) -> Result<Decomposition> {
    let f = ctx.f;
    let l = ctx.setup.l;
    let chart = curve.chart(f, k, field.vector.clone());
    let lvl = curve.n_pre + k;
    let u_max = curve.u_max;
    if k == 0 {
        let mut p = ctx.measure(&chart, lvl, 0.0, u_max, true, keep_field)?;
        p.unit_speed_error = 0.0;
        return Ok(Decomposition { level: 0, exact: true, count: 1.0, pieces: vec![p] });
    }
    let des = chart.des;
    let e0 = chart.eval(0.0, lvl);
    let e1 = chart.eval(u_max, lvl);
    let total = e1.hx - e0.hx;
    let sg = total.signum();
    let count = (total.abs() / TAU).floor();
    if count + 1.0 <= ctx.params.max_enumerated as f64 {
        let g = |u: f64| {
            let e = chart.eval(u, lvl);
            (sg * (e.hx - e0.hx), sg * e.tau[l + des])
        };
        let nc = count as usize;
        let mut cuts = vec![0.0];
        let mut prev = 0.0;
        for j in 1..=nc {
            let target = TAU * j as f64;
            let guess = prev + (u_max - prev) * TAU / (sg * total - TAU * (j - 1) as f64).max(TAU);
            let c = solve_increasing(&g, target, prev, u_max, guess.clamp(prev, u_max));
            cuts.push(c);
            prev = c;
        }
        if u_max > prev {
            cuts.push(u_max);
        }
        let pieces: Vec<Piece> = (0..cuts.len() - 1)
            .into_par_iter()
            .map(|j| {
                let full = j < nc;
                let mut p = ctx.measure(&chart, lvl, cuts[j], cuts[j + 1], full, keep_field)?;
                p.index = j;
                Ok(p)
            })
            .collect::<Result<_>>()?;
        return Ok(Decomposition { level: k, exact: true, count, pieces });
    }
    // sampled local charts around points of the curve
    let anchor = e0.point[l + des];
    let m = ctx.params.sampled_pieces.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.params.seed.wrapping_add(k as u64));
    let centers: Vec<f64> = (0..m).map(|s| u_max * (s as f64 + rng.random::<f64>()) / m as f64).collect();
    let base_chart = curve.chart(f, 0, field.vector.clone());
    let pieces: Vec<Piece> = centers
        .par_iter()
        .enumerate()
        .map(|(idx, &u)| {
            let c = base_chart.eval(u, curve.n_pre);
            let local = Chart::new(f, &c.point, c.tau.clone(), 0, k, des, field.vector.clone());
            let z = local.eval(0.0, k);
            let sgn = z.tau[l + des].signum();
            let a = wrap(sgn * (local.refs[k][l + des] - anchor));
            let g = |s: f64| {
                let e = local.eval(s, k);
                (sgn * e.hx, sgn * e.tau[l + des])
            };
            let rate = sgn * z.tau[l + des];
            let mut hi = (TAU - a).max(1e-3) / rate;
            while g(hi).0 < TAU - a {
                hi *= 2.0;
            }
            let mut lo = -(a.max(1e-3)) / rate;
            while g(lo).0 > -a {
                lo *= 2.0;
            }
            let s1 = solve_increasing(&g, TAU - a, 0.0, hi, (TAU - a) / rate);
            let s0 = solve_increasing(&g, -a, lo, 0.0, -a / rate);
            let mut p = ctx.measure(&local, k, s0, s1, true, keep_field)?;
            p.index = idx;
            p.weight = (u_max / m as f64) / (s1 - s0);
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let count = pieces.iter().map(|p| p.weight).sum();
    Ok(Decomposition { level: k, exact: false, count, pieces })
}

/// Pieces of `f^k ∘ γ` cut at every full turn of the designated coordinate.
/// Levels with more pieces than `max_enumerated` are sampled.
pub fn decompose_image(f: &SkewProduct, curve: &AdmissibleCurve, k: usize, params: &CurveParams) -> Result<Decomposition> {
    let ctx = Ctx::new(f, curve.block, params)?;
    let field = AdaptedField::designated(f, curve, params.theta, params.p)?;
    decompose_with(&ctx, curve, &field, k, false)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PushedField {
    pub piece: usize,
    pub field: Vec<Vec<f64>>,
    pub holder_ratio: f64,
    pub variation: f64,
    pub certified: bool,
}

/// Normalised push-forward of `X` onto the level-`k` pieces, with the
/// Hölder constant re-measured on each full piece.
pub fn push_adapted_field(f: &SkewProduct, curve: &AdmissibleCurve, field: &AdaptedField, k: usize, params: &CurveParams) -> Result<Vec<PushedField>> {
    let ctx = Ctx::new(f, curve.block, params)?;
    let dec = decompose_with(&ctx, curve, field, k, true)?;
    Ok(dec
        .pieces
        .into_iter()
        .filter(|p| p.full)
        .map(|p| PushedField {
            piece: p.index,
            holder_ratio: p.holder_ratio,
            variation: p.variation,
            certified: p.holder_ratio <= field.c_x,
            field: p.field.unwrap_or_default(),
        })
        .collect())
}

/// `E(γ, X) = (1/|γ|) ∫ log |df X| dγ`.
pub fn expansion_integral(f: &SkewProduct, curve: &AdmissibleCurve, field: &AdaptedField, params: &CurveParams) -> Result<f64> {
    let ctx = Ctx::new(f, curve.block, params)?;
    Ok(decompose_with(&ctx, curve, field, 0, false)?.pieces[0].e_integral)
}

/// `I_m(γ, X)` for `m = 1..=n`, pushing `X` along the orbit of every sample.
pub fn i_n(f: &SkewProduct, curve: &AdmissibleCurve, field: &AdaptedField, n: usize) -> Result<Vec<f64>> {
    let l = f.base_dim();
    let d = f.fiber_dim();
    let rows: Vec<Vec<f64>> = curve
        .samples
        .par_iter()
        .map(|s| {
            let mut v = s.point.clone();
            let mut x = field.vector.clone();
            let mut sc = SkewScratch::new(f);
            let mut jac = vec![0.0; d * d];
            let mut out = vec![0.0; d];
            let mut acc = 0.0;
            let mut row = Vec::with_capacity(n);
            for _ in 0..n {
                f.fiber.jacobian(&v[l..], &mut jac);
                mat_vec(&jac, &x, &mut out);
                let nn = norm(&out);
                if !(nn > 0.0) {
                    return Err(Error::Degenerate("pushed field vanished".into()));
                }
                acc += nn.ln();
                row.push(acc);
                for (a, b) in x.iter_mut().zip(&out) {
                    *a = b / nn;
                }
                f.step_in_place(&mut v, &mut sc);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut res = vec![0.0; n];
    for i in 1..curve.samples.len() {
        let ds = curve.samples[i].s - curve.samples[i - 1].s;
        for m in 0..n {
            res[m] += 0.5 * ds * (rows[i][m] + rows[i - 1][m]);
        }
    }
    Ok(res.into_iter().map(|v| v / curve.length).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnstableVector {
    pub vector: Vec<f64>,
    /// `|fiber part| / |E^u_A part|`
    pub ratio: f64,
    pub interval: (f64, f64),
    pub within: bool,
}

/// Pushes a cone vector forward from `f^{-k_back}(m)` to `m`.
pub fn approximate_unstable_vector(f: &SkewProduct, m: &TorusVector, k_back: usize, seed: Option<&[f64]>) -> Result<UnstableVector> {
    let setup = Setup::new(f)?;
    let mut orbit = vec![m.clone()];
    for _ in 0..k_back {
        let prev = f.inverse(orbit.last().unwrap())?;
        orbit.push(prev);
    }
    Ok(push_from_orbit(f, &setup, &orbit, seed).0)
}

/// `orbit[0]` is the target point and `orbit[j] = f^{-j}`.
fn push_from_orbit(f: &SkewProduct, setup: &Setup, orbit: &[TorusVector], seed: Option<&[f64]>) -> (UnstableVector, f64) {
    let (l, d) = (setup.l, setup.d);
    let mut v = DVector::from_vec(match seed {
        Some(s) => s.to_vec(),
        None => {
            let mut v = setup.e_u.clone();
            v.extend(std::iter::repeat_n(0.0, d));
            v
        }
    });
    let mut growth = 0.0;
    for j in (1..orbit.len()).rev() {
        v = f.jacobian(orbit[j].coords()) * v;
        let n = v.norm();
        growth += n.ln();
        v /= n;
    }
    let c = &setup.split_inv * v.rows(0, l);
    let u = c.rows(0, setup.du).norm();
    let w = v.rows(l, d).norm();
    let ratio = w / u;
    let slack = setup.cone_slack();
    let mu = linalg::conorm(&setup.phi_u);
    let nu = linalg::op_norm(&setup.phi_u);
    let interval = ((mu - slack) / setup.lambda_hi, (nu + slack) / setup.lambda_lo);
    let within = orbit.len() < 2 || (ratio >= interval.0 * (1.0 - 1e-9) && ratio <= interval.1 * (1.0 + 1e-9));
    (UnstableVector { vector: v.iter().copied().collect(), ratio, interval, within }, growth)
}

/// `max J^u_{f^{-k}}(m) / J^u_{f^{-k}}(m')` over the given points, with the
/// unstable direction approximated `k_back` steps further back.
pub fn distortion_constant(f: &SkewProduct, points: &[TorusVector], k: usize, k_back: usize) -> Result<f64> {
    let setup = Setup::new(f)?;
    let logs: Vec<f64> = points
        .par_iter()
        .map(|m| {
            let mut orbit = vec![m.clone()];
            for _ in 0..k + k_back {
                let prev = f.inverse(orbit.last().unwrap())?;
                orbit.push(prev);
            }
            let (uv, _) = push_from_orbit(f, &setup, &orbit[k..], None);
            let (_, g) = push_from_orbit(f, &setup, &orbit[..=k], Some(&uv.vector));
            Ok(-g)
        })
        .collect::<Result<_>>()?;
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((hi - lo).exp())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionLedger {
    pub level: usize,
    pub exact: bool,
    pub count: f64,
    pub pieces: Vec<Piece>,
    /// `Σ_{good} min J`, `Σ_{bad} max J`, `Σ_{almost good} min J`
    pub g: f64,
    pub b: f64,
    pub p: f64,
    pub n_good: usize,
    pub n_bad: usize,
    pub n_almost_good: usize,
    /// `Σ_j ∫ J^u_{f^{-k}}` and its relative deviation from `|γ|`.
    pub change_of_variables: f64,
    pub change_of_variables_error: f64,
    /// Largest within-piece ratio `max J / min J`.
    pub distortion: f64,
    /// `Σ_j min J · E(γ_j, Y)`
    pub positivity: f64,
    pub min_e_integral: f64,
    pub holder_violations: usize,
    pub admissible_failures: usize,
    pub good_dominates_bad: Clause,
    pub sum_bounds: Option<Clause>,
    pub sum_upper: Option<Clause>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerRun {
    pub curve_length: f64,
    pub curve_checks: CurveChecks,
    pub xi: f64,
    /// `(ρ_max / ρ_min)(1 + ξ)` over the curve and all pieces.
    pub k_measured: f64,
    pub rho_bounds: (f64, f64),
    pub field_c_x: f64,
    pub e_start: f64,
    pub levels: Vec<DecompositionLedger>,
    pub q: Option<f64>,
    pub positivity_check: Option<Vec<Clause>>,
}

/// Levels `0..=k_max` of the decomposition with the bookkeeping sums.
pub fn ledger_sums(
    f: &SkewProduct,
    curve: &AdmissibleCurve,
    field: &AdaptedField,
    k_max: usize,
    params: &CurveParams,
    q: Option<f64>,
) -> Result<LedgerRun> {
    let ctx = Ctx::new(f, curve.block, params)?;
    let mut levels = Vec::new();
    let (mut rho_min, mut rho_max) = (curve.rho_min, curve.rho_max);
    for k in 0..=k_max {
        let dec = decompose_with(&ctx, curve, field, k, false)?;
        let full: Vec<&Piece> = dec.pieces.iter().filter(|p| p.full).collect();
        let sum_w = |c: FieldClass, min: bool| -> f64 {
            full.iter().filter(|p| p.class == c).map(|p| p.weight * if min { p.min_j } else { p.max_j }).sum::<f64>() + 0.0
        };
        let g = sum_w(FieldClass::Good, true);
        let b = sum_w(FieldClass::Bad, false);
        let p = sum_w(FieldClass::AlmostGood, true);
        let cov: f64 = dec.pieces.iter().map(|p| p.weight * p.j_integral).sum();
        let distortion = full.iter().map(|p| p.max_j / p.min_j).fold(1.0, f64::max);
        let positivity = full.iter().map(|p| p.weight * p.min_j * p.e_integral).sum();
        for pc in &full {
            rho_min = rho_min.min(pc.rho_min);
            rho_max = rho_max.max(pc.rho_max);
        }
        let count = |c: FieldClass| full.iter().filter(|p| p.class == c).count();
        levels.push(DecompositionLedger {
            level: k,
            exact: dec.exact,
            count: dec.count,
            g,
            b,
            p,
            n_good: count(FieldClass::Good),
            n_bad: count(FieldClass::Bad),
            n_almost_good: count(FieldClass::AlmostGood),
            change_of_variables: cov,
            change_of_variables_error: (cov - curve.length).abs() / curve.length,
            distortion,
            positivity,
            min_e_integral: full.iter().map(|p| p.e_integral).fold(f64::INFINITY, f64::min),
            holder_violations: if k == 0 { 0 } else { full.iter().filter(|p| p.holder_ratio > field.c_x).count() },
            admissible_failures: 0,
            good_dominates_bad: Clause {
                name: format!("g_{k} - sigma b_{k}"),
                pass: g >= params.sigma * b,
                value: g,
                bound: params.sigma * b,
                margin: g - params.sigma * b,
            },
            sum_bounds: None,
            sum_upper: None,
            pieces: dec.pieces,
        });
    }
    let k_measured = rho_max / rho_min * (1.0 + curve.xi);
    let (lo, hi) = Setup::new(f)?.rho_bounds(&ctx.coords);
    for lv in levels.iter_mut() {
        let total = lv.g + lv.b + lv.p;
        let e = lv.distortion;
        let lower = (1.0 - 1e-10) / (k_measured * e);
        let upper = (1.0 + 1e-10) * k_measured * k_measured * e;
        lv.sum_bounds = Some(Clause { name: "g + p + b lower".into(), pass: total >= lower, value: total, bound: lower, margin: total - lower });
        lv.sum_upper = Some(Clause { name: "g + p + b upper".into(), pass: total <= upper, value: total, bound: upper, margin: upper - total });
        let mut fails = 0;
        for pc in lv.pieces.iter().filter(|p| p.full) {
            let ratio = pc.length / curve.length;
            let len_ok = pc.length >= lo * pc.p_length * (1.0 - 1e-9) && pc.length <= hi * pc.p_length * (1.0 + 1e-9);
            let ratio_ok = ratio >= 1.0 / (k_measured * k_measured) && ratio <= k_measured;
            if !(pc.tangents_in_cone && pc.monotone && len_ok && ratio_ok) {
                fails += 1;
            }
        }
        lv.admissible_failures = fails;
    }
    let e_start = levels[0].pieces[0].e_integral;
    let positivity_check = q.map(|q| {
        levels
            .iter()
            .map(|lv| Clause {
                name: format!("sum min J E at level {}", lv.level),
                pass: lv.positivity >= 0.9 * q,
                value: lv.positivity,
                bound: 0.9 * q,
                margin: lv.positivity - 0.9 * q,
            })
            .collect()
    });
    Ok(LedgerRun {
        curve_length: curve.length,
        curve_checks: curve.checks(f),
        xi: curve.xi,
        k_measured,
        rho_bounds: (lo, hi),
        field_c_x: field.c_x,
        e_start,
        levels,
        q,
        positivity_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{IdentityMap, KickProjection, StandardMap};
    use crate::torus::ToralAutomorphism;
    use std::sync::Arc;

    fn cat3() -> ToralAutomorphism {
        ToralAutomorphism::from_rows(&[vec![13, 8], vec![8, 5]]).unwrap()
    }

    fn preset(r: f64) -> SkewProduct {
        SkewProduct::new(cat3(), 4, 2, KickProjection::first_coordinate(2, 2), Arc::new(StandardMap::new(r))).unwrap()
    }

    fn start() -> TorusVector {
        TorusVector::reduce(&[0.3, 1.1, 2.0, 0.7]).unwrap()
    }

    fn quick() -> CurveParams {
        CurveParams { min_samples: 257, h: 8.0, sampled_pieces: 32, ..CurveParams::default() }
    }

    #[test]
    fn admissible_curve_invariants() {
        let f = preset(64.0);
        let c = grow_admissible_curve(&f, &start(), 0, &quick()).unwrap();
        let ch = c.checks(&f);
        assert!(ch.pass, "{ch:?} len {} bounds {:?}", c.length, c.length_bounds);
        assert!((c.displacement - TAU).abs() < 1e-9);
        let c2 = grow_admissible_curve(&f, &TorusVector::reduce(&[4.0, 2.5, 0.1, 3.3]).unwrap(), 0, &quick()).unwrap();
        let k = c.rho_max.max(c2.rho_max) / c.rho_min.min(c2.rho_min) * (1.0 + c.xi);
        let ratio = c2.length / c.length;
        assert!(ratio <= k && ratio >= 1.0 / (k * k));
    }

    #[test]
    fn zero_coupling_rejected() {
        let f = SkewProduct::new(cat3(), 4, 2, KickProjection::zero(2, 2), Arc::new(StandardMap::new(64.0))).unwrap();
        assert!(matches!(grow_admissible_curve(&f, &start(), 0, &quick()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn level_zero_is_the_curve() {
        let f = preset(64.0);
        let p = quick();
        let c = grow_admissible_curve(&f, &start(), 0, &p).unwrap();
        let d = decompose_image(&f, &c, 0, &p).unwrap();
        assert_eq!(d.pieces.len(), 1);
        assert_eq!(d.pieces[0].min_j, 1.0);
        assert!((d.pieces[0].length - c.length).abs() / c.length < 1e-6);
    }

    #[test]
    fn level_one_change_of_variables() {
        let f = preset(64.0);
        let p = quick();
        let c = grow_admissible_curve(&f, &start(), 0, &p).unwrap();
        let d = decompose_image(&f, &c, 1, &p).unwrap();
        assert!(d.exact);
        let s: f64 = d.pieces.iter().map(|p| p.j_integral).sum();
        assert!((s - c.length).abs() / c.length < 1e-6);
        // count heuristic: λ_r times the designated speed ratio
        let lam = Setup::new(&f).unwrap().lambda_lo;
        assert!(d.count > 0.5 * lam * 0.5 && d.count < 2.0 * lam * 2.0);
    }

    #[test]
    fn identity_fiber_has_zero_expansion() {
        let f = SkewProduct::new(cat3(), 4, 2, KickProjection::first_coordinate(2, 2), Arc::new(IdentityMap { dim: 2 })).unwrap();
        let p = quick();
        let c = grow_admissible_curve(&f, &start(), 0, &p).unwrap();
        let x = AdaptedField::designated(&f, &c, 0.9, 3.0).unwrap();
        assert_eq!(expansion_integral(&f, &c, &x, &p).unwrap(), 0.0);
        assert!(i_n(&f, &c, &x, 4).unwrap().iter().all(|v| *v == 0.0));
    }

    fn sin_angle(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        norm(&a.iter().zip(b).map(|(x, y)| x - dot * y).collect::<Vec<_>>())
    }

    #[test]
    fn unstable_vector_contracts() {
        let f = SkewProduct::standard_family(Arc::new(StandardMap::new(10.0)), 10.0).unwrap();
        let m = start();
        let a = approximate_unstable_vector(&f, &m, 30, None).unwrap();
        let b = approximate_unstable_vector(&f, &m, 30, Some(&[0.8, 0.5, 0.01, -0.02])).unwrap();
        assert!(sin_angle(&a.vector, &b.vector) < 1e-10);
        assert!(a.within, "{a:?}");
        let c = approximate_unstable_vector(&f, &m, 40, None).unwrap();
        assert!(sin_angle(&a.vector, &c.vector) < 1e-10);
        let seed = [0.3, 0.2, 0.1, 0.0];
        assert_eq!(approximate_unstable_vector(&f, &m, 0, Some(&seed)).unwrap().vector, seed.to_vec());
    }

    #[test]
    fn unstable_vector_decoupled_identity() {
        let f = SkewProduct::new(ToralAutomorphism::cat_map(), 3, 1, KickProjection::zero(2, 2), Arc::new(IdentityMap { dim: 2 })).unwrap();
        let v = approximate_unstable_vector(&f, &start(), 5, None).unwrap();
        let eu = f.base.splitting().unwrap().unstable_basis.column(0).into_owned();
        assert!((v.vector[0].abs() - eu[0].abs()).abs() < 1e-15 && v.vector[2] == 0.0 && v.vector[3] == 0.0);
    }

    #[test]
    fn distortion_is_one_for_linear_products() {
        let f = SkewProduct::new(ToralAutomorphism::cat_map(), 3, 1, KickProjection::zero(2, 2), Arc::new(IdentityMap { dim: 2 })).unwrap();
        let pts: Vec<TorusVector> = (0..8).map(|i| TorusVector::reduce(&[0.7 * i as f64, 0.3, 1.0, 2.0]).unwrap()).collect();
        assert_eq!(distortion_constant(&f, &pts, 3, 5).unwrap(), 1.0);
        let g = preset(1e4);
        let e: Vec<f64> = (1..=3).map(|k| distortion_constant(&g, &pts, k, 8).unwrap()).collect();
        assert!(e.iter().all(|&x| x <= 1.1));
    }

    #[test]
    fn classification_cases() {
        let cone = Cone::delta(16.0).unwrap();
        let one = vec![vec![0usize, 1]];
        assert_eq!(classify_field(&[vec![1.0, 0.0], vec![1.0, 0.5]], &one, &[Some(cone.clone())]), FieldClass::Good);
        assert_eq!(classify_field(&[vec![1.0, 0.0], vec![0.0, 1.0]], &one, &[Some(cone.clone())]), FieldClass::Bad);
        let two = vec![vec![0usize, 1], vec![2, 3]];
        let cones = [Some(cone.clone()), Some(cone)];
        let s = [vec![1.0, 0.1, 1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]];
        assert_eq!(classify_field(&s, &two, &cones), FieldClass::AlmostGood);
    }

    #[test]
    fn pushed_field_certifies_at_moderate_r() {
        let f = preset(100.0);
        let p = CurveParams { max_refine: 0, ..quick() };
        let c = grow_admissible_curve(&f, &start(), 0, &p).unwrap();
        let x = AdaptedField::designated(&f, &c, 0.9, 3.0).unwrap();
        let pushed = push_adapted_field(&f, &c, &x, 1, &p).unwrap();
        let bad = pushed.iter().filter(|p| !p.certified).count();
        assert!(bad as f64 <= 0.01 * pushed.len() as f64, "{bad} of {}", pushed.len());
        for pf in &pushed {
            assert!(pf.field.iter().all(|y| (norm(y) - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn ledger_small_run() {
        let f = preset(1e4);
        let p = CurveParams { max_refine: 2, max_enumerated: 1000, ..quick() };
        let c = grow_admissible_curve(&f, &start(), 0, &p).unwrap();
        let x = AdaptedField::designated(&f, &c, 0.9, 3.0).unwrap();
        let run = ledger_sums(&f, &c, &x, 2, &p, None).unwrap();
        assert_eq!(run.levels[0].g, 1.0);
        assert_eq!(run.levels[0].b, 0.0);
        for lv in &run.levels {
            assert!(lv.change_of_variables_error < 1e-4, "{} {}", lv.level, lv.change_of_variables_error);
            assert!(lv.distortion <= 1.1);
            assert!(lv.good_dominates_bad.pass);
        }
        assert!(!run.levels[1].exact);
    }
}
