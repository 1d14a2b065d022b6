//! Finite-time Lyapunov spectra by QR re-orthonormalisation of tangent frames.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::{FiberMap, SkewProduct, SkewScratch};
use crate::torus::wrap;

/// A linear cocycle over some dynamics: each call writes the Jacobian at the
/// current state (row-major) and advances one step.
pub trait Cocycle: Send {
    fn dim(&self) -> usize;
    fn step(&mut self, jac: &mut [f64]);
}

/// Constant matrix, e.g. a toral automorphism on its own.
pub struct LinearCocycle {
    m: Vec<f64>,
    n: usize,
}

impl LinearCocycle {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension("cocycle matrix must be square".into()));
        }
        let n = m.nrows();
        Ok(LinearCocycle { m: (0..n * n).map(|k| m[(k / n, k % n)]).collect(), n })
    }
}

impl Cocycle for LinearCocycle {
    fn dim(&self) -> usize {
        self.n
    }

    fn step(&mut self, jac: &mut [f64]) {
        jac.copy_from_slice(&self.m);
    }
}

/// Orbit of a fiber map on its own.
pub struct FiberOrbit {
    map: Arc<dyn FiberMap>,
    y: Vec<f64>,
    buf: Vec<f64>,
}

impl FiberOrbit {
    pub fn new(map: Arc<dyn FiberMap>, y0: Vec<f64>) -> Self {
        let buf = vec![0.0; y0.len()];
        FiberOrbit { map, y: y0, buf }
    }
}

impl Cocycle for FiberOrbit {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn step(&mut self, jac: &mut [f64]) {
        self.map.jacobian(&self.y, jac);
        self.map.eval_lift(&self.y, &mut self.buf);
        for (y, b) in self.y.iter_mut().zip(&self.buf) {
            *y = wrap(*b);
        }
    }
}

/// Deterministic skew product; either the full derivative or the fiber block.
pub struct SkewCocycle {
    f: Arc<SkewProduct>,
    v: Vec<f64>,
    scratch: SkewScratch,
    fiber_only: bool,
    top: DMatrix<f64>,
    kick: DMatrix<f64>,
    fbuf: Vec<f64>,
}

impl SkewCocycle {
    /// `v0` lists base coordinates first.
    pub fn new(f: Arc<SkewProduct>, v0: Vec<f64>, fiber_only: bool) -> Self {
        let scratch = SkewScratch::new(&f);
        let top = f.base_power().to_matrix();
        let kick = f.kick_power().to_matrix();
        let d = f.fiber_dim();
        SkewCocycle { f, v: v0, scratch, fiber_only, top, kick, fbuf: vec![0.0; d * d] }
    }
}

impl Cocycle for SkewCocycle {
    fn dim(&self) -> usize {
        if self.fiber_only {
            self.f.fiber_dim()
        } else {
            self.f.dim()
        }
    }

    fn step(&mut self, jac: &mut [f64]) {
        let l = self.f.base_dim();
        let d = self.f.fiber_dim();
        if self.fiber_only {
            self.f.fiber.jacobian(&self.v[l..], jac);
        } else {
            let n = l + d;
            self.f.fiber.jacobian(&self.v[l..], &mut self.fbuf);
            jac.fill(0.0);
            for i in 0..l {
                for j in 0..l {
                    jac[i * n + j] = self.top[(i, j)];
                }
            }
            for i in 0..d {
                for j in 0..l {
                    jac[(l + i) * n + j] = self.kick[(i, j)];
                }
                for j in 0..d {
                    jac[(l + i) * n + l + j] = self.fbuf[i * d + j];
                }
            }
        }
        self.f.step_in_place(&mut self.v, &mut self.scratch);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KickSharing {
    /// One uniform draw per block.
    Independent,
    /// The same draw enters every block.
    Shared,
}

/// Fiber map driven by a kick source added to the designated coordinates.
pub struct KickedOrbit<K: KickSource> {
    map: Arc<dyn FiberMap>,
    designated: Vec<usize>,
    y: Vec<f64>,
    buf: Vec<f64>,
    source: K,
    kicks: Vec<f64>,
}

pub trait KickSource: Send {
    /// Fills one kick per block.
    fn next(&mut self, out: &mut [f64]);
}

impl<K: KickSource> KickedOrbit<K> {
    pub fn new(map: Arc<dyn FiberMap>, y0: Vec<f64>, source: K) -> Self {
        let designated: Vec<usize> = map.blocks().iter().map(|b| b.designated()).collect();
        let kicks = vec![0.0; designated.len()];
        let buf = vec![0.0; y0.len()];
        KickedOrbit { map, designated, y: y0, buf, source, kicks }
    }
}

impl<K: KickSource> Cocycle for KickedOrbit<K> {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn step(&mut self, jac: &mut [f64]) {
        self.map.jacobian(&self.y, jac);
        self.map.eval_lift(&self.y, &mut self.buf);
        self.source.next(&mut self.kicks);
        for (&c, k) in self.designated.iter().zip(&self.kicks) {
            self.buf[c] += k;
        }
        for (y, b) in self.y.iter_mut().zip(&self.buf) {
            *y = wrap(*b);
        }
    }
}

pub struct IidKicks {
    rng: ChaCha8Rng,
    sharing: KickSharing,
}

impl KickSource for IidKicks {
    fn next(&mut self, out: &mut [f64]) {
        match self.sharing {
            KickSharing::Independent => out.iter_mut().for_each(|k| *k = self.rng.random_range(0.0..TAU)),
            KickSharing::Shared => {
                let k = self.rng.random_range(0.0..TAU);
                out.fill(k);
            }
        }
    }
}

/// Stationary Markov measure of maximal entropy on a subshift of finite type.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParryMeasure {
    pub lambda: f64,
    pub weights: Vec<f64>,
    /// Row-major transition probabilities.
    pub transitions: Vec<f64>,
    pub symbols: usize,
}

fn irreducible(c: &[u8], k: usize) -> bool {
    (0..k).all(|s| {
        let mut seen = vec![false; k];
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..k {
                if c[i * k + j] != 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&b| b)
    })
}

fn perron(c: &[u8], k: usize, transpose: bool) -> Vec<f64> {
    // power iteration on C + I, which is primitive whenever C is irreducible
    let mut v = vec![1.0 / k as f64; k];
    let mut w = vec![0.0; k];
    for _ in 0..100_000 {
        for i in 0..k {
            w[i] = v[i]
                + (0..k)
                    .map(|j| {
                        let e = if transpose { c[j * k + i] } else { c[i * k + j] };
                        e as f64 * v[j]
                    })
                    .sum::<f64>();
        }
        let s: f64 = w.iter().sum();
        let mut diff = 0.0f64;
        for i in 0..k {
            let x = w[i] / s;
            diff = diff.max((x - v[i]).abs());
            v[i] = x;
        }
        if diff < 1e-16 {
            break;
        }
    }
    v
}

/// `C` is a row-major 0-1 matrix on `k` symbols.
pub fn parry_measure(c: &[u8], k: usize) -> Result<ParryMeasure> {
    if k == 0 || c.len() != k * k {
        return Err(Error::Dimension("transition matrix must be k x k".into()));
    }
    if c.iter().any(|&e| e > 1) {
        return Err(Error::InvalidParameter("transition matrix must be 0-1".into()));
    }
    if !irreducible(c, k) {
        return Err(Error::Reducible);
    }
    let v = perron(c, k, false);
    let u = perron(c, k, true);
    let lambda = (0..k).map(|j| c[j] as f64 * v[j]).sum::<f64>() / v[0];
    let z: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    let weights = u.iter().zip(&v).map(|(a, b)| a * b / z).collect();
    let mut transitions = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            transitions[i * k + j] = c[i * k + j] as f64 * v[j] / (lambda * v[i]);
        }
    }
    Ok(ParryMeasure { lambda, weights, transitions, symbols: k })
}

fn sample(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Kick `2π Σ_j ω_{n+j} t^{-(j+1)}` read off a Parry-distributed symbol
/// sequence, truncated to `window` digits; `t` is the alphabet size.
pub struct MarkovKicks {
    rng: ChaCha8Rng,
    parry: ParryMeasure,
    window: VecDeque<usize>,
    sharing: KickSharing,
}

impl MarkovKicks {
    pub fn new(parry: ParryMeasure, window: usize, sharing: KickSharing, mut rng: ChaCha8Rng) -> Self {
        let mut w = VecDeque::with_capacity(window);
        let mut s = sample(&mut rng, &parry.weights);
        for _ in 0..window.max(1) {
            w.push_back(s);
            let k = parry.symbols;
            s = sample(&mut rng, &parry.transitions[s * k..(s + 1) * k]);
        }
        MarkovKicks { rng, parry, window: w, sharing }
    }

    fn advance(&mut self) -> f64 {
        let t = self.parry.symbols as f64;
        let theta = self.window.iter().rev().fold(0.0, |acc, &d| (acc + d as f64) / t);
        let k = self.parry.symbols;
        let last = *self.window.back().unwrap();
        let next = sample(&mut self.rng, &self.parry.transitions[last * k..(last + 1) * k]);
        self.window.pop_front();
        self.window.push_back(next);
        TAU * theta
    }
}

impl KickSource for MarkovKicks {
    fn next(&mut self, out: &mut [f64]) {
        match self.sharing {
            KickSharing::Shared => {
                let k = self.advance();
                out.fill(k);
            }
            KickSharing::Independent => {
                for o in out.iter_mut() {
                    *o = self.advance();
                }
            }
        }
    }
}

/// Base `θ -> k^L θ mod 1` kept as a base-`|k|` digit stream: each step
/// drops `L` digits, appends `L` fresh uniform ones, and complements the
/// digits when `k^L` is negative. The kick is the new `θ`.
pub struct ExpandingKicks {
    rng: ChaCha8Rng,
    base: u32,
    shift: usize,
    negate: bool,
    digits: VecDeque<u32>,
    coupled: bool,
}

const DIGIT_WINDOW: usize = 64;

impl ExpandingKicks {
    pub fn new(k: i64, shift: usize, coupled: bool, mut rng: ChaCha8Rng) -> Result<Self> {
        if k.unsigned_abs() < 2 {
            return Err(Error::InvalidParameter(format!("expanding base needs |k| >= 2, got {k}")));
        }
        let base = k.unsigned_abs() as u32;
        let digits = (0..DIGIT_WINDOW).map(|_| rng.random_range(0..base)).collect();
        Ok(ExpandingKicks { rng, base, shift, negate: k < 0 && shift % 2 == 1, digits, coupled })
    }
}

impl KickSource for ExpandingKicks {
    fn next(&mut self, out: &mut [f64]) {
        for _ in 0..self.shift {
            self.digits.pop_front();
            self.digits.push_back(self.rng.random_range(0..self.base));
        }
        if self.negate {
            for d in self.digits.iter_mut() {
                *d = self.base - 1 - *d;
            }
        }
        let b = self.base as f64;
        let theta = self.digits.iter().rev().fold(0.0, |acc, &d| (acc + d as f64) / b);
        let kick = if self.coupled { TAU * theta } else { 0.0 };
        out.iter_mut().for_each(|o| *o = 0.0);
        if let Some(o) = out.first_mut() {
            *o = kick;
        }
    }
}

#[derive(Clone, Debug)]
pub enum System {
    Skew(Arc<SkewProduct>),
    Fiber(Arc<dyn FiberMap>),
    Linear(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CocycleDriver {
    /// Needs `System::Skew`; `fiber_only` restricts to the fiber block.
    DeterministicSkew { fiber_only: bool },
    IidKick { sharing: KickSharing },
    MarkovShift { transitions: Vec<Vec<u8>>, window: usize, sharing: KickSharing },
    /// `E_{k^L}` base with `L = ⌊2r⌋`; an uncoupled base leaves the fiber alone.
    ExpandingBase { k: i64, r: f64, coupled: bool },
    /// Fiber map or matrix on its own.
    Autonomous,
}

impl CocycleDriver {
    pub fn name(&self) -> &'static str {
        match self {
            CocycleDriver::DeterministicSkew { .. } => "deterministic-skew",
            CocycleDriver::IidKick { .. } => "iid-kick",
            CocycleDriver::MarkovShift { .. } => "markov-shift",
            CocycleDriver::ExpandingBase { .. } => "expanding-base",
            CocycleDriver::Autonomous => "autonomous",
        }
    }

    pub fn expanding_shift(r: f64) -> usize {
        (2.0 * r).floor() as usize
    }
}

fn flatten(rows: &[Vec<u8>]) -> Result<(Vec<u8>, usize)> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension("transition matrix must be square".into()));
    }
    Ok((rows.concat(), k))
}

/// Builds the cocycle for one seed. Fiber coordinates are drawn before base
/// coordinates, so a skew product and its fiber map share fiber seeds.
pub fn make_cocycle(system: &System, driver: &CocycleDriver, seed: u64) -> Result<Box<dyn Cocycle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.0..TAU)).collect() };
    let fiber_of = |s: &System| -> Result<Arc<dyn FiberMap>> {
        match s {
            System::Fiber(m) => Ok(m.clone()),
            System::Skew(f) => Ok(f.fiber.clone()),
            System::Linear(_) => Err(Error::InvalidParameter("driver needs a fiber map".into())),
        }
    };
    Ok(match (driver, system) {
        (CocycleDriver::DeterministicSkew { fiber_only }, System::Skew(f)) => {
            let y = point(f.fiber_dim(), &mut rng);
            let mut v = point(f.base_dim(), &mut rng);
            v.extend(y);
            Box::new(SkewCocycle::new(f.clone(), v, *fiber_only))
        }
        (CocycleDriver::DeterministicSkew { .. }, _) => {
            return Err(Error::InvalidParameter("deterministic-skew mode needs a skew product".into()))
        }
        (CocycleDriver::Autonomous, System::Linear(m)) => Box::new(LinearCocycle::new(m)?),
        (CocycleDriver::Autonomous, s) => {
            let map = fiber_of(s)?;
            let y = point(map.dim(), &mut rng);
            Box::new(FiberOrbit::new(map, y))
        }
        (CocycleDriver::IidKick { sharing }, s) => {
            let map = fiber_of(s)?;
            let y = point(map.dim(), &mut rng);
            Box::new(KickedOrbit::new(map, y, IidKicks { rng, sharing: *sharing }))
        }
        (CocycleDriver::MarkovShift { transitions, window, sharing }, s) => {
            let map = fiber_of(s)?;
            let (c, k) = flatten(transitions)?;
            let parry = parry_measure(&c, k)?;
            let y = point(map.dim(), &mut rng);
            Box::new(KickedOrbit::new(map, y, MarkovKicks::new(parry, *window, *sharing, rng)))
        }
        (CocycleDriver::ExpandingBase { k, r, coupled }, s) => {
            let map = fiber_of(s)?;
            let y = point(map.dim(), &mut rng);
            let src = ExpandingKicks::new(*k, CocycleDriver::expanding_shift(*r), *coupled, rng)?;
            Box::new(KickedOrbit::new(map, y, src))
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovParams {
    pub n: usize,
    pub burn_in: usize,
    pub qr_period: usize,
    pub seeds: Vec<u64>,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        LyapunovParams { n: 1_000_000, burn_in: 1000, qr_period: 1, seeds: (0..10).collect() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub exponents: Vec<f64>,
}

/// Runs one orbit; returns exponents sorted descending.
pub fn benettin(c: &mut dyn Cocycle, n: usize, burn_in: usize, qr_period: usize) -> Result<Vec<f64>> {
    if qr_period == 0 || n < qr_period {
        return Err(Error::InvalidParameter(format!("need n >= qr_period >= 1, got n={n}, qr_period={qr_period}")));
    }
    let d = c.dim();
    let mut frame = vec![0.0; d * d];
    for i in 0..d {
        frame[i * d + i] = 1.0;
    }
    let mut tmp = vec![0.0; d * d];
    let mut jac = vec![0.0; d * d];
    let mut ld = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for step in 0..burn_in + n {
        c.step(&mut jac);
        for col in 0..d {
            let q = &frame[col * d..(col + 1) * d];
            for i in 0..d {
                let row = &jac[i * d..(i + 1) * d];
                tmp[col * d + i] = row.iter().zip(q).map(|(a, b)| a * b).sum();
            }
        }
        std::mem::swap(&mut frame, &mut tmp);
        let last = step + 1 == burn_in + n;
        let counted = step >= burn_in;
        if (step + 1) % qr_period == 0 || last || step + 1 == burn_in {
            linalg::mgs(&mut frame, d, d, Some(&mut ld));
            if counted {
                for (a, l) in acc.iter_mut().zip(&ld) {
                    *a += l;
                }
            }
            if ld.iter().any(|l| !l.is_finite()) {
                return Err(Error::Diverged(step));
            }
        }
    }
    let mut ex: Vec<f64> = acc.iter().map(|a| a / n as f64).collect();
    ex.sort_by(|a, b| b.total_cmp(a));
    Ok(ex)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// `λ_index > value` on every seed (index from 0).
    ExponentAbove { index: usize },
    /// At least `count` exponents above the value on every seed.
    CountAbove { count: usize },
    /// `|Σ λ| < value` on every seed.
    AbsSumBelow,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Bound {
    pub name: String,
    pub kind: BoundKind,
    pub value: f64,
}

impl Bound {
    pub fn exponent_above(name: impl Into<String>, index: usize, value: f64) -> Self {
        Bound { name: name.into(), kind: BoundKind::ExponentAbove { index }, value }
    }

    pub fn count_above(name: impl Into<String>, count: usize, value: f64) -> Self {
        Bound { name: name.into(), kind: BoundKind::CountAbove { count }, value }
    }

    pub fn abs_sum_below(name: impl Into<String>, value: f64) -> Self {
        Bound { name: name.into(), kind: BoundKind::AbsSumBelow, value }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundComparison {
    pub name: String,
    pub bound: f64,
    /// Worst case over seeds.
    pub observed: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LyapunovReport {
    pub mode: String,
    /// Seed means, descending.
    pub exponents: Vec<f64>,
    pub n_steps: usize,
    pub burn_in: usize,
    pub qr_period: usize,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedResult>,
    /// max - min over seeds, per exponent.
    pub spread: Vec<f64>,
    /// `|Σ λ|` of the seed means, for conservative systems.
    pub sum_check: Option<f64>,
    /// Exact base exponent when the base is linear and known.
    pub base_exponent: Option<f64>,
    pub bound_comparisons: Vec<BoundComparison>,
}

impl LyapunovReport {
    fn from_seeds(mode: &str, mut per_seed: Vec<SeedResult>, n: usize, burn_in: usize, qr_period: usize, conservative: bool) -> Self {
        per_seed.sort_by_key(|s| s.seed);
        let d = per_seed.first().map_or(0, |s| s.exponents.len());
        let k = per_seed.len() as f64;
        let mut exponents: Vec<f64> = (0..d).map(|i| per_seed.iter().map(|s| s.exponents[i]).sum::<f64>() / k).collect();
        exponents.sort_by(|a, b| b.total_cmp(a));
        let spread = (0..d)
            .map(|i| {
                let (lo, hi) = per_seed
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.exponents[i]), hi.max(s.exponents[i])));
                hi - lo
            })
            .collect();
        let sum_check = conservative.then(|| exponents.iter().sum::<f64>().abs());
        LyapunovReport {
            mode: mode.to_string(),
            exponents,
            n_steps: n,
            burn_in,
            qr_period,
            seeds: per_seed.iter().map(|s| s.seed).collect(),
            per_seed,
            spread,
            sum_check,
            base_exponent: None,
            bound_comparisons: Vec::new(),
        }
    }

    /// Concatenates per-seed results of two runs with matching settings.
    pub fn merge(&self, other: &LyapunovReport) -> Result<LyapunovReport> {
        if (self.n_steps, self.burn_in, self.qr_period) != (other.n_steps, other.burn_in, other.qr_period) || self.mode != other.mode {
            return Err(Error::InvalidParameter("reports were produced with different settings".into()));
        }
        let mut seeds = self.per_seed.clone();
        seeds.extend(other.per_seed.iter().cloned());
        let mut r = LyapunovReport::from_seeds(&self.mode, seeds, self.n_steps, self.burn_in, self.qr_period, self.sum_check.is_some());
        r.base_exponent = self.base_exponent;
        Ok(r)
    }
}

/// Runs every seed in parallel and merges.
pub fn lyapunov_spectrum(system: &System, driver: &CocycleDriver, params: &LyapunovParams) -> Result<LyapunovReport> {
    if params.seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed".into()));
    }
    let per_seed: Vec<SeedResult> = params
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut c = make_cocycle(system, driver, seed)?;
            let exponents = benettin(c.as_mut(), params.n, params.burn_in, params.qr_period)?;
            Ok(SeedResult { seed, exponents })
        })
        .collect::<Result<_>>()?;
    let conservative = match system {
        System::Linear(m) => (m.determinant().abs() - 1.0).abs() < 1e-9,
        _ => true,
    };
    let mut rep = LyapunovReport::from_seeds(driver.name(), per_seed, params.n, params.burn_in, params.qr_period, conservative);
    if let CocycleDriver::ExpandingBase { k, r, .. } = driver {
        rep.base_exponent = Some(CocycleDriver::expanding_shift(*r) as f64 * (k.unsigned_abs() as f64).ln());
    }
    Ok(rep)
}

/// Exponents of the fiber block along a deterministic skew orbit.
pub fn fiber_exponents(f: Arc<SkewProduct>, params: &LyapunovParams) -> Result<LyapunovReport> {
    lyapunov_spectrum(&System::Skew(f), &CocycleDriver::DeterministicSkew { fiber_only: true }, params)
}

/// Fiber exponents over the expanding base `θ -> k^{⌊2r⌋} θ`.
pub fn expanding_base_cocycle(fiber: Arc<dyn FiberMap>, k: i64, r: f64, params: &LyapunovParams) -> Result<LyapunovReport> {
    lyapunov_spectrum(&System::Fiber(fiber), &CocycleDriver::ExpandingBase { k, r, coupled: true }, params)
}

/// Attaches pass/fail per bound; exponents are untouched.
pub fn compare_bounds(report: &LyapunovReport, bounds: &[Bound]) -> Result<LyapunovReport> {
    let mut out = report.clone();
    for b in bounds {
        if !b.value.is_finite() {
            return Err(Error::InvalidParameter(format!("bound '{}' is not finite", b.name)));
        }
        let seeds: Vec<&Vec<f64>> = if report.per_seed.is_empty() {
            vec![&report.exponents]
        } else {
            report.per_seed.iter().map(|s| &s.exponents).collect()
        };
        let (observed, pass) = match b.kind {
            BoundKind::ExponentAbove { index } => {
                let o = seeds.iter().map(|e| e.get(index).copied().unwrap_or(f64::NAN)).fold(f64::INFINITY, f64::min);
                (o, o > b.value)
            }
            BoundKind::CountAbove { count } => {
                if count == 0 {
                    (f64::INFINITY, true)
                } else {
                    let o = seeds.iter().map(|e| e.get(count - 1).copied().unwrap_or(f64::NAN)).fold(f64::INFINITY, f64::min);
                    (o, o > b.value)
                }
            }
            BoundKind::AbsSumBelow => {
                let o = seeds.iter().map(|e| e.iter().sum::<f64>().abs()).fold(0.0, f64::max);
                (o, o < b.value)
            }
        };
        out.bound_comparisons.push(BoundComparison { name: b.name.clone(), bound: b.value, observed, pass });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{IdentityMap, KickProjection, StandardMap};
    use crate::torus::ToralAutomorphism;

    fn params(n: usize, seeds: usize) -> LyapunovParams {
        LyapunovParams { n, burn_in: 100, qr_period: 1, seeds: (0..seeds as u64).collect() }
    }

    #[test]
    fn cat_map_exponents() {
        let a = ToralAutomorphism::cat_map();
        let ll = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let r = lyapunov_spectrum(&System::Linear(a.matrix()), &CocycleDriver::Autonomous, &params(100_000, 1)).unwrap();
        assert!((r.exponents[0] - ll).abs() < 1e-9 && (r.exponents[1] + ll).abs() < 1e-9);
        assert!((r.exponents[0] - 0.96242).abs() < 1e-3);
        let ri = lyapunov_spectrum(&System::Linear(a.inverse_matrix()), &CocycleDriver::Autonomous, &params(100_000, 1)).unwrap();
        assert!((ri.exponents[0] + r.exponents[1]).abs() < 1e-6);
        assert!(r.sum_check.unwrap() < 1e-9);
    }

    #[test]
    fn qr_period_invariance() {
        let a = ToralAutomorphism::cat_map().matrix();
        let e: Vec<f64> = [1, 5, 20]
            .iter()
            .map(|&q| {
                let p = LyapunovParams { qr_period: q, ..params(10_000, 1) };
                lyapunov_spectrum(&System::Linear(a.clone()), &CocycleDriver::Autonomous, &p).unwrap().exponents[0]
            })
            .collect();
        assert!((e[0] - e[1]).abs() < 1e-9 && (e[0] - e[2]).abs() < 1e-9);
    }

    #[test]
    fn identity_fiber_is_zero() {
        let id: Arc<dyn FiberMap> = Arc::new(IdentityMap { dim: 2 });
        for drv in [
            CocycleDriver::Autonomous,
            CocycleDriver::IidKick { sharing: KickSharing::Independent },
            CocycleDriver::ExpandingBase { k: 3, r: 2.0, coupled: true },
            CocycleDriver::MarkovShift { transitions: vec![vec![1, 1], vec![1, 0]], window: 30, sharing: KickSharing::Shared },
        ] {
            let r = lyapunov_spectrum(&System::Fiber(id.clone()), &drv, &params(1000, 2)).unwrap();
            assert!(r.exponents.iter().all(|e| e.abs() < 1e-9), "{drv:?}");
        }
    }

    #[test]
    fn decoupled_fiber_matches_standalone() {
        let s: Arc<dyn FiberMap> = Arc::new(StandardMap::new(20.0));
        let f = SkewProduct::new(ToralAutomorphism::cat_map(), 4, 2, KickProjection::zero(2, 2), s.clone()).unwrap();
        let p = params(20_000, 3);
        let a = fiber_exponents(Arc::new(f), &p).unwrap();
        let b = lyapunov_spectrum(&System::Fiber(s), &CocycleDriver::Autonomous, &p).unwrap();
        for (x, y) in a.exponents.iter().zip(&b.exponents) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn iid_standard_cocycle_bound() {
        let r = 100.0;
        let s: Arc<dyn FiberMap> = Arc::new(StandardMap::new(r));
        let rep = lyapunov_spectrum(&System::Fiber(s), &CocycleDriver::IidKick { sharing: KickSharing::Independent }, &params(100_000, 2)).unwrap();
        let rep = compare_bounds(&rep, &[Bound::exponent_above("nuh", 0, 0.6 * r.ln()), Bound::abs_sum_below("sum", 1e-2)]).unwrap();
        assert!(rep.bound_comparisons.iter().all(|b| b.pass), "{:?}", rep.bound_comparisons);
    }

    #[test]
    fn expanding_base_exponent_and_degenerate_kick() {
        let s: Arc<dyn FiberMap> = Arc::new(StandardMap::new(10.0));
        let p = params(5_000, 2);
        let rep = expanding_base_cocycle(s.clone(), 2, 10.0, &p).unwrap();
        assert!((rep.base_exponent.unwrap() - 20.0 * 2f64.ln()).abs() < 1e-12);
        let off = lyapunov_spectrum(&System::Fiber(s.clone()), &CocycleDriver::ExpandingBase { k: 2, r: 10.0, coupled: false }, &p).unwrap();
        let alone = lyapunov_spectrum(&System::Fiber(s), &CocycleDriver::Autonomous, &p).unwrap();
        assert_eq!(off.exponents, alone.exponents);
        assert!(ExpandingKicks::new(1, 1, true, ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn parry_examples() {
        let full = parry_measure(&[1; 9], 3).unwrap();
        assert!(full.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-14));
        assert!((full.lambda - 3.0).abs() < 1e-12);
        let g = parry_measure(&[1, 1, 1, 0], 2).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((g.lambda - phi).abs() < 1e-12);
        // symmetric C: u = v = (φ, 1), weights ∝ (φ², 1)
        let z = phi * phi + 1.0;
        assert!((g.weights[0] - phi * phi / z).abs() < 1e-12);
        let one = parry_measure(&[1], 1).unwrap();
        assert_eq!(one.weights, vec![1.0]);
        assert!(matches!(parry_measure(&[1, 1, 0, 1], 2), Err(Error::Reducible)));
        // stationarity and row sums
        for i in 0..2 {
            assert!((g.transitions[2 * i] + g.transitions[2 * i + 1] - 1.0).abs() < 1e-12);
            let pi: f64 = (0..2).map(|j| g.weights[j] * g.transitions[2 * j + i]).sum();
            assert!((pi - g.weights[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn compare_bounds_examples() {
        let rep = LyapunovReport::from_seeds("x", vec![SeedResult { seed: 0, exponents: vec![3.9, -3.9] }], 10, 0, 1, true);
        let out = compare_bounds(&rep, &[Bound::exponent_above("b", 0, 2.763)]).unwrap();
        assert!(out.bound_comparisons[0].pass);
        assert_eq!(out.exponents, rep.exponents);
        assert_eq!(compare_bounds(&rep, &[]).unwrap(), rep);
        assert!(compare_bounds(&rep, &[Bound::exponent_above("nan", 0, f64::NAN)]).is_err());
    }

    #[test]
    fn merge_is_order_independent() {
        let s: Arc<dyn FiberMap> = Arc::new(StandardMap::new(5.0));
        let drv = CocycleDriver::IidKick { sharing: KickSharing::Independent };
        let a = lyapunov_spectrum(&System::Fiber(s.clone()), &drv, &LyapunovParams { seeds: vec![1, 2], ..params(2000, 0) }).unwrap();
        let b = lyapunov_spectrum(&System::Fiber(s.clone()), &drv, &LyapunovParams { seeds: vec![3], ..params(2000, 0) }).unwrap();
        let all = lyapunov_spectrum(&System::Fiber(s), &drv, &LyapunovParams { seeds: vec![1, 2, 3], ..params(2000, 0) }).unwrap();
        assert_eq!(a.merge(&b).unwrap(), all);
        assert_eq!(b.merge(&a).unwrap(), all);
    }

    #[test]
    fn bad_params_rejected() {
        let a = ToralAutomorphism::cat_map().matrix();
        let p = LyapunovParams { n: 3, qr_period: 5, ..params(0, 1) };
        assert!(lyapunov_spectrum(&System::Linear(a), &CocycleDriver::Autonomous, &p).is_err());
    }
}
