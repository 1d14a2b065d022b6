//! Configuration-driven runs, presets and report files.
//!
//! A run turns an [`ExperimentConfig`] into a [`RunOutput`]: a JSON document
//! (config, config hash, seeds, grids, checks, full report) and a CSV table.
//! Output bytes depend only on the config.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curves::{self, AdaptedField, CurveParams};
use crate::error::{Error, Result};
use crate::hypotheses::{self, BatteryParams, Clause};
use crate::lyapunov::{self, Bound, CocycleDriver, KickSharing, LyapunovParams, System};
use crate::maps::{self, CoupledP, CoupledQ, FiberMap, FourierPotential, IdentityMap, KickProjection, SkewProduct, StandardMap, TwistMap};
use crate::torus::{ToralAutomorphism, TorusVector};

/// Overrides `output.dir` when set.
pub const OUT_DIR_ENV: &str = "SKEWLAB_OUT_DIR";

pub const PRESETS: [&str; 7] = ["nuhd", "coupled-p", "coupled-q", "froeschle", "shift", "hypotheses", "curves"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Lyapunov,
    Check,
    Curves,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// standard, coupled_p, coupled_q, froeschle, twist, custom-potential, identity
    pub family: String,
    pub r: f64,
    pub tau: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub dim: usize,
    pub potential: Option<FourierPotential>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { family: "standard".into(), r: 100.0, tau: 0.0, tau1: 0.0, tau2: 0.0, tau3: 0.0, dim: 2, potential: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConfig {
    /// Row-major integer rows.
    pub matrix: Vec<Vec<i64>>,
    pub base_iterates: usize,
    pub kick_iterates: usize,
    /// first-coordinate, zero or pairs
    pub projection: String,
    /// `(fiber, base)` index pairs for the `pairs` projection.
    pub pairs: Vec<[usize; 2]>,
}

impl Default for BaseConfig {
    fn default() -> Self {
        BaseConfig {
            matrix: vec![vec![2, 1], vec![1, 1]],
            base_iterates: 4,
            kick_iterates: 2,
            projection: "first-coordinate".into(),
            pairs: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub k_max: usize,
    pub block: usize,
    pub start: Vec<f64>,
    pub theta: f64,
    pub p: f64,
    pub params: CurveParams,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        CurvesConfig { k_max: 5, block: 0, start: vec![0.3, 1.1, 2.0, 0.7], theta: 0.9, p: 3.0, params: CurveParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// File stem; defaults to the run name.
    pub stem: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into(), stem: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub pipeline: Pipeline,
    pub map: MapConfig,
    pub base: Option<BaseConfig>,
    pub driver: CocycleDriver,
    pub lyapunov: LyapunovParams,
    pub bounds: Vec<Bound>,
    pub battery: BatteryParams,
    pub curves: CurvesConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            pipeline: Pipeline::Lyapunov,
            map: MapConfig::default(),
            base: None,
            driver: CocycleDriver::IidKick { sharing: KickSharing::Independent },
            lyapunov: LyapunovParams::default(),
            bounds: Vec::new(),
            battery: BatteryParams::default(),
            curves: CurvesConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// sha256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => PathBuf::from(&self.output.dir),
        }
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.name.clone())
    }
}

pub fn build_fiber(m: &MapConfig) -> Result<Arc<dyn FiberMap>> {
    Ok(match m.family.as_str() {
        "standard" => Arc::new(StandardMap::new(m.r)),
        "coupled_p" | "coupled-p" => Arc::new(CoupledP::new(m.r, m.tau)),
        "coupled_q" | "coupled-q" => Arc::new(CoupledQ::new(m.r)),
        "froeschle" => Arc::new(TwistMap::froeschle(m.tau1, m.tau2, m.tau3)),
        "twist" | "custom-potential" => {
            let v = m.potential.clone().ok_or_else(|| Error::Config(format!("family {} needs map.potential", m.family)))?;
            Arc::new(TwistMap::new(v))
        }
        "identity" => Arc::new(IdentityMap { dim: m.dim }),
        other => return Err(Error::Config(format!("unknown map family '{other}'"))),
    })
}

pub fn build_skew(cfg: &ExperimentConfig) -> Result<Option<SkewProduct>> {
    let Some(b) = &cfg.base else { return Ok(None) };
    let fiber = build_fiber(&cfg.map)?;
    let base = ToralAutomorphism::from_rows(&b.matrix)?;
    let (d, l) = (fiber.dim(), base.dim());
    let projection = match b.projection.as_str() {
        "first-coordinate" => KickProjection::first_coordinate(d, l),
        "zero" => KickProjection::zero(d, l),
        "pairs" => KickProjection::select(d, l, &b.pairs.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>()),
        other => return Err(Error::Config(format!("unknown projection '{other}'"))),
    };
    Ok(Some(SkewProduct::new(base, b.base_iterates, b.kick_iterates, projection, fiber)?))
}

fn lyapunov_preset(name: &str, map: MapConfig, driver: CocycleDriver, bounds: Vec<Bound>) -> ExperimentConfig {
    ExperimentConfig { name: name.into(), pipeline: Pipeline::Lyapunov, map, driver, bounds, ..ExperimentConfig::default() }
}

/// Default config of a named preset; `r` replaces the preset's parameter.
pub fn preset(name: &str, r: Option<f64>) -> Result<ExperimentConfig> {
    let iid = CocycleDriver::IidKick { sharing: KickSharing::Independent };
    let cfg = match name {
        "nuhd" => {
            let r = r.unwrap_or(100.0);
            lyapunov_preset(
                name,
                MapConfig { r, ..MapConfig::default() },
                iid,
                vec![Bound::exponent_above("lambda1 > 0.6 ln r", 0, 0.6 * r.ln()), Bound::abs_sum_below("|sum| < 1e-2", 1e-2)],
            )
        }
        "coupled-p" | "coupled-q" | "froeschle" => {
            let r = r.unwrap_or(200.0);
            let map = match name {
                "coupled-p" => MapConfig { family: "coupled_p".into(), r, tau: 1e-3, ..MapConfig::default() },
                "coupled-q" => MapConfig { family: "coupled_q".into(), r, ..MapConfig::default() },
                _ => MapConfig { family: "froeschle".into(), r, tau1: r, tau2: r, tau3: 1e-3, ..MapConfig::default() },
            };
            lyapunov_preset(
                name,
                map,
                iid,
                vec![Bound::count_above("two exponents > 0.3 ln(r/9)", 2, 0.3 * (r / 9.0).ln()), Bound::abs_sum_below("|sum| < 2e-2", 2e-2)],
            )
        }
        "shift" => {
            let r = r.unwrap_or(50.0);
            lyapunov_preset(
                name,
                MapConfig { r, ..MapConfig::default() },
                CocycleDriver::ExpandingBase { k: 2, r, coupled: true },
                vec![Bound::exponent_above("lambda1 > 0.6 ln r", 0, 0.6 * r.ln()), Bound::abs_sum_below("|sum| < 1e-2", 1e-2)],
            )
        }
        "hypotheses" => {
            let r = r.unwrap_or(1e4);
            let k = r.floor().max(1.0) as usize;
            ExperimentConfig {
                name: name.into(),
                pipeline: Pipeline::Check,
                map: MapConfig { r, ..MapConfig::default() },
                base: Some(BaseConfig { base_iterates: 2 * k, kick_iterates: k, ..BaseConfig::default() }),
                ..ExperimentConfig::default()
            }
        }
        "curves" => ExperimentConfig {
            name: name.into(),
            pipeline: Pipeline::Curves,
            map: MapConfig { r: r.unwrap_or(1e4), ..MapConfig::default() },
            base: Some(BaseConfig { matrix: vec![vec![13, 8], vec![8, 5]], ..BaseConfig::default() }),
            ..ExperimentConfig::default()
        },
        other => return Err(Error::Config(format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")))),
    };
    Ok(cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutput {
    pub name: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub grids: BTreeMap<String, usize>,
    pub checks: Vec<Clause>,
    pub pass: bool,
    pub report: serde_json::Value,
    pub csv_header: Vec<String>,
    pub csv_rows: Vec<Vec<String>>,
}

impl RunOutput {
    pub fn to_json(&self) -> Result<String> {
        let doc = serde_json::json!({
            "name": self.name,
            "config": self.config,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "grids": self.grids,
            "checks": self.checks,
            "pass": self.pass,
            "report": self.report,
        });
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))
    }

    /// First line is a `#` comment with hash, seeds and grids; then the header.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.csv_header).map_err(io_err)?;
        for row in &self.csv_rows {
            w.write_record(row).map_err(io_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?).expect("csv is utf8");
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let grids: Vec<String> = self.grids.iter().map(|(k, v)| format!("{k}={v}")).collect();
        Ok(format!("# config_hash={} seeds={} {}\n{body}", self.config_hash, seeds.join(";"), grids.join(" ")))
    }

    /// Writes `<stem>.json` and `<stem>.csv` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&json, self.to_json()?).map_err(|e| Error::Config(format!("{}: {e}", json.display())))?;
        fs::write(&csv, self.to_csv()?).map_err(|e| Error::Config(format!("{}: {e}", csv.display())))?;
        Ok((json, csv))
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Config(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))
}

fn finish(cfg: &ExperimentConfig, seeds: Vec<u64>, grids: BTreeMap<String, usize>, checks: Vec<Clause>, report: serde_json::Value, header: &[&str], rows: Vec<Vec<String>>) -> Result<RunOutput> {
    Ok(RunOutput {
        name: cfg.name.clone(),
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        seeds,
        grids,
        pass: checks.iter().all(|c| c.pass),
        checks,
        report,
        csv_header: header.iter().map(|s| s.to_string()).collect(),
        csv_rows: rows,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.pipeline {
        Pipeline::Lyapunov => run_lyapunov(cfg),
        Pipeline::Check => run_check(cfg),
        Pipeline::Curves => run_curves(cfg),
    }
}

/// CSV columns: seed, exponent_index, value.
pub fn run_lyapunov(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let system = match (&cfg.driver, build_skew(cfg)?) {
        (CocycleDriver::DeterministicSkew { .. }, Some(f)) => System::Skew(Arc::new(f)),
        _ => System::Fiber(build_fiber(&cfg.map)?),
    };
    let report = lyapunov::lyapunov_spectrum(&system, &cfg.driver, &cfg.lyapunov)?;
    let report = lyapunov::compare_bounds(&report, &cfg.bounds)?;
    let checks = report
        .bound_comparisons
        .iter()
        .map(|b| {
            let below = cfg.bounds.iter().any(|x| x.name == b.name && x.kind == lyapunov::BoundKind::AbsSumBelow);
            let margin = if below { b.bound - b.observed } else { b.observed - b.bound };
            Clause { name: b.name.clone(), pass: b.pass, value: b.observed, bound: b.bound, margin }
        })
        .collect();
    let rows = report
        .per_seed
        .iter()
        .flat_map(|s| s.exponents.iter().enumerate().map(move |(i, v)| vec![s.seed.to_string(), i.to_string(), num(*v)]))
        .collect();
    let grids = BTreeMap::from([("n".to_string(), cfg.lyapunov.n), ("qr_period".into(), cfg.lyapunov.qr_period), ("burn_in".into(), cfg.lyapunov.burn_in)]);
    finish(cfg, cfg.lyapunov.seeds.clone(), grids, checks, to_value(&report)?, &["seed", "exponent_index", "value"], rows)
}

/// CSV columns: section, name, pass, value, bound, margin.
pub fn run_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let fiber = build_fiber(&cfg.map)?;
    let skew = build_skew(cfg)?;
    let rep = hypotheses::run_battery(fiber.as_ref(), cfg.map.r, skew.as_ref(), &cfg.battery)?;
    let mut sections: Vec<(String, Clause)> = Vec::new();
    for b in &rep.blocks {
        sections.push((format!("block{}", b.block), Clause::above("beta >= r^(1/6) - 2", b.beta.value, b.beta_paper_bound)));
        sections.push((format!("block{}", b.block), Clause::above("zeta > 0", b.zeta.value, 0.0)));
    }
    sections.extend(rep.s1.clauses.iter().map(|c| ("s1".to_string(), c.clone())));
    for s in &rep.s2 {
        let tag = format!("s2.block{}", s.block);
        sections.extend(s.invariance.clauses.iter().chain(&s.band_verdict.clauses).map(|c| (tag.clone(), c.clone())));
    }
    if let Some(a) = &rep.a1 {
        sections.extend(a.verdict.clauses.iter().map(|c| ("a1".to_string(), c.clone())));
    }
    if let Some(a) = &rep.a2 {
        sections.extend(a.verdict.clauses.iter().map(|c| ("a2".to_string(), c.clone())));
    }
    if let Some(x) = &rep.xi {
        sections.extend(x.cone.clauses.iter().chain(&x.expansion.clauses).map(|c| ("xi".to_string(), c.clone())));
    }
    let mut checks: Vec<Clause> = sections.iter().map(|(s, c)| Clause { name: format!("{s}: {}", c.name), ..c.clone() }).collect();
    if let Some(e) = &rep.xi_error {
        checks.push(Clause { name: format!("xi: {e}"), pass: false, value: f64::NAN, bound: f64::NAN, margin: f64::NAN });
    }
    // informational sections (A-3/A-4, paper-bound S-1) go to the CSV but do not gate the exit code
    let mut rows: Vec<Vec<String>> = sections.iter().map(|(s, c)| clause_row(s, c)).collect();
    rows.extend(rep.s1_paper_bounds.clauses.iter().map(|c| clause_row("s1.paper", c)));
    if let Some(a) = &rep.a3_a4 {
        for (tag, v) in [("a3", &a.a3), ("a4", &a.a4), ("ph", &a.ph)] {
            rows.extend(v.clauses.iter().map(|c| clause_row(tag, c)));
        }
    }
    let b = &cfg.battery;
    let grids = BTreeMap::from([("grid_n".to_string(), b.grid_n), ("sample_n".into(), b.sample_n), ("sweep_n".into(), b.sweep_n), ("xi_samples".into(), b.xi_samples)]);
    finish(cfg, vec![b.seed], grids, checks, to_value(&rep)?, &["section", "name", "pass", "value", "bound", "margin"], rows)
}

fn clause_row(section: &str, c: &Clause) -> Vec<String> {
    vec![section.to_string(), c.name.clone(), c.pass.to_string(), num(c.value), num(c.bound), num(c.margin)]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvesReport {
    pub beta: f64,
    pub zeta: f64,
    pub crit_length: f64,
    pub q: f64,
    pub good_field_bound: f64,
    pub distortion_by_level: Vec<f64>,
    pub distortion_monotone: bool,
    pub holder_violations: Vec<usize>,
    pub ledger: curves::LedgerRun,
}

/// CSV columns: k, j, class, weight, full, min_j, max_j, e_integral, length.
pub fn run_curves(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let f = build_skew(cfg)?.ok_or_else(|| Error::Config("curves pipeline needs a [base] section".into()))?;
    let c = &cfg.curves;
    let block = c.block;
    let fiber = f.fiber.clone();
    let cone = hypotheses::delta_cone(fiber.as_ref(), block)?;
    let crit = hypotheses::critical_region(fiber.as_ref(), block)?;
    let beta = hypotheses::estimate_beta(fiber.as_ref(), block, &cone, &crit, cfg.battery.grid_n)?.value;
    let zeta = hypotheses::estimate_zeta(fiber.as_ref(), block, cfg.battery.grid_n)?.value;
    let q = hypotheses::q_bound(&[beta], &[zeta], cfg.battery.sigma)?;
    let l = crit.length();
    let good_field_bound = 0.9 * ((TAU - l) / TAU * beta.ln() + l / TAU * zeta.ln());

    let start = TorusVector::reduce(&c.start)?;
    let curve = curves::grow_admissible_curve(&f, &start, block, &c.params)?;
    let field = AdaptedField::designated(&f, &curve, c.theta, c.p)?;
    let run = curves::ledger_sums(&f, &curve, &field, c.k_max, &c.params, Some(q))?;

    let mut checks = vec![
        Clause { name: "curve admissible".into(), pass: run.curve_checks.pass, value: run.curve_checks.unit_speed_error, bound: 1e-8, margin: 1e-8 - run.curve_checks.unit_speed_error },
        Clause::above("good-field lower bound", run.e_start, good_field_bound),
    ];
    for lv in &run.levels {
        let k = lv.level;
        checks.push(Clause::below(format!("k={k} change of variables"), lv.change_of_variables_error, 1e-4));
        checks.push(Clause { name: format!("k={k} admissible pieces"), pass: lv.admissible_failures == 0, value: lv.admissible_failures as f64, bound: 0.0, margin: -(lv.admissible_failures as f64) });
        checks.push(Clause { name: format!("k={k} distortion"), pass: lv.distortion <= 1.1, value: lv.distortion, bound: 1.1, margin: 1.1 - lv.distortion });
        checks.push(Clause { name: format!("k={k} g >= sigma b"), ..lv.good_dominates_bad.clone() });
        for s in [&lv.sum_bounds, &lv.sum_upper].into_iter().flatten() {
            checks.push(Clause { name: format!("k={k} {}", s.name), ..s.clone() });
        }
    }
    checks.extend(run.positivity_check.iter().flatten().cloned());

    let mut rows = Vec::new();
    for lv in &run.levels {
        for p in &lv.pieces {
            rows.push(vec![
                lv.level.to_string(),
                p.index.to_string(),
                p.class.as_str().to_string(),
                num(p.weight),
                p.full.to_string(),
                num(p.min_j),
                num(p.max_j),
                num(p.e_integral),
                num(p.length),
            ]);
        }
    }
    let distortion_by_level: Vec<f64> = run.levels.iter().map(|l| l.distortion).collect();
    let report = CurvesReport {
        beta,
        zeta,
        crit_length: l,
        q,
        good_field_bound,
        distortion_monotone: distortion_by_level.windows(2).all(|w| w[1] >= w[0]),
        distortion_by_level,
        holder_violations: run.levels.iter().map(|l| l.holder_violations).collect(),
        ledger: run,
    };
    let mut report_json = to_value(&report)?;
    // per-piece tables live in the CSV
    if let Some(levels) = report_json.pointer_mut("/ledger/levels").and_then(|v| v.as_array_mut()) {
        for lv in levels {
            if let Some(o) = lv.as_object_mut() {
                o.remove("pieces");
            }
        }
    }
    let p = &c.params;
    let grids = BTreeMap::from([
        ("grid_n".to_string(), cfg.battery.grid_n),
        ("min_samples".into(), p.min_samples),
        ("piece_samples".into(), p.piece_samples),
        ("sampled_pieces".into(), p.sampled_pieces),
        ("max_enumerated".into(), p.max_enumerated),
    ]);
    finish(
        cfg,
        vec![p.seed],
        grids,
        checks,
        report_json,
        &["k", "j", "class", "weight", "full", "min_j", "max_j", "e_integral", "length"],
        rows,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapEval {
    pub map: String,
    pub point: Vec<f64>,
    pub image: Vec<f64>,
    /// Row-major.
    pub jacobian: Vec<f64>,
    pub det: f64,
}

/// Evaluates the fiber map, or the skew product when a base is configured.
pub fn eval_map(cfg: &ExperimentConfig, point: &[f64]) -> Result<MapEval> {
    let p = TorusVector::reduce(point)?;
    if let Some(f) = build_skew(cfg)? {
        let image = f.eval(&p)?.into_vec();
        let j = f.jacobian(p.coords());
        let det = j.determinant();
        return Ok(MapEval { map: format!("skew[{}]", f.fiber.name()), point: p.into_vec(), image, jacobian: j.transpose().iter().copied().collect(), det });
    }
    let fiber = build_fiber(&cfg.map)?;
    let image = maps::eval(fiber.as_ref(), &p)?.into_vec();
    let j = maps::jacobian_matrix(fiber.as_ref(), p.coords());
    let det = j.determinant();
    Ok(MapEval { map: fiber.name(), point: p.into_vec(), image, jacobian: j.transpose().iter().copied().collect(), det })
}
