//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewlab::harness::{self, ExperimentConfig};
use skewlab::hypotheses::{self, BatteryParams};
use skewlab::lyapunov::{self, CocycleDriver, LyapunovParams, System};
use skewlab::maps::{self, ConjugacyFamily, CoupledP, CoupledQ, FiberMap, IdentityMap, Reversibility, SkewProduct, StandardMap, TwistMap};
use skewlab::torus::ToralAutomorphism;
use skewlab::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn max_det_error(map: &dyn FiberMap, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut y = vec![0.0; map.dim()];
    for _ in 0..n {
        y.iter_mut().for_each(|c| *c = rng.random_range(0.0..TAU));
        worst = worst.max((maps::jacobian_matrix(map, &y).determinant() - 1.0).abs());
    }
    worst
}

fn c1() -> Result<Outcome> {
    let cases: Vec<(&str, Box<dyn FiberMap>)> = vec![
        ("s_10", Box::new(StandardMap::new(10.0))),
        ("s_1000", Box::new(StandardMap::new(1e3))),
        ("p_1000,0.01", Box::new(CoupledP::new(1e3, 0.01))),
        ("q_1000", Box::new(CoupledQ::new(1e3))),
        ("froeschle(5,5,0.1)", Box::new(TwistMap::froeschle(5.0, 5.0, 0.1))),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, m)) in cases.iter().enumerate() {
        let e = max_det_error(m.as_ref(), 100_000, i as u64);
        pass &= e < 1e-10;
        parts.push(format!("{name} {e:.1e}"));
    }
    outcome(pass, format!("max |det - 1|: {}", parts.join(", ")))
}

fn c2() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [1e2, 1e4, 1e6] {
        let l = hypotheses::critical_region(&StandardMap::new(r), 0)?.length();
        pass &= l <= 8.0 / r.sqrt();
        parts.push(format!("r={r:e} l={l:.6} (<= {:.6})", 8.0 / r.sqrt()));
    }
    let l100 = hypotheses::critical_region(&StandardMap::new(100.0), 0)?.length();
    pass &= (l100 - 0.40067).abs() < 1e-5;
    outcome(pass, parts.join(", "))
}

fn c3() -> Result<Outcome> {
    let s = StandardMap::new(1e4);
    let rep = hypotheses::run_battery(&s, 1e4, None, &BatteryParams::default())?;
    let b = &rep.blocks[0];
    let s2 = &rep.s2[0];
    let beta_ok = b.beta.value >= 1e4f64.powf(1.0 / 6.0) - 2.0;
    let paper_ok = (b.s1_product_paper - 2.40).abs() < 0.01;
    let pass = beta_ok && b.zeta.value > 0.0 && b.s1_product > 1.0 && paper_ok && rep.s1.pass && s2.invariance.pass && s2.samples >= 10_000 && s2.band.width >= FRAC_PI_2 && s2.pass;
    outcome(
        pass,
        format!(
            "beta {:.5} (>= {:.3}), zeta {:.3e}, product {:.4e}, paper-bound product {:.4}, S-2(a) {} at {} samples, band width {:.4}",
            b.beta.value, b.beta_paper_bound, b.zeta.value, b.s1_product, b.s1_product_paper, s2.invariance.pass, s2.samples, s2.band.width
        ),
    )
}

fn f_r(r: f64) -> Result<SkewProduct> {
    SkewProduct::standard_family(Arc::new(StandardMap::new(r)), r)
}

fn c4() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for r in [10.0, 100.0, 1e4] {
        worst = worst.max((hypotheses::check_a2(&f_r(r)?)?.k - 1.0).abs());
    }
    outcome(worst <= 1e-12, format!("max |K - 1| over r in {{10, 100, 1e4}}: {worst:.1e}"))
}

fn c5() -> Result<Outcome> {
    let trend = hypotheses::a3_trend(&f_r, &[10.0, 20.0, 40.0, 80.0], 0.1, 32)?;
    let rep = hypotheses::check_a3_a4(&f_r(40.0)?, 10, 0.1, 64)?;
    outcome(
        trend.decreasing && trend.final_below_threshold && rep.a3.pass && !rep.a4.pass,
        format!("A-3 ln ratios {:?} decreasing {}, A-3 at r=40 {}, A-4 at r=40 {} (expected fail)", trend.ln_values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(), trend.decreasing, rep.a3.pass, rep.a4.pass),
    )
}

fn c6() -> Result<Outcome> {
    let lin = |m: &ToralAutomorphism| -> Result<Vec<f64>> {
        let params = LyapunovParams { n: 100_000, burn_in: 100, qr_period: 1, seeds: vec![0] };
        Ok(lyapunov::lyapunov_spectrum(&System::Linear(m.matrix()), &CocycleDriver::Autonomous, &params)?.exponents)
    };
    let cat = ToralAutomorphism::cat_map();
    let a = lin(&cat)?;
    let b = lin(&cat.inverse())?;
    let lam = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let anti = a.iter().zip(b.iter().rev()).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    let params = LyapunovParams { n: 100_000, burn_in: 100, qr_period: 1, seeds: vec![0, 1] };
    let id = lyapunov::lyapunov_spectrum(&System::Fiber(Arc::new(IdentityMap { dim: 2 })), &CocycleDriver::Autonomous, &params)?;
    let id_err = id.per_seed.iter().flat_map(|s| s.exponents.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        (a[0] - 0.96242).abs() < 1e-3 && (a[0] - lam).abs() < 1e-3 && id_err < 1e-9 && anti < 1e-6,
        format!("cat lambda1 {:.6}, identity max |lambda| {id_err:.1e}, A vs A^-1 antisymmetry {anti:.1e}", a[0]),
    )
}

fn preset_run(name: &str, r: Option<f64>) -> Result<(bool, String)> {
    let cfg = harness::preset(name, r)?;
    let out = harness::run(&cfg)?;
    let detail = out.checks.iter().map(|c| format!("{} [{:.4} vs {:.4}]", c.name, c.value, c.bound)).collect::<Vec<_>>().join("; ");
    Ok((out.pass, detail))
}

fn c7() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [50.0, 100.0, 200.0] {
        let (p, d) = preset_run("nuhd", Some(r))?;
        pass &= p;
        parts.push(format!("r={r}: {d}"));
    }
    outcome(pass, parts.join(" | "))
}

fn c8() -> Result<Outcome> {
    let (p, d) = preset_run("coupled-p", Some(200.0))?;
    outcome(p, d)
}

fn c9() -> Result<Outcome> {
    let g = Reversibility::new(ConjugacyFamily::G, 10.0, 0.01)?.max_discrepancy(10_000, 9)?;
    let h = Reversibility::new(ConjugacyFamily::H, 10.0, 0.0)?.max_discrepancy(10_000, 10)?;
    let q = Reversibility::new(ConjugacyFamily::Q, 10.0, 0.0)?.max_discrepancy(10_000, 11)?;
    let p = CoupledP::new(10.0, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut inv: f64 = 0.0;
    for _ in 0..10_000 {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
        let jj = p.j_map(p.j_map(v));
        let rr = CoupledP::r_map(CoupledP::r_map(v));
        for i in 0..4 {
            inv = inv.max((jj[i] - v[i]).abs()).max((rr[i] - v[i]).abs());
        }
    }
    outcome(g <= 1e-9 && h <= 1e-9 && q <= 1e-9 && inv <= 1e-9, format!("g conjugacy {g:.1e}, h via hat-Gamma {h:.1e}, q reversibility {q:.1e}, J^2 = R^2 = Id {inv:.1e}"))
}

fn c10() -> Result<Outcome> {
    let (p, d) = preset_run("shift", Some(50.0))?;
    outcome(p, d)
}

fn c11() -> Result<Outcome> {
    let cfg = harness::preset("curves", None)?;
    let out = harness::run(&cfg)?;
    let failed: Vec<String> = out.checks.iter().filter(|c| !c.pass).map(|c| format!("{} [{:.4e} vs {:.4e}]", c.name, c.value, c.bound)).collect();
    let rep = &out.report;
    let levels = rep.pointer("/ledger/levels").and_then(|v| v.as_array()).cloned().unwrap_or_default();
    let summary: Vec<String> = levels
        .iter()
        .map(|l| {
            format!(
                "k={} cov {:.1e} E {:.4} g {:.3} b {:.3} pos {:.3}",
                l["level"],
                l["change_of_variables_error"].as_f64().unwrap_or(f64::NAN),
                l["distortion"].as_f64().unwrap_or(f64::NAN),
                l["g"].as_f64().unwrap_or(f64::NAN),
                l["b"].as_f64().unwrap_or(f64::NAN),
                l["positivity"].as_f64().unwrap_or(f64::NAN)
            )
        })
        .collect();
    let q = rep["q"].as_f64().unwrap_or(f64::NAN);
    outcome(
        out.pass,
        format!("{} checks, 0.9Q = {:.3}; {}{}", out.checks.len(), 0.9 * q, summary.join("; "), if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }),
    )
}

fn csv_twice(cfg: &ExperimentConfig) -> Result<bool> {
    Ok(harness::run(cfg)?.to_csv()? == harness::run(cfg)?.to_csv()?)
}

fn c12() -> Result<Outcome> {
    let mut nuhd = harness::preset("nuhd", None)?;
    nuhd.lyapunov.n = 100_000;
    let mut check = harness::preset("hypotheses", None)?;
    check.battery.grid_n = 512;
    let mut curves = harness::preset("curves", None)?;
    curves.curves.k_max = 3;
    curves.curves.params.max_enumerated = 1000;
    let mut markov = harness::preset("nuhd", Some(50.0))?;
    markov.driver = CocycleDriver::MarkovShift { transitions: vec![vec![1, 1], vec![1, 0]], window: 32, sharing: lyapunov::KickSharing::Independent };
    markov.lyapunov.n = 50_000;
    let results = [("lyapunov", csv_twice(&nuhd)?), ("check", csv_twice(&check)?), ("curves", csv_twice(&curves)?), ("markov", csv_twice(&markov)?)];
    outcome(results.iter().all(|r| r.1), results.iter().map(|(n, ok)| format!("{n} identical: {ok}")).collect::<Vec<_>>().join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 12] = [
        ("conservativity", c1),
        ("critical region length", c2),
        ("S-1 / S-2 at r = 1e4", c3),
        ("A-2 exactness", c4),
        ("A-3 trend, A-4 fails", c5),
        ("Lyapunov oracles", c6),
        ("NUH bound, iid kicks", c7),
        ("coupled bound", c8),
        ("conjugacy identities", c9),
        ("expanding base", c10),
        ("curve machinery", c11),
        ("determinism", c12),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("criterion {n:2} {}: {name} ({:.1}s) {detail}", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
