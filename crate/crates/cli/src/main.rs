use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skewlab::harness::{self, BaseConfig, ExperimentConfig, Pipeline, RunOutput};
use skewlab::lyapunov::{CocycleDriver, KickSharing};
use skewlab::{Error, Result};

#[derive(Parser)]
#[command(name = "skewlab", version, about = "Skew-product experiments: hypothesis checks, Lyapunov spectra, unstable-curve ledgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fiber map / skew product evaluation.
    Maps {
        #[command(subcommand)]
        action: MapsAction,
    },
    /// Hypothesis battery; writes a JSON report and a clause table.
    Check(Common),
    /// Lyapunov spectrum with per-seed CSV.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        /// iid-kick, deterministic-skew, markov-shift, expanding-base, autonomous
        #[arg(long)]
        mode: Option<String>,
        /// Expanding-base multiplier.
        #[arg(long, default_value_t = 2)]
        k: i64,
        /// Markov transition matrix, rows separated by ';'.
        #[arg(long)]
        transitions: Option<String>,
        #[arg(long, default_value_t = 32)]
        window: usize,
        /// Kick every block with the same draw.
        #[arg(long)]
        shared: bool,
    },
    /// Unstable-curve decomposition ledger.
    Curves {
        #[command(subcommand)]
        action: CurvesAction,
    },
    /// Run a named preset end to end.
    Reproduce {
        /// nuhd, coupled-p, coupled-q, froeschle, shift, hypotheses, curves
        preset: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum MapsAction {
    Eval {
        #[command(flatten)]
        common: Common,
        /// Comma-separated point (base coordinates first for skew products).
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
}

#[derive(Subcommand)]
enum CurvesAction {
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_max: Option<usize>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau3: Option<f64>,
    /// Base matrix, rows separated by ';'.
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    base_iterates: Option<usize>,
    #[arg(long)]
    kick_iterates: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Seeds as "a..b" or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    qr_period: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    grid_n: Option<usize>,
    /// Output directory (the SKEWLAB_OUT_DIR variable takes precedence).
    #[arg(long)]
    out: Option<String>,
}

fn parse_rows<T: std::str::FromStr>(s: &str) -> Result<Vec<Vec<T>>> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<T>().map_err(|_| Error::Config(format!("bad matrix entry '{v}'"))))
                .collect()
        })
        .collect()
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

impl Common {
    fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(p) = &self.config {
            cfg = ExperimentConfig::from_file(p)?;
        }
        let m = &mut cfg.map;
        if let Some(f) = &self.family {
            m.family = f.clone();
        }
        if let Some(r) = self.r {
            m.r = r;
        }
        for (dst, src) in [(&mut m.tau, self.tau), (&mut m.tau1, self.tau1), (&mut m.tau2, self.tau2), (&mut m.tau3, self.tau3)] {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if self.base.is_some() || self.base_iterates.is_some() || self.kick_iterates.is_some() {
            let b = cfg.base.get_or_insert_with(BaseConfig::default);
            if let Some(s) = &self.base {
                b.matrix = parse_rows(s)?;
            }
            if let Some(v) = self.base_iterates {
                b.base_iterates = v;
            }
            if let Some(v) = self.kick_iterates {
                b.kick_iterates = v;
            }
        }
        let l = &mut cfg.lyapunov;
        if let Some(n) = self.n {
            l.n = n;
        }
        if let Some(s) = &self.seeds {
            l.seeds = parse_seeds(s)?;
        }
        if let Some(q) = self.qr_period {
            l.qr_period = q;
        }
        if let Some(b) = self.burn_in {
            l.burn_in = b;
        }
        if let Some(g) = self.grid_n {
            cfg.battery.grid_n = g;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        Ok(cfg)
    }
}

fn emit(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let out = harness::run(cfg)?;
    let (json, csv) = out.write(&cfg.output_dir(), &cfg.stem())?;
    for c in &out.checks {
        println!("{} {}: value {:.6e} bound {:.6e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    println!("wrote {}", json.display());
    println!("wrote {}", csv.display());
    println!("{}", if out.pass { "all checks passed" } else { "some checks failed" });
    Ok(out)
}

fn driver(mode: &str, k: i64, r: f64, transitions: Option<&str>, window: usize, shared: bool) -> Result<CocycleDriver> {
    let sharing = if shared { KickSharing::Shared } else { KickSharing::Independent };
    Ok(match mode {
        "iid-kick" => CocycleDriver::IidKick { sharing },
        "deterministic-skew" => CocycleDriver::DeterministicSkew { fiber_only: true },
        "markov-shift" => {
            let t = transitions.ok_or_else(|| Error::Config("markov-shift needs --transitions".into()))?;
            CocycleDriver::MarkovShift { transitions: parse_rows(t)?, window, sharing }
        }
        "expanding-base" => CocycleDriver::ExpandingBase { k, r, coupled: true },
        "autonomous" => CocycleDriver::Autonomous,
        other => return Err(Error::Config(format!("unknown mode '{other}'"))),
    })
}

fn main_inner(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Maps { action: MapsAction::Eval { common, point } } => {
            let cfg = common.apply(ExperimentConfig::default())?;
            let pt: Vec<f64> = point
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad coordinate '{v}'"))))
                .collect::<Result<_>>()?;
            let e = harness::eval_map(&cfg, &pt)?;
            println!("{}", serde_json::to_string_pretty(&e).map_err(|e| Error::Config(e.to_string()))?);
            Ok(0)
        }
        Command::Check(common) => {
            let mut cfg = common.apply(harness::preset("hypotheses", common.r)?)?;
            cfg.name = "check".into();
            Ok(emit(&cfg)?.exit_code())
        }
        Command::Lyapunov { common, mode, k, transitions, window, shared } => {
            let mut cfg = common.apply(ExperimentConfig { name: "lyapunov".into(), ..ExperimentConfig::default() })?;
            cfg.pipeline = Pipeline::Lyapunov;
            if let Some(m) = mode {
                cfg.driver = driver(&m, k, cfg.map.r, transitions.as_deref(), window, shared)?;
            }
            Ok(emit(&cfg)?.exit_code())
        }
        Command::Curves { action: CurvesAction::Run { common, k_max } } => {
            let mut cfg = common.apply(harness::preset("curves", common.r)?)?;
            cfg.pipeline = Pipeline::Curves;
            if let Some(k) = k_max {
                cfg.curves.k_max = k;
            }
            Ok(emit(&cfg)?.exit_code())
        }
        Command::Reproduce { preset, common } => {
            let cfg = common.apply(harness::preset(&preset, common.r)?)?;
            Ok(emit(&cfg)?.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
