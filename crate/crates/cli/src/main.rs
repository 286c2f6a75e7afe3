use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levystop::mc::derive_seed;
use levystop::oracle::{stopping_time_realization, sweep_thresholds, RealizationConfig};
use levystop::threshold::SolverConfig;
use levystop::value::{default_value_grid, geometric_grid, McSettings};
use levystop::verify::run_suite;
use levystop::{check_assumptions, optimal_value, solve, Error, ThresholdSolution, Verdict};
use serde_json::json;

mod config;

use config::{ConfigError, RunConfig};

const VALUE_STREAM: u64 = 0x5641_4c55_45;
const SIMULATE_STREAM: u64 = 0x5349_4d55_4c;

/// Optimal stopping thresholds for exponential Levy models.
#[derive(Parser, Debug)]
#[command(name = "levystop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Model and run settings (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV output. Without it CSV goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print a single JSON document instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Override every Monte Carlo path count except the limit ladder.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Override the sweep and value grid sizes.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Print the assumption report.
    Check,
    /// Compute the optimal threshold.
    Solve,
    /// Write the value function `v,value,se,branch`.
    Value,
    /// Brute-force threshold sweep `b,value,se`.
    Sweep,
    /// Realized stopping times and payoffs of the optimal rule.
    Simulate,
    /// Run every verification check.
    Verify,
}

enum Failure {
    Config(ConfigError),
    Assumption(String),
    Verification(String),
    Runtime(String),
}

impl Failure {
    fn exit(&self) -> ExitCode {
        match self {
            Failure::Config(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
            Failure::Assumption(m) => {
                eprintln!("error: {m}");
                ExitCode::from(3)
            }
            Failure::Verification(m) | Failure::Runtime(m) => {
                eprintln!("error: {m}");
                ExitCode::from(1)
            }
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::AssumptionFailed { .. } => Failure::Assumption(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config(ConfigError::Io("--config <path> is required".into())))?;
    let mut cfg = RunConfig::load(path).map_err(Failure::Config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.paths {
        cfg.override_paths(n);
    }
    if let Some(n) = common.grid {
        cfg.override_grid(n);
    }
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let ctx = Ctx {
        hash: cfg.hash(),
        cfg,
        out: common.out.clone(),
        json: common.json,
    };
    match cli.command {
        Command::Check => ctx.check(),
        Command::Solve => ctx.solve(),
        Command::Value => ctx.value(),
        Command::Sweep => ctx.sweep(),
        Command::Simulate => ctx.simulate(),
        Command::Verify => ctx.verify(),
    }
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    out: Option<PathBuf>,
    json: bool,
}

impl Ctx {
    fn header(&self) -> String {
        format!("# config_hash={} seed={}\n", self.hash, self.cfg.seed)
    }

    fn solver_config(&self) -> SolverConfig {
        let mut s = self.cfg.verify.solver;
        s.limits = self.cfg.limits;
        s
    }

    fn require_admissible(&self) -> Result<(), Failure> {
        check_assumptions(&self.cfg.model).require().map_err(Failure::from)
    }

    fn solution(&self) -> Result<ThresholdSolution, Failure> {
        self.require_admissible()?;
        let sol = solve(&self.cfg.model, &self.solver_config(), self.cfg.seed)?;
        if !sol.verified {
            eprintln!("warning: threshold not verified: {}", sol.note.as_deref().unwrap_or("convexity check failed"));
        }
        Ok(sol)
    }

    /// CSV to `--out/<name>` (with the config header) or to stdout.
    fn emit_csv(&self, name: &str, body: &str) -> Result<(), Failure> {
        let text = format!("{}{}", self.header(), body);
        match &self.out {
            Some(dir) => {
                let file = write_file(dir, name, &text)?;
                if !self.json {
                    println!("wrote {}", file.display());
                }
                Ok(())
            }
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn print_json(&self, value: serde_json::Value) {
        let mut doc = json!({ "config_hash": self.hash, "seed": self.cfg.seed });
        if let (Some(d), serde_json::Value::Object(m)) = (doc.as_object_mut(), value) {
            d.extend(m);
        }
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    }

    fn check(&self) -> Result<(), Failure> {
        let report = check_assumptions(&self.cfg.model);
        if self.json {
            self.print_json(json!({ "model": self.cfg.model, "report": report, "admissible": report.admissible() }));
        } else {
            println!("family = {}", self.cfg.model.family);
            for c in &report.checks {
                let verdict = match c.verdict {
                    Verdict::Pass => "pass",
                    Verdict::Fail => "FAIL",
                    Verdict::RemarkMode => "remark-mode",
                };
                println!("{} : {verdict} ({})", c.id, c.detail);
            }
            match report.psi_one {
                Some(p) => println!("psi(1) = {p}"),
                None => println!("psi(1) = inf"),
            }
            println!("admissible = {}", report.admissible());
        }
        report.require().map_err(Failure::from)
    }

    fn solve(&self) -> Result<(), Failure> {
        let sol = self.solution()?;
        let model = &self.cfg.model;
        if self.json {
            self.print_json(json!({ "model": model, "B_c": sol.b_c, "B_c_se": sol.se(model.c), "solution": sol }));
            return Ok(());
        }
        let d = &sol.diagnostics;
        let mut s = String::new();
        let _ = writeln!(s, "config_hash = {}", self.hash);
        let _ = writeln!(s, "seed = {}", self.cfg.seed);
        let _ = writeln!(s, "family = {}", model.family);
        let _ = writeln!(s, "B_c = {:.6}", sol.b_c);
        let _ = writeln!(s, "B_c_se = {:.3e}", sol.se(model.c));
        let _ = writeln!(s, "method = {}", sol.method.as_str());
        let _ = writeln!(s, "boundary = {:.6} * exp({} t)", sol.boundary.level, sol.boundary.growth);
        if let Some((lo, hi)) = sol.bracket {
            let _ = writeln!(s, "bracket = [{lo:.6}, {hi})");
        }
        let _ = writeln!(s, "verified = {}", sol.verified);
        let _ = writeln!(s, "source = {:?}", d.source);
        let _ = writeln!(s, "ratio_limit = {:.6}", d.ratio_limit);
        let _ = writeln!(s, "ratio_se = {:.3e}", d.ratio_se);
        let _ = writeln!(s, "L(0-) = {:.6}", d.limits.l);
        let _ = writeln!(s, "G(0-) = {:.6}", d.limits.g);
        if let Some(p) = d.derivatives {
            let _ = writeln!(s, "L'(0-) = {:.6}", p.l);
            let _ = writeln!(s, "G'(0-) = {:.6}", p.g);
        }
        let _ = writeln!(s, "converged = {}", d.converged);
        let _ = writeln!(s, "noise_limited = {}", d.noise_limited);
        let _ = writeln!(s, "levels_used = {}", d.levels_used.len());
        let _ = writeln!(s, "paths_per_level = {}", d.n_paths);
        if let Some(cv) = &sol.convexity {
            let _ = writeln!(s, "convexity_passed = {}", cv.passed);
            let _ = writeln!(s, "convexity_worst = {:.4e}", cv.worst);
        }
        if let Some(note) = &sol.note {
            let _ = writeln!(s, "note = {note}");
        }
        print!("{s}");
        Ok(())
    }

    fn value(&self) -> Result<(), Failure> {
        let sol = self.solution()?;
        let model = &self.cfg.model;
        let vs = &self.cfg.value;
        let grid = if vs.lo.is_none() && vs.hi.is_none() && vs.points == 64 {
            default_value_grid(sol.b_c, model.c)
        } else {
            let lo = vs.lo.unwrap_or(sol.b_c / 4.0);
            let hi = vs.hi.unwrap_or(8.0 * model.c);
            geometric_grid(lo, hi, vs.points)
        };
        let settings = McSettings::new(vs.paths, derive_seed(self.cfg.seed, VALUE_STREAM));
        let curve = optimal_value(model, &sol, &grid, &settings)?;
        if self.json {
            self.print_json(json!({ "B_c": sol.b_c, "curve": curve }));
            if let Some(dir) = &self.out {
                write_file(dir, "value.csv", &format!("{}{}", self.header(), curve.to_csv()))?;
            }
            return Ok(());
        }
        self.emit_csv("value.csv", &curve.to_csv())
    }

    fn sweep(&self) -> Result<(), Failure> {
        self.require_admissible()?;
        let model = &self.cfg.model;
        let sw = &self.cfg.sweep;
        let v = sw.v.unwrap_or(model.c);
        let res = sweep_thresholds(model, v, sw.grid, sw.paths, self.cfg.seed)?;
        if self.json {
            self.print_json(json!({ "sweep": res }));
            if let Some(dir) = &self.out {
                write_file(dir, "sweep.csv", &format!("{}{}", self.header(), res.to_csv()))?;
            }
            return Ok(());
        }
        self.emit_csv("sweep.csv", &res.to_csv())?;
        if self.out.is_some() {
            println!("argmax_b = {:.6}", res.argmax_b);
            println!("plateau = [{:.6}, {:.6}]", res.plateau.0, res.plateau.1);
        }
        Ok(())
    }

    fn simulate(&self) -> Result<(), Failure> {
        let sol = self.solution()?;
        let model = &self.cfg.model;
        let sim = &self.cfg.simulate;
        let v = sim.v.unwrap_or(model.c);
        let rc = RealizationConfig {
            step: sim.step,
            ..RealizationConfig::default()
        };
        let seed = derive_seed(self.cfg.seed, SIMULATE_STREAM);
        let rep = stopping_time_realization(model, &sol, v, sim.paths, seed, &rc)?;
        if self.json {
            self.print_json(json!({ "B_c": sol.b_c, "v": v, "mean_payoff": rep.mean_payoff, "horizon": rep.horizon }));
            if let Some(dir) = &self.out {
                write_file(dir, "simulate.csv", &format!("{}{}", self.header(), rep.to_csv()))?;
            }
            return Ok(());
        }
        self.emit_csv("simulate.csv", &rep.to_csv())?;
        if self.out.is_some() {
            println!("mean_payoff = {:.6} ± {:.2e}", rep.mean_payoff.value, rep.mean_payoff.se);
        }
        Ok(())
    }

    fn verify(&self) -> Result<(), Failure> {
        self.require_admissible()?;
        let mut vc = self.cfg.verify;
        vc.solver = self.solver_config();
        let report = run_suite(&self.cfg.model, &vc, self.cfg.seed)?;
        if let Some(dir) = &self.out {
            for (name, body) in &report.artifacts {
                write_file(dir, name, &format!("{}{}", self.header(), body))?;
            }
            write_file(dir, "checks.csv", &format!("{}{}", self.header(), report.checks_csv()))?;
        }
        if self.json {
            self.print_json(json!({ "passed": report.passed(), "B_c": report.b_c, "checks": report.checks }));
        } else {
            for c in &report.checks {
                println!("{} {} : {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
        let failed: Vec<String> = report.failures().map(|c| format!("{} ({})", c.name, c.detail)).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Verification(format!("verification failed: {}", failed.join("; "))))
        }
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let file = dir.join(name);
    std::fs::write(&file, text).map_err(|e| Failure::Runtime(format!("{}: {e}", file.display())))?;
    Ok(file)
}
