use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chlab::characteristics::{extremal_char, integrate_char, CharOptions, ExtremalOptions, SetSpec, Side};
use chlab::measures::{mu_minus, mu_plus, Method, Sign};
use chlab::scenario::run::{build, execute, run, write_artifacts, MeasureRecord};
use chlab::scenario::verify::{verify, Suite, DEFAULT_SEED};
use chlab::scenario::{load_scenario, Scenario};
use chlab::solution::Solution;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "chlab", version, about = "Peakon weak solutions: evolution, characteristics, accretion and dissipation measures")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the scenario's ODE tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Simulate { config: PathBuf },
    /// Integrate one characteristic of a scenario's solution.
    Char {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        zeta0: f64,
        /// Start time, or `T` for the first collision time.
        #[arg(long, allow_hyphen_values = true)]
        t0: String,
        #[arg(long, allow_hyphen_values = true)]
        t1: String,
        #[arg(long, value_enum, default_value_t = CharKind::Generic)]
        flavor: CharKind,
    },
    /// Estimate μ± of a set at a base time with both methods.
    Measure {
        config: PathBuf,
        /// Base time, or `T` for the first collision time.
        #[arg(long, allow_hyphen_values = true)]
        t0: String,
        /// `a,b` for the closed interval, or a set such as `{0}` or `[0,1] U (2,3)`.
        #[arg(long, allow_hyphen_values = true)]
        interval: String,
        #[arg(long, value_enum, default_value_t = SignArg::Plus)]
        sign: SignArg,
    },
    /// Run verification checks (oracle, energy, concentration, measures,
    /// characteristics, dissipation, determinism, all).
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Run every scenario matching a glob in parallel.
    Sweep { pattern: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum CharKind {
    Generic,
    Leftmost,
    Rightmost,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

fn load(path: &Path, global: &Global) -> Result<Scenario> {
    let mut s = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(tol) = global.tol {
        if !(tol > 0.0 && tol <= 1e-2) {
            bail!("--tol must lie in (0, 1e-2], got {tol}");
        }
        s.ode_tol = tol;
    }
    Ok(s)
}

fn time_arg(text: &str, scenario: &Scenario) -> Result<f64> {
    if text == "T" {
        return scenario.t_break.context("`T` needs closed-form initial data");
    }
    text.parse().with_context(|| format!("bad time `{text}`"))
}

fn set_arg(text: &str) -> Result<SetSpec> {
    let t = text.trim();
    if t.starts_with(['[', '(', '{']) {
        return Ok(SetSpec::parse(t)?);
    }
    let nums: Vec<f64> = t
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad interval `{text}`"))?;
    match nums.as_slice() {
        [a] => Ok(SetSpec::point(*a)),
        [a, b] if a <= b => Ok(SetSpec::closed(*a, *b)),
        _ => bail!("bad interval `{text}` (expected a,b with a <= b)"),
    }
}

fn write_or_print(out: Option<&Path>, file: &str, content: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), content)?;
            eprintln!("wrote {}", dir.join(file).display());
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn simulate(config: &Path, global: &Global) -> Result<bool> {
    let s = load(config, global)?;
    let start = Instant::now();
    let out = execute(&s);
    let dir = global
        .out
        .clone()
        .or_else(|| s.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&s.name));
    write_artifacts(&out, &dir)?;
    print!("{}", out.report.table());
    eprintln!("artifacts in {} ({:.2?})", dir.display(), start.elapsed());
    Ok(out.report.passed)
}

fn characteristic(config: &Path, zeta0: f64, t0: &str, t1: &str, flavor: CharKind, global: &Global) -> Result<bool> {
    let s = load(config, global)?;
    let (t0, t1) = (time_arg(t0, &s)?, time_arg(t1, &s)?);
    let pr = build(&s)?;
    let src: &dyn Solution = &pr.trajectory;
    let ext = ExtremalOptions {
        deltas: s.delta_seq.clone(),
        ..Default::default()
    };
    let path = match flavor {
        CharKind::Generic => integrate_char(src, t0, zeta0, t1, &CharOptions::default())?,
        CharKind::Leftmost => extremal_char(src, t0, zeta0, t1, Side::Left, &ext)?.path,
        CharKind::Rightmost => extremal_char(src, t0, zeta0, t1, Side::Right, &ext)?.path,
    };
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    write_or_print(global.out.as_deref(), "char.csv", &String::from_utf8(buf)?)?;
    if path.truncated {
        eprintln!("path stopped before a singular time at t = {:?}", path.t.last());
    }
    Ok(true)
}

fn measure(config: &Path, t0: &str, interval: &str, sign: SignArg, global: &Global) -> Result<bool> {
    let s = load(config, global)?;
    let t0 = time_arg(t0, &s)?;
    let set = set_arg(interval)?;
    let pr = build(&s)?;
    let opts = s.measure_options();
    let sign = match sign {
        SignArg::Plus => Sign::Plus,
        SignArg::Minus => Sign::Minus,
    };
    let records: Vec<MeasureRecord> = [Method::TestFunction, Method::Pushforward]
        .par_iter()
        .map(|&method| {
            let r = match sign {
                Sign::Plus => mu_plus(&pr.trajectory, t0, &set, method, &opts),
                Sign::Minus => mu_minus(&pr.trajectory, t0, &set, method, &opts),
            };
            match r {
                Ok(e) => MeasureRecord::Estimate(e),
                Err(e) => MeasureRecord::Failed {
                    t0,
                    set: set.to_string(),
                    sign,
                    method,
                    error: e.to_string(),
                },
            }
        })
        .collect();
    let ok = records.iter().all(|r| matches!(r, MeasureRecord::Estimate(_)));
    write_or_print(
        global.out.as_deref(),
        "measure.json",
        &(serde_json::to_string_pretty(&records)? + "\n"),
    )?;
    Ok(ok)
}

fn run_verify(suite: &str, global: &Global) -> Result<bool> {
    let suite: Suite = suite.parse()?;
    let start = Instant::now();
    let report = verify(suite, global.seed);
    print!("{}", report.table());
    if let Some(dir) = &global.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), report.to_json())?;
    }
    eprintln!("verify {suite} finished in {:.2?}", start.elapsed());
    if !report.passed {
        eprintln!("failing checks: {}", report.failing().join(", "));
    }
    Ok(report.passed)
}

fn sweep(pattern: &str, global: &Global) -> Result<bool> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob `{pattern}`"))?
        .collect::<std::result::Result<_, _>>()?;
    if paths.is_empty() {
        bail!("no scenario matches `{pattern}`");
    }
    let base = global.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let results: Vec<(PathBuf, Result<bool>)> = paths
        .par_iter()
        .map(|p| {
            let r = load(p, global).and_then(|s| {
                let report = run(&s, Some(&base.join(&s.name)))?;
                Ok(report.passed)
            });
            (p.clone(), r)
        })
        .collect();
    let mut ok = true;
    for (p, r) in &results {
        match r {
            Ok(true) => println!("{:<48} PASS", p.display()),
            Ok(false) => {
                ok = false;
                println!("{:<48} FAIL", p.display());
            }
            Err(e) => {
                ok = false;
                println!("{:<48} ERROR {e:#}", p.display());
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let res = match &cli.command {
        Command::Simulate { config } => simulate(config, g),
        Command::Char {
            config,
            zeta0,
            t0,
            t1,
            flavor,
        } => characteristic(config, *zeta0, t0, t1, *flavor, g),
        Command::Measure {
            config,
            t0,
            interval,
            sign,
        } => measure(config, t0, interval, *sign, g),
        Command::Verify { suite } => run_verify(suite, g),
        Command::Sweep { pattern } => sweep(pattern, g),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
