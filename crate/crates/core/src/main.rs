use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use asyncpd::analysis::{bound_curve, saddle_oracle, DEFAULT_SADDLE_TOLERANCE};
use asyncpd::bench::{self, csvio, BenchError, ExperimentConfig, OUT_DIR_ENV};
use asyncpd::solvers::run_apd;

#[derive(Parser)]
#[command(name = "asyncpd", version, about = "Asynchronous stochastic primal-dual experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write CSV artifacts.
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run a built-in scenario and write CSV artifacts.
    Scenario {
        name: Scenario,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        out: OutDir,
        /// Print the scenario config as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Print the saddle point of the configured problem.
    Oracle {
        #[command(flatten)]
        source: Source,
        /// Emit CSV instead of text.
        #[arg(long)]
        csv: bool,
    },
    /// Report assumption checks and step-size conditions.
    Validate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write the convergence bound curve to bound.csv.
    Bound {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Fig2,
    Fig3,
}

#[derive(Args)]
struct Source {
    /// Config file; defaults to the fig2 scenario.
    #[arg(long, value_name = "PATH", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
}

#[derive(Args)]
struct Overrides {
    /// Number of seeds, `master_seed + 0 .. master_seed + N`.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    seeds: Option<u64>,
    #[arg(long, value_name = "U64")]
    master_seed: Option<u64>,
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u64).range(1..))]
    checkpoint_stride: Option<u64>,
}

#[derive(Args)]
struct OutDir {
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

fn scenario_config(s: Scenario) -> ExperimentConfig {
    match s {
        Scenario::Fig2 => ExperimentConfig::fig2(),
        Scenario::Fig3 => ExperimentConfig::fig3(),
    }
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, BenchError> {
        match (&self.config, self.scenario) {
            (Some(path), _) => Ok(ExperimentConfig::from_path(path)?),
            (None, Some(s)) => Ok(scenario_config(s)),
            (None, None) => Ok(ExperimentConfig::fig2()),
        }
    }
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if self.seeds.is_some() || self.master_seed.is_some() {
            let count = self.seeds.unwrap_or(config.run.seeds.len() as u64);
            let master = self.master_seed.unwrap_or(0);
            config.run.seeds = (0..count).map(|i| master.wrapping_add(i)).collect();
        }
        if let Some(k) = self.checkpoint_stride {
            config.run.checkpoint_stride = k;
        }
    }
}

fn run_and_write(config: &ExperimentConfig, out: &std::path::Path) -> Result<(), BenchError> {
    let art = bench::run_experiment(config)?;
    let written = bench::write_artifacts(&art, out)?;
    println!("config {}", art.config_hash);
    for t in &art.summary.thresholds {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x}"));
        println!(
            "{:<5} delta<={:<5} reached {}/{} median tick {} median k {}",
            t.algorithm.label(),
            t.threshold,
            t.reached,
            t.runs,
            show(t.median_tick),
            show(t.median_k)
        );
    }
    if art.bound.is_none() {
        println!("bound.csv skipped: step-size conditions do not hold");
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn oracle(config: &ExperimentConfig, csv: bool) -> Result<(), BenchError> {
    let spec = config.problem_spec();
    let sp = saddle_oracle(&spec, DEFAULT_SADDLE_TOLERANCE)?;
    let mut out = std::io::stdout().lock();
    if csv {
        writeln!(out, "config_hash,variable,index,value")?;
        for (i, t) in sp.theta.iter().enumerate() {
            for v in t {
                writeln!(out, "{},theta,{},{}", config.hash(), i + 1, csvio::fmt_f64(*v))?;
            }
        }
        for (j, v) in sp.lambda.iter().enumerate() {
            writeln!(out, "{},lambda,{},{}", config.hash(), j + 1, csvio::fmt_f64(*v))?;
        }
    } else {
        writeln!(out, "method   {:?}", sp.method)?;
        writeln!(out, "theta*   {:?}", sp.theta.iter().flatten().collect::<Vec<_>>())?;
        writeln!(out, "lambda*  {:?}", sp.lambda)?;
        writeln!(out, "residual {:e}", sp.residual)?;
    }
    Ok(())
}

fn validate(config: &ExperimentConfig) -> Result<(), BenchError> {
    let r = bench::validate_config(config)?;
    let a = &r.assumptions;
    let c = &r.constants;
    println!("constants: mu={} L={} M={} D={} sigma_max^2={}", c.monotonicity, c.lipschitz, c.gradient_bound, c.diameter, c.max_variance);
    println!(
        "staleness: max={} buffer={} broadcast={}",
        a.max_staleness, a.buffer_staleness, a.broadcast_staleness
    );
    match a.window {
        Some(w) => println!("activation window: p={} B={}", w.p, w.b),
        None => println!("activation window: none"),
    }
    match a.strict_window {
        Some(w) => println!("strict window: p={} B={}", w.p, w.b),
        None => println!("strict window: none up to B={}", asyncpd::engine::STRICT_WINDOW_SEARCH),
    }
    for v in &a.violations {
        println!("violation: {v}");
    }
    match &r.stepsize {
        Some(s) => {
            println!("step size: sup gamma={} limit={}", s.sup_gamma, s.sup_limit);
            if let Some(v) = s.sup_violation {
                println!("violation: gamma_{} = {} exceeds 2/(p mu)", v.k, v.gamma);
            }
            if let Some(v) = s.ratio_violation {
                println!(
                    "violation: ratio {} > {} at k={} (window index {})",
                    v.ratio, v.limit, v.k, v.index
                );
            }
            println!("step-size conditions: {}", if s.passed() { "pass" } else { "fail" });
        }
        None => println!("step-size conditions: not checked"),
    }
    if let Some(b) = &r.bound {
        println!(
            "bound constants: C1={} C2={} C3={} C4={} total={} b={}",
            b.c1, b.c2, b.c3, b.c4, b.total, b.ratio_const
        );
    }
    Ok(())
}

fn bound(config: &ExperimentConfig, out: &std::path::Path) -> Result<(), BenchError> {
    let r = bench::validate_config(config)?;
    let consts = r
        .bound
        .ok_or_else(|| BenchError::Format("no activation window; bound undefined".into()))?;
    let spec = config.problem_spec();
    let opts = bench::run_options(config);
    let mut delta0 = 0.0;
    for &seed in &config.run.seeds {
        delta0 += run_apd(&spec, &config.delay_model(), &config.rule(), seed, 0, &opts)?.records[0].delta;
    }
    delta0 /= config.run.seeds.len() as f64;
    let stride = config.run.checkpoint_stride;
    let mut ks: Vec<u64> = (0..=config.run.horizon).step_by(stride as usize).collect();
    if ks.last() != Some(&config.run.horizon) {
        ks.push(config.run.horizon);
    }
    let curve = bound_curve(&ks, delta0, &consts, &config.rule(), r.stepsize_passed());
    std::fs::create_dir_all(out)?;
    let path = out.join("bound.csv");
    csvio::write_bound(&config.hash(), &curve, std::fs::File::create(&path)?)?;
    if !curve.applicable {
        println!("warning: step-size conditions fail; the curve is not a guaranteed bound");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run { config, overrides, out } => {
            let mut c = ExperimentConfig::from_path(&config)?;
            overrides.apply(&mut c);
            run_and_write(&c, &out.out)
        }
        Command::Scenario {
            name,
            overrides,
            out,
            print_config,
        } => {
            let mut c = scenario_config(name);
            overrides.apply(&mut c);
            if print_config {
                print!("{}", c.to_toml_string());
                return Ok(());
            }
            run_and_write(&c, &out.out)
        }
        Command::Oracle { source, csv } => oracle(&source.load()?, csv),
        Command::Validate { source, overrides } => {
            let mut c = source.load()?;
            overrides.apply(&mut c);
            validate(&c)
        }
        Command::Bound { source, overrides, out } => {
            let mut c = source.load()?;
            overrides.apply(&mut c);
            bound(&c, &out.out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                BenchError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
