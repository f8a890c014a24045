//! `rpd`: protocol analysis, design, sweeps and simulation from the shell.
//!
//! Exit codes: 0 success, 1 I/O error, 2 validation error, 3 infeasibility
//! when requested as an error via `--infeasible-error`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rating_protocol::analysis::{
    cooperative_benchmark, long_term_utilities, one_period_utility, social_welfare,
    stationary_distribution,
};
use rating_protocol::design::{grid_oracle, select_protocol};
use rating_protocol::incentives::{
    deviation_gain_direct, existence_threshold, is_sustainable, DeviationSpec,
};
use rating_protocol::model::{DesignParams, IntrinsicParams, Protocol, Rating, RecommendedStrategy};
use rating_protocol::sim::{estimate_deviation_gain, run_population, PlannedDeviation, SimConfig};
use rating_protocol::util::format_sig;

#[derive(Parser)]
#[command(name = "rpd", version, about = "Two-sided rating protocol design toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analyze a fixed protocol: stationary ratings, utilities, margins.
    Analyze(AnalyzeArgs),
    /// Design the optimal protocol for the given intrinsic parameters.
    Design(DesignArgs),
    /// Sweep one or two parameters and emit one CSV row per grid point.
    Sweep(SweepArgs),
    /// Run the population simulator from a key=value config file.
    Simulate(SimulateArgs),
    /// Emit the CSV data behind one of the reference figures.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct CommonParams {
    /// Override a parameter, e.g. `--param c=0.4` (repeatable). Recognized
    /// keys: b, c, s, epsilon, omega, lambda, strategy, alpha0, alpha1,
    /// beta0, beta1, gamma0, gamma1, delta0, delta1.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Write CSV output here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonParams,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    common: CommonParams,
    /// Alternation convergence residual.
    #[arg(long, default_value_t = 1e-6)]
    residual: f64,
    /// Also run the brute-force grid oracle and print the objective gap.
    #[arg(long)]
    oracle: bool,
    /// Grid spacing for the oracle.
    #[arg(long, default_value_t = 1e-3)]
    grid_step: f64,
    /// Exit with code 3 when no sustainable non-null protocol exists.
    #[arg(long)]
    infeasible_error: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepMode {
    /// Design the optimal protocol at each grid point.
    Design,
    /// Evaluate the fixed protocol given by the parameters.
    Analyze,
    /// Simulate the fixed protocol and report empirical statistics.
    Simulate,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonParams,
    /// Swept parameter as `key=min:max:steps` (repeatable, at most two).
    #[arg(long = "sweep", value_name = "KEY=MIN:MAX:STEPS", required = true)]
    sweeps: Vec<String>,
    #[arg(long, value_enum, default_value_t = SweepMode::Design)]
    mode: SweepMode,
    #[arg(long, default_value_t = 1e-6)]
    residual: f64,
    /// Simulation seed (simulate mode).
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key=value config file. Keys: the parameter keys above plus
    /// n, periods, seed, initial_good_fraction.
    config: String,
    #[command(flatten)]
    common: CommonParams,
    /// Simulation seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Planned deviation: `second-stage:0`, `second-stage:1` or
    /// `first-stage:LAMBDA`.
    #[arg(long)]
    deviate: Option<String>,
    /// Period at which tagged users deviate (default: periods / 2).
    #[arg(long)]
    deviate_period: Option<usize>,
    /// Fraction of the population tagged as deviants.
    #[arg(long, default_value_t = 0.05)]
    deviant_fraction: f64,
    /// Paired replications for the gain estimate.
    #[arg(long, default_value_t = 20)]
    reps: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Figure {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig3,
    Fig4,
}

#[derive(Args)]
struct ReproduceArgs {
    figure: Figure,
    #[command(flatten)]
    common: CommonParams,
    #[arg(long, default_value_t = 1e-6)]
    residual: f64,
}

enum CliError {
    Io(String),
    Validation(String),
    Infeasible(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Validation(m) | CliError::Infeasible(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

// ---------------------------------------------------------------------------
// parameter handling
// ---------------------------------------------------------------------------

const PARAM_KEYS: [&str; 16] = [
    "b", "c", "s", "epsilon", "omega", "lambda", "strategy", "alpha0", "alpha1", "beta0", "beta1",
    "gamma0", "gamma1", "delta0", "delta1", // simulation-only keys below
    "n",
];
const SIM_KEYS: [&str; 4] = ["n", "periods", "seed", "initial_good_fraction"];

#[derive(Clone, Default)]
struct ParamMap(BTreeMap<String, String>);

impl ParamMap {
    fn insert_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("expected KEY=VALUE, got `{pair}`")))?;
        let k = k.trim();
        if !PARAM_KEYS.contains(&k) && !SIM_KEYS.contains(&k) {
            return Err(CliError::Validation(format!("unknown parameter `{k}`")));
        }
        self.0.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    fn from_args(args: &[String]) -> CliResult<Self> {
        let mut m = ParamMap::default();
        for pair in args {
            m.insert_pair(pair)?;
        }
        Ok(m)
    }

    fn set_f64(&mut self, key: &str, v: f64) {
        self.0.insert(key.to_string(), format!("{v}"));
    }

    fn f64(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("{key} must be a number, got `{v}`"))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("{key} must be an integer, got `{v}`"))),
        }
    }

    fn intrinsic(&self) -> CliResult<IntrinsicParams> {
        IntrinsicParams::new(
            self.f64("b", 1.0)?,
            self.f64("c", 0.4)?,
            self.f64("s", 0.2)?,
            self.f64("epsilon", 0.05)?,
            self.f64("omega", 0.95)?,
        )
        .map_err(validation)
    }

    fn design(&self) -> CliResult<DesignParams> {
        DesignParams::new(
            self.f64("alpha0", 1.0)?,
            self.f64("alpha1", 1.0)?,
            self.f64("beta0", 1.0)?,
            self.f64("beta1", 1.0)?,
            self.f64("gamma0", 1.0)?,
            self.f64("gamma1", 1.0)?,
            self.f64("delta0", 1.0)?,
            self.f64("delta1", 1.0)?,
        )
        .map_err(validation)
    }

    fn protocol(&self) -> CliResult<Protocol> {
        let strategy = match self.0.get("strategy") {
            None => RecommendedStrategy::Full,
            Some(v) => RecommendedStrategy::parse(v).map_err(validation)?,
        };
        Protocol::new(strategy, self.design()?, self.f64("lambda", 0.5)?).map_err(validation)
    }
}

fn write_output(out: &Option<String>, content: &str) -> CliResult<()> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Io(format!("cannot write {path}: {e}"))),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let map = ParamMap::from_args(&args.common.params)?;
    let params = map.intrinsic()?;
    let protocol = map.protocol()?;
    let eta = stationary_distribution(&protocol.design, params.epsilon(), protocol.lambda);
    let v0 = one_period_utility(Rating::Bad, &protocol, &params, &eta);
    let v1 = one_period_utility(Rating::Good, &protocol, &params, &eta);
    let (vinf0, vinf1) = long_term_utilities(&protocol, &params);
    let welfare = social_welfare(&protocol, &params, &eta);
    let u_c = cooperative_benchmark(&params);
    let report = is_sustainable(&protocol, &params);

    println!("strategy              {}", protocol.strategy.name());
    println!("eta0, eta1            {}, {}", format_sig(eta.eta0), format_sig(eta.eta1));
    println!("one-period utilities  v(0)={}, v(1)={}", format_sig(v0), format_sig(v1));
    println!(
        "long-term utilities   v_inf(0)={}, v_inf(1)={}, gap={}",
        format_sig(vinf0),
        format_sig(vinf1),
        format_sig(vinf1 - vinf0)
    );
    println!(
        "welfare               U_P={}, U_C={}",
        format_sig(welfare),
        format_sig(u_c)
    );
    println!(
        "margins               effort={}, fairness={}{}",
        format_sig(report.osd_margin),
        format_sig(report.fairness_margin),
        if report.used_fallback { " (direct-gain fallback)" } else { "" }
    );
    println!("binding constraint    {:?}", report.binding);
    println!(
        "verdict               {}",
        if report.sustainable { "sustainable" } else { "NOT sustainable" }
    );
    if args.common.out.is_some() {
        let mut csv = String::from(
            "strategy,eta0,eta1,v0,v1,vinf0,vinf1,u_p,u_c,effort_margin,fairness_margin,sustainable\n",
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            protocol.strategy.name(),
            format_sig(eta.eta0),
            format_sig(eta.eta1),
            format_sig(v0),
            format_sig(v1),
            format_sig(vinf0),
            format_sig(vinf1),
            format_sig(welfare),
            format_sig(u_c),
            format_sig(report.osd_margin),
            format_sig(report.fairness_margin),
            report.sustainable
        );
        write_output(&args.common.out, &csv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

fn sustainable_exists(params: &IntrinsicParams, strategy: RecommendedStrategy) -> bool {
    existence_threshold(params, strategy).is_some_and(|t| params.omega() >= t)
}

fn cmd_design(args: &DesignArgs) -> CliResult<()> {
    let map = ParamMap::from_args(&args.common.params)?;
    let params = map.intrinsic()?;
    if !(args.residual > 0.0) {
        return Err(CliError::Validation("residual must be positive".into()));
    }
    let result = select_protocol(&params, args.residual);
    println!("selected strategy     {}", result.strategy.name());
    match result.betas {
        Some((b0, b1)) => {
            println!("punishment factors    beta0={}, beta1={}", format_sig(b0), format_sig(b1));
            println!("stationary eta0       {}", format_sig(result.eta0.unwrap()));
        }
        None => println!("punishment factors    none (null protocol)"),
    }
    println!("welfare               U_P={}", format_sig(result.welfare.max(0.0)));
    println!(
        "sustainable designs   full={}, strict={}",
        sustainable_exists(&params, RecommendedStrategy::Full),
        sustainable_exists(&params, RecommendedStrategy::Strict)
    );
    println!("alternations          {}", result.iterations);
    if args.oracle && result.strategy != RecommendedStrategy::Null {
        match grid_oracle(&params, result.strategy, args.grid_step) {
            Some((ob0, ob1, oeta)) => {
                let gap = result.eta0.unwrap() - oeta;
                println!(
                    "oracle                beta0={}, beta1={}, eta0={}, gap={}",
                    format_sig(ob0),
                    format_sig(ob1),
                    format_sig(oeta),
                    format_sig(gap)
                );
            }
            None => println!("oracle                no feasible grid point"),
        }
    }
    if args.common.out.is_some() {
        let mut csv =
            String::from("strategy,beta0,beta1,eta0,u_p,u_c,sustainable_full,sustainable_strict\n");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            result.strategy.name(),
            fmt_opt(result.beta0()),
            fmt_opt(result.beta1()),
            fmt_opt(result.eta0),
            format_sig(result.welfare.max(0.0)),
            format_sig(cooperative_benchmark(&params)),
            sustainable_exists(&params, RecommendedStrategy::Full),
            sustainable_exists(&params, RecommendedStrategy::Strict)
        );
        write_output(&args.common.out, &csv)?;
    }
    if args.infeasible_error && result.strategy == RecommendedStrategy::Null {
        return Err(CliError::Infeasible(
            "no sustainable non-null protocol at these parameters".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct Sweep {
    key: String,
    values: Vec<f64>,
}

fn parse_sweep(spec: &str) -> CliResult<Sweep> {
    let err = || {
        CliError::Validation(format!(
            "sweep spec must be KEY=MIN:MAX:STEPS, got `{spec}`"
        ))
    };
    let (key, range) = spec.split_once('=').ok_or_else(err)?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(err());
    }
    let min: f64 = parts[0].parse().map_err(|_| err())?;
    let max: f64 = parts[1].parse().map_err(|_| err())?;
    let steps: usize = parts[2].parse().map_err(|_| err())?;
    if steps < 2 || !(max > min) {
        return Err(CliError::Validation(
            "sweep needs max > min and at least 2 steps".into(),
        ));
    }
    let values = (0..steps)
        .map(|i| min + (max - min) * i as f64 / (steps - 1) as f64)
        .collect();
    Ok(Sweep {
        key: key.trim().to_string(),
        values,
    })
}

fn sweep_row(
    mode: SweepMode,
    map: &ParamMap,
    residual: f64,
    seed: u64,
) -> CliResult<String> {
    let params = map.intrinsic()?;
    let u_c = cooperative_benchmark(&params);
    let (strategy, b0, b1, eta0, u_p) = match mode {
        SweepMode::Design => {
            let r = select_protocol(&params, residual);
            (r.strategy, r.beta0(), r.beta1(), r.eta0, r.welfare.max(0.0))
        }
        SweepMode::Analyze => {
            let protocol = map.protocol()?;
            let d = &protocol.design;
            let eta = stationary_distribution(d, params.epsilon(), protocol.lambda);
            let u_p = social_welfare(&protocol, &params, &eta);
            (
                protocol.strategy,
                Some(d.beta(Rating::Bad)),
                Some(d.beta(Rating::Good)),
                Some(eta.eta0),
                u_p,
            )
        }
        SweepMode::Simulate => {
            let protocol = map.protocol()?;
            let mut cfg = SimConfig::new(
                protocol,
                params,
                map.usize("n", 10_000)?,
                map.usize("periods", 2_000)?,
            );
            cfg.seed = seed;
            let trace = run_population(&cfg).map_err(validation)?;
            let half = &trace.stats[trace.stats.len() / 2..];
            let mean = |f: fn(&rating_protocol::sim::PeriodStat) -> f64| {
                half.iter().map(f).sum::<f64>() / half.len() as f64
            };
            (
                protocol.strategy,
                Some(protocol.design.beta(Rating::Bad)),
                Some(protocol.design.beta(Rating::Good)),
                Some(mean(|s| s.eta0)),
                mean(|s| s.mean_welfare),
            )
        }
    };
    Ok(format!(
        "{},{},{},{},{},{},{},{}",
        strategy.name(),
        fmt_opt(b0),
        fmt_opt(b1),
        fmt_opt(eta0),
        format_sig(u_p),
        format_sig(u_c),
        sustainable_exists(&params, RecommendedStrategy::Full),
        sustainable_exists(&params, RecommendedStrategy::Strict)
    ))
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let base = ParamMap::from_args(&args.common.params)?;
    if args.sweeps.len() > 2 {
        return Err(CliError::Validation("at most two swept parameters".into()));
    }
    let sweeps: Vec<Sweep> = args
        .sweeps
        .iter()
        .map(|s| parse_sweep(s))
        .collect::<CliResult<_>>()?;
    for sw in &sweeps {
        if !PARAM_KEYS.contains(&sw.key.as_str()) {
            return Err(CliError::Validation(format!("unknown swept parameter `{}`", sw.key)));
        }
    }
    let mut csv = String::new();
    let swept_names: Vec<&str> = sweeps.iter().map(|s| s.key.as_str()).collect();
    let _ = writeln!(
        csv,
        "{},strategy,beta0,beta1,eta0,u_p,u_c,sustainable_full,sustainable_strict",
        swept_names.join(",")
    );
    let outer = &sweeps[0];
    let inner_values: Vec<Option<f64>> = match sweeps.get(1) {
        Some(sw) => sw.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    for &x in &outer.values {
        for &y in &inner_values {
            let mut map = base.clone();
            map.set_f64(&outer.key, x);
            let mut prefix = format_sig(x);
            if let Some(y) = y {
                map.set_f64(&sweeps[1].key, y);
                let _ = write!(prefix, ",{}", format_sig(y));
            }
            let row = sweep_row(args.mode, &map, args.residual, args.seed)?;
            let _ = writeln!(csv, "{prefix},{row}");
        }
    }
    write_output(&args.common.out, &csv)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn parse_deviation(spec: &str) -> CliResult<DeviationSpec> {
    let err = || {
        CliError::Validation(format!(
            "deviation must be second-stage:RATING or first-stage:LAMBDA, got `{spec}`"
        ))
    };
    let (kind, arg) = spec.split_once(':').ok_or_else(err)?;
    match kind {
        "second-stage" => {
            let rating = match arg {
                "0" => Rating::Bad,
                "1" => Rating::Good,
                _ => return Err(err()),
            };
            Ok(DeviationSpec::SecondStage { rating })
        }
        "first-stage" => {
            let lambda_prime: f64 = arg.parse().map_err(|_| err())?;
            if !(0.0..=1.0).contains(&lambda_prime) {
                return Err(CliError::Validation(
                    "first-stage request rate must lie in [0, 1]".into(),
                ));
            }
            Ok(DeviationSpec::FirstStage { lambda_prime })
        }
        _ => Err(err()),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", args.config)))?;
    let mut map = ParamMap::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        map.insert_pair(line)
            .map_err(|e| CliError::Validation(format!("{} line {}: {}", args.config, lineno + 1, e.message())))?;
    }
    for pair in &args.common.params {
        map.insert_pair(pair)?;
    }
    let params = map.intrinsic()?;
    let protocol = map.protocol()?;
    let n = map.usize("n", 10_000)?;
    let periods = map.usize("periods", 2_000)?;
    let mut cfg = SimConfig::new(protocol, params, n, periods);
    cfg.seed = match args.seed {
        Some(s) => s,
        None => map.usize("seed", 42)? as u64,
    };
    cfg.initial_good_fraction = map.f64("initial_good_fraction", 1.0)?;
    let deviation = args.deviate.as_deref().map(parse_deviation).transpose()?;
    if let Some(spec) = deviation {
        cfg.deviation = Some(PlannedDeviation {
            spec,
            period: args.deviate_period.unwrap_or(periods / 2),
            deviant_fraction: args.deviant_fraction,
        });
    }

    let trace = run_population(&cfg).map_err(validation)?;
    let eta = stationary_distribution(&protocol.design, params.epsilon(), protocol.lambda);
    let analytic_welfare = social_welfare(&protocol, &params, &eta);
    let half = &trace.stats[trace.stats.len() / 2..];
    let emp_eta0 = half.iter().map(|s| s.eta0).sum::<f64>() / half.len() as f64;
    let emp_welfare = half.iter().map(|s| s.mean_welfare).sum::<f64>() / half.len() as f64;
    println!("n={n} periods={periods} seed={}", cfg.seed);
    println!(
        "eta0                  empirical={}, analytic={}, diff={}",
        format_sig(emp_eta0),
        format_sig(eta.eta0),
        format_sig(emp_eta0 - eta.eta0)
    );
    println!(
        "per-period welfare    empirical={}, analytic={}, diff={}",
        format_sig(emp_welfare),
        format_sig(analytic_welfare),
        format_sig(emp_welfare - analytic_welfare)
    );

    if let Some(dev) = cfg.deviation {
        let est = estimate_deviation_gain(&cfg, args.reps).map_err(validation)?;
        // The discounted sums truncate at the horizon; per-period utility is
        // bounded by b + c + s, giving a geometric tail bound.
        let horizon = (periods - dev.period) as f64;
        let tail = if params.omega() > 0.0 {
            params.omega().powf(horizon) * (params.b() + params.c() + params.s())
                / (1.0 - params.omega())
        } else {
            0.0
        };
        println!("discount tail bound   {}", format_sig(tail));
        for rating in Rating::BOTH {
            let Some(g) = est.for_rating(rating) else {
                continue;
            };
            let analytic = match dev.spec {
                DeviationSpec::SecondStage { .. } => {
                    deviation_gain_direct(&protocol, &params, dev.spec)
                }
                DeviationSpec::FirstStage { lambda_prime } => {
                    rating_protocol::incentives::first_stage_gain_at(
                        &protocol,
                        &params,
                        lambda_prime,
                        rating,
                    )
                }
            };
            println!(
                "deviation gain (at {}) empirical={} +- {}, analytic={}, samples={}",
                rating.index(),
                format_sig(g.mean),
                format_sig(g.ci_half_width),
                format_sig(analytic),
                g.samples
            );
        }
    }
    if args.common.out.is_some() {
        write_output(&args.common.out, &trace.to_csv())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
        .collect()
}

fn reproduce_region(
    base: &ParamMap,
    key: &str,
    range: (f64, f64),
    residual: f64,
) -> CliResult<String> {
    let mut csv = format!("{key},omega,strategy\n");
    for &x in &linspace(range.0, range.1, 60) {
        for &w in &linspace(0.4, 0.995, 60) {
            let mut map = base.clone();
            map.set_f64(key, x);
            map.set_f64("omega", w);
            let r = select_protocol(&map.intrinsic()?, residual);
            let _ = writeln!(csv, "{},{},{}", format_sig(x), format_sig(w), r.strategy.name());
        }
    }
    Ok(csv)
}

fn cmd_reproduce(args: &ReproduceArgs) -> CliResult<()> {
    let mut base = ParamMap::from_args(&args.common.params)?;
    // Fixed reference parameters behind every figure.
    for (k, v) in [("b", 1.0), ("c", 0.4), ("s", 0.2), ("epsilon", 0.05)] {
        if !base.0.contains_key(k) {
            base.set_f64(k, v);
        }
    }
    let needs_omega = matches!(args.figure, Figure::Fig3 | Figure::Fig4);
    if needs_omega && !base.0.contains_key("omega") {
        return Err(CliError::Validation(
            "this figure requires an explicit discount factor: pass --param omega=... \
             (0.97625 reproduces the documented shapes)"
                .into(),
        ));
    }
    let csv = match args.figure {
        Figure::Fig2a => reproduce_region(&base, "c", (0.05, 0.7), args.residual)?,
        Figure::Fig2b => reproduce_region(&base, "s", (0.01, 0.4), args.residual)?,
        Figure::Fig2c => reproduce_region(&base, "epsilon", (0.0, 0.2), args.residual)?,
        Figure::Fig3 => {
            let mut csv = String::from("c,feasible,beta0,beta1,eta0\n");
            for k in 0..=92 {
                let c = 0.26 + 0.005 * k as f64;
                let mut map = base.clone();
                map.set_f64("c", c);
                let params = map.intrinsic()?;
                let r = if sustainable_exists(&params, RecommendedStrategy::Full) {
                    rating_protocol::design::alternate_optimize(
                        &params,
                        RecommendedStrategy::Full,
                        args.residual,
                    )
                } else {
                    rating_protocol::design::alternate_optimize(
                        &params,
                        RecommendedStrategy::Null,
                        args.residual,
                    )
                };
                let feasible = r.betas.is_some();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    format_sig(c),
                    feasible,
                    fmt_opt(r.beta0()),
                    fmt_opt(r.beta1()),
                    fmt_opt(r.eta0)
                );
            }
            csv
        }
        Figure::Fig4 => {
            let mut csv = String::from("panel,value,strategy,beta0,beta1,eta0,u_p,u_c\n");
            let panels: [(&str, Vec<f64>); 4] = [
                ("c", (0..=20).map(|k| 0.32 + 0.02 * k as f64).collect()),
                ("s", (0..=24).map(|k| 0.05 + 0.01 * k as f64).collect()),
                ("epsilon", (0..=22).map(|k| 0.005 * k as f64).collect()),
                ("omega", (0..=25).map(|k| 0.87 + 0.005 * k as f64).collect()),
            ];
            for (key, values) in panels {
                for &v in &values {
                    let mut map = base.clone();
                    map.set_f64(key, v);
                    let params = map.intrinsic()?;
                    let r = select_protocol(&params, args.residual);
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{},{}",
                        key,
                        format_sig(v),
                        r.strategy.name(),
                        fmt_opt(r.beta0()),
                        fmt_opt(r.beta1()),
                        fmt_opt(r.eta0),
                        format_sig(r.welfare.max(0.0)),
                        format_sig(cooperative_benchmark(&params))
                    );
                }
            }
            csv
        }
    };
    write_output(&args.common.out, &csv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Design(a) => cmd_design(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Reproduce(a) => cmd_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
