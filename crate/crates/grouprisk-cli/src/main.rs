//! Command-line experiment runner: closed-form theory evaluation, single
//! simulations, config-driven sweeps with CSV/SVG output.
//!
//! Exit codes: 0 on success, 1 when a sweep finished with recorded
//! per-replicate failures, 2 on configuration errors.

mod config;
mod emit;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grouprisk::moments::{activation_moments, DEFAULT_QUADRATURE_ORDER};
use grouprisk::theory_linear::{minority_mspe_linear, subsample_gamma, LinearRegime};
use grouprisk::theory_rf::{angle_to_signal, minority_risk_rf, subsample_regime, RfRegime};

use config::{parse_config, ActivationKind, Experiment, SweepConfig};
use emit::AxisKey;

#[derive(Parser)]
#[command(
    name = "grouprisk",
    version,
    about = "Minority-group risk: asymptotic theory and Monte Carlo for two-group ridgeless regression and classification"
)]
struct Cli {
    /// Worker threads for replicate execution (affects scheduling only,
    /// never results).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate closed-form asymptotic risk.
    #[command(subcommand)]
    Theory(TheoryCommand),
    /// Run one experiment configuration and compare against theory.
    Simulate(SimulateArgs),
    /// Run a config-driven sweep and emit CSV (and SVG).
    Sweep(SweepArgs),
    /// Re-plot an emitted CSV.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum TheoryCommand {
    /// Random-feature regression asymptotics.
    Rf(TheoryRfArgs),
    /// Linear regression asymptotics.
    Linear(TheoryLinearArgs),
}

#[derive(Args)]
struct SignalArgs {
    #[arg(long, default_value_t = 1.0)]
    norm_b0: f64,
    #[arg(long, default_value_t = 1.0)]
    norm_b1: f64,
    /// Angle between the group coefficient vectors, in degrees.
    #[arg(long, default_value_t = 0.0)]
    theta_deg: f64,
    /// Signal-to-noise ratio norm_b0^2 / tau^2.
    #[arg(long, default_value_t = 10.0)]
    snr: f64,
}

impl SignalArgs {
    fn tau(&self) -> f64 {
        (self.norm_b0 * self.norm_b0 / self.snr).sqrt()
    }
}

#[derive(Args)]
struct TheoryRfArgs {
    /// Overparameterization ratio N/n.
    #[arg(long)]
    gamma: f64,
    /// Sample-to-dimension ratio n/d.
    #[arg(long, default_value_t = 2.0)]
    psi2: f64,
    #[arg(long, default_value_t = 0.8)]
    pi: f64,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    #[arg(long, default_value_t = DEFAULT_QUADRATURE_ORDER)]
    order: usize,
    /// Evaluate at the majority-subsampled regime instead of ERM.
    #[arg(long)]
    subsample: bool,
    #[command(flatten)]
    signal: SignalArgs,
}

#[derive(Args)]
struct TheoryLinearArgs {
    /// Dimension-to-sample ratio d/n.
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 0.8)]
    pi: f64,
    /// Evaluate at the majority-subsampled regime instead of ERM.
    #[arg(long)]
    subsample: bool,
    #[command(flatten)]
    signal: SignalArgs,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ActivationArg {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl ActivationArg {
    fn kind(self) -> ActivationKind {
        match self {
            ActivationArg::Relu => ActivationKind::Relu,
            ActivationArg::Sigmoid => ActivationKind::Sigmoid,
            ActivationArg::Tanh => ActivationKind::Tanh,
            ActivationArg::Identity => ActivationKind::Identity,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
enum ExperimentArg {
    RfRegression,
    LinearRegression,
    RfClassification,
}

impl ExperimentArg {
    fn experiment(self) -> Experiment {
        match self {
            ExperimentArg::RfRegression => Experiment::RfRegression,
            ExperimentArg::LinearRegression => Experiment::LinearRegression,
            ExperimentArg::RfClassification => Experiment::RfClassification,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EstimatorArg {
    Erm,
    Subsample,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 0.8)]
    pi: f64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Erm)]
    estimator: EstimatorArg,
    /// Input dimension (RF experiments; the linear model derives d = gamma*n).
    #[arg(long, default_value_t = 200)]
    d: usize,
    /// Training sample size.
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 20_000)]
    m_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    #[command(flatten)]
    signal: SignalArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV/SVG (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Skip the SVG chart.
    #[arg(long)]
    no_svg: bool,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "gamma")]
    x: String,
    #[arg(long, default_value = "theta_deg")]
    series: String,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::Theory(TheoryCommand::Rf(args)) => theory_rf_cmd(args),
        Command::Theory(TheoryCommand::Linear(args)) => theory_linear_cmd(args),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Plot(args) => plot_cmd(args),
    }
}

fn theory_rf_cmd(args: TheoryRfArgs) -> ExitCode {
    let moments = match activation_moments(&args.activation.kind().to_activation(), args.order) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let base = RfRegime {
        psi1: args.gamma * args.psi2,
        psi2: args.psi2,
        pi: args.pi,
    };
    let regime = if args.subsample {
        subsample_regime(&base)
    } else {
        base
    };
    let signal = angle_to_signal(
        args.signal.norm_b0,
        args.signal.norm_b1,
        args.signal.theta_deg.to_radians(),
        args.signal.tau(),
    );
    match minority_risk_rf(&regime, &signal, &moments) {
        Ok(b) => {
            println!(
                "activation moments: mu0={:.6} mu1={:.6} mu*={:.6} xi={:.6}",
                moments.mu0, moments.mu1, moments.mu_star, moments.xi
            );
            println!(
                "regime: psi1={:.6} psi2={:.6} pi={:.3} (gamma={:.4})",
                regime.psi1,
                regime.psi2,
                regime.pi,
                regime.gamma()
            );
            println!(
                "unit coefficients: B*={:.6} V*={:.6} Psi2*={:.6} M1*={:.6} M2*={:.6}",
                b.b_star, b.v_star, b.psi2_star, b.m1_star, b.m2_star
            );
            println!(
                "risk terms: bias={:.6} misspec_quad={:.6} misspec_cross={:.6} variance={:.6}",
                signal.f_beta * signal.f_beta * b.b_star,
                signal.f_delta * signal.f_delta * b.m1_star,
                signal.f_beta_delta * b.m2_star,
                signal.tau * signal.tau * b.v_star
            );
            println!("total minority risk: {:.6}", b.total.unwrap());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn theory_linear_cmd(args: TheoryLinearArgs) -> ExitCode {
    let signal = angle_to_signal(
        args.signal.norm_b0,
        args.signal.norm_b1,
        args.signal.theta_deg.to_radians(),
        args.signal.tau(),
    );
    let (gamma, pi) = if args.subsample {
        match subsample_gamma(args.gamma, args.pi) {
            Ok(pair) => pair,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    } else {
        (args.gamma, args.pi)
    };
    let regime = match LinearRegime::new(gamma, pi) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let s0 = signal.f_beta * signal.f_beta;
    let r = signal.f_delta * signal.f_delta;
    match minority_mspe_linear(&regime, s0, r, signal.f_beta_delta, signal.tau) {
        Ok(b) => {
            println!("regime: gamma={:.6} pi={:.3}", regime.gamma, regime.pi);
            println!(
                "terms: inductive_bias={:.6} approx_quadratic={:.6} approx_cross={:.6} variance={:.6}",
                b.inductive_bias, b.approx_quadratic, b.approx_cross, b.variance
            );
            println!("total minority MSPE: {:.6}", b.total);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn simulate_cmd(args: SimulateArgs) -> ExitCode {
    let cfg = SweepConfig {
        experiment: args.experiment.experiment(),
        estimators: vec![match args.estimator {
            EstimatorArg::Erm => config::EstimatorKind::Erm,
            EstimatorArg::Subsample => config::EstimatorKind::Subsample,
        }],
        reweighted_lambdas: Vec::new(),
        grids: config::Grids {
            gamma: vec![args.gamma],
            theta_deg: vec![args.signal.theta_deg],
            pi: vec![args.pi],
        },
        dims: config::Dims {
            d: args.d,
            n: args.n,
        },
        signal: config::Signal {
            norm_b0: args.signal.norm_b0,
            norm_b1: args.signal.norm_b1,
            snr: args.signal.snr,
        },
        activation: args.activation.kind(),
        replicates: args.replicates,
        m_test: args.m_test,
        master_seed: args.seed,
        output: config::Output::default(),
    };
    let outcome = match sweep::run_sweep(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for rec in &outcome.records {
        let tag = if rec.replicate == sweep::AGGREGATE_ROW {
            "aggregate".to_string()
        } else {
            format!("replicate {}", rec.replicate)
        };
        match (rec.risk_empirical, &rec.error) {
            (Some(v), _) => {
                let se = rec
                    .stderr
                    .map(|s| format!(" +- {s:.5}"))
                    .unwrap_or_default();
                let th = rec
                    .risk_theory
                    .map(|t| format!(" (theory {t:.5})"))
                    .unwrap_or_default();
                let maj = rec
                    .majority_risk_empirical
                    .map(|m| format!(" majority {m:.5}"))
                    .unwrap_or_default();
                println!("{tag}: minority {v:.5}{se}{th}{maj}");
            }
            (None, Some(e)) => println!("{tag}: failed ({e})"),
            (None, None) => println!("{tag}: no value"),
        }
    }
    if outcome.failures > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn sweep_cmd(args: SweepArgs) -> ExitCode {
    let mut cfg = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create output dir: {e}");
        return ExitCode::from(2);
    }
    let outcome = match sweep::run_sweep(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let csv_path = args.out.join(cfg.csv_name());
    if let Err(e) = emit::emit_csv(&outcome.records, &csv_path) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    println!(
        "wrote {} records to {}",
        outcome.records.len(),
        csv_path.display()
    );
    if !args.no_svg {
        let svg_path = args.out.join(cfg.svg_name());
        match emit::emit_svg(
            &outcome.records,
            &svg_path,
            AxisKey::Gamma,
            AxisKey::ThetaDeg,
        ) {
            Ok(()) => println!("wrote chart to {}", svg_path.display()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let wall: u64 = outcome.records.iter().map(|r| r.wall_time_ms).sum();
    println!("total cell wall time: {wall} ms");
    if outcome.failures > 0 {
        eprintln!(
            "{} replicate(s) failed; see the error column",
            outcome.failures
        );
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn plot_cmd(args: PlotArgs) -> ExitCode {
    let x = match AxisKey::parse(&args.x) {
        Ok(k) => k,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let series = match AxisKey::parse(&args.series) {
        Ok(k) => k,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let records = match emit::parse_csv(&args.csv) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match emit::emit_svg(&records, &args.out, x, series) {
        Ok(()) => {
            println!("wrote chart to {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
