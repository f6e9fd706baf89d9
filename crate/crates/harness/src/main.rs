use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use signal_core::{
    scale, ApproxOptions, DensityAtZero, HtFormula, InterpolationOrder, OrderChoice, Sigma2Convention,
};
use signal_harness::{
    analysis_csv, analyze, fluid_csv, load_config, oracle_csv, sweep, Result, SweepSpec,
};
use signal_sim::{run, Mode, SimConfig};

#[derive(Parser)]
#[command(name = "signal-delay", version, about = "Mean vehicle delay at vehicle-actuated intersections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Light/heavy-traffic limits and the interpolation at one load.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Saturation level L*rho.
        #[arg(long)]
        load: f64,
        #[command(flatten)]
        approx: ApproxArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::StayEmpty)]
        mode: ModeArg,
    },
    /// Simulate at one load.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        load: f64,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Simulation against approximation over a load grid, with QM1/QM2.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated L*rho values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        approx: ApproxArgs,
    },
    /// Exact Markov-chain mean delays (all-exponential configs only).
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Saturation level L*rho.
        #[arg(long, conflicts_with = "rho", required_unless_present = "rho")]
        load: Option<f64>,
        /// Total load rho.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = signal_oracle::DEFAULT_CAP)]
        cap: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::StayEmpty)]
        mode: ModeArg,
    },
    /// Fluid workload over one cycle.
    Fluid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        flow: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        cycle_length: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Preset name or JSON file.
    #[arg(long)]
    config: String,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 100_000)]
    cycles: u64,
    #[arg(long, default_value_t = 10)]
    reps: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::StayEmpty)]
    mode: ModeArg,
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long, value_enum, default_value_t = OrderArg::Auto)]
    order: OrderArg,
    #[arg(long, value_enum, default_value_t = HtArg::Mixture)]
    ht_formula: HtArg,
    #[arg(long, value_enum, default_value_t = G0Arg::TwoMoment)]
    g0: G0Arg,
    #[arg(long, value_enum, default_value_t = Sigma2Arg::Normalized)]
    sigma2: Sigma2Arg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    StayEmpty,
    Refill,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::StayEmpty => Mode::StayEmpty,
            ModeArg::Refill => Mode::Refill,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Auto,
    #[value(name = "1")]
    First,
    #[value(name = "2")]
    Second,
}

#[derive(Clone, Copy, ValueEnum)]
enum HtArg {
    #[value(name = "theorem3")]
    Mixture,
    #[value(name = "corollary")]
    Compact,
}

#[derive(Clone, Copy, ValueEnum)]
enum G0Arg {
    #[value(name = "whitt")]
    TwoMoment,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sigma2Arg {
    Normalized,
    Raw,
}

impl ApproxArgs {
    fn options(&self, mode: Mode) -> ApproxOptions {
        ApproxOptions {
            order: match self.order {
                OrderArg::Auto => OrderChoice::Auto,
                OrderArg::First => OrderChoice::Fixed(InterpolationOrder::First),
                OrderArg::Second => OrderChoice::Fixed(InterpolationOrder::Second),
            },
            ht_formula: match self.ht_formula {
                HtArg::Mixture => HtFormula::Mixture,
                HtArg::Compact => HtFormula::Compact,
            },
            sigma2: match self.sigma2 {
                Sigma2Arg::Normalized => Sigma2Convention::Normalized,
                Sigma2Arg::Raw => Sigma2Convention::Raw,
            },
            g0: match self.g0 {
                G0Arg::TwoMoment => DensityAtZero::TwoMoment,
                G0Arg::Exact => DensityAtZero::Exact,
            },
            stay_empty: mode == Mode::StayEmpty,
        }
    }
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        let mut c = SimConfig::with_cycles(self.cycles, self.reps).seed(self.seed).mode(self.mode.into());
        if let Some(w) = self.warmup {
            c.warmup_cycles = w;
        }
        c
    }
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { common, load, approx, mode } => {
            let cfg = load_config(&common.config)?;
            let rows = analyze(&cfg.spec, load, &approx.options(mode.into()))?;
            emit(&common, &analysis_csv(&rows))
        }
        Command::Simulate { common, load, sim } => {
            let cfg = load_config(&common.config)?;
            let scenario = scale(&cfg.spec, load / cfg.spec.critical_load())?;
            let result = run(&scenario, &sim.config())?;
            emit(&common, &result.to_csv())
        }
        Command::Sweep { common, grid, sim, approx } => {
            let cfg = load_config(&common.config)?;
            let sim = sim.config();
            let mut spec = SweepSpec::new(sim.clone());
            spec.approx = approx.options(sim.mode);
            if let Some(g) = grid {
                spec.grid = g;
            }
            let outcome = sweep(&cfg.spec, &spec)?;
            eprintln!("{}: {}", cfg.name, outcome.report.summary());
            emit(&common, &outcome.to_csv())
        }
        Command::Oracle { common, load, rho, cap, mode } => {
            let cfg = load_config(&common.config)?;
            let rho = match (load, rho) {
                (_, Some(r)) => r,
                (Some(l), None) => l / cfg.spec.critical_load(),
                (None, None) => unreachable!("clap requires one of --load and --rho"),
            };
            emit(&common, &oracle_csv(&cfg.spec, rho, mode.into(), cap)?)
        }
        Command::Fluid { common, flow, cycle_length } => {
            let cfg = load_config(&common.config)?;
            emit(&common, &fluid_csv(&cfg.spec, flow.as_deref(), cycle_length)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

