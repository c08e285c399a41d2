use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eulerlab_cli::config::{OutputSection, ParamsSection, SeedSection, SweepSection, Tolerances};
use eulerlab_cli::{run, CliError, CommandKind, Format, RangeSpec, RunConfig};
use eulerlab_core::{GridSpec, YEquation};

#[derive(Parser)]
#[command(
    name = "eulerlab",
    version,
    about = "Exact expanding and collapsing solutions of the 1-D compressible Euler equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blowup or global existence, with energy and blowup time
    Classify {
        #[command(flatten)]
        seed: SeedArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrate the reduced system and write the trajectory
    Integrate {
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        t_end: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample density and velocity on a space-time lattice
    Field {
        #[command(flatten)]
        seed: SeedArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Write `t,r,...` restricted to r >= 0
        #[arg(long)]
        radial: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Finite-difference residuals of the Euler and Navier-Stokes equations
    Verify {
        #[command(flatten)]
        seed: SeedArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Largest accepted residual max-norm
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify every cell of a parameter grid
    Sweep {
        /// `lo:hi:n` or a single value
        #[arg(long = "xi", allow_hyphen_values = true)]
        xi: RangeSpec,
        #[arg(long = "a0", allow_hyphen_values = true)]
        a0: RangeSpec,
        #[arg(long = "a1", allow_hyphen_values = true)]
        a1: RangeSpec,
        #[arg(long = "gamma", allow_hyphen_values = true)]
        gamma: RangeSpec,
        #[arg(long = "K", default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a TOML configuration file
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long, allow_hyphen_values = true)]
    xi: f64,
    #[arg(long, allow_hyphen_values = true)]
    a0: f64,
    #[arg(long, allow_hyphen_values = true)]
    a1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    b0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    b1: f64,
    /// Central density at t = 0
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long = "K", default_value_t = 1.0)]
    k: f64,
    /// Viscosity for the Navier-Stokes residual
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
}

#[derive(Args)]
struct GridArgs {
    /// Time window `lo:hi`
    #[arg(long, default_value = "0:1", allow_hyphen_values = true)]
    t_range: String,
    /// Space window `lo:hi`
    #[arg(long, default_value = "-0.5:0.5", allow_hyphen_values = true)]
    x_range: String,
    /// Time intervals
    #[arg(long)]
    nt: Option<usize>,
    /// Space intervals
    #[arg(long)]
    nx: Option<usize>,
    /// Relative shrink of the support; 0 allows vacuum nodes
    #[arg(long, default_value_t = eulerlab_core::verifier::DEFAULT_MARGIN)]
    margin: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum YEquationArg {
    Ode28,
    Theorem,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, default_value_t = eulerlab_core::ode::DEFAULT_RTOL)]
    rtol: f64,
    #[arg(long, default_value_t = eulerlab_core::ode::DEFAULT_ATOL)]
    atol: f64,
    #[arg(long, default_value_t = 1e-12)]
    quad_tol: f64,
    #[arg(long, value_enum, default_value = "ode28")]
    y_equation: YEquationArg,
    /// Write to this file instead of stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

fn window(s: &str) -> Result<(f64, f64), CliError> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| CliError::Config(format!("window `{s}` is not `lo:hi`")))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| CliError::Config(format!("window `{s}`: {e}")));
    Ok((parse(lo)?, parse(hi)?))
}

impl GridArgs {
    fn spec(&self, default_n: usize) -> Result<GridSpec, CliError> {
        let t = window(&self.t_range)?;
        let x = window(&self.x_range)?;
        Ok(GridSpec::new(t, self.nt.unwrap_or(default_n), x, self.nx.unwrap_or(default_n)).with_margin(self.margin))
    }
}

impl SeedArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.seed =
            Some(SeedSection { a0: self.a0, a1: self.a1, xi: self.xi, b0: self.b0, b1: self.b1, alpha: self.alpha });
        cfg.params = ParamsSection { k: self.k, gamma: Some(self.gamma), mu: self.mu };
    }
}

impl CommonArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.tolerances = Tolerances { rtol: self.rtol, atol: self.atol, quad_tol: self.quad_tol };
        cfg.y_equation = match self.y_equation {
            YEquationArg::Ode28 => YEquation::CoefficientMatched,
            YEquationArg::Theorem => YEquation::TheoremLiteral,
        };
        cfg.output = OutputSection {
            path: self.output.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }),
        };
    }
}

fn config(command: Command) -> Result<RunConfig, CliError> {
    let cfg = match command {
        Command::Classify { seed, common } => {
            let mut cfg = RunConfig::new(CommandKind::Classify);
            seed.apply(&mut cfg);
            common.apply(&mut cfg);
            cfg
        }
        Command::Integrate { seed, t_end, common } => {
            let mut cfg = RunConfig::new(CommandKind::Integrate);
            seed.apply(&mut cfg);
            common.apply(&mut cfg);
            cfg.t_end = Some(t_end);
            cfg
        }
        Command::Field { seed, grid, radial, common } => {
            let mut cfg = RunConfig::new(CommandKind::Field);
            seed.apply(&mut cfg);
            common.apply(&mut cfg);
            cfg.grid = Some(grid.spec(64)?);
            cfg.radial = radial;
            cfg
        }
        Command::Verify { seed, grid, threshold, common } => {
            let mut cfg = RunConfig::new(CommandKind::Verify);
            seed.apply(&mut cfg);
            common.apply(&mut cfg);
            cfg.grid = Some(grid.spec(256)?);
            cfg.threshold = threshold;
            cfg
        }
        Command::Sweep { xi, a0, a1, gamma, k, mu, common } => {
            let mut cfg = RunConfig::new(CommandKind::Sweep);
            common.apply(&mut cfg);
            cfg.params = ParamsSection { k, gamma: None, mu };
            cfg.sweep = Some(SweepSection { xi, a0, a1, gamma: Some(gamma) });
            cfg
        }
        Command::Run { config } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
            RunConfig::from_toml(&text)?
        }
    };
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(cli.command).and_then(|cfg| cfg.plan()).and_then(|job| run::run(&job));
    match result {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("eulerlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
