use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reset_shaping::sim::SweepSelector;
use rshape::commands::parse_grid;
use rshape::plot::{emit_plot_data, PlotKind};
use rshape::{run_command, CaseConfig, CliError, Command, Overrides};

/// Reset-control loop-shaping case runner.
#[derive(Parser)]
#[command(name = "rshape", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Harmonic (HOSIDF) loop analysis: CgLp, open loop, S and T per order.
    Hosidf(CaseArgs),
    /// First-harmonic crossover, margins and closed-loop bandwidth.
    Margins(CaseArgs),
    /// Resolve or tune the CgLp and fit the shaping filter.
    Tune(CaseArgs),
    /// Time-domain closed-loop simulation with reset analytics.
    Simulate(CaseArgs),
    /// Simulated sine sweep of S_er or T_yr.
    Sweep(SweepArgs),
    /// Triangle-reference RMS tracking error table.
    RmsTable(CaseArgs),
    /// Parse a config and print it in canonical form.
    Config {
        #[arg(long)]
        config: PathBuf,
    },
    /// Emit gnuplot data and an SVG image from CSV artifacts.
    Plot {
        #[arg(long)]
        kind: PlotKind,
        /// Artifact CSV; repeat for sensitivity overlays.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Series labels, in input order.
        #[arg(long = "label")]
        labels: Vec<String>,
        #[arg(long, default_value = "out/plot")]
        out: PathBuf,
        /// Skip the SVG image.
        #[arg(long)]
        no_image: bool,
    },
}

#[derive(Args)]
struct CaseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Frequency grid `fmin:fmax:points-per-decade`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(f64, f64, usize)>,
    /// Reference frequency in Hz (simulate).
    #[arg(long)]
    freq: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Harmonic orders, e.g. `1,3,5`.
    #[arg(long, value_delimiter = ',')]
    harmonics: Option<Vec<u32>>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// `S_er` or `T_yr`.
    #[arg(long, value_parser = parse_selector)]
    selector: Option<SweepSelector>,
}

fn parse_selector(s: &str) -> Result<SweepSelector, String> {
    match s {
        "S_er" | "ser" | "S" => Ok(SweepSelector::Ser),
        "T_yr" | "tyr" | "T" => Ok(SweepSelector::Tyr),
        _ => Err(format!("unknown selector {s:?} (S_er|T_yr)")),
    }
}

fn run_case(args: &CaseArgs, cmd: Command, selector: Option<SweepSelector>) -> Result<(), CliError> {
    let cfg = CaseConfig::load(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let ov = Overrides {
        grid: args.grid,
        freq_hz: args.freq,
        seed: args.seed,
        harmonics: args.harmonics.clone(),
        selector,
    };
    let rep = run_command(&cfg, base, cmd, &args.out, &ov)?;
    println!("{}", rep.summary);
    println!("artifacts in {}", rep.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Hosidf(a) => run_case(a, Command::Hosidf, None),
        Cmd::Margins(a) => run_case(a, Command::Margins, None),
        Cmd::Tune(a) => run_case(a, Command::Tune, None),
        Cmd::Simulate(a) => run_case(a, Command::Simulate, None),
        Cmd::Sweep(a) => run_case(&a.case, Command::Sweep, a.selector),
        Cmd::RmsTable(a) => run_case(a, Command::RmsTable, None),
        Cmd::Config { config } => CaseConfig::load(config).and_then(|c| c.to_toml()).map(|s| print!("{s}")),
        Cmd::Plot { kind, inputs, labels, out, no_image } => {
            emit_plot_data(*kind, inputs, labels, out, !no_image).map(|r| {
                println!("{} series, {} rows -> {}", r.series, r.rows, r.data.display());
                if let Some(m) = &r.markers {
                    println!("{} reset markers -> {}", r.marker_count, m.display());
                }
                if let Some(i) = &r.image {
                    println!("image -> {}", i.display());
                }
            })
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
