//! Scenario-driven command-line frontend for the LC-RIS toolkit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lcris_core::scenario::{
    compile, run_optimize, run_reduce, run_report, run_steer, run_sweep, run_tolerance_mc,
    CompiledScenario, Scenario,
};
use lcris_core::Error;

#[derive(Parser)]
#[command(
    name = "lcris",
    about = "Forward modeling and analysis for delay-line liquid-crystal reflective surfaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (defaults to the scenario's output_dir or ".").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for random tolerance fields and optimization.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the far-field kernel (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Far-field heat map over (frequency, theta), peak track, bandwidth.
    Steer(Common),
    /// Pattern vs steering target at the design frequency.
    Sweep(Common),
    /// Monte Carlo over tolerance realizations.
    ToleranceMc {
        #[command(flatten)]
        common: Common,
        /// Number of trials.
        #[arg(long, default_value_t = 25)]
        trials: usize,
        /// Also optimize each trial and report the improvement.
        #[arg(long)]
        optimize: bool,
    },
    /// Optimize bias voltages toward maximum received power.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Optimize per element instead of per column.
        #[arg(long)]
        elements: bool,
    },
    /// Reduce measured S21 traces to an efficiency spectrum.
    Reduce {
        #[command(flatten)]
        common: Common,
        /// Trace CSV with header freq_hz,s21_ris_db,s21_mp_db.
        #[arg(long)]
        traces: PathBuf,
    },
    /// Print power, response-time, line and layout statistics.
    Report(Common),
}

fn load_and_compile(common: &Common) -> Result<CompiledScenario, Error> {
    if let Some(n) = common.threads {
        // Ignore failure when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let scenario = Scenario::load(&common.scenario)?;
    compile(&scenario)
}

fn out_dir(common: &Common, cs: &CompiledScenario) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cs.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Steer(common) => {
            let cs = load_and_compile(&common)?;
            let out = run_steer(&cs, common.seed)?;
            let dir = out_dir(&common, &cs);
            write_file(&dir, "steer_farfield.csv", out.raw.to_csv().as_bytes())?;
            let mut bin = Vec::new();
            out.raw.write_binary(&mut bin)?;
            write_file(&dir, "steer_grid.bin", &bin)?;
            write_file(&dir, "steer_spectrum.csv", out.spectrum.to_csv().as_bytes())?;
            write_file(
                &dir,
                "steer_profile.csv",
                out.profile.to_csv(Some(&out.voltages)).as_bytes(),
            )?;
            write_file(&dir, "steer_summary.txt", out.summary.as_bytes())?;
            print!("{}", out.summary);
        }
        Command::Sweep(common) => {
            let cs = load_and_compile(&common)?;
            let out = run_sweep(&cs, common.seed)?;
            let dir = out_dir(&common, &cs);
            write_file(&dir, "sweep_patterns.csv", out.patterns_csv.as_bytes())?;
            write_file(&dir, "sweep_summary.txt", out.summary.as_bytes())?;
            print!("{}", out.summary);
        }
        Command::ToleranceMc {
            common,
            trials,
            optimize,
        } => {
            let cs = load_and_compile(&common)?;
            let seed = common.seed.unwrap_or(cs.tolerance.seed);
            let out = run_tolerance_mc(&cs, trials, seed, optimize)?;
            let dir = out_dir(&common, &cs);
            write_file(&dir, "tolerance_mc.csv", out.csv.as_bytes())?;
            write_file(&dir, "tolerance_mc_summary.txt", out.summary.as_bytes())?;
            print!("{}", out.summary);
        }
        Command::Optimize { common, elements } => {
            let mut cs = load_and_compile(&common)?;
            if elements {
                cs.optimize.per_element = true;
            }
            let out = run_optimize(&cs, common.seed)?;
            let dir = out_dir(&common, &cs);
            write_file(&dir, "optimize_report.txt", out.summary.as_bytes())?;
            write_file(&dir, "optimize_log.csv", out.log_csv.as_bytes())?;
            print!("{}", out.summary);
        }
        Command::Reduce { common, traces } => {
            let cs = load_and_compile(&common)?;
            let text = fs::read_to_string(&traces)
                .map_err(|e| Error::Data(format!("cannot read traces {}: {e}", traces.display())))?;
            let (spectrum, summary) = run_reduce(&cs, &text)?;
            let dir = out_dir(&common, &cs);
            write_file(&dir, "reduce_spectrum.csv", spectrum.to_csv().as_bytes())?;
            write_file(&dir, "reduce_summary.txt", summary.as_bytes())?;
            print!("{summary}");
        }
        Command::Report(common) => {
            let cs = load_and_compile(&common)?;
            let report = run_report(&cs)?;
            let dir = out_dir(&common, &cs);
            write_file(&dir, "report.txt", report.as_bytes())?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
