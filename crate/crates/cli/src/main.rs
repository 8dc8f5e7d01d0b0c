use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use ocbf_merge::decision::case_count;
use ocbf_merge::report::{parse_tables_text, ViolationKind};
use ocbf_merge::scenario::{beta_from_alpha, load_config, save_config, ControllerMode};
use ocbf_merge::sim::{run_with, RunOptions, SimError};
use ocbf_merge::{Metrics, ScenarioParams, SimConfig};

#[derive(Parser)]
#[command(name = "ocbf-merge", version, about = "Multi-lane merging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every (alpha, seed) pair and print a summary table.
    Run(RunArgs),
    /// Number of partner patterns for `n` merging points.
    CaseCount { n: usize },
    /// Print the queue tables of a recorded run.
    DumpTables {
        /// Run directory written by `run --tables`.
        #[arg(long)]
        run: PathBuf,
        /// Simulated time; the closest recorded sample is shown.
        #[arg(long)]
        time: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ocbf,
    Cbf,
}

impl From<Mode> for ControllerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Ocbf => ControllerMode::Ocbf,
            Mode::Cbf => ControllerMode::CbfOnly,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML scenario file; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Time weight in [0, 1); repeat for a sweep.
    #[arg(long)]
    alpha: Vec<f64>,
    /// Random seed; repeat for several runs.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, overrides_with = "no_noise")]
    noise: bool,
    #[arg(long, overrides_with = "noise")]
    no_noise: bool,
    /// Simulated seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Keep a queue-table dump every sample (needed by `dump-tables`).
    #[arg(long)]
    tables: bool,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    /// Bad input: usage, configuration or files to read.
    Input(String),
    /// The simulation or writing its output failed.
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Run(_) => 2,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(e) => Failure::Input(e.to_string()),
            e => Failure::Run(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::CaseCount { n } => cmd_case_count(n),
        Command::DumpTables { run, time } => cmd_dump_tables(&run, time),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(m) | Failure::Run(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

/// One simulated cell of a sweep.
struct Cell {
    alpha: Option<f64>,
    params: ScenarioParams,
    sim: SimConfig,
}

fn cells(args: &RunArgs) -> Result<Vec<Cell>, Failure> {
    let (params, mut sim) = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            load_config(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => (ScenarioParams::default(), SimConfig::default()),
    };
    if let Some(mode) = args.mode {
        sim.controller_mode = mode.into();
    }
    if args.noise {
        sim.noise_enabled = true;
    }
    if args.no_noise {
        sim.noise_enabled = false;
    }
    if let Some(h) = args.horizon {
        sim.horizon = h;
    }
    let alphas: Vec<Option<f64>> = if args.alpha.is_empty() {
        vec![params.alpha]
    } else {
        args.alpha.iter().copied().map(Some).collect()
    };
    let seeds = if args.seed.is_empty() { vec![sim.rng_seed] } else { args.seed.clone() };
    let mut out = Vec::new();
    for &alpha in &alphas {
        let mut p = params.clone();
        if let Some(a) = alpha.filter(|_| !args.alpha.is_empty()) {
            p.alpha = Some(a);
            p.beta = beta_from_alpha(a, p.u_min, p.u_max).map_err(|e| Failure::Input(e.to_string()))?;
        }
        p.validate().map_err(|e| Failure::Input(e.to_string()))?;
        for &seed in &seeds {
            let s = SimConfig { rng_seed: seed, ..sim.clone() };
            s.validate(&p).map_err(|e| Failure::Input(e.to_string()))?;
            out.push(Cell { alpha, params: p.clone(), sim: s });
        }
    }
    Ok(out)
}

fn cell_dir(index: usize, cell: &Cell) -> String {
    let mode = match cell.sim.controller_mode {
        ControllerMode::Ocbf => "ocbf",
        ControllerMode::CbfOnly => "cbf",
    };
    let weight = match cell.alpha {
        Some(a) => format!("a{a}"),
        None => format!("b{}", cell.params.beta),
    };
    format!("{index:02}_{mode}_{weight}_s{}", cell.sim.rng_seed)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn write_cell(dir: &Path, cell: &Cell, m: &Metrics, tables: bool) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
    let config = save_config(&cell.params, &cell.sim).map_err(|e| Failure::Run(e.to_string()))?;
    write(dir, "config.toml", &config)?;
    write(dir, "vehicles.tsv", &m.vehicles_tsv())?;
    write(dir, "series.tsv", &m.series_tsv())?;
    write(dir, "violations.tsv", &m.violations_tsv())?;
    if tables {
        write(dir, "tables.txt", &m.tables_text())?;
    }
    Ok(())
}

const HEADER: &str = "mode\talpha\tbeta\tseed\tnoise\texited\tavg_time\tavg_half_u2\tavg_objective\trear_end\tmerge_crossing\tinfeasible_steps";

fn summary_row(cell: &Cell, m: &Metrics) -> String {
    let alpha = cell.alpha.map_or("-".to_string(), |a| a.to_string());
    let rear = m.count_violations(|k| k == ViolationKind::RearEnd, 1e-3);
    let merge = m.count_violations(|k| matches!(k, ViolationKind::MergeCrossing(_)), 1e-3);
    format!(
        "{}\t{alpha}\t{:.4}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{rear}\t{merge}\t{}",
        cell.sim.controller_mode,
        cell.params.beta,
        cell.sim.rng_seed,
        if cell.sim.noise_enabled { "on" } else { "off" },
        m.exited(),
        m.avg_travel_time(),
        m.avg_energy(),
        m.avg_objective(),
        m.infeasible_steps,
    )
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cells = cells(args)?;
    let options = RunOptions { record_tables: args.tables, ..RunOptions::default() };
    println!("{HEADER}");
    for (i, cell) in cells.iter().enumerate() {
        let dir = args.out.join(cell_dir(i, cell));
        info!("running {}", dir.display());
        let m = run_with(&cell.params, &cell.sim, options)?;
        write_cell(&dir, cell, &m, args.tables)?;
        println!("{}", summary_row(cell, &m));
    }
    Ok(())
}

fn cmd_case_count(n: usize) -> Result<(), Failure> {
    let count = case_count(n).map_err(|e| Failure::Input(e.to_string()))?;
    println!("{count}");
    Ok(())
}

fn cmd_dump_tables(run: &Path, time: f64) -> Result<(), Failure> {
    let path = run.join("tables.txt");
    let text = fs::read_to_string(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let dumps = parse_tables_text(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let (Some(first), Some(last)) = (dumps.first(), dumps.last()) else {
        return Err(Failure::Input(format!("{}: no recorded tables", path.display())));
    };
    if !(time >= first.0 && time <= last.0) {
        return Err(Failure::Input(format!(
            "time {time} is outside the recorded range [{}, {}]",
            first.0, last.0
        )));
    }
    let (t, dump) = dumps
        .iter()
        .min_by(|a, b| (a.0 - time).abs().total_cmp(&(b.0 - time).abs()))
        .expect("non-empty");
    println!("# t = {t}");
    print!("{dump}");
    Ok(())
}
