use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsm_placer::experiment::{
    preset, run, run_sweep, AxisSpec, ExperimentConfig, NoiseLevels, RunError, SweepSpec,
    TableFormat,
};
use fsm_placer::Error;

const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(
    name = "fsm-placer",
    version,
    about = "Forward-sensitivity observation placement and twin experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a twin experiment and write its artifacts.
    Run(RunArgs),
    /// Sweep two-observation estimate sensitivities over a (t1, t2) grid.
    Sweep(SweepArgs),
    /// Print a built-in experiment config as JSON.
    Preset {
        /// One of linear-decay, quadratic-decay, burgers, advdiff.
        #[arg(long, value_name = "NAME")]
        emit: String,
    },
    /// Check a config without running it.
    Validate(Source),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Use a built-in config instead of a file.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

#[derive(Args)]
struct Overrides {
    /// Output directory; defaults to the config's `outputs.dir` or `./<name>`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_name = "INT,...", value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Noise level(s): `10%` or a fraction such as `0.1`; comma-separated for several.
    #[arg(long, value_name = "PCT", value_delimiter = ',', value_parser = parse_noise)]
    noise: Option<Vec<f64>>,
    /// Explicit observation times, replacing the configured placement.
    #[arg(long, value_name = "T1,T2,...", value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    /// `start,end,count` for the first-observation axis.
    #[arg(long, value_name = "START,END,COUNT", value_parser = parse_axis)]
    t1: Option<AxisSpec>,
    /// `start,end,count` for the second-observation axis.
    #[arg(long, value_name = "START,END,COUNT", value_parser = parse_axis)]
    t2: Option<AxisSpec>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Json => TableFormat::Json,
        }
    }
}

fn parse_noise(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (text, scale) = match s.strip_suffix('%') {
        Some(pct) => (pct.trim(), 0.01),
        None => (s, 1.0),
    };
    let v: f64 = text
        .parse()
        .map_err(|_| format!("`{s}` is not a noise level"))?;
    if v < 0.0 || !v.is_finite() {
        return Err(format!("noise level must be non-negative, got `{s}`"));
    }
    Ok(v * scale)
}

fn parse_axis(s: &str) -> Result<AxisSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [start, end, count] = parts.as_slice() else {
        return Err(format!("expected START,END,COUNT, got `{s}`"));
    };
    let num = |x: &str| {
        x.parse::<f64>()
            .map_err(|_| format!("`{x}` is not a number"))
    };
    Ok(AxisSpec {
        start: num(start)?,
        end: num(end)?,
        count: count
            .parse()
            .map_err(|_| format!("`{count}` is not a count"))?,
    })
}

enum Failure {
    Run(RunError),
    Io(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Run(e)
    }
}

fn invalid(e: Error) -> Failure {
    Failure::Run(RunError::Invalid(e))
}

fn load(source: &Source) -> Result<ExperimentConfig, Failure> {
    if let Some(name) = &source.preset {
        return preset(name).map_err(invalid);
    }
    let path = source.config.as_ref().expect("clap requires a source");
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(invalid)
}

fn apply(mut cfg: ExperimentConfig, o: &Overrides) -> ExperimentConfig {
    if let Some(seeds) = &o.seed {
        cfg = cfg.with_seeds(seeds.clone());
    }
    if let Some(noise) = &o.noise {
        cfg.noise_pct = match noise.as_slice() {
            [one] => NoiseLevels::One(*one),
            many => NoiseLevels::Many(many.to_vec()),
        };
    }
    if let Some(times) = &o.times {
        cfg = cfg.with_times(times.clone());
    }
    cfg
}

fn out_dir(cfg: &ExperimentConfig, o: &Overrides) -> PathBuf {
    o.out
        .clone()
        .or_else(|| cfg.outputs.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.name))
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), Failure> {
    for (rel, content) in files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| Failure::Io(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, content)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn fmt_times(times: &[f64]) -> String {
    times
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = apply(load(&args.source)?, &args.overrides);
    let out = run(&cfg)?;
    let dir = out_dir(&cfg, &args.overrides);
    let files = out.artifact_files(args.overrides.format.into());
    write_all(&dir, &files)?;
    println!(
        "placement: [{}]  |G| = {:e}",
        fmt_times(&out.plan.times),
        out.plan.gramian_det
    );
    println!("background error: {:.6}", out.summary.background_error);
    for level in &out.summary.levels {
        println!(
            "noise {}%: {} runs, {} converged, {} failed, error mean {:.6} std {:.6}",
            level.noise_pct * 100.0,
            level.runs,
            level.converged,
            level.failed,
            level.error.mean,
            level.error.std
        );
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = apply(load(&args.source)?, &args.overrides);
    if args.t1.is_some() || args.t2.is_some() {
        let default = cfg
            .sweep
            .unwrap_or_else(|| SweepSpec::uniform(cfg.horizon, 100));
        cfg.sweep = Some(SweepSpec {
            t1: args.t1.unwrap_or(default.t1),
            t2: args.t2.unwrap_or(default.t2),
        });
    }
    let out = run_sweep(&cfg)?;
    let dir = out_dir(&cfg, &args.overrides);
    let files = out.artifact_files(args.overrides.format.into());
    write_all(&dir, &files)?;
    println!(
        "sweep {}x{} around planned times [{}], {} singular cells",
        out.summary.t1_count,
        out.summary.t2_count,
        fmt_times(&out.summary.planned_times),
        out.summary.singular_cells
    );
    for (field, s) in &out.summary.fields {
        println!(
            "{field}: row argmin t2 = {}, column argmin t1 = {}",
            s.row_argmin_t2.map_or("-".into(), |t| t.to_string()),
            s.column_argmin_t1.map_or("-".into(), |t| t.to_string())
        );
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn cmd_validate(source: &Source) -> Result<(), Failure> {
    let cfg = load(source)?;
    let resolved = cfg.resolve().map_err(invalid)?;
    println!(
        "ok: {} ({}, state {} + parameters {}, {} steps)",
        cfg.name,
        resolved.model.name(),
        resolved.model.state_dim(),
        resolved.model.param_dim(),
        resolved.grid.steps
    );
    Ok(())
}

fn threads_from_env() -> Result<(), Failure> {
    let Ok(value) = std::env::var("FSM_PLACER_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            invalid(Error::Invalid(format!(
                "FSM_PLACER_THREADS must be a positive integer, got `{value}`"
            )))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|()| match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Preset { emit } => preset(emit)
            .map_err(invalid)
            .map(|cfg| println!("{}", cfg.to_json())),
        Command::Validate(source) => cmd_validate(source),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}
