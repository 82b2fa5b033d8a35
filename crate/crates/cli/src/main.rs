use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndae_attack::attack::DetectorParams;
use ndae_attack::harness::{
    export, plan_attack, prepare, run_scenario, sweep, with_parameter, write_sweep_table,
    ExportFormat, Manifest, ScenarioConfig,
};
use ndae_attack::Error;

#[derive(Parser)]
#[command(
    name = "ndae",
    version,
    about = "Simulate, estimate, detect and attack NDAE grid models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack-free run; the [attack] section is ignored.
    Simulate(Common),
    /// Run the configured attack.
    Attack(Common),
    /// Calibrate the detector and print the resulting parameters.
    Calibrate(Common),
    /// Print the attack zone for the configured targets.
    Zone(Common),
    /// Run the configured [sweep] and write a summary table.
    Sweep(Common),
    /// Print the manifest of a previous export.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Reverted,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(args: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(&args.config).map_err(Failure::Config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn format(args: &Common) -> ExportFormat {
    match args.format {
        Format::Csv => ExportFormat::Csv,
        Format::Json => ExportFormat::Json,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).map_err(Error::from)?
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let mut cfg = load(&args)?;
            cfg.attack = None;
            let result = run_scenario(&cfg)?;
            let manifest = export(&result, &cfg, &cfg.output_dir, format(&args))?;
            print_json(&result.summary())?;
            eprintln!("wrote {}", manifest.display());
        }
        Command::Attack(args) => {
            let cfg = load(&args)?;
            if cfg.attack.is_none() {
                return Err(Failure::Config(Error::Config(
                    "`attack` needs an [attack] section".into(),
                )));
            }
            let result = run_scenario(&cfg)?;
            let manifest = export(&result, &cfg, &cfg.output_dir, format(&args))?;
            print_json(&result.summary())?;
            eprintln!("wrote {}", manifest.display());
            if result.attack_fully_reverted() {
                return Err(Failure::Reverted);
            }
        }
        Command::Calibrate(args) => {
            let cfg = load(&args)?;
            let setup = prepare(&cfg)?;
            match &setup.calibration {
                Some(report) => {
                    std::fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
                    let path = cfg
                        .output_dir
                        .join(format!("{}.calibration.json", cfg.name));
                    std::fs::write(
                        &path,
                        serde_json::to_string_pretty(report).map_err(Error::from)?,
                    )
                    .map_err(Error::from)?;
                    print_json(report)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print_json(
                    &serde_json::json!({ "detector": "chi2", "params": DetectorParams::of(&setup.detector) }),
                )?,
            }
        }
        Command::Zone(args) => {
            let cfg = load(&args)?;
            let setup = prepare(&cfg)?;
            let plan = plan_attack(&cfg, &setup)?.ok_or_else(|| {
                Failure::Config(Error::Config("`zone` needs an [attack] section".into()))
            })?;
            print_json(&serde_json::json!({ "gamma": plan.spec.gamma, "zone": plan.zone }))?;
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let spec = cfg.sweep.clone().ok_or_else(|| {
                Failure::Config(Error::Config("`sweep` needs a [sweep] section".into()))
            })?;
            let runs = sweep(&cfg, spec.parameter, &spec.values, spec.parallel)?;
            for (row, result) in &runs {
                let point = with_parameter(&cfg, spec.parameter, row.value)?;
                export(result, &point, &cfg.output_dir, format(&args))?;
            }
            let rows: Vec<_> = runs.into_iter().map(|(row, _)| row).collect();
            let path = cfg.output_dir.join(format!("{}.sweep.csv", cfg.name));
            write_sweep_table(&path, &rows)?;
            print_json(&rows)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Report(args) => {
            let cfg = load(&args)?;
            let path = cfg.output_dir.join(format!("{}.manifest.json", cfg.name));
            let text = std::fs::read_to_string(&path).map_err(Error::from)?;
            let manifest: Manifest = serde_json::from_str(&text).map_err(Error::from)?;
            print_json(&manifest)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Reverted) => {
            eprintln!("attack infeasible: every attacked step was reverted");
            ExitCode::from(3)
        }
    }
}
