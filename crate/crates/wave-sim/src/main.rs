use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Parser, Subcommand};
use wave_sim::{
    apply_override, config_from_value, export_csv, load_config, load_config_value, parse_param, summary_table, CliError,
    Overrides,
};
use wave_sim_core::{RunOutput, ScenarioConfig, Simulation};

/// IEEE 802.11p/WAVE highway simulator.
#[derive(Parser)]
#[command(name = "wave-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario per parameter value, concurrently.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,...`; dotted keys reach nested blocks. Repeat for a grid.
        #[arg(long, required = true)]
        param: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
        /// Parent directory for the per-value output directories.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cfg: ScenarioConfig) -> Result<RunOutput, CliError> {
    let dir = PathBuf::from(&cfg.output_dir);
    let run = Simulation::new(cfg)?.run()?;
    export_csv(&run, &dir)?;
    Ok(run)
}

fn cmd_run(config: &Path, overrides: Overrides) -> Result<(), CliError> {
    let mut value = load_config_value(config)?;
    overrides.apply(&mut value);
    let cfg = config_from_value(config, value)?;
    let run = execute(cfg)?;
    print!("{}", summary_table(&run));
    println!("results: {}", run.config.output_dir);
    Ok(())
}

fn cmd_sweep(config: &Path, params: &[String], overrides: Overrides) -> Result<(), CliError> {
    let params = params.iter().map(|p| parse_param(p)).collect::<Result<Vec<_>, _>>()?;
    let mut base = load_config_value(config)?;
    overrides.apply(&mut base);
    let parent = match &overrides.output_dir {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(config_from_value(config, base.clone())?.output_dir),
    };

    let mut grid: Vec<(Vec<String>, serde_json::Value)> = vec![(Vec::new(), base)];
    for p in &params {
        let mut next = Vec::new();
        for (labels, value) in &grid {
            for v in &p.values {
                let mut value = value.clone();
                apply_override(&mut value, &p.key, v)?;
                let mut labels = labels.clone();
                labels.push(format!("{}={}", p.key, v));
                next.push((labels, value));
            }
        }
        grid = next;
    }

    let mut configs = Vec::new();
    for (labels, mut value) in grid {
        let dir = parent.join(labels.join(","));
        value["output_dir"] = serde_json::Value::String(dir.to_string_lossy().into_owned());
        configs.push((labels.join(","), config_from_value(config, value)?));
    }

    let results: Vec<(String, Result<RunOutput, CliError>)> = thread::scope(|s| {
        let handles: Vec<_> = configs
            .into_iter()
            .map(|(label, cfg)| (label, s.spawn(move || execute(cfg))))
            .collect();
        handles
            .into_iter()
            .map(|(label, h)| (label, h.join().expect("sweep worker panicked")))
            .collect()
    });

    let mut first_err = None;
    for (label, res) in results {
        println!("== {label}");
        match res {
            Ok(run) => print!("{}", summary_table(&run)),
            Err(e) => {
                eprintln!("error: {label}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn cmd_validate(config: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    println!("{}: ok ({}, seed {}, {} s)", config.display(), cfg.scenario.as_str(), cfg.seed, cfg.duration_s);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run {
            config,
            seed,
            duration,
            out,
        } => cmd_run(
            &config,
            Overrides {
                seed,
                duration_s: duration,
                output_dir: out.map(|p| p.to_string_lossy().into_owned()),
            },
        ),
        Command::Sweep {
            config,
            param,
            seed,
            duration,
            out,
        } => cmd_sweep(
            &config,
            &param,
            Overrides {
                seed,
                duration_s: duration,
                output_dir: out.map(|p| p.to_string_lossy().into_owned()),
            },
        ),
        Command::Validate { config } => cmd_validate(&config),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
