use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pairpol::analysis::s_extremum;
use pairpol::compton::{analyzing_power, ELECTRON_MASS_KEV};
use pairpol::config::{parse_config, Preset, RunConfig};
use pairpol::output::{analyze_listmode, emit_plot_data, write_json, write_listmode};
use pairpol::pair::{modulation_closed_form, PairModel};
use pairpol::run::run;
use pairpol::Error;

#[derive(Parser)]
#[command(
    name = "pairpol",
    version,
    about = "Compton polarimetry of annihilation photon pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate events, fit every class and write summary and plot data.
    Simulate {
        /// TOML or JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Attempted events.
        #[arg(long)]
        events: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write accepted events to <out-dir>/listmode.csv.
        #[arg(long)]
        listmode: bool,
    },
    /// Re-run the analysis chain on a stored listmode file.
    Analyze {
        #[arg(long)]
        listmode: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Counters per ring.
        #[arg(long, default_value_t = 16)]
        counters: usize,
    },
    /// Closed-form R, μ and S extremum for a pair model; no sampling.
    Predict {
        #[arg(long)]
        model: PairModel,
        /// Degrees.
        #[arg(long)]
        theta1: f64,
        /// Degrees.
        #[arg(long)]
        theta2: f64,
        /// keV.
        #[arg(long, default_value_t = ELECTRON_MASS_KEV)]
        energy: f64,
    },
}

fn load_config(path: Option<&Path>, preset: Option<Preset>) -> Result<RunConfig, Error> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text)?
        }
        None => match preset {
            Some(p) => RunConfig::from_preset(p),
            None => {
                return Err(Error::Invalid(
                    "simulate needs --config or --preset".to_string(),
                ))
            }
        },
    };
    if let Some(p) = preset {
        config.preset = Some(p);
        config.apply_preset();
    }
    Ok(config)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: Option<PathBuf>,
    preset: Option<Preset>,
    events: Option<u64>,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
    listmode: bool,
) -> Result<(), Error> {
    let mut cfg = load_config(config.as_deref(), preset)?;
    if let Some(n) = events {
        cfg.n_events = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(dir) = &out_dir {
        cfg.outputs.json_summary = Some(dir.join("summary.json"));
        cfg.outputs.csv_dir = Some(dir.clone());
        if listmode {
            cfg.outputs.listmode = Some(dir.join("listmode.csv"));
        }
    } else if listmode && cfg.outputs.listmode.is_none() {
        cfg.outputs.listmode = Some(PathBuf::from("listmode.csv"));
    }
    cfg.validate().map_err(pairpol::config::ConfigError::from)?;

    let out = run(&cfg, cfg.outputs.listmode.is_some())?;
    let summary = &out.summary;
    if let Some(path) = &cfg.outputs.json_summary {
        write_json(path, summary)?;
    }
    if let Some(dir) = &cfg.outputs.csv_dir {
        emit_plot_data(dir, &summary.classes)?;
    }
    if let (Some(path), Some(events)) = (&cfg.outputs.listmode, &out.events) {
        write_listmode(path, events)?;
    }

    println!("attempted = {}", summary.attempted);
    println!("accepted = {}", summary.accepted);
    for (class, n) in &summary.class_counts {
        println!("count[{class}] = {n}");
    }
    match summary.primary().and_then(|c| c.fit.as_ref()) {
        Some(f) => {
            println!("class = {}", f.class);
            println!("R = {:.4} +- {:.4}", f.r, f.sigma_r);
            println!("mu = {:.4} +- {:.4}", f.mu, f.sigma_mu);
            if let (Some(p0), Some(s)) = (f.p0, f.sigma_p0) {
                println!("p0 = {p0:.4} +- {s:.4}");
            }
        }
        None => log::warn!("primary class {} has no fit", summary.primary_selection),
    }
    log::info!("wall time {:.2} s", summary.wall_time_s);
    Ok(())
}

fn analyze(listmode: &Path, out_dir: &Path, counters: usize) -> Result<(), Error> {
    let summary = analyze_listmode(listmode, counters)?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    emit_plot_data(out_dir, &summary.classes)?;
    println!("accepted = {}", summary.accepted);
    for c in &summary.classes {
        if let Some(f) = &c.fit {
            println!("R[{}] = {:.4} +- {:.4}", f.class, f.r, f.sigma_r);
        }
    }
    Ok(())
}

fn predict(model: PairModel, theta1: f64, theta2: f64, energy: f64) -> Result<(), Error> {
    let (t1, t2) = (theta1.to_radians(), theta2.to_radians());
    let mu = modulation_closed_form(model, t1, t2, energy)?;
    println!("model = {model}");
    println!("alpha1 = {:.6}", analyzing_power(energy, t1)?);
    println!("alpha2 = {:.6}", analyzing_power(energy, t2)?);
    println!("mu = {mu:.6}");
    println!("R = {:.6}", (1.0 + mu) / (1.0 - mu));
    println!("S_extremum = {:.6}", s_extremum(mu));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            preset,
            events,
            seed,
            workers,
            out_dir,
            listmode,
        } => simulate(config, preset, events, seed, workers, out_dir, listmode),
        Command::Analyze {
            listmode,
            out_dir,
            counters,
        } => analyze(&listmode, &out_dir, counters),
        Command::Predict {
            model,
            theta1,
            theta2,
            energy,
        } => predict(model, theta1, theta2, energy),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
