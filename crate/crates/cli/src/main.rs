use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use platelet_core::data::{write_daily_csv, ScenarioName};
use platelet_core::harness::{
    compare_report, exploratory_report, load_dataset, read_metrics_csv, run_all, write_evaluation,
    write_features_csv, write_model_artifacts, write_stl_csv, ModelKind, RunConfig,
};
use platelet_core::stats::stl_decompose;
use platelet_core::synth::{generate, write_synth};
use platelet_core::{Error, Result};

/// Daily platelet demand forecasting toolkit.
#[derive(Parser)]
#[command(name = "platelet", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scenario to run: two_year, eight_year or custom (ranges from the config).
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Comma-separated subset of arima, additive, lasso, lstm.
    #[arg(long, global = true)]
    models: Option<String>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic granular, received and ground-truth files.
    Synth,
    /// Aggregate the input data and write the daily and feature tables.
    Ingest,
    /// Weekly STL decomposition of daily demand.
    Decompose,
    /// Fit the selected models and save their artifacts.
    Fit,
    /// Fit, forecast the test range and write metrics, forecasts and plot data.
    Evaluate,
    /// Merge metrics tables into a grouped comparison.
    Compare {
        /// metrics.csv files to merge.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
    /// Exploratory statistics of daily demand.
    Report,
}

fn resolve(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &cli.scenario {
        config.scenarios = vec![s.parse::<ScenarioName>()?];
    }
    if let Some(m) = &cli.models {
        config.models = ModelKind::parse_list(m)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let out = cli.out.clone().or_else(|| config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    Ok((config, out))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: &Cli) -> Result<()> {
    let (config, out) = resolve(cli)?;
    match &cli.command {
        Command::Synth => {
            let data = generate(&config.synth_config()?)?;
            write_synth(&data, &out)?;
            write_daily_csv(&data.daily, create(&out.join("daily.csv"))?)?;
            println!("wrote {} records over {} days to {}", data.records.len(), data.daily.len(), out.display());
        }
        Command::Ingest => {
            let ds = load_dataset(&config)?;
            write_daily_csv(&ds.daily, create(&out.join("daily.csv"))?)?;
            write_features_csv(&ds.features, create(&out.join("features.csv"))?)?;
            println!("wrote {} days and {} feature rows to {}", ds.daily.len(), ds.features.n_rows(), out.display());
        }
        Command::Decompose => {
            let ds = load_dataset(&config)?;
            let demand: Vec<f64> = ds.daily.iter().map(|d| f64::from(d.units_transfused)).collect();
            let dates: Vec<_> = ds.daily.iter().map(|d| d.date).collect();
            let stl = stl_decompose(&demand, 7, &config.stl)?;
            write_stl_csv(&dates, &stl, create(&out.join("stl.csv"))?)?;
            println!("wrote {}", out.join("stl.csv").display());
        }
        Command::Fit => {
            let (_, reports) = run_all(&config)?;
            for r in &reports {
                let dir = out.join(r.split.name.as_str());
                for p in write_model_artifacts(r, &dir)? {
                    println!("wrote {}", p.display());
                }
                report_failures(r);
            }
        }
        Command::Evaluate => {
            let (_, reports) = run_all(&config)?;
            let table = write_evaluation(&reports, &out)?;
            print!("{}", table.render());
            reports.iter().for_each(report_failures);
        }
        Command::Compare { metrics } => {
            let mut rows = Vec::new();
            for p in metrics {
                rows.extend(read_metrics_csv(File::open(p)?)?);
            }
            let table = compare_report(&rows)?;
            table.write_csv(create(&out.join("comparison.csv"))?)?;
            std::fs::write(out.join("comparison.txt"), table.render())?;
            print!("{}", table.render());
        }
        Command::Report => {
            let ds = load_dataset(&config)?;
            let ex = exploratory_report(&ds.daily)?;
            serde_json::to_writer_pretty(create(&out.join("exploratory.json"))?, &ex).map_err(Error::from)?;
            print!("{}", ex.render());
        }
    }
    Ok(())
}

fn report_failures(r: &platelet_core::harness::EvaluationReport) {
    for f in &r.failures {
        eprintln!("warning: {} failed on {}: {}", f.model, f.scenario, f.error);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
