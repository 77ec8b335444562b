//! Command-line front end: dataset preparation, single recourse runs, and
//! the full experiment grid.

use clap::{Parser, Subcommand, ValueEnum};
use ranklift::data::{
    self, generate_synthetic, group_users, Dataset, FeaturizerSpec, GroupingSpec, SynthConfig,
};
use ranklift::harness::{
    render_charts, render_report, run_experiment, write_report, ExperimentReport, ExperimentSpec,
    ReportFormat,
};
use ranklift::model::{RatingStore, UserId};
use ranklift::recourse::{compute_recourse, RecourseConfig, RecourseRequest, RecourseResult};
use ranklift::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ranklift",
    version,
    about = "Content-filtering recommendation scoring and sparse item-feature recourse"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset directory from raw item records.
    Featurize {
        /// Item records, one JSON object per line.
        #[arg(long)]
        items: PathBuf,
        /// Featurizer spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Optional `user_id,item_id,rating` CSV; item ids must match the
        /// records.
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 50)]
        features: usize,
        /// Probability that a (user, item) pair carries a rating.
        #[arg(long, default_value_t = 0.05)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Full generator config (JSON); overrides the flags above.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute recourse for one item and user group.
    Recourse {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Item to promote, by external id or dense index.
        #[arg(long)]
        item: String,
        /// Index of the activity-quantile user group to target.
        #[arg(long)]
        group: usize,
        /// Number of activity-quantile groups.
        #[arg(long, default_value_t = 5)]
        groups: usize,
        /// Top-k cutoff defining success.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Fraction of the group the optimizer sees.
        #[arg(long, default_value_t = 1.0)]
        sample: f64,
        /// L1 penalty weight.
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        /// Gradient step size.
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        /// Fraction of the converged success rate hard thresholding may
        /// give back.
        #[arg(long, default_value_t = 0.20)]
        iht_loss: f64,
        /// Optional cap on the number of changed features.
        #[arg(long)]
        max_changes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full (group, rank, fraction) grid and write reports.
    Experiment {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Experiment spec (JSON); defaults to the built-in grid.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for report.csv / report.json.
        #[arg(long)]
        out: PathBuf,
        /// Cap on worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Also render SVG charts into the output directory.
        #[arg(long)]
        charts: bool,
        /// Keep per-cell wall times; by default they are zeroed so reports
        /// are byte-identical across runs.
        #[arg(long)]
        timing: bool,
    },
    /// Print a previously written report.
    Report {
        /// Directory holding report.json.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

/// Reads a JSON config file, reporting parse problems as config errors
/// rather than data errors.
fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RecourseOutput {
    item: u32,
    item_id: Option<String>,
    group: usize,
    group_size: usize,
    #[serde(flatten)]
    result: RecourseResult,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Featurize {
            items,
            spec,
            ratings,
            out,
        } => {
            let records = data::load_item_records(&items)?;
            let spec: FeaturizerSpec = read_config(&spec)?;
            let (catalog, features, item_ids) = data::featurize(&records, &spec)?;
            let (store, users) = match ratings {
                Some(path) => data::load_ratings_with_items(&path, &item_ids)?,
                None => (RatingStore::from_triples(0, [])?, data::IdMap::new()),
            };
            let dataset = Dataset {
                catalog,
                ratings: store,
                items: item_ids,
                users,
                features,
                user_metadata: data::UserMetadata::new(),
            };
            dataset.save(&out)?;
            log::info!(
                "featurized {} items into {} features at {}",
                dataset.catalog.n_items(),
                dataset.catalog.n_features(),
                out.display()
            );
        }
        Command::Synth {
            users,
            items,
            features,
            density,
            seed,
            config,
            out,
        } => {
            let config = match config {
                Some(path) => read_config(&path)?,
                None => {
                    // Scale the feature blocks with the requested width; the
                    // 50-feature default splits 1 strong / 45 niche / 4 weak.
                    let strong = 1usize.min(features);
                    let weak = (features as f64 * 0.08).ceil() as usize;
                    SynthConfig {
                        n_users: users,
                        n_items: items,
                        n_features: features,
                        density,
                        seed,
                        n_strong_features: strong,
                        n_niche_features: features.saturating_sub(strong + weak),
                        ..SynthConfig::default()
                    }
                }
            };
            let dataset = generate_synthetic(&config)?;
            dataset.save(&out)?;
            log::info!(
                "wrote {} users, {} items, {} ratings to {}",
                dataset.ratings.n_users(),
                dataset.catalog.n_items(),
                dataset.ratings.n_ratings(),
                out.display()
            );
        }
        Command::Recourse {
            data,
            item,
            group,
            groups,
            k,
            sample,
            lambda,
            lr,
            max_iters,
            iht_loss,
            max_changes,
            seed,
            out,
        } => {
            let dataset = Dataset::load(&data)?;
            let item = dataset.resolve_item(&item)?;
            let metadata = dataset.metadata_by_user();
            let spec = GroupingSpec {
                n_groups: groups,
                ..GroupingSpec::default()
            };
            let partitions = group_users(&dataset.ratings, Some(&metadata), &spec)?;
            let target_group: Vec<UserId> =
                partitions.get(group).cloned().ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "group index {group} out of range (0..{})",
                        partitions.len()
                    ))
                })?;
            let group_size = target_group.len();
            let request = RecourseRequest {
                item,
                target_group,
                config: RecourseConfig {
                    k,
                    lambda,
                    learning_rate: lr,
                    max_iterations: max_iters,
                    iht_success_loss: iht_loss,
                    sample_fraction: sample,
                    rng_seed: seed,
                    max_changes,
                    ..RecourseConfig::default()
                },
            };
            let result = compute_recourse(&dataset.catalog, &dataset.ratings, &request)?;
            log::info!(
                "item {} group {group}: success {:.3} (baseline {:.3}), {} features changed in {} iterations",
                item.0,
                result.success_rate_full,
                result.baseline_success_full,
                result.changed_indices.len(),
                result.iterations()
            );
            let output = RecourseOutput {
                item: item.0,
                item_id: dataset.items.name(item.0).map(str::to_string),
                group,
                group_size,
                result,
            };
            write_json(&output, &out)?;
        }
        Command::Experiment {
            data,
            spec,
            out,
            jobs,
            charts,
            timing,
        } => {
            if let Some(n) = jobs {
                if n == 0 {
                    return Err(Error::InvalidConfig("--jobs must be positive".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            }
            let dataset = Dataset::load(&data)?;
            let spec: ExperimentSpec = match spec {
                Some(path) => read_config(&path)?,
                None => ExperimentSpec::default(),
            };
            let metadata = dataset.metadata_by_user();
            let mut report =
                run_experiment(&dataset.catalog, &dataset.ratings, Some(&metadata), &spec)?;
            if !timing {
                report.strip_timing();
            }
            std::fs::create_dir_all(&out)?;
            write_report(&report, ReportFormat::Csv, &out.join("report.csv"))?;
            write_report(&report, ReportFormat::Json, &out.join("report.json"))?;
            if charts {
                for path in render_charts(&report, &out)? {
                    log::info!("chart {}", path.display());
                }
            }
            log::info!(
                "{} cells ({} failed), mean success {:.3}",
                report.aggregates.cells_total,
                report.aggregates.cells_failed,
                report.aggregates.mean_success_rate
            );
        }
        Command::Report { input, format } => {
            let path = input.join("report.json");
            let report: ExperimentReport =
                serde_json::from_reader(BufReader::new(File::open(&path)?))?;
            render_report(&report, format.into(), std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
