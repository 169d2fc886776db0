use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use topcity::gazetteer::RemoteConfig;
use topcity::pipeline::{self, MapConfig, RunConfig, StatsConfig};
use topcity::Error;

/// Map cities by observed vs. expected counts of highly-cited papers.
#[derive(Parser)]
#[command(name = "topcity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: statistics dump plus GPS Visualizer, GeoJSON and KML files.
    Run {
        #[command(flatten)]
        stats: StatsArgs,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Stop after writing the statistics dump.
    Stats {
        #[command(flatten)]
        stats: StatsArgs,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Draw maps from an existing statistics dump.
    Map {
        /// Statistics dump written by `stats` or `run`.
        #[arg(long)]
        stats: PathBuf,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

#[derive(Args)]
struct StatsArgs {
    /// Field-tagged export file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    top_fraction: f64,
    #[arg(long, default_value_t = 50)]
    min_papers: u64,
    #[arg(long)]
    year: Option<u16>,
    /// Accepted document type; repeat for several.
    #[arg(long = "doc-type", default_values_t = ["Article".to_string()])]
    doc_types: Vec<String>,
    /// Also write `<prefix>.attribution.tsv`.
    #[arg(long)]
    attribution_dump: bool,
}

#[derive(Args)]
struct MapArgs {
    /// CSV gazetteer: city,region,country,latitude,longitude.
    #[arg(long)]
    gazetteer: PathBuf,
    /// Fail when any city lacks coordinates.
    #[arg(long)]
    strict_geocoding: bool,
    /// Remote geocoder URL with {query} and {key} placeholders.
    #[arg(long, env = "GEOCODER_URL")]
    geocoder_url: Option<String>,
    #[arg(long, env = "GEOCODER_KEY", hide_env_values = true)]
    geocoder_key: Option<String>,
    #[arg(long, env = "GEOCODER_DELAY_MS", default_value_t = 1000)]
    geocoder_delay_ms: u64,
    /// Cache file for remote answers [default: <out-prefix>.geocache.csv].
    #[arg(long)]
    geocoder_cache: Option<PathBuf>,
}

impl StatsArgs {
    fn into_config(self) -> StatsConfig {
        StatsConfig {
            input_path: self.input,
            top_fraction: self.top_fraction,
            min_papers: self.min_papers,
            year: self.year,
            doc_types: self.doc_types,
            attribution_dump: self.attribution_dump,
        }
    }
}

impl MapArgs {
    fn into_config(self, out_prefix: &std::path::Path) -> MapConfig {
        let remote = self.geocoder_url.map(|url| RemoteConfig {
            url_template: url,
            api_key: self.geocoder_key,
            delay: Duration::from_millis(self.geocoder_delay_ms),
            cache_path: self
                .geocoder_cache
                .unwrap_or_else(|| pipeline::output_path(out_prefix, ".geocache.csv")),
            max_attempts: 3,
        });
        MapConfig {
            gazetteer_path: self.gazetteer,
            strict_geocoding: self.strict_geocoding,
            remote,
        }
    }
}

fn execute(command: Command) -> Result<pipeline::RunReport, Error> {
    match command {
        Command::Run {
            stats,
            map,
            out_prefix,
        } => {
            let config = RunConfig {
                stats: stats.into_config(),
                map: map.into_config(&out_prefix),
                output_prefix: out_prefix,
            };
            pipeline::run(&config)
        }
        Command::Stats { stats, out_prefix } => {
            pipeline::run_stats(&stats.into_config(), &out_prefix)
        }
        Command::Map {
            stats,
            map,
            out_prefix,
        } => pipeline::run_map(&stats, &map.into_config(&out_prefix), &out_prefix),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(report) => {
            print!("{}", pipeline::print_summary(&report));
            for path in &report.outputs {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
