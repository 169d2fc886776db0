//! End-to-end driver: ingest, attribution, statistics, geocoding, output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::attribution::{
    attribute, format_attribution_dump, AttributionReport, CityKey, Occurrence,
};
use crate::error::{Error, Result};
use crate::gazetteer::{load_gazetteer, Gazetteer, RemoteConfig, RemoteGeocoder, Resolution};
use crate::ingest::{filter_corpus, parse_export, CorpusFilter, ParseReport};
use crate::map::{marker_for_place, marker_style, MapMarker, MapWriter};
use crate::stats::{
    aggregate, all_city_stats, apply_city_cutoff, format_stats_dump, parse_stats_dump, CityStats,
    CorpusSummary, DEFAULT_MIN_PAPERS, DEFAULT_TOP_FRACTION,
};

pub const STATS_SUFFIX: &str = ".stats.tsv";
pub const GPSVIZ_SUFFIX: &str = ".gpsviz.txt";
pub const GEOJSON_SUFFIX: &str = ".geojson";
pub const KML_SUFFIX: &str = ".kml";
pub const ATTRIBUTION_SUFFIX: &str = ".attribution.tsv";

const SUMMARY_ROWS: usize = 25;

#[derive(Debug, Clone)]
pub struct StatsConfig {
    pub input_path: PathBuf,
    pub top_fraction: f64,
    pub min_papers: u64,
    pub year: Option<u16>,
    pub doc_types: Vec<String>,
    pub attribution_dump: bool,
}

impl StatsConfig {
    pub fn new(input_path: impl Into<PathBuf>) -> Self {
        StatsConfig {
            input_path: input_path.into(),
            top_fraction: DEFAULT_TOP_FRACTION,
            min_papers: DEFAULT_MIN_PAPERS,
            year: None,
            doc_types: vec!["Article".into()],
            attribution_dump: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            return Err(Error::Config(format!(
                "top fraction must lie in (0, 1), got {}",
                self.top_fraction
            )));
        }
        if self.min_papers < 1 {
            return Err(Error::Config("min papers must be at least 1".into()));
        }
        CorpusFilter::new(self.year, &self.doc_types).map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct MapConfig {
    pub gazetteer_path: PathBuf,
    pub strict_geocoding: bool,
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub stats: StatsConfig,
    pub map: MapConfig,
    pub output_prefix: PathBuf,
}

impl RunConfig {
    pub fn new(
        input_path: impl Into<PathBuf>,
        gazetteer_path: impl Into<PathBuf>,
        output_prefix: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            stats: StatsConfig::new(input_path),
            map: MapConfig {
                gazetteer_path: gazetteer_path.into(),
                strict_geocoding: false,
                remote: None,
            },
            output_prefix: output_prefix.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    /// Absent when maps are drawn from an existing statistics dump.
    pub summary: Option<CorpusSummary>,
    pub parse: ParseReport,
    pub attribution: AttributionReport,
    pub cities_total: usize,
    pub cities_after_cutoff: usize,
    pub cities_geocoded: usize,
    pub cities_missing_coordinates: Vec<CityKey>,
    /// Cities placed only after dropping their region.
    pub geocode_fallbacks: Vec<CityKey>,
    pub outputs: Vec<PathBuf>,
    /// Cities that passed the cutoff, in output order.
    pub cities: Vec<CityStats>,
}

pub fn output_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = OsString::from(prefix.as_os_str());
    name.push(suffix);
    PathBuf::from(name)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Everything up to the statistics of the cities passing the cutoff.
pub fn compute_stats(config: &StatsConfig, report: &mut RunReport) -> Result<Vec<Occurrence>> {
    config.validate()?;
    let filter = CorpusFilter::new(config.year, &config.doc_types)?;
    let file = File::open(&config.input_path).map_err(|e| Error::io(&config.input_path, e))?;
    let (records, parse) = parse_export(BufReader::new(file))?;
    for (line, reason) in &parse.skip_reasons {
        log::warn!(
            "{}:{line}: record skipped: {reason}",
            config.input_path.display()
        );
    }
    let records = filter_corpus(&records, &filter);
    let summary = CorpusSummary::from_records(&records, config.top_fraction)?;
    let (occurrences, attribution) = attribute(&records);
    for (id, clause) in &attribution.unparseable {
        log::warn!("{id}: no city in address {clause:?}");
    }
    let counts = aggregate(&records, &occurrences, summary.citation_threshold)?;
    let stats = all_city_stats(&counts, &summary)?;
    let cities_total = stats.len();
    let cities = apply_city_cutoff(stats, config.min_papers);

    report.summary = Some(summary);
    report.parse = parse;
    report.attribution = attribution;
    report.cities_total = cities_total;
    report.cities_after_cutoff = cities.len();
    report.cities = cities;
    Ok(occurrences)
}

/// Markers for every city that has coordinates. Missing keys are recorded
/// in the report and fail the call when geocoding is strict.
pub fn build_markers(
    cities: &[CityStats],
    gazetteer: &Gazetteer,
    mut remote: Option<&mut RemoteGeocoder>,
    strict: bool,
    report: &mut RunReport,
) -> Result<Vec<MapMarker>> {
    let mut markers = Vec::with_capacity(cities.len());
    let mut missing = Vec::new();
    for stats in cities {
        match gazetteer.resolve(&stats.key) {
            Resolution::Found(place) => markers.push(marker_for_place(stats, &place)),
            Resolution::Fallback(place) => {
                log::warn!(
                    "{}: placed at region-less entry {}",
                    stats.key,
                    place.label()
                );
                report.geocode_fallbacks.push(stats.key.clone());
                markers.push(marker_for_place(stats, &place));
            }
            Resolution::Missing => {
                let point = match remote.as_deref_mut() {
                    Some(geocoder) => geocoder.geocode(&stats.key)?,
                    None => None,
                };
                match point {
                    Some(point) => markers.push(marker_style(stats, point)),
                    None => missing.push(stats.key.clone()),
                }
            }
        }
    }
    report.cities_geocoded = markers.len();
    report.cities_missing_coordinates = missing.clone();
    if !missing.is_empty() {
        if strict {
            return Err(Error::MissingCoordinates(missing));
        }
        for key in &missing {
            log::warn!("{key}: no coordinates, left off the map");
        }
    }
    Ok(markers)
}

fn write_maps(markers: &[MapMarker], prefix: &Path, report: &mut RunReport) -> Result<()> {
    let writer = MapWriter::default();
    for (suffix, text) in [
        (GPSVIZ_SUFFIX, writer.gpsvisualizer(markers)),
        (GEOJSON_SUFFIX, writer.geojson(markers)),
        (KML_SUFFIX, writer.kml(markers)),
    ] {
        let path = output_path(prefix, suffix);
        write_file(&path, &text)?;
        report.outputs.push(path);
    }
    Ok(())
}

fn draw(map: &MapConfig, prefix: &Path, report: &mut RunReport) -> Result<()> {
    let gazetteer = load_gazetteer(&map.gazetteer_path)?;
    let mut remote = map.remote.clone().map(RemoteGeocoder::new).transpose()?;
    let markers = build_markers(
        &report.cities.clone(),
        &gazetteer,
        remote.as_mut(),
        map.strict_geocoding,
        report,
    )?;
    write_maps(&markers, prefix, report)
}

/// Statistics stage only: writes the statistics dump (and optionally the
/// attribution dump).
pub fn run_stats(config: &StatsConfig, output_prefix: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let occurrences = compute_stats(config, &mut report)?;
    if config.attribution_dump {
        let path = output_path(output_prefix, ATTRIBUTION_SUFFIX);
        write_file(&path, &format_attribution_dump(&occurrences))?;
        report.outputs.push(path);
    }
    let path = output_path(output_prefix, STATS_SUFFIX);
    write_file(&path, &format_stats_dump(&report.cities))?;
    report.outputs.push(path);
    Ok(report)
}

/// Map stage only, reading a statistics dump.
pub fn run_map(stats_path: &Path, map: &MapConfig, output_prefix: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(stats_path).map_err(|e| Error::io(stats_path, e))?;
    let cities = parse_stats_dump(&text)?;
    let mut report = RunReport {
        cities_total: cities.len(),
        cities_after_cutoff: cities.len(),
        cities,
        ..RunReport::default()
    };
    draw(map, output_prefix, &mut report)?;
    Ok(report)
}

/// The full pipeline.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let mut report = run_stats(&config.stats, &config.output_prefix)?;
    draw(&config.map, &config.output_prefix, &mut report)?;
    Ok(report)
}

/// Plain-text overview of a run: corpus figures and the cities with the
/// largest deviations.
pub fn print_summary(report: &RunReport) -> String {
    let mut out = String::new();
    if let Some(s) = &report.summary {
        let _ = writeln!(
            out,
            "corpus: {} papers, {} in the top {:.0}% (at least {} citations)",
            s.n_total,
            s.n_top,
            s.top_fraction * 100.0,
            s.citation_threshold
        );
    }
    let _ = writeln!(
        out,
        "cities: {} attributed, {} after cutoff, {} geocoded, {} without coordinates",
        report.cities_total,
        report.cities_after_cutoff,
        report.cities_geocoded,
        report.cities_missing_coordinates.len()
    );
    if report.cities.is_empty() {
        out.push_str("no cities passed the cutoff\n");
        return out;
    }
    let _ = writeln!(
        out,
        "\n  #  {:<30}  {:>8}  observed  expected  stars  z",
        "city", "papers"
    );
    for (rank, s) in report.cities.iter().take(SUMMARY_ROWS).enumerate() {
        let _ = writeln!(
            out,
            "{:>3}  {:<30}  {:>8}  {}  {:.1}  {}  z={:.2}",
            rank + 1,
            s.key.display_label(),
            s.n_papers,
            s.observed,
            s.expected,
            if s.significance.stars().is_empty() {
                "-"
            } else {
                s.significance.stars()
            },
            s.z
        );
    }
    if report.cities.len() > SUMMARY_ROWS {
        let _ = writeln!(out, "  ... {} more", report.cities.len() - SUMMARY_ROWS);
    }
    out
}
