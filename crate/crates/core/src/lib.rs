//! Locate cities that publish more highly-cited papers than their output
//! predicts.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`ingest`] parses field-tagged bibliographic exports and filters the
//!    corpus by year and document type.
//! 2. [`attribution`] turns address clauses into normalized city keys, one
//!    occurrence per paper and city.
//! 3. [`stats`] picks the top-percentile citation threshold, aggregates
//!    observed and expected counts per city and runs a two-proportion z-test.
//! 4. [`gazetteer`] resolves city keys to coordinates from a local table,
//!    optionally backed by a rate-limited remote geocoder with a cache file.
//! 5. [`map`] styles each city as a proportional circle and writes
//!    GPS Visualizer text, GeoJSON and KML.
//!
//! [`pipeline`] wires the stages together for the command-line tool.

pub mod attribution;
pub mod error;
pub mod gazetteer;
pub mod ingest;
pub mod map;
pub mod pipeline;
pub mod stats;

pub use attribution::{
    city_occurrences, parse_city, split_addresses, AddressParse, CityKey, Occurrence,
};
pub use error::{Error, Result};
pub use gazetteer::{
    load_gazetteer, Gazetteer, GeoPoint, Place, RemoteConfig, RemoteGeocoder, Resolution,
};
pub use ingest::{filter_corpus, parse_export, CorpusFilter, PaperRecord, ParseReport};
pub use map::{
    emit_geojson, emit_gpsvisualizer, emit_kml, marker_for_place, marker_style, ColorClass,
    ColorTable, MapMarker, MapWriter,
};
pub use pipeline::{print_summary, run, RunConfig, RunReport};
pub use stats::{
    apply_city_cutoff, citation_threshold, city_stats, classify, two_proportion_z, Baseline,
    CityStats, CorpusSummary, Direction, Significance,
};
