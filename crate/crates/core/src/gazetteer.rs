//! Coordinates for city keys: a local CSV gazetteer plus an optional remote
//! geocoder whose answers are appended to a cache file in the same format.
//!
//! File layout, UTF-8, coordinates with six decimals:
//!
//! ```text
//! city,region,country,latitude,longitude
//! London,,England,51.507400,-0.127800
//! Cambridge,MA,USA,42.373600,-71.109700
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde_json::Value;

use crate::attribution::CityKey;
use crate::error::{Error, Result};

pub const GAZETTEER_HEADER: [&str; 5] = ["city", "region", "country", "latitude", "longitude"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Option<Self> {
        let valid = latitude.is_finite()
            && longitude.is_finite()
            && (-90.0..=90.0).contains(&latitude)
            && (-180.0..=180.0).contains(&longitude);
        valid.then_some(GeoPoint {
            latitude,
            longitude,
        })
    }

    /// The point as stored on disk: both coordinates rounded to six decimals.
    pub fn rounded(self) -> Self {
        let round = |v: f64| format!("{v:.6}").parse::<f64>().unwrap_or(v);
        GeoPoint {
            latitude: round(self.latitude),
            longitude: round(self.longitude),
        }
    }
}

/// A gazetteer entry: the point and the names as written in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub point: GeoPoint,
    pub city: String,
    pub country: String,
}

impl Place {
    pub fn label(&self) -> String {
        format!("{}, {}", self.city, self.country)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Found(Place),
    /// Found only after dropping the key's region.
    Fallback(Place),
    Missing,
}

impl Resolution {
    pub fn place(&self) -> Option<&Place> {
        match self {
            Resolution::Found(p) | Resolution::Fallback(p) => Some(p),
            Resolution::Missing => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<CityKey, Place>,
    source_path: String,
}

impl Gazetteer {
    pub fn from_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let row_error = |line: u64, message: String| Error::GazetteerRow {
            path: source.to_string(),
            line,
            message,
        };
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = csv.headers().map_err(|e| row_error(1, e.to_string()))?;
        if header.iter().ne(GAZETTEER_HEADER) {
            return Err(row_error(
                1,
                format!("expected header {:?}", GAZETTEER_HEADER.join(",")),
            ));
        }

        let mut entries = BTreeMap::new();
        for row in csv.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                row_error(line, e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let region = Some(&row[1]).filter(|r| !r.is_empty());
            let key = CityKey::new(&row[0], region, &row[2])
                .ok_or_else(|| row_error(line, "empty city or country".into()))?;
            let coord = |idx: usize, name: &str| {
                row[idx]
                    .parse::<f64>()
                    .map_err(|_| row_error(line, format!("invalid {name} {:?}", &row[idx])))
            };
            let (lat, lon) = (coord(3, "latitude")?, coord(4, "longitude")?);
            let point = GeoPoint::new(lat, lon).ok_or_else(|| {
                row_error(line, format!("coordinate out of range ({lat}, {lon})"))
            })?;
            let place = Place {
                point,
                city: row[0].to_string(),
                country: row[2].to_string(),
            };
            if entries.contains_key(&key) {
                return Err(Error::DuplicateKey {
                    path: source.to_string(),
                    key,
                });
            }
            entries.insert(key, place);
        }
        Ok(Gazetteer {
            entries,
            source_path: source.to_string(),
        })
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CityKey) -> Option<&Place> {
        self.entries.get(key)
    }

    /// Exact lookup, then one retry without the region.
    pub fn resolve(&self, key: &CityKey) -> Resolution {
        if let Some(place) = self.entries.get(key) {
            return Resolution::Found(place.clone());
        }
        if key.region.is_some() {
            if let Some(place) = self.entries.get(&key.without_region()) {
                return Resolution::Fallback(place.clone());
            }
        }
        Resolution::Missing
    }

    fn insert(&mut self, key: CityKey, place: Place) {
        self.entries.insert(key, place);
    }
}

pub fn load_gazetteer(path: impl AsRef<Path>) -> Result<Gazetteer> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Gazetteer::from_reader(file, &path.display().to_string())
}

fn format_row(key: &CityKey, point: GeoPoint) -> String {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let lat = format!("{:.6}", point.latitude);
    let lon = format!("{:.6}", point.longitude);
    writer
        .write_record([
            key.city.as_str(),
            key.region.as_deref().unwrap_or(""),
            key.country.as_str(),
            &lat,
            &lon,
        ])
        .expect("writing to memory");
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// URL with `{query}` and optionally `{key}` placeholders.
    pub url_template: String,
    pub api_key: Option<String>,
    /// Minimum pause between two requests, also used before retries.
    pub delay: Duration,
    pub cache_path: PathBuf,
    pub max_attempts: u32,
}

impl RemoteConfig {
    pub fn new(url_template: impl Into<String>, cache_path: impl Into<PathBuf>) -> Self {
        RemoteConfig {
            url_template: url_template.into(),
            api_key: None,
            delay: Duration::from_millis(1000),
            cache_path: cache_path.into(),
            max_attempts: 3,
        }
    }
}

/// Query text sent for a key: `city, region, country`.
pub fn query_for(key: &CityKey) -> String {
    match &key.region {
        Some(region) => format!("{}, {}, {}", key.city, region, key.country),
        None => format!("{}, {}", key.city, key.country),
    }
}

/// First result of a JSON array of objects carrying `lat` and `lon` as
/// numbers or numeric strings. `Ok(None)` for an empty array.
pub fn parse_response(body: &str) -> std::result::Result<Option<GeoPoint>, String> {
    let value: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let results = value.as_array().ok_or("response is not a JSON array")?;
    let Some(first) = results.first() else {
        return Ok(None);
    };
    let coord = |name: &str| -> std::result::Result<f64, String> {
        match first.get(name) {
            Some(Value::Number(n)) => n.as_f64().ok_or_else(|| format!("bad {name}")),
            Some(Value::String(s)) => s.trim().parse().map_err(|_| format!("bad {name} {s:?}")),
            _ => Err(format!("result lacks {name}")),
        }
    };
    let (lat, lon) = (coord("lat")?, coord("lon")?);
    GeoPoint::new(lat, lon)
        .map(Some)
        .ok_or_else(|| format!("coordinate out of range ({lat}, {lon})"))
}

/// Rate-limited HTTP geocoder. The cache file is consulted first and every
/// successful answer is appended to it.
pub struct RemoteGeocoder {
    config: RemoteConfig,
    cache: Gazetteer,
    agent: ureq::Agent,
    last_request: Option<Instant>,
    requests: usize,
}

impl RemoteGeocoder {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let cache = if config.cache_path.exists() {
            load_gazetteer(&config.cache_path)?
        } else {
            Gazetteer {
                entries: BTreeMap::new(),
                source_path: config.cache_path.display().to_string(),
            }
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Ok(RemoteGeocoder {
            config,
            cache,
            agent,
            last_request: None,
            requests: 0,
        })
    }

    /// Number of HTTP requests issued so far.
    pub fn requests(&self) -> usize {
        self.requests
    }

    fn url_for(&self, key: &CityKey) -> String {
        let query = utf8_percent_encode(&query_for(key), NON_ALPHANUMERIC).to_string();
        let api_key = self
            .config
            .api_key
            .as_deref()
            .map(|k| utf8_percent_encode(k, NON_ALPHANUMERIC).to_string())
            .unwrap_or_default();
        self.config
            .url_template
            .replace("{query}", &query)
            .replace("{key}", &api_key)
    }

    fn wait_turn(&mut self) {
        if let Some(last) = self.last_request {
            let elapsed = last.elapsed();
            if elapsed < self.config.delay {
                thread::sleep(self.config.delay - elapsed);
            }
        }
        self.last_request = Some(Instant::now());
        self.requests += 1;
    }

    fn fetch(&mut self, url: &str) -> std::result::Result<Option<GeoPoint>, String> {
        self.wait_turn();
        let mut response = self.agent.get(url).call().map_err(|e| e.to_string())?;
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        parse_response(&body)
    }

    /// Look a key up, cache first. Network or format failures are retried up
    /// to `max_attempts` times and then reported as missing.
    pub fn geocode(&mut self, key: &CityKey) -> Result<Option<GeoPoint>> {
        if let Some(place) = self.cache.get(key) {
            return Ok(Some(place.point));
        }
        let url = self.url_for(key);
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.fetch(&url) {
                Ok(Some(point)) => {
                    let point = point.rounded();
                    self.append_to_cache(key, point)?;
                    return Ok(Some(point));
                }
                Ok(None) => return Ok(None),
                Err(message) => log::warn!(
                    "geocoding {key}: attempt {attempt}/{} failed: {message}",
                    self.config.max_attempts
                ),
            }
        }
        log::warn!("geocoding {key}: giving up");
        Ok(None)
    }

    fn append_to_cache(&mut self, key: &CityKey, point: GeoPoint) -> Result<()> {
        let path = &self.config.cache_path;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.lock().map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        if file.metadata().map_err(|e| Error::io(path, e))?.len() == 0 {
            text.push_str(&GAZETTEER_HEADER.join(","));
            text.push('\n');
        }
        text.push_str(&format_row(key, point));
        file.write_all(text.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(path, e))?;
        file.unlock().map_err(|e| Error::io(path, e))?;
        self.cache.insert(
            key.clone(),
            Place {
                point,
                city: key.city.clone(),
                country: key.country.clone(),
            },
        );
        Ok(())
    }
}
