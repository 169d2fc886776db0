use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use topcity::gazetteer::{load_gazetteer, GeoPoint, RemoteConfig, RemoteGeocoder, Resolution};
use topcity::CityKey;

type RequestLog = Arc<Mutex<Vec<(String, Instant)>>>;

/// Minimal HTTP server answering each request with the next canned
/// `(status, body)`. Returns the base URL and the log of request targets.
fn stub_server(responses: Vec<(u16, &'static str)>) -> (String, RequestLog) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&log);
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut header = String::new();
                if reader.read_line(&mut header).unwrap() == 0 || header == "\r\n" {
                    break;
                }
            }
            let target = request_line
                .split_whitespace()
                .nth(1)
                .unwrap_or("")
                .to_string();
            seen.lock().unwrap().push((target, Instant::now()));
            let mut stream = reader.into_inner();
            let reason = if status == 200 { "OK" } else { "Error" };
            write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/search?q={{query}}&key={{key}}"), log)
}

fn config(url: String, cache: &std::path::Path, delay_ms: u64) -> RemoteConfig {
    RemoteConfig {
        url_template: url,
        api_key: Some("s3cret".into()),
        delay: Duration::from_millis(delay_ms),
        cache_path: cache.to_path_buf(),
        max_attempts: 3,
    }
}

fn leiden() -> CityKey {
    CityKey::new("Leiden", None, "Netherlands").unwrap()
}

#[test]
fn cache_hit_makes_no_request() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.csv");
    fs::write(
        &cache,
        "city,region,country,latitude,longitude\nLEIDEN,,NETHERLANDS,52.160100,4.497000\n",
    )
    .unwrap();
    // nothing listens here; any request would fail
    let mut geocoder =
        RemoteGeocoder::new(config("http://127.0.0.1:9/{query}".into(), &cache, 0)).unwrap();
    let point = geocoder.geocode(&leiden()).unwrap();
    assert_eq!(point, GeoPoint::new(52.1601, 4.497));
    assert_eq!(geocoder.requests(), 0);
}

#[test]
fn no_candidates_is_missing_and_not_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.csv");
    let (url, log) = stub_server(vec![(200, "[]")]);
    let mut geocoder = RemoteGeocoder::new(config(url, &cache, 0)).unwrap();
    assert_eq!(geocoder.geocode(&leiden()).unwrap(), None);
    assert_eq!(log.lock().unwrap().len(), 1);
    assert!(!cache.exists());
}

#[test]
fn answer_is_cached_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.csv");
    let (url, log) = stub_server(vec![(
        200,
        r#"[{"lat":"52.16010049","lon":4.49700012,"display_name":"Leiden"}]"#,
    )]);
    let mut geocoder = RemoteGeocoder::new(config(url.clone(), &cache, 0)).unwrap();
    let point = geocoder.geocode(&leiden()).unwrap().unwrap();
    assert_eq!(point, GeoPoint::new(52.1601, 4.497).unwrap());

    let requests = log.lock().unwrap().clone();
    assert_eq!(requests.len(), 1);
    assert_eq!(
        requests[0].0,
        "/search?q=LEIDEN%2C%20NETHERLANDS&key=s3cret"
    );

    // second lookup in the same session reads the cache
    assert_eq!(geocoder.geocode(&leiden()).unwrap(), Some(point));
    assert_eq!(geocoder.requests(), 1);

    // the cache file round-trips the rounded point exactly
    let text = fs::read_to_string(&cache).unwrap();
    assert_eq!(
        text,
        "city,region,country,latitude,longitude\nLEIDEN,,NETHERLANDS,52.160100,4.497000\n"
    );
    let reloaded = load_gazetteer(&cache).unwrap();
    match reloaded.resolve(&leiden()) {
        Resolution::Found(place) => {
            assert_eq!(place.point.latitude.to_bits(), point.latitude.to_bits());
            assert_eq!(place.point.longitude.to_bits(), point.longitude.to_bits());
        }
        other => panic!("unexpected {other:?}"),
    }

    // a fresh client picks the cache up from disk
    let mut again = RemoteGeocoder::new(config(url, &cache, 0)).unwrap();
    assert_eq!(again.geocode(&leiden()).unwrap(), Some(point));
    assert_eq!(again.requests(), 0);
}

#[test]
fn failures_retry_three_times_with_delay() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.csv");
    let (url, log) = stub_server(vec![
        (500, "oops"),
        (200, "not json"),
        (503, ""),
        (200, "[]"),
    ]);
    let mut geocoder = RemoteGeocoder::new(config(url, &cache, 50)).unwrap();
    assert_eq!(geocoder.geocode(&leiden()).unwrap(), None);
    let requests = log.lock().unwrap().clone();
    assert_eq!(requests.len(), 3);
    for pair in requests.windows(2) {
        assert!(pair[1].1.duration_since(pair[0].1) >= Duration::from_millis(45));
    }
    assert!(!cache.exists());
}

#[test]
fn retry_recovers_after_one_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.csv");
    let (url, _log) = stub_server(vec![
        (502, ""),
        (200, r#"[{"lat":42.3736,"lon":-71.1097}]"#),
    ]);
    let mut geocoder = RemoteGeocoder::new(config(url, &cache, 10)).unwrap();
    let key = CityKey::new("Cambridge", Some("MA"), "USA").unwrap();
    assert_eq!(
        geocoder.geocode(&key).unwrap(),
        GeoPoint::new(42.3736, -71.1097)
    );
    let text = fs::read_to_string(&cache).unwrap();
    assert!(
        text.ends_with("CAMBRIDGE,MA,USA,42.373600,-71.109700\n"),
        "{text}"
    );
}

#[test]
fn pipeline_falls_back_to_remote() {
    use topcity::pipeline::{self, MapConfig, RunConfig};

    let dir = tempfile::tempdir().unwrap();
    let gaz = dir.path().join("gaz.csv");
    let full = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/gazetteer_5.csv"
    ))
    .unwrap();
    fs::write(
        &gaz,
        full.lines()
            .filter(|l| !l.starts_with("Oxford"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n",
    )
    .unwrap();
    let cache = dir.path().join("geo.csv");
    let (url, log) = stub_server(vec![(200, r#"[{"lat":"51.752","lon":"-1.2577"}]"#)]);

    let mut config = RunConfig::new(
        concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus_600.txt"),
        &gaz,
        dir.path().join("run"),
    );
    config.map = MapConfig {
        gazetteer_path: gaz,
        strict_geocoding: true,
        remote: Some(config_for(url, &cache)),
    };
    let report = pipeline::run(&config).unwrap();
    assert_eq!(report.cities_geocoded, 5);
    assert_eq!(log.lock().unwrap().len(), 1);
    assert!(log.lock().unwrap()[0].0.contains("OXFORD%2C%20ENGLAND"));
}

fn config_for(url: String, cache: &std::path::Path) -> RemoteConfig {
    RemoteConfig {
        api_key: None,
        ..config(url, cache, 0)
    }
}
