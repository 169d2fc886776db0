//! Proportional-circle markers and the three overlay formats.
//!
//! Each city becomes a circle of radius `|observed - expected| + 1`, colored
//! by the direction of the deviation and whether the z-test is significant
//! at p < .05:
//!
//! | direction | significant  | not significant |
//! |-----------|--------------|-----------------|
//! | above     | dark green   | light green     |
//! | below     | red          | orange-red      |
//! | equal     | grey         | grey            |

use std::fmt::Write as _;

use crate::attribution::CityKey;
use crate::gazetteer::{GeoPoint, Place};
use crate::stats::{CityStats, Direction, Significance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ColorClass {
    DarkGreen,
    LightGreen,
    Grey,
    OrangeRed,
    Red,
}

impl ColorClass {
    pub const ALL: [ColorClass; 5] = [
        ColorClass::DarkGreen,
        ColorClass::LightGreen,
        ColorClass::Grey,
        ColorClass::OrangeRed,
        ColorClass::Red,
    ];

    pub fn for_stats(direction: Direction, significance: Significance) -> Self {
        match (direction, significance.is_significant()) {
            (Direction::Equal, _) => ColorClass::Grey,
            (Direction::Above, true) => ColorClass::DarkGreen,
            (Direction::Above, false) => ColorClass::LightGreen,
            (Direction::Below, true) => ColorClass::Red,
            (Direction::Below, false) => ColorClass::OrangeRed,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorClass::DarkGreen => "DARK_GREEN",
            ColorClass::LightGreen => "LIGHT_GREEN",
            ColorClass::Grey => "GREY",
            ColorClass::OrangeRed => "ORANGE_RED",
            ColorClass::Red => "RED",
        }
    }

    /// Style id used in KML.
    pub fn style_id(self) -> &'static str {
        match self {
            ColorClass::DarkGreen => "dark_green",
            ColorClass::LightGreen => "light_green",
            ColorClass::Grey => "grey",
            ColorClass::OrangeRed => "orange_red",
            ColorClass::Red => "red",
        }
    }
}

/// `#RRGGBB` codes per color class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorTable {
    pub dark_green: String,
    pub light_green: String,
    pub grey: String,
    pub orange_red: String,
    pub red: String,
}

impl Default for ColorTable {
    fn default() -> Self {
        ColorTable {
            dark_green: "#006400".into(),
            light_green: "#90EE90".into(),
            grey: "#808080".into(),
            orange_red: "#FF4500".into(),
            red: "#FF0000".into(),
        }
    }
}

impl ColorTable {
    pub fn hex(&self, class: ColorClass) -> &str {
        match class {
            ColorClass::DarkGreen => &self.dark_green,
            ColorClass::LightGreen => &self.light_green,
            ColorClass::Grey => &self.grey,
            ColorClass::OrangeRed => &self.orange_red,
            ColorClass::Red => &self.red,
        }
    }

    /// KML wants opaque `aabbggrr`.
    fn kml_color(&self, class: ColorClass) -> String {
        let hex = self.hex(class).trim_start_matches('#');
        if hex.len() != 6 {
            return "ff808080".into();
        }
        format!("ff{}{}{}", &hex[4..6], &hex[2..4], &hex[0..2]).to_ascii_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapMarker {
    pub stats: CityStats,
    pub point: GeoPoint,
    pub radius: f64,
    pub color: ColorClass,
    /// City name for display.
    pub name: String,
    /// Country name for display.
    pub country: String,
    pub label: String,
    pub description: String,
}

impl MapMarker {
    pub fn key(&self) -> &CityKey {
        &self.stats.key
    }
}

pub fn radius(stats: &CityStats) -> f64 {
    match stats.direction {
        Direction::Equal => 1.0,
        _ => stats.deviation() + 1.0,
    }
}

/// Fixed-point formatting that never prints a negative zero.
fn fixed(value: f64, decimals: usize) -> String {
    let text = format!("{value:.decimals$}");
    match text.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => text,
    }
}

pub fn describe(stats: &CityStats) -> String {
    format!(
        "observed={} expected={} z={}{}",
        stats.observed,
        fixed(stats.expected, 1),
        fixed(stats.z, 2),
        stats.significance.stars()
    )
}

fn title_parts(key: &CityKey) -> (String, String) {
    let label = key.display_label();
    match label.split_once(", ") {
        Some((city, country)) => (city.to_string(), country.to_string()),
        None => (label, String::new()),
    }
}

fn build(stats: &CityStats, point: GeoPoint, name: String, country: String) -> MapMarker {
    MapMarker {
        point,
        radius: radius(stats),
        color: ColorClass::for_stats(stats.direction, stats.significance),
        label: format!("{name}, {country}"),
        description: describe(stats),
        name,
        country,
        stats: stats.clone(),
    }
}

/// Style a city at `point`, labelled from its normalized key.
pub fn marker_style(stats: &CityStats, point: GeoPoint) -> MapMarker {
    let (name, country) = title_parts(&stats.key);
    build(stats, point, name, country)
}

/// Style a city using the names and point of its gazetteer entry.
pub fn marker_for_place(stats: &CityStats, place: &Place) -> MapMarker {
    build(
        stats,
        place.point,
        place.city.clone(),
        place.country.clone(),
    )
}

fn one_line(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub const GPSVIZ_HEADER: &str = "name\tdesc\tlatitude\tlongitude\tcolor\tscale";

/// Formats markers with a given color table.
#[derive(Debug, Clone, Default)]
pub struct MapWriter {
    pub colors: ColorTable,
}

impl MapWriter {
    pub fn new(colors: ColorTable) -> Self {
        MapWriter { colors }
    }

    /// Tab-separated text accepted by GPS Visualizer's data form.
    pub fn gpsvisualizer(&self, markers: &[MapMarker]) -> String {
        let mut out = String::from(GPSVIZ_HEADER);
        out.push('\n');
        for m in markers {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
                one_line(&m.label),
                one_line(&m.description),
                m.point.latitude,
                m.point.longitude,
                self.colors.hex(m.color),
                fixed(m.radius, 1)
            );
        }
        out
    }

    /// A FeatureCollection of points with a fixed property order.
    pub fn geojson(&self, markers: &[MapMarker]) -> String {
        let features: Vec<String> = markers
            .iter()
            .map(|m| {
                let s = &m.stats;
                format!(
                    concat!(
                        r#"{{"type":"Feature","geometry":{{"type":"Point","coordinates":[{},{}]}},"#,
                        r#""properties":{{"name":{},"country":{},"n_papers":{},"observed":{},"#,
                        r#""expected":{},"z":{},"stars":{},"color_class":{},"color_hex":{},"radius":{}}}}}"#
                    ),
                    fixed(m.point.longitude, 6),
                    fixed(m.point.latitude, 6),
                    json_string(&m.name),
                    json_string(&m.country),
                    s.n_papers,
                    s.observed,
                    fixed(s.expected, 1),
                    fixed(s.z, 2),
                    json_string(s.significance.stars()),
                    json_string(m.color.name()),
                    json_string(self.colors.hex(m.color)),
                    fixed(m.radius, 1)
                )
            })
            .collect();
        format!(
            r#"{{"type":"FeatureCollection","features":[{}]}}"#,
            features.join(",")
        )
    }

    pub fn kml(&self, markers: &[MapMarker]) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str("<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n");
        out.push_str("<Document>\n");
        out.push_str("  <name>City excellence map</name>\n");
        for class in ColorClass::ALL {
            let _ = writeln!(
                out,
                "  <Style id=\"{}\"><IconStyle><color>{}</color><Icon><href>http://maps.google.com/mapfiles/kml/shapes/placemark_circle.png</href></Icon></IconStyle></Style>",
                class.style_id(),
                self.colors.kml_color(class)
            );
        }
        for m in markers {
            out.push_str("  <Placemark>\n");
            let _ = writeln!(out, "    <name>{}</name>", xml_escape(&m.label));
            let _ = writeln!(
                out,
                "    <description>{}</description>",
                xml_escape(&m.description)
            );
            let _ = writeln!(out, "    <styleUrl>#{}</styleUrl>", m.color.style_id());
            let _ = writeln!(
                out,
                "    <ExtendedData><Data name=\"radius\"><value>{}</value></Data></ExtendedData>",
                fixed(m.radius, 1)
            );
            let _ = writeln!(
                out,
                "    <Point><coordinates>{},{},0</coordinates></Point>",
                fixed(m.point.longitude, 6),
                fixed(m.point.latitude, 6)
            );
            out.push_str("  </Placemark>\n");
        }
        out.push_str("</Document>\n</kml>\n");
        out
    }
}

pub fn emit_gpsvisualizer(markers: &[MapMarker]) -> String {
    MapWriter::default().gpsvisualizer(markers)
}

pub fn emit_geojson(markers: &[MapMarker]) -> String {
    MapWriter::default().geojson(markers)
}

pub fn emit_kml(markers: &[MapMarker]) -> String {
    MapWriter::default().kml(markers)
}
