//! Address clauses to city keys, counted once per paper and city.

use std::collections::BTreeSet;
use std::fmt;

use crate::ingest::PaperRecord;

/// Names that denote an area rather than a city. They stay on the map as
/// their own keys.
pub const REGION_LEVEL_NAMES: &[&str] = &["MIDLANDS", "EAST MIDLANDS", "WEST MIDLANDS"];

/// Normalized attribution unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CityKey {
    pub city: String,
    pub region: Option<String>,
    pub country: String,
}

impl CityKey {
    /// Build a key from raw names, normalizing every part. Returns `None`
    /// when the city or country normalizes to nothing.
    pub fn new(city: &str, region: Option<&str>, country: &str) -> Option<Self> {
        let city = normalize(city);
        let country = normalize(country);
        if city.is_empty() || country.is_empty() {
            return None;
        }
        let region = region.map(normalize).filter(|r| !r.is_empty());
        Some(CityKey {
            city,
            region,
            country,
        })
    }

    pub fn without_region(&self) -> CityKey {
        CityKey {
            region: None,
            ..self.clone()
        }
    }

    pub fn is_region_level(&self) -> bool {
        REGION_LEVEL_NAMES.contains(&self.city.as_str())
    }

    /// "City, Country" in title case, e.g. `London, England`.
    pub fn display_label(&self) -> String {
        format!("{}, {}", title_case(&self.city), title_case(&self.country))
    }
}

impl fmt::Display for CityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.region {
            Some(region) => write!(f, "{}, {}, {}", self.city, region, self.country),
            None => write!(f, "{}, {}", self.city, self.country),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Occurrence {
    pub paper_id: String,
    pub key: CityKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddressParse {
    City(CityKey),
    /// An area broader than a city ("Midlands").
    RegionOnly(CityKey),
    Unparseable,
}

impl AddressParse {
    pub fn key(&self) -> Option<&CityKey> {
        match self {
            AddressParse::City(k) | AddressParse::RegionOnly(k) => Some(k),
            AddressParse::Unparseable => None,
        }
    }
}

/// Uppercase, fold diacritics to ASCII, drop periods and apostrophes,
/// turn other punctuation into spaces and collapse whitespace. Idempotent.
pub fn normalize(s: &str) -> String {
    let folded = deunicode::deunicode(s);
    let mut cleaned = String::with_capacity(folded.len());
    for ch in folded.chars() {
        match ch {
            '.' | '\'' | '`' => {}
            c if c.is_ascii_alphanumeric() => cleaned.push(c.to_ascii_uppercase()),
            '-' => cleaned.push('-'),
            _ => cleaned.push(' '),
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|word| {
            if word.len() <= 3 && matches!(word, "USA" | "UK" | "UAE" | "USSR" | "DC") {
                return word.to_string();
            }
            let mut out = String::with_capacity(word.len());
            let mut start = true;
            for ch in word.chars() {
                if start {
                    out.push(ch.to_ascii_uppercase());
                } else {
                    out.push(ch.to_ascii_lowercase());
                }
                start = ch == '-';
            }
            out
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split a `C1` field into address clauses. Semicolons inside a bracketed
/// author list do not split; the author list itself is removed.
pub fn split_addresses(addresses_raw: &str) -> Vec<String> {
    let mut clauses = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for ch in addresses_raw.chars() {
        match ch {
            '[' => {
                depth += 1;
                current.push(ch);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            ';' if depth == 0 => clauses.push(std::mem::take(&mut current)),
            _ => current.push(ch),
        }
    }
    clauses.push(current);

    clauses
        .into_iter()
        .map(|clause| {
            let clause = clause.trim();
            let clause = match clause.strip_prefix('[') {
                Some(rest) => rest.split_once(']').map_or("", |(_, tail)| tail),
                None => clause,
            };
            clause.trim().to_string()
        })
        .filter(|c| !c.is_empty())
        .collect()
}

fn has_digit(word: &str) -> bool {
    word.chars().any(|c| c.is_ascii_digit())
}

/// Remove postal codes: the trailing run of words containing digits, and a
/// leading one such as `D-10099`.
fn strip_postal(token: &str) -> String {
    let mut words: Vec<&str> = token.split_whitespace().collect();
    while words.last().is_some_and(|w| has_digit(w)) {
        words.pop();
    }
    let mut leading = false;
    while words.first().is_some_and(|w| has_digit(w)) {
        words.remove(0);
        leading = true;
    }
    // Dutch codes run on with two letters: "NL-1018 WB Amsterdam"
    if leading
        && words.len() > 1
        && words[0].len() == 2
        && words[0].chars().all(|c| c.is_ascii_uppercase())
    {
        words.remove(0);
    }
    words.join(" ")
}

/// A state or province code such as `MA`, `ON M5S 3G3` or `NSW 2006`.
fn subdivision_code(token: &str) -> Option<String> {
    let stripped = strip_postal(token);
    let is_code =
        (2..=3).contains(&stripped.len()) && stripped.chars().all(|c| c.is_ascii_uppercase());
    is_code.then_some(stripped)
}

pub fn parse_city(address: &str) -> AddressParse {
    let tokens: Vec<&str> = address
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.len() < 2 {
        return AddressParse::Unparseable;
    }
    let country_token = tokens[tokens.len() - 1];
    let mut city_idx = tokens.len() - 2;

    let normalized_country = normalize(country_token);
    let mut region = None;
    let country = if normalized_country.split(' ').next_back() == Some("USA") {
        let first = country_token.split_whitespace().next().unwrap_or("");
        if normalized_country != "USA"
            && first.len() == 2
            && first.chars().all(|c| c.is_ascii_uppercase())
        {
            region = Some(first.to_string());
        }
        "USA".to_string()
    } else {
        normalized_country
    };

    if region.is_none() && tokens.len() >= 3 {
        if let Some(code) = subdivision_code(tokens[city_idx]) {
            region = Some(code);
            city_idx -= 1;
        }
    }

    let city = normalize(&strip_postal(tokens[city_idx]));
    if city.is_empty() || country.is_empty() {
        return AddressParse::Unparseable;
    }
    let key = CityKey {
        city,
        region,
        country,
    };
    if key.is_region_level() {
        AddressParse::RegionOnly(key)
    } else {
        AddressParse::City(key)
    }
}

/// The distinct city keys of one paper.
pub fn city_occurrences(record: &PaperRecord) -> BTreeSet<CityKey> {
    split_addresses(&record.addresses_raw)
        .iter()
        .filter_map(|clause| parse_city(clause).key().cloned())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributionReport {
    pub clauses: usize,
    pub unparseable: Vec<(String, String)>,
    pub region_level: usize,
    pub papers_without_city: usize,
}

/// Attribute every record, returning occurrences sorted by paper id then key.
pub fn attribute(records: &[PaperRecord]) -> (Vec<Occurrence>, AttributionReport) {
    let mut report = AttributionReport::default();
    let mut occurrences = Vec::new();
    for record in records {
        let mut keys = BTreeSet::new();
        for clause in split_addresses(&record.addresses_raw) {
            report.clauses += 1;
            match parse_city(&clause) {
                AddressParse::City(key) => {
                    keys.insert(key);
                }
                AddressParse::RegionOnly(key) => {
                    report.region_level += 1;
                    keys.insert(key);
                }
                AddressParse::Unparseable => {
                    report.unparseable.push((record.id.clone(), clause));
                }
            }
        }
        if keys.is_empty() {
            report.papers_without_city += 1;
        }
        occurrences.extend(keys.into_iter().map(|key| Occurrence {
            paper_id: record.id.clone(),
            key,
        }));
    }
    occurrences.sort();
    (occurrences, report)
}

/// `paper_id<TAB>city<TAB>region<TAB>country` per occurrence.
pub fn format_attribution_dump(occurrences: &[Occurrence]) -> String {
    let mut sorted: Vec<&Occurrence> = occurrences.iter().collect();
    sorted.sort();
    let mut out = String::new();
    for occ in sorted {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            occ.paper_id,
            occ.key.city,
            occ.key.region.as_deref().unwrap_or(""),
            occ.key.country
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(city: &str, region: Option<&str>, country: &str) -> CityKey {
        CityKey::new(city, region, country).unwrap()
    }

    fn paper(addresses: &str) -> PaperRecord {
        PaperRecord {
            id: "P1".into(),
            year: 2007,
            doc_type: "Article".into(),
            citations: 0,
            addresses_raw: addresses.into(),
            title: None,
            categories: Vec::new(),
        }
    }

    #[test]
    fn split_strips_author_lists() {
        assert_eq!(
            split_addresses("[Smith, A.; Doe, B.] Univ Coll London, London WC1E 6BT, England"),
            vec!["Univ Coll London, London WC1E 6BT, England"]
        );
        assert!(split_addresses("").is_empty());
        assert!(split_addresses(" ;  ; ").is_empty());
        assert_eq!(
            split_addresses("A Univ, Oxford, England; B Univ, Leiden, Netherlands"),
            vec!["A Univ, Oxford, England", "B Univ, Leiden, Netherlands"]
        );
    }

    #[test]
    fn parse_uk_address() {
        assert_eq!(
            parse_city("Univ Oxford, Dept Expt Psychol, Oxford OX1 3UD, England"),
            AddressParse::City(key("Oxford", None, "England"))
        );
    }

    #[test]
    fn parse_us_address() {
        let parsed = parse_city("Harvard Univ, Dept Psychol, Cambridge, MA 02138 USA");
        assert_eq!(
            parsed,
            AddressParse::City(CityKey {
                city: "CAMBRIDGE".into(),
                region: Some("MA".into()),
                country: "USA".into()
            })
        );
        assert_eq!(
            parse_city("Stanford Univ, Stanford, CA, USA"),
            AddressParse::City(key("Stanford", Some("CA"), "USA"))
        );
        assert_eq!(
            parse_city("Some Lab, Boston, USA"),
            AddressParse::City(key("Boston", None, "USA"))
        );
    }

    #[test]
    fn parse_region_level() {
        assert_eq!(
            parse_city("Univ Warwick, Midlands, England"),
            AddressParse::RegionOnly(key("Midlands", None, "England"))
        );
    }

    #[test]
    fn parse_province_and_leading_postal() {
        assert_eq!(
            parse_city("Univ Toronto, Dept Psychol, Toronto, ON M5S 3G3, Canada"),
            AddressParse::City(key("Toronto", Some("ON"), "Canada"))
        );
        assert_eq!(
            parse_city("Humboldt Univ, D-10099 Berlin, Germany"),
            AddressParse::City(key("Berlin", None, "Germany"))
        );
        assert_eq!(
            parse_city("Univ Amsterdam, Roetersstr 15, NL-1018 WB Amsterdam, Netherlands"),
            AddressParse::City(key("Amsterdam", None, "Netherlands"))
        );
        assert_eq!(
            parse_city("Westfal Wilhelms Univ Münster, D-48149 Münster, Germany"),
            AddressParse::City(key("Munster", None, "Germany"))
        );
    }

    #[test]
    fn parse_unparseable() {
        assert_eq!(parse_city("England"), AddressParse::Unparseable);
        assert_eq!(parse_city(""), AddressParse::Unparseable);
        assert_eq!(
            parse_city("Dept X, 12345, France"),
            AddressParse::Unparseable
        );
    }

    #[test]
    fn shared_address_counts_once() {
        let rec = paper("[A; B] UCL, London WC1E 6BT, England; [C] UCL, London WC1E 6BT, England");
        assert_eq!(
            city_occurrences(&rec),
            BTreeSet::from([key("London", None, "England")])
        );
    }

    #[test]
    fn two_cities_two_keys() {
        let rec = paper("UCL, London, England; Univ Oxford, Oxford, England");
        assert_eq!(city_occurrences(&rec).len(), 2);
    }

    #[test]
    fn two_institutions_one_city() {
        let rec =
            paper("UCL, London WC1E 6BT, England; Kings Coll London, London SE5 8AF, England");
        assert_eq!(
            city_occurrences(&rec),
            BTreeSet::from([key("London", None, "England")])
        );
    }

    #[test]
    fn cambridges_are_distinct() {
        let rec = paper(
            "Harvard Univ, Cambridge, MA 02138 USA; Univ Cambridge, Cambridge CB2 3EB, England",
        );
        assert_eq!(city_occurrences(&rec).len(), 2);
    }

    #[test]
    fn attribution_dump_is_sorted() {
        let mut a = paper("U, Oxford, England; U, London, England");
        a.id = "B".into();
        let mut b = paper("U, Leiden, Netherlands");
        b.id = "A".into();
        let (occ, report) = attribute(&[a, b]);
        assert_eq!(report.clauses, 3);
        assert_eq!(
            format_attribution_dump(&occ),
            "A\tLEIDEN\t\tNETHERLANDS\nB\tLONDON\t\tENGLAND\nB\tOXFORD\t\tENGLAND\n"
        );
    }

    #[test]
    fn labels() {
        assert_eq!(
            key("London", None, "England").display_label(),
            "London, England"
        );
        assert_eq!(
            key("Cambridge", Some("MA"), "USA").display_label(),
            "Cambridge, USA"
        );
        assert_eq!(
            key("Frankfurt am Main", None, "Germany").display_label(),
            "Frankfurt Am Main, Germany"
        );
        assert_eq!(key("  São   Paulo ", None, "Brazil").city, "SAO PAULO");
        assert_eq!(key("St. Lucia", None, "Australia").city, "ST LUCIA");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once.clone());
            prop_assert!(once.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == ' ' || c == '-'));
        }

        #[test]
        fn occurrences_bounded_by_clauses(
            cities in prop::collection::vec(("[A-Za-z]{1,8}", "[A-Za-z]{2,8}"), 0..6)
        ) {
            let raw = cities
                .iter()
                .map(|(c, k)| format!("Univ, {c}, {k}"))
                .collect::<Vec<_>>()
                .join("; ");
            let rec = paper(&raw);
            prop_assert!(city_occurrences(&rec).len() <= split_addresses(&raw).len());
        }
    }
}
