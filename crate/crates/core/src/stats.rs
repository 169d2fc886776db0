//! Top-percentile threshold, observed vs. expected counts per city, and the
//! pooled two-proportion z-test.
//!
//! A city with `n` papers of which `observed` reach the citation threshold
//! is compared with the rest of the corpus. With `T` top papers among `N`:
//!
//! ```text
//! p1 = observed / n
//! p2 = (T - observed) / (N - n)
//! p  = T / N
//! z  = (p1 - p2) / sqrt(p (1 - p) (1/n + 1/(N - n)))
//! ```
//!
//! No continuity correction is applied. The expected count is `n T / N`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::attribution::{CityKey, Occurrence};
use crate::error::{Error, Result};
use crate::ingest::PaperRecord;

/// Two-sided standard normal critical values for p < .05, .01 and .001.
pub const Z_P05: f64 = 1.959_963_984_540_054;
pub const Z_P01: f64 = 2.575_829_303_548_901;
pub const Z_P001: f64 = 3.290_526_731_491_926;

/// Tolerance on |observed - expected| below which a city counts as EQUAL.
pub const EQUAL_EPSILON: f64 = 1e-9;

pub const DEFAULT_TOP_FRACTION: f64 = 0.10;
pub const DEFAULT_MIN_PAPERS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSummary {
    pub n_total: u64,
    pub top_fraction: f64,
    pub citation_threshold: u32,
    pub n_top: u64,
}

impl CorpusSummary {
    pub fn from_records(records: &[PaperRecord], top_fraction: f64) -> Result<Self> {
        let (threshold, n_top) = citation_threshold(records, top_fraction)?;
        Ok(CorpusSummary {
            n_total: records.len() as u64,
            top_fraction,
            citation_threshold: threshold,
            n_top,
        })
    }

    pub fn baseline(&self) -> Baseline {
        Baseline {
            n_total: self.n_total,
            n_top: self.n_top as f64,
        }
    }
}

/// Corpus size and top-paper count that city tests are measured against.
///
/// `n_top` is real-valued so that published city figures, which only give
/// the top fraction, can be reconstructed; a parsed corpus always yields a
/// whole number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub n_total: u64,
    pub n_top: f64,
}

impl Baseline {
    pub fn with_fraction(n_total: u64, fraction: f64) -> Self {
        Baseline {
            n_total,
            n_top: n_total as f64 * fraction,
        }
    }

    pub fn expected(&self, n_papers: u64) -> f64 {
        n_papers as f64 * self.n_top / self.n_total as f64
    }
}

impl From<&CorpusSummary> for Baseline {
    fn from(summary: &CorpusSummary) -> Self {
        summary.baseline()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Significance {
    None,
    P05,
    P01,
    P001,
}

impl Significance {
    pub const ALL: [Significance; 4] = [
        Significance::None,
        Significance::P05,
        Significance::P01,
        Significance::P001,
    ];

    pub fn stars(self) -> &'static str {
        match self {
            Significance::None => "",
            Significance::P05 => "*",
            Significance::P01 => "**",
            Significance::P001 => "***",
        }
    }

    pub fn from_stars(stars: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.stars() == stars)
    }

    pub fn is_significant(self) -> bool {
        self != Significance::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Above,
    Below,
    Equal,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Above => "ABOVE",
            Direction::Below => "BELOW",
            Direction::Equal => "EQUAL",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ABOVE" => Ok(Direction::Above),
            "BELOW" => Ok(Direction::Below),
            "EQUAL" => Ok(Direction::Equal),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityStats {
    pub key: CityKey,
    pub n_papers: u64,
    pub observed: u64,
    pub expected: f64,
    pub z: f64,
    pub significance: Significance,
    pub direction: Direction,
}

impl CityStats {
    pub fn deviation(&self) -> f64 {
        (self.observed as f64 - self.expected).abs()
    }
}

/// Split `f` into `(m, k)` with `f = m / 2^k` exactly.
fn dyadic(f: f64) -> (u64, u32) {
    let bits = f.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut m, mut e) = if exp_bits == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    if m != 0 {
        let tz = m.trailing_zeros();
        m >>= tz;
        e += tz as i64;
    }
    // f < 1, so e < 0 for every non-zero input
    (m, (-e).max(0) as u32)
}

/// Ranks candidate top counts by their distance from the target share.
enum ShareDistance {
    /// `|count * 2^k - m * n|`, exact in integers.
    Exact {
        m_times_n: u128,
        shift: u32,
    },
    Float {
        n: f64,
        fraction: f64,
    },
}

impl ShareDistance {
    fn new(n: u64, fraction: f64) -> Self {
        let (m, shift) = dyadic(fraction);
        let n_bits = 64 - n.leading_zeros();
        match (m as u128).checked_mul(n as u128) {
            Some(m_times_n) if n_bits + shift <= 127 => ShareDistance::Exact { m_times_n, shift },
            _ => ShareDistance::Float {
                n: n as f64,
                fraction,
            },
        }
    }

    fn compare(&self, a: u64, b: u64) -> Ordering {
        match *self {
            ShareDistance::Exact { m_times_n, shift } => {
                let d = |count: u64| ((count as u128) << shift).abs_diff(m_times_n);
                d(a).cmp(&d(b))
            }
            ShareDistance::Float { n, fraction } => {
                let d = |count: u64| (count as f64 / n - fraction).abs();
                d(a).total_cmp(&d(b))
            }
        }
    }
}

/// Citation threshold for the top `fraction` of the given counts, with the
/// resulting top count `T`.
///
/// The top set is `{x >= c}` for the `c` minimizing `| T / N - fraction |`.
/// Ties go to the larger top set. `c` is reported as the lowest citation
/// count inside the top set ("at least c citations"), or `max + 1` when the
/// top set is empty.
pub fn threshold_for_counts(citations: &[u32], fraction: f64) -> Result<(u32, u64)> {
    if citations.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "top fraction {fraction} outside (0, 1)"
        )));
    }
    let n = citations.len() as u64;
    let mut sorted = citations.to_vec();
    sorted.sort_unstable();
    let distance = ShareDistance::new(n, fraction);

    let max = sorted[sorted.len() - 1];
    let mut best = (max.saturating_add(1), 0u64);
    // walk distinct values from the top so that each candidate set is larger
    // than the last; `<=` then prefers the larger set on ties
    let mut end = sorted.len();
    while end > 0 {
        let value = sorted[end - 1];
        let start = sorted[..end].partition_point(|&x| x < value);
        let count = (sorted.len() - start) as u64;
        if distance.compare(count, best.1) != Ordering::Greater {
            best = (value, count);
        }
        end = start;
    }
    Ok(best)
}

/// Citation threshold for the top `fraction` of `records`: `(c, T)`.
pub fn citation_threshold(records: &[PaperRecord], fraction: f64) -> Result<(u32, u64)> {
    let counts: Vec<u32> = records.iter().map(|r| r.citations).collect();
    threshold_for_counts(&counts, fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CityCount {
    pub n_papers: u64,
    pub observed: u64,
}

/// Papers and top papers per city. Each paper counts at most once per key.
pub fn aggregate(
    records: &[PaperRecord],
    occurrences: &[Occurrence],
    threshold: u32,
) -> Result<BTreeMap<CityKey, CityCount>> {
    let citations: HashMap<&str, u32> = records
        .iter()
        .map(|r| (r.id.as_str(), r.citations))
        .collect();
    let mut papers: BTreeMap<&CityKey, BTreeSet<&str>> = BTreeMap::new();
    for occ in occurrences {
        if !citations.contains_key(occ.paper_id.as_str()) {
            return Err(Error::DanglingPaper(occ.paper_id.clone()));
        }
        papers.entry(&occ.key).or_default().insert(&occ.paper_id);
    }
    Ok(papers
        .into_iter()
        .map(|(key, ids)| {
            let observed = ids.iter().filter(|id| citations[*id] >= threshold).count();
            (
                key.clone(),
                CityCount {
                    n_papers: ids.len() as u64,
                    observed: observed as u64,
                },
            )
        })
        .collect())
}

fn z_pooled(observed: u64, n1: u64, n_top: f64, n_total: u64) -> Result<f64> {
    if n1 == 0 || n1 > n_total {
        return Err(Error::InvalidTestInput(format!(
            "city size {n1} outside 1..={n_total}"
        )));
    }
    if !(n_top >= 0.0 && n_top <= n_total as f64) {
        return Err(Error::InvalidTestInput(format!(
            "top count {n_top} outside 0..={n_total}"
        )));
    }
    if n1 == n_total {
        return Err(Error::CityEqualsCorpus(n_total));
    }
    let pooled = n_top / n_total as f64;
    if pooled == 0.0 || pooled == 1.0 {
        return Err(Error::DegenerateCorpus(pooled));
    }
    let rest = n_total - n1;
    let observed_f = observed as f64;
    if observed > n1 || observed_f > n_top || n_top - observed_f > rest as f64 {
        return Err(Error::InvalidTestInput(format!(
            "observed {observed} inconsistent with city size {n1}, top count {n_top}, corpus {n_total}"
        )));
    }
    let p1 = observed_f / n1 as f64;
    let p2 = (n_top - observed_f) / rest as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / rest as f64)).sqrt();
    let z = (p1 - p2) / se;
    // fold -0.0 so that printed output never shows a signed zero
    Ok(if z == 0.0 { 0.0 } else { z })
}

/// Pooled two-proportion z statistic of a city against the rest of the
/// corpus.
pub fn two_proportion_z(observed: u64, n1: u64, n_top: u64, n_total: u64) -> Result<f64> {
    z_pooled(observed, n1, n_top as f64, n_total)
}

pub fn classify(z: f64) -> Result<Significance> {
    if !z.is_finite() {
        return Err(Error::NonFiniteZ);
    }
    let magnitude = z.abs();
    Ok(if magnitude >= Z_P001 {
        Significance::P001
    } else if magnitude >= Z_P01 {
        Significance::P01
    } else if magnitude >= Z_P05 {
        Significance::P05
    } else {
        Significance::None
    })
}

/// Two-sided p-value for `z`, approximate: uses the Abramowitz-Stegun
/// rational approximation of erfc (absolute error below 1.5e-7).
pub fn approx_p_value(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736
                + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    (poly * (-x * x).exp()).clamp(0.0, 1.0)
}

pub fn city_stats(
    key: CityKey,
    n_papers: u64,
    observed: u64,
    baseline: &Baseline,
) -> Result<CityStats> {
    let expected = baseline.expected(n_papers);
    let z = z_pooled(observed, n_papers, baseline.n_top, baseline.n_total)?;
    let significance = classify(z)?;
    let diff = observed as f64 - expected;
    let direction = if diff > EQUAL_EPSILON {
        Direction::Above
    } else if diff < -EQUAL_EPSILON {
        Direction::Below
    } else {
        Direction::Equal
    };
    Ok(CityStats {
        key,
        n_papers,
        observed,
        expected,
        z,
        significance,
        direction,
    })
}

/// Statistics for every aggregated city, in key order.
pub fn all_city_stats(
    counts: &BTreeMap<CityKey, CityCount>,
    summary: &CorpusSummary,
) -> Result<Vec<CityStats>> {
    let baseline = summary.baseline();
    counts
        .iter()
        .map(|(key, count)| city_stats(key.clone(), count.n_papers, count.observed, &baseline))
        .collect()
}

/// Order used for every output: largest |observed - expected| first, then key.
pub fn output_order(a: &CityStats, b: &CityStats) -> Ordering {
    b.deviation()
        .total_cmp(&a.deviation())
        .then_with(|| a.key.cmp(&b.key))
}

/// Keep cities with at least `min_papers` papers, in output order.
pub fn apply_city_cutoff(stats: Vec<CityStats>, min_papers: u64) -> Vec<CityStats> {
    let mut kept: Vec<CityStats> = stats
        .into_iter()
        .filter(|s| s.n_papers >= min_papers)
        .collect();
    kept.sort_by(output_order);
    kept
}

pub const STATS_HEADER: &str =
    "city\tregion\tcountry\tn_papers\tobserved\texpected\tz\tstars\tdirection";

pub fn format_stats_dump(stats: &[CityStats]) -> String {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}\n",
            s.key.city,
            s.key.region.as_deref().unwrap_or(""),
            s.key.country,
            s.n_papers,
            s.observed,
            s.expected,
            s.z,
            s.significance.stars(),
            s.direction
        ));
    }
    out
}

/// Read a statistics dump back. Significance comes from the star column.
pub fn parse_stats_dump(text: &str) -> Result<Vec<CityStats>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == STATS_HEADER => {}
        _ => {
            return Err(Error::StatsDump {
                line: 1,
                message: "missing or unexpected header".into(),
            })
        }
    }
    let mut stats = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fail = |message: String| Error::StatsDump {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(fail(format!("expected 9 fields, found {}", fields.len())));
        }
        let region = (!fields[1].is_empty()).then_some(fields[1]);
        let key = CityKey::new(fields[0], region, fields[2])
            .ok_or_else(|| fail("empty city or country".into()))?;
        let int = |s: &str, name: &str| {
            s.parse::<u64>()
                .map_err(|_| fail(format!("bad {name} {s:?}")))
        };
        let real = |s: &str, name: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| fail(format!("bad {name} {s:?}")))
        };
        let n_papers = int(fields[3], "n_papers")?;
        let observed = int(fields[4], "observed")?;
        if n_papers == 0 || observed > n_papers {
            return Err(fail(
                "observed must lie in 0..=n_papers with n_papers >= 1".into(),
            ));
        }
        stats.push(CityStats {
            key,
            n_papers,
            observed,
            expected: real(fields[5], "expected")?,
            z: real(fields[6], "z")?,
            significance: Significance::from_stars(fields[7])
                .ok_or_else(|| fail(format!("bad stars {:?}", fields[7])))?,
            direction: fields[8].parse().map_err(fail)?,
        });
    }
    Ok(stats)
}
