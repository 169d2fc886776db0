//! Reader for the field-tagged export format and the corpus filters.
//!
//! A record is a run of `XX value` lines closed by a line reading `ER`.
//! Lines starting with three spaces continue the previous tag; their
//! values are joined with `"; "`. `FN`/`VR` header lines and the `EF`
//! trailer are ignored.
//!
//! ```text
//! FN Export
//! VR 1.0
//! UT WOS:0001
//! PY 2007
//! DT Article
//! TC 16
//! C1 [Smith, A.] Univ Oxford, Oxford OX1 3UD, England
//!    Leiden Univ, Leiden, Netherlands
//! ER
//! EF
//! ```

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;

use crate::error::{Error, Result};

const MANDATORY_TAGS: [&str; 5] = ["UT", "PY", "DT", "TC", "C1"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperRecord {
    pub id: String,
    pub year: u16,
    pub doc_type: String,
    pub citations: u32,
    pub addresses_raw: String,
    pub title: Option<String>,
    /// Subject categories from the optional `WC` tag.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub records_parsed: usize,
    pub records_skipped: usize,
    /// `(line of the record's first tag, reason)` for every skipped block.
    pub skip_reasons: Vec<(usize, String)>,
}

impl ParseReport {
    pub fn blocks_seen(&self) -> usize {
        self.records_parsed + self.records_skipped
    }

    fn skip(&mut self, line: usize, reason: impl Into<String>) {
        self.records_skipped += 1;
        self.skip_reasons.push((line, reason.into()));
    }
}

#[derive(Debug, Default)]
struct Block {
    start_line: usize,
    fields: Vec<(String, String)>,
    malformed: Option<String>,
}

impl Block {
    fn value(&self, tag: &str) -> Option<String> {
        let parts: Vec<&str> = self
            .fields
            .iter()
            .filter(|(t, _)| t == tag)
            .map(|(_, v)| v.as_str())
            .collect();
        if parts.is_empty() {
            None
        } else {
            Some(parts.join("; "))
        }
    }

    fn into_record(self) -> std::result::Result<PaperRecord, String> {
        if let Some(reason) = self.malformed {
            return Err(reason);
        }
        for tag in MANDATORY_TAGS {
            match self.value(tag) {
                None => return Err(format!("missing tag {tag}")),
                Some(v) if v.trim().is_empty() && tag != "C1" => {
                    return Err(format!("missing tag {tag}"))
                }
                Some(_) => {}
            }
        }
        let value = |tag| self.value(tag).unwrap_or_default();

        let year_raw = value("PY");
        let year = match year_raw.trim().parse::<u16>() {
            Ok(y) if (1000..=9999).contains(&y) => y,
            _ => return Err(format!("invalid PY value {:?}", year_raw.trim())),
        };
        let tc_raw = value("TC");
        let citations = tc_raw
            .trim()
            .parse::<u32>()
            .map_err(|_| format!("invalid TC value {:?}", tc_raw.trim()))?;
        let categories = self
            .value("WC")
            .map(|wc| {
                wc.split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();

        Ok(PaperRecord {
            id: value("UT").trim().to_string(),
            year,
            doc_type: value("DT").trim().to_string(),
            citations,
            addresses_raw: value("C1").trim().to_string(),
            title: self.value("TI").map(|t| t.trim().to_string()),
            categories,
        })
    }
}

fn split_tag(line: &str) -> Option<(&str, &str)> {
    let bytes = line.as_bytes();
    if bytes.len() < 2
        || !bytes[..2]
            .iter()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
    {
        return None;
    }
    match bytes.get(2) {
        None => Some((&line[..2], "")),
        Some(b' ') => Some((&line[..2], line[3..].trim())),
        Some(_) => None,
    }
}

/// Parse a field-tagged export into records.
///
/// Malformed blocks are skipped and listed in the report; only failure to
/// read the stream (including invalid UTF-8) is an error.
pub fn parse_export<R: BufRead>(input: R) -> Result<(Vec<PaperRecord>, ParseReport)> {
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    let mut seen_ids = HashSet::new();
    let mut block: Option<Block> = None;

    let mut finish = |block: Block, records: &mut Vec<PaperRecord>, report: &mut ParseReport| {
        let line = block.start_line;
        match block.into_record() {
            Ok(record) => {
                if seen_ids.insert(record.id.clone()) {
                    records.push(record);
                    report.records_parsed += 1;
                } else {
                    report.skip(line, "duplicate id");
                }
            }
            Err(reason) => report.skip(line, reason),
        }
    };

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(Error::Read)?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let line = if idx == 0 {
            line.trim_start_matches('\u{feff}')
        } else {
            line
        };

        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("   ") {
            match block.as_mut().and_then(|b| b.fields.last_mut()) {
                Some((_, value)) => {
                    let rest = rest.trim();
                    if !rest.is_empty() {
                        if !value.is_empty() {
                            value.push_str("; ");
                        }
                        value.push_str(rest);
                    }
                }
                None => log::warn!("line {line_no}: continuation line outside a record"),
            }
            continue;
        }
        if line.trim_end() == "ER" {
            match block.take() {
                Some(b) => finish(b, &mut records, &mut report),
                None => log::warn!("line {line_no}: ER without a record"),
            }
            continue;
        }
        match split_tag(line) {
            Some(("FN" | "VR" | "EF", _)) if block.is_none() => {}
            Some((tag, value)) => {
                block
                    .get_or_insert_with(|| Block {
                        start_line: line_no,
                        ..Block::default()
                    })
                    .fields
                    .push((tag.to_string(), value.to_string()));
            }
            None => match block.as_mut() {
                Some(b) => {
                    b.malformed
                        .get_or_insert_with(|| format!("malformed line {line_no}"));
                }
                None => log::warn!("line {line_no}: unrecognized line outside a record"),
            },
        }
    }
    if let Some(b) = block.take() {
        let line = b.start_line;
        report.skip(line, "unterminated record (missing ER)");
    }
    Ok((records, report))
}

/// Corpus restriction by publication year, document type and, optionally,
/// subject category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFilter {
    year: Option<u16>,
    doc_types: BTreeSet<String>,
    categories: Option<BTreeSet<String>>,
}

impl Default for CorpusFilter {
    fn default() -> Self {
        CorpusFilter {
            year: None,
            doc_types: BTreeSet::from(["ARTICLE".to_string()]),
            categories: None,
        }
    }
}

impl CorpusFilter {
    pub fn new<I, S>(year: Option<u16>, doc_types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let doc_types: BTreeSet<String> = doc_types
            .into_iter()
            .map(|s| s.as_ref().trim().to_uppercase())
            .filter(|s| !s.is_empty())
            .collect();
        if doc_types.is_empty() {
            return Err(Error::Config(
                "at least one document type is required".into(),
            ));
        }
        Ok(CorpusFilter {
            year,
            doc_types,
            categories: None,
        })
    }

    pub fn with_year(mut self, year: u16) -> Self {
        self.year = Some(year);
        self
    }

    /// Only keep records whose `WC` field names one of `categories`.
    /// Records without a `WC` field are kept.
    pub fn with_categories<I, S>(mut self, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.categories = Some(
            categories
                .into_iter()
                .map(|s| s.as_ref().trim().to_uppercase())
                .collect(),
        );
        self
    }

    pub fn year(&self) -> Option<u16> {
        self.year
    }

    pub fn doc_types(&self) -> impl Iterator<Item = &str> {
        self.doc_types.iter().map(String::as_str)
    }

    pub fn accepts(&self, record: &PaperRecord) -> bool {
        if self.year.is_some_and(|y| y != record.year) {
            return false;
        }
        if !self
            .doc_types
            .contains(&record.doc_type.trim().to_uppercase())
        {
            return false;
        }
        match &self.categories {
            Some(wanted) if !record.categories.is_empty() => record
                .categories
                .iter()
                .any(|c| wanted.contains(&c.to_uppercase())),
            _ => true,
        }
    }
}

pub fn filter_corpus(records: &[PaperRecord], filter: &CorpusFilter) -> Vec<PaperRecord> {
    records
        .iter()
        .filter(|r| filter.accepts(r))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> (Vec<PaperRecord>, ParseReport) {
        parse_export(text.as_bytes()).unwrap()
    }

    fn record(id: &str, year: u16, doc_type: &str) -> PaperRecord {
        PaperRecord {
            id: id.into(),
            year,
            doc_type: doc_type.into(),
            citations: 0,
            addresses_raw: String::new(),
            title: None,
            categories: Vec::new(),
        }
    }

    #[test]
    fn single_record_transcribed() {
        let text = "FN Export\nVR 1.0\nUT WOS:0001\nPY 2007\nDT Article\nTC 16\n\
                    C1 [A] Univ Oxford, Oxford OX1 3UD, England\nTI Some title\nER\nEF\n";
        let (records, report) = parse(text);
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.id, "WOS:0001");
        assert_eq!(r.year, 2007);
        assert_eq!(r.doc_type, "Article");
        assert_eq!(r.citations, 16);
        assert_eq!(r.addresses_raw, "[A] Univ Oxford, Oxford OX1 3UD, England");
        assert_eq!(r.title.as_deref(), Some("Some title"));
        assert_eq!(report.records_parsed, 1);
        assert_eq!(report.records_skipped, 0);
    }

    #[test]
    fn missing_tc_is_skipped() {
        let text = "UT WOS:0001\nPY 2007\nDT Article\nC1 A, London, England\nER\n";
        let (records, report) = parse(text);
        assert!(records.is_empty());
        assert_eq!(report.skip_reasons, vec![(1, "missing tag TC".to_string())]);
    }

    #[test]
    fn duplicate_id_skipped() {
        let block = |id: &str| {
            format!("UT {id}\nPY 2007\nDT Article\nTC 3\nC1 A, Leiden, Netherlands\nER\n")
        };
        let text = format!("{}{}{}", block("A"), block("B"), block("A"));
        let (records, report) = parse(&text);
        assert_eq!(records.len(), 2);
        assert_eq!(report.records_skipped, 1);
        assert_eq!(report.skip_reasons[0], (13, "duplicate id".to_string()));
        assert_eq!(report.blocks_seen(), 3);
    }

    #[test]
    fn continuation_lines_and_crlf() {
        let text = "UT X\r\nPY 2007\r\nDT Article\r\nTC 0\r\nC1 [A] U1, London, England\r\n   [B] U2, Oxford, England\r\nER\r\n";
        let (records, _) = parse(text);
        assert_eq!(
            records[0].addresses_raw,
            "[A] U1, London, England; [B] U2, Oxford, England"
        );
    }

    #[test]
    fn bad_numbers_and_unterminated() {
        let text = "UT X\nPY 07\nDT Article\nTC 1\nC1 a, b\nER\n\
                    UT Y\nPY 2007\nDT Article\nTC -1\nC1 a, b\nER\n\
                    UT Z\nPY 2007\nDT Article\nTC 1\nC1 a, b\n";
        let (records, report) = parse(text);
        assert!(records.is_empty());
        let reasons: Vec<_> = report
            .skip_reasons
            .iter()
            .map(|(_, r)| r.as_str())
            .collect();
        assert_eq!(
            reasons,
            vec![
                "invalid PY value \"07\"",
                "invalid TC value \"-1\"",
                "unterminated record (missing ER)"
            ]
        );
    }

    #[test]
    fn empty_address_field_is_kept() {
        let text = "UT X\nPY 2007\nDT Article\nTC 1\nC1\nER\n";
        let (records, _) = parse(text);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].addresses_raw, "");
    }

    #[test]
    fn invalid_utf8_is_fatal() {
        let bytes: &[u8] = b"UT X\nPY \xff\xfe\nER\n";
        assert!(matches!(parse_export(bytes), Err(Error::Read(_))));
    }

    #[test]
    fn filter_keeps_articles_only() {
        let records = vec![record("a", 2007, "Article"), record("b", 2007, "Review")];
        let out = filter_corpus(&records, &CorpusFilter::default().with_year(2007));
        assert_eq!(out, vec![records[0].clone()]);
        assert!(filter_corpus(&[], &CorpusFilter::default()).is_empty());
    }

    #[test]
    fn filter_by_year_and_case() {
        let records: Vec<_> = (0..10)
            .map(|i| {
                record(
                    &i.to_string(),
                    if i % 3 == 0 && i > 0 { 2006 } else { 2007 },
                    "ARTICLE",
                )
            })
            .collect();
        let out = filter_corpus(&records, &CorpusFilter::default().with_year(2007));
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|r| r.year == 2007));
    }

    #[test]
    fn filter_categories() {
        let mut tagged = record("a", 2007, "Article");
        tagged.categories = vec!["Psychology, Social".into()];
        let mut other = record("b", 2007, "Article");
        other.categories = vec!["Economics".into()];
        let untagged = record("c", 2007, "Article");
        let filter = CorpusFilter::default().with_categories(["psychology, social"]);
        let out = filter_corpus(&[tagged, other, untagged], &filter);
        let ids: Vec<_> = out.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
    }

    #[test]
    fn empty_doc_types_rejected() {
        assert!(CorpusFilter::new(None, Vec::<String>::new()).is_err());
    }

    fn block_text(id: u8, year: u16, dt: &str, tc: u32, drop: Option<usize>) -> String {
        let lines = [
            format!("UT ID{id}"),
            format!("PY {year}"),
            format!("DT {dt}"),
            format!("TC {tc}"),
            "C1 U, Leiden, Netherlands".to_string(),
        ];
        let mut out = String::new();
        for (i, line) in lines.iter().enumerate() {
            if Some(i) != drop {
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str("ER\n\n");
        out
    }

    proptest::proptest! {
        #[test]
        fn report_accounts_for_every_block(
            blocks in proptest::collection::vec(
                (0u8..20, 2005u16..2009, proptest::sample::select(vec!["Article", "Review", "article"]), 0u32..40, proptest::option::weighted(0.2, 0usize..5)),
                0..30,
            )
        ) {
            let text: String = blocks
                .iter()
                .map(|(id, year, dt, tc, drop)| block_text(*id, *year, dt, *tc, *drop))
                .collect();
            let (records, report) = parse(&text);
            proptest::prop_assert_eq!(records.len(), report.records_parsed);
            proptest::prop_assert_eq!(report.blocks_seen(), blocks.len());
            proptest::prop_assert_eq!(parse(&text), (records.clone(), report));

            let filtered = filter_corpus(&records, &CorpusFilter::default().with_year(2007));
            let mut rest = records.iter();
            for r in &filtered {
                proptest::prop_assert!(rest.any(|x| x == r), "not a subsequence");
                proptest::prop_assert!(r.year == 2007 && r.doc_type.eq_ignore_ascii_case("article"));
            }
        }
    }
}
