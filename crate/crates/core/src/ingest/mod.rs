//! CSV ingestion, partitioning into shards, and per-shard index builds.
//!
//! Rows that cannot become a record are rejected with a line number and a
//! reason, never dropped silently: `rows_read == rows_accepted + rows_rejected`
//! holds for every input.

mod partition;

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;

use crate::config::{ConfigError, KvConfig};
use crate::geom::Point;
use crate::model::{CaseRecord, RecordId, Status};
use crate::rplus::TreeError;

pub use partition::{build_shards, partition, Partition, Strategy, DEFAULT_SHARDS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("mapped column '{0}' is not in the header")]
    MissingColumn(String),
    #[error("bad column mapping: {0}")]
    Mapping(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("shard count must be at least 1")]
    BadShardCount,
    #[error("partition {partition_id}: {source}")]
    Shard { partition_id: u32, source: TreeError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum IdSource {
    Column(String),
    /// Sequential ids from 0 over accepted rows, in file order.
    Synthesize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusMapping {
    pub column: String,
    /// Raw cell value (compared case-insensitively) to status. Values not
    /// listed fall back to the canonical status names, then to `unknown`.
    pub values: Vec<(String, Status)>,
}

impl StatusMapping {
    fn resolve(&self, raw: &str) -> Status {
        let raw = raw.trim();
        self.values
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(raw))
            .map(|(_, s)| *s)
            .or_else(|| raw.parse().ok())
            .unwrap_or(Status::Unknown)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DateMapping {
    pub column: String,
    /// chrono format string, e.g. `%Y-%m-%d`.
    pub format: String,
    pub epoch: NaiveDate,
    /// When set, `event_day * scale` becomes an extra trailing coordinate.
    pub coordinate_scale: Option<f64>,
}

pub fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 12, 1).expect("valid date")
}

/// Which CSV columns feed which record fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMapping {
    pub id: IdSource,
    pub coord_columns: Vec<String>,
    pub status: Option<StatusMapping>,
    pub date: Option<DateMapping>,
    pub attribute_columns: Vec<String>,
}

const MAPPING_KEYS: &[&str] = &[
    "id_column",
    "coord_columns",
    "status_column",
    "status_map",
    "date_column",
    "date_format",
    "epoch",
    "day_scale",
    "attribute_columns",
];

impl ColumnMapping {
    /// Coordinates only, with synthesized ids.
    pub fn coords(columns: &[&str]) -> Self {
        ColumnMapping {
            id: IdSource::Synthesize,
            coord_columns: columns.iter().map(|s| s.to_string()).collect(),
            status: None,
            date: None,
            attribute_columns: Vec::new(),
        }
    }

    /// Index dimension produced by this mapping.
    pub fn dimension(&self) -> usize {
        self.coord_columns.len() + usize::from(self.date.as_ref().is_some_and(|d| d.coordinate_scale.is_some()))
    }

    /// Reads a mapping from key-value config text.
    ///
    /// ```text
    /// id_column = patient_id          # or: synthesize
    /// coord_columns = latitude, longitude
    /// status_column = state
    /// status_map = isolated:confirmed, released:recovered, deceased:dead
    /// date_column = confirmed_date
    /// date_format = %Y-%m-%d          # default
    /// epoch = 2019-12-01              # default
    /// day_scale = 0.1                 # optional: day becomes a coordinate
    /// attribute_columns = country, province, sex, age
    /// ```
    pub fn from_config(cfg: &KvConfig) -> Result<Self, IngestError> {
        cfg.reject_unknown(MAPPING_KEYS)?;
        let id = match cfg.get("id_column") {
            None | Some("synthesize") | Some("") => IdSource::Synthesize,
            Some(col) => IdSource::Column(col.to_string()),
        };
        let status = match cfg.get("status_column") {
            Some(column) if !column.is_empty() => {
                let mut values = Vec::new();
                for pair in cfg.list("status_map") {
                    let (raw, st) = pair
                        .split_once(':')
                        .ok_or_else(|| IngestError::Mapping(format!("status_map entry '{pair}' needs raw:status")))?;
                    let st: Status = st.parse().map_err(IngestError::Mapping)?;
                    values.push((raw.trim().to_string(), st));
                }
                Some(StatusMapping {
                    column: column.to_string(),
                    values,
                })
            }
            _ => None,
        };
        let date = match cfg.get("date_column") {
            Some(column) if !column.is_empty() => {
                let epoch = match cfg.get("epoch") {
                    Some(e) => NaiveDate::parse_from_str(e, "%Y-%m-%d")
                        .map_err(|err| IngestError::Mapping(format!("epoch '{e}': {err}")))?,
                    None => default_epoch(),
                };
                Some(DateMapping {
                    column: column.to_string(),
                    format: cfg.get("date_format").unwrap_or("%Y-%m-%d").to_string(),
                    epoch,
                    coordinate_scale: cfg.parsed::<f64>("day_scale")?,
                })
            }
            _ => None,
        };
        let mapping = ColumnMapping {
            id,
            coord_columns: cfg.list("coord_columns"),
            status,
            date,
            attribute_columns: cfg.list("attribute_columns"),
        };
        mapping.check()?;
        Ok(mapping)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_config(&KvConfig::load(path)?)
    }

    fn check(&self) -> Result<(), IngestError> {
        if self.coord_columns.is_empty() {
            return Err(IngestError::Mapping(
                "coord_columns must name at least one column".into(),
            ));
        }
        let mut seen = HashSet::new();
        for c in &self.coord_columns {
            if !seen.insert(c) {
                return Err(IngestError::Mapping(format!("coordinate column '{c}' listed twice")));
            }
        }
        if let Some(scale) = self.date.as_ref().and_then(|d| d.coordinate_scale) {
            if !scale.is_finite() || scale <= 0.0 {
                return Err(IngestError::Mapping(format!("day_scale must be positive, got {scale}")));
            }
        }
        Ok(())
    }
}

/// Why a row was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    MissingCoordinate(String),
    BadCoordinate { column: String, value: String },
    MissingId,
    BadId(String),
    DuplicateId(u64),
    BadDate(String),
    Malformed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::MissingCoordinate(c) => write!(f, "missing coordinate ({c})"),
            RejectReason::BadCoordinate { column, value } => {
                write!(f, "unparseable coordinate ({column}: '{value}')")
            }
            RejectReason::MissingId => f.write_str("missing record id"),
            RejectReason::BadId(v) => write!(f, "bad record id '{v}'"),
            RejectReason::DuplicateId(id) => write!(f, "duplicate record id {id}"),
            RejectReason::BadDate(v) => write!(f, "unparseable date '{v}'"),
            RejectReason::Malformed(m) => write!(f, "malformed row: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    /// 1-based line in the source file (the header is line 1).
    pub line: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rows_rejected: u64,
    pub rejections: Vec<Rejection>,
    pub duration_secs: f64,
}

struct Columns {
    id: Option<usize>,
    coords: Vec<(usize, String)>,
    status: Option<usize>,
    date: Option<usize>,
    attributes: Vec<(usize, String)>,
}

fn resolve_columns(header: &csv::StringRecord, mapping: &ColumnMapping) -> Result<Columns, IngestError> {
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    Ok(Columns {
        id: match &mapping.id {
            IdSource::Column(c) => Some(find(c)?),
            IdSource::Synthesize => None,
        },
        coords: mapping
            .coord_columns
            .iter()
            .map(|c| Ok((find(c)?, c.clone())))
            .collect::<Result<_, IngestError>>()?,
        status: mapping.status.as_ref().map(|s| find(&s.column)).transpose()?,
        date: mapping.date.as_ref().map(|d| find(&d.column)).transpose()?,
        attributes: mapping
            .attribute_columns
            .iter()
            .map(|c| Ok((find(c)?, c.clone())))
            .collect::<Result<_, IngestError>>()?,
    })
}

/// Parses a CSV file with a header row.
pub fn parse_csv(path: &Path, mapping: &ColumnMapping) -> Result<(Vec<CaseRecord>, IngestReport), IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_reader(std::io::BufReader::new(file), mapping)
}

/// [`parse_csv`] over any reader.
pub fn parse_reader<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
) -> Result<(Vec<CaseRecord>, IngestReport), IngestError> {
    mapping.check()?;
    let started = Instant::now();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();
    let cols = resolve_columns(&header, mapping)?;

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut next_synth = 0u64;
    let mut raw = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {
                report.rows_read += 1;
                let line = raw.position().map_or(0, |p| p.line());
                match build_record(&raw, &cols, mapping, &ids, next_synth) {
                    Ok(rec) => {
                        if matches!(mapping.id, IdSource::Synthesize) {
                            next_synth += 1;
                        }
                        ids.insert(rec.id);
                        records.push(rec);
                        report.rows_accepted += 1;
                    }
                    Err(reason) => {
                        report.rows_rejected += 1;
                        report.rejections.push(Rejection { line, reason });
                    }
                }
            }
            Err(e) => {
                // the reader resyncs at the next record; count the bad one
                report.rows_read += 1;
                report.rows_rejected += 1;
                let line = e.position().map_or(0, |p| p.line());
                report.rejections.push(Rejection {
                    line,
                    reason: RejectReason::Malformed(e.to_string()),
                });
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(IngestError::Csv(e.to_string()));
                }
            }
        }
    }
    report.duration_secs = started.elapsed().as_secs_f64();
    Ok((records, report))
}

fn field(raw: &csv::ByteRecord, idx: usize) -> Result<Option<&str>, RejectReason> {
    match raw.get(idx) {
        None => Ok(None),
        Some(bytes) => {
            let s = std::str::from_utf8(bytes)
                .map_err(|_| RejectReason::Malformed(format!("field {} is not valid UTF-8", idx + 1)))?
                .trim();
            Ok((!s.is_empty()).then_some(s))
        }
    }
}

fn build_record(
    raw: &csv::ByteRecord,
    cols: &Columns,
    mapping: &ColumnMapping,
    seen: &HashSet<RecordId>,
    next_synth: u64,
) -> Result<CaseRecord, RejectReason> {
    let mut coords = Vec::with_capacity(mapping.dimension());
    for (idx, name) in &cols.coords {
        let v = field(raw, *idx)?.ok_or_else(|| RejectReason::MissingCoordinate(name.clone()))?;
        let c: f64 = v.parse().map_err(|_| RejectReason::BadCoordinate {
            column: name.clone(),
            value: v.to_string(),
        })?;
        if !c.is_finite() {
            return Err(RejectReason::BadCoordinate {
                column: name.clone(),
                value: v.to_string(),
            });
        }
        coords.push(c);
    }

    let id = match cols.id {
        Some(idx) => {
            let v = field(raw, idx)?.ok_or(RejectReason::MissingId)?;
            RecordId(v.parse().map_err(|_| RejectReason::BadId(v.to_string()))?)
        }
        None => RecordId(next_synth),
    };
    if seen.contains(&id) {
        return Err(RejectReason::DuplicateId(id.0));
    }

    let mut event_day = None;
    if let (Some(idx), Some(dm)) = (cols.date, &mapping.date) {
        match field(raw, idx)? {
            Some(v) => {
                let d = NaiveDate::parse_from_str(v, &dm.format).map_err(|_| RejectReason::BadDate(v.to_string()))?;
                event_day = Some((d - dm.epoch).num_days());
            }
            None if dm.coordinate_scale.is_some() => {
                return Err(RejectReason::MissingCoordinate(dm.column.clone()));
            }
            None => {}
        }
        if let (Some(scale), Some(day)) = (dm.coordinate_scale, event_day) {
            coords.push(day as f64 * scale);
        }
    }

    let status = match (cols.status, &mapping.status) {
        (Some(idx), Some(sm)) => field(raw, idx)?.map_or(Status::Unknown, |v| sm.resolve(v)),
        _ => Status::Unknown,
    };

    let mut attributes = Vec::with_capacity(cols.attributes.len());
    for (idx, name) in &cols.attributes {
        attributes.push((name.clone(), field(raw, *idx)?.unwrap_or("").to_string()));
    }

    let position = Point::new(coords).map_err(|e| RejectReason::Malformed(e.to_string()))?;
    Ok(CaseRecord {
        id,
        position,
        status,
        event_day,
        attributes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> ColumnMapping {
        let cfg = KvConfig::parse(
            "id_column = id\ncoord_columns = lat, lon\nstatus_column = state\n\
             status_map = isolated:confirmed, released:recovered\n\
             date_column = date\nattribute_columns = country, sex\n",
        )
        .unwrap();
        ColumnMapping::from_config(&cfg).unwrap()
    }

    fn parse(text: &str) -> (Vec<CaseRecord>, IngestReport) {
        parse_reader(text.as_bytes(), &mapping()).unwrap()
    }

    const HEADER: &str = "id,lat,lon,state,date,country,sex\n";

    #[test]
    fn header_only() {
        let (recs, rep) = parse(HEADER);
        assert!(recs.is_empty());
        assert_eq!((rep.rows_read, rep.rows_accepted, rep.rows_rejected), (0, 0, 0));
    }

    #[test]
    fn full_row() {
        let (recs, rep) = parse(&format!("{HEADER}17,30.5,114.3,released,2020-01-21,China,female\n"));
        assert_eq!(rep.rows_accepted, 1);
        let r = &recs[0];
        assert_eq!(r.id, RecordId(17));
        assert_eq!(r.position.coords(), &[30.5, 114.3]);
        assert_eq!(r.status, Status::Recovered);
        assert_eq!(r.event_day, Some(51));
        assert_eq!(r.attribute("country"), Some("China"));
    }

    #[test]
    fn blank_latitude_is_rejected() {
        let (recs, rep) = parse(&format!("{HEADER}1,,114.3,isolated,,China,male\n"));
        assert!(recs.is_empty());
        assert_eq!(rep.rows_rejected, 1);
        assert_eq!(rep.rejections[0].line, 2);
        assert_eq!(rep.rejections[0].reason, RejectReason::MissingCoordinate("lat".into()));
        assert!(rep.rejections[0].reason.to_string().starts_with("missing coordinate"));
    }

    #[test]
    fn status_fallbacks() {
        let (recs, _) = parse(&format!(
            "{HEADER}1,0,0,Dead,,,\n2,0,0,weird,,,\n3,0,0,,,,\n4,0,0,ISOLATED,,,\n"
        ));
        let st: Vec<Status> = recs.iter().map(|r| r.status).collect();
        assert_eq!(
            st,
            vec![Status::Dead, Status::Unknown, Status::Unknown, Status::Confirmed]
        );
    }

    #[test]
    fn rejects_bad_fields_and_duplicates() {
        let (recs, rep) = parse(&format!(
            "{HEADER}1,1,1,,,,\n1,2,2,,,,\nx,1,1,,,,\n,1,1,,,,\n2,nan,1,,,,\n3,1,1,,20-01-01x,,\n4,1\n"
        ));
        assert_eq!(recs.len(), 1);
        let reasons: Vec<_> = rep.rejections.iter().map(|r| (r.line, r.reason.clone())).collect();
        assert_eq!(
            reasons,
            vec![
                (3, RejectReason::DuplicateId(1)),
                (4, RejectReason::BadId("x".into())),
                (5, RejectReason::MissingId),
                (
                    6,
                    RejectReason::BadCoordinate {
                        column: "lat".into(),
                        value: "nan".into()
                    }
                ),
                (7, RejectReason::BadDate("20-01-01x".into())),
                (8, RejectReason::MissingCoordinate("lon".into())),
            ]
        );
        assert_eq!(rep.rows_read, rep.rows_accepted + rep.rows_rejected);
    }

    #[test]
    fn missing_mapped_column_names_it() {
        let err = parse_reader("id,lat\n".as_bytes(), &mapping()).unwrap_err();
        assert_eq!(err, IngestError::MissingColumn("lon".into()));
    }

    #[test]
    fn synthesized_ids_follow_accepted_rows() {
        let m = ColumnMapping::coords(&["x", "y"]);
        let (recs, rep) = parse_reader("x,y\n1,1\n,2\n3,3\n4,4\n".as_bytes(), &m).unwrap();
        assert_eq!(rep.rows_rejected, 1);
        assert_eq!(recs.iter().map(|r| r.id.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn day_as_coordinate() {
        let cfg = KvConfig::parse("coord_columns = x\ndate_column = d\nday_scale = 0.5\n").unwrap();
        let m = ColumnMapping::from_config(&cfg).unwrap();
        assert_eq!(m.dimension(), 2);
        let (recs, rep) = parse_reader("x,d\n1,2019-12-11\n2,\n".as_bytes(), &m).unwrap();
        assert_eq!(recs[0].position.coords(), &[1.0, 5.0]);
        assert_eq!(rep.rejections[0].reason, RejectReason::MissingCoordinate("d".into()));
    }

    #[test]
    fn mapping_validation() {
        let bad = KvConfig::parse("coord_columns = a, a").unwrap();
        assert!(matches!(ColumnMapping::from_config(&bad), Err(IngestError::Mapping(_))));
        let none = KvConfig::parse("id_column = id").unwrap();
        assert!(ColumnMapping::from_config(&none).is_err());
        let unknown = KvConfig::parse("coord_columns = a\ncolour = red").unwrap();
        assert!(matches!(
            ColumnMapping::from_config(&unknown),
            Err(IngestError::Config(ConfigError::Unknown(_)))
        ));
    }
}
