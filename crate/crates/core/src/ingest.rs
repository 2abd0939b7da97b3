//! Streaming readers for relational forge dumps.
//!
//! Dumps are headerless delimited files in which `\N` stands for SQL NULL.
//! Every reader is a plain iterator over a bounded `csv` buffer, so no table
//! is ever held in memory. Rows that cannot be parsed are written to a
//! [`RejectLog`] and skipped; only I/O failures end a stream.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};

use crate::{CommitId, Error, ProjectId, Result};

/// Field separator of a dump file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DumpFormat {
    /// Comma separated, double-quoted fields with backslash escapes.
    #[default]
    Csv,
    /// Tab separated, no quoting.
    Tsv,
}

impl FromStr for DumpFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DumpFormat::Csv),
            "tsv" => Ok(DumpFormat::Tsv),
            other => Err(format!(
                "unknown dump format {other:?} (expected csv or tsv)"
            )),
        }
    }
}

impl fmt::Display for DumpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DumpFormat::Csv => "csv",
            DumpFormat::Tsv => "tsv",
        })
    }
}

/// Sink for malformed rows: `<file>:<line>\t<reason>`, one line each.
pub struct RejectLog {
    sink: Option<Box<dyn Write + Send>>,
    count: u64,
}

impl RejectLog {
    /// A log that only counts.
    pub fn counting() -> Self {
        RejectLog {
            sink: None,
            count: 0,
        }
    }

    pub fn to_writer(w: impl Write + Send + 'static) -> Self {
        RejectLog {
            sink: Some(Box::new(w)),
            count: 0,
        }
    }

    pub fn record(&mut self, source: &str, line: u64, reason: &str) -> io::Result<()> {
        self.count += 1;
        if let Some(w) = self.sink.as_mut() {
            writeln!(w, "{source}:{line}\t{reason}")?;
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.sink.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }
}

impl fmt::Debug for RejectLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RejectLog")
            .field("count", &self.count)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectRecord {
    pub project_id: ProjectId,
    /// `login/project`.
    pub name: String,
    pub forked_from: Option<ProjectId>,
    pub deleted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommitMembershipRecord {
    pub commit_id: CommitId,
    pub project_id: ProjectId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Stars,
    Forks,
    Commits,
    Issues,
    PullRequests,
    /// Seconds since the Unix epoch of the most recent commit.
    LatestCommitTime,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::Stars,
        EventKind::Forks,
        EventKind::Commits,
        EventKind::Issues,
        EventKind::PullRequests,
        EventKind::LatestCommitTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Stars => "stars",
            EventKind::Forks => "forks",
            EventKind::Commits => "commits",
            EventKind::Issues => "issues",
            EventKind::PullRequests => "pull_requests",
            EventKind::LatestCommitTime => "latest_commit_time",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventCountRecord {
    pub project_id: ProjectId,
    pub kind: EventKind,
    pub value: u64,
}

/// Parses one raw row into a typed record, or explains why it cannot.
pub trait FromRow: Sized {
    fn from_row(row: &csv::ByteRecord) -> Result<Self, String>;
}

/// Typed iterator over a dump file. Malformed rows go to the reject log.
pub struct DumpReader<'a, R: Read, T> {
    rows: csv::Reader<R>,
    record: csv::ByteRecord,
    label: String,
    rejects: &'a mut RejectLog,
    _marker: PhantomData<fn() -> T>,
}

impl<'a, R: Read, T: FromRow> DumpReader<'a, R, T> {
    pub fn from_reader(
        reader: R,
        label: impl Into<String>,
        format: DumpFormat,
        rejects: &'a mut RejectLog,
    ) -> Self {
        DumpReader {
            rows: reader_builder(format).from_reader(reader),
            record: csv::ByteRecord::new(),
            label: label.into(),
            rejects,
            _marker: PhantomData,
        }
    }
}

impl<R: Read, T> DumpReader<'_, R, T> {
    /// Line of the most recently read row.
    pub fn line(&self) -> u64 {
        self.record.position().map(|p| p.line()).unwrap_or(0)
    }

    /// Rejects the most recently yielded row after the fact, e.g. when a
    /// later check finds it inconsistent with earlier rows.
    pub fn reject_current(&mut self, reason: &str) -> Result<()> {
        let line = self.line();
        self.rejects.record(&self.label, line, reason)?;
        Ok(())
    }
}

impl<R: Read, T: FromRow> Iterator for DumpReader<'_, R, T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.rows.read_byte_record(&mut self.record) {
                Ok(false) => return None,
                Ok(true) => {}
                Err(e) => {
                    // Decoding problems are per-row; anything else is fatal.
                    if let csv::ErrorKind::Io(_) = e.kind() {
                        return Some(Err(e.into()));
                    }
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    if let Err(io) = self.rejects.record(&self.label, line, &e.to_string()) {
                        return Some(Err(io.into()));
                    }
                    continue;
                }
            }
            let line = self.record.position().map(|p| p.line()).unwrap_or(0);
            match T::from_row(&self.record) {
                Ok(v) => return Some(Ok(v)),
                Err(reason) => {
                    if let Err(io) = self.rejects.record(&self.label, line, &reason) {
                        return Some(Err(io.into()));
                    }
                }
            }
        }
    }
}

fn reader_builder(format: DumpFormat) -> csv::ReaderBuilder {
    let mut b = csv::ReaderBuilder::new();
    b.has_headers(false).flexible(true);
    match format {
        DumpFormat::Csv => {
            b.delimiter(b',').double_quote(false).escape(Some(b'\\'));
        }
        DumpFormat::Tsv => {
            b.delimiter(b'\t').quoting(false);
        }
    }
    b
}

fn field<'r>(row: &'r csv::ByteRecord, idx: usize, what: &str) -> Result<&'r str, String> {
    let raw = row
        .get(idx)
        .ok_or_else(|| format!("missing column {} ({what})", idx + 1))?;
    std::str::from_utf8(raw).map_err(|_| format!("{what} is not valid UTF-8"))
}

fn is_null(s: &str) -> bool {
    s.is_empty() || s == "\\N"
}

fn parse_id(s: &str, what: &str) -> Result<u64, String> {
    let v: u64 = s
        .trim()
        .parse()
        .map_err(|_| format!("{what} {s:?} is not a positive integer"))?;
    if v == 0 {
        return Err(format!("{what} must be positive"));
    }
    Ok(v)
}

/// True for `login/project` with both segments non-empty.
pub fn is_valid_name(name: &str) -> bool {
    match name.split_once('/') {
        Some((owner, repo)) => !owner.is_empty() && !repo.is_empty() && !repo.contains('/'),
        None => false,
    }
}

impl FromRow for ProjectRecord {
    /// Columns: `id, login/name, forked_from, [deleted]`.
    fn from_row(row: &csv::ByteRecord) -> Result<Self, String> {
        let project_id = ProjectId(parse_id(field(row, 0, "project id")?, "project id")?);
        let name = field(row, 1, "project name")?;
        if !is_valid_name(name) {
            return Err(format!(
                "project name {name:?} is not of the form login/project"
            ));
        }
        let forked_from = match row.get(2) {
            None => None,
            Some(_) => {
                let raw = field(row, 2, "forked_from")?;
                if is_null(raw) {
                    None
                } else {
                    Some(ProjectId(parse_id(raw, "forked_from")?))
                }
            }
        };
        if forked_from == Some(project_id) {
            return Err(format!("project {project_id} is recorded as its own fork"));
        }
        let deleted = match row.get(3) {
            None => false,
            Some(_) => match field(row, 3, "deleted")? {
                "" | "\\N" | "0" | "false" | "f" => false,
                "1" | "true" | "t" => true,
                other => return Err(format!("deleted flag {other:?} is not a boolean")),
            },
        };
        Ok(ProjectRecord {
            project_id,
            name: name.to_owned(),
            forked_from,
            deleted,
        })
    }
}

impl FromRow for CommitMembershipRecord {
    /// Columns: `commit_id, project_id`.
    fn from_row(row: &csv::ByteRecord) -> Result<Self, String> {
        Ok(CommitMembershipRecord {
            commit_id: CommitId(parse_id(field(row, 0, "commit id")?, "commit id")?),
            project_id: ProjectId(parse_id(field(row, 1, "project id")?, "project id")?),
        })
    }
}

/// Activity row counted per project: only the leading project id matters.
#[derive(Debug, Clone, Copy)]
struct ProjectRef(ProjectId);

impl FromRow for ProjectRef {
    fn from_row(row: &csv::ByteRecord) -> Result<Self, String> {
        Ok(ProjectRef(ProjectId(parse_id(
            field(row, 0, "project id")?,
            "project id",
        )?)))
    }
}

/// `project_id, timestamp` row of the commit-time table.
#[derive(Debug, Clone, Copy)]
struct TimedRow {
    project_id: ProjectId,
    seconds: u64,
}

impl FromRow for TimedRow {
    fn from_row(row: &csv::ByteRecord) -> Result<Self, String> {
        let project_id = ProjectId(parse_id(field(row, 0, "project id")?, "project id")?);
        let raw = field(row, 1, "timestamp")?;
        if is_null(raw) {
            return Err("commit timestamp is NULL".into());
        }
        match parse_timestamp(raw) {
            Some(t) if t >= 0 => Ok(TimedRow {
                project_id,
                seconds: t as u64,
            }),
            Some(_) => Err(format!("commit timestamp {raw:?} precedes 1970")),
            None => Err(format!("commit timestamp {raw:?} is not a date")),
        }
    }
}

/// Seconds since the Unix epoch from either an integer or a
/// `YYYY-MM-DD HH:MM:SS` / RFC 3339-like UTC stamp.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    let trimmed = raw.trim_end_matches('Z');
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(trimmed, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc().timestamp())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

pub fn read_projects<'a>(
    path: &Path,
    format: DumpFormat,
    rejects: &'a mut RejectLog,
) -> Result<DumpReader<'a, File, ProjectRecord>> {
    Ok(DumpReader::from_reader(
        open(path)?,
        label(path),
        format,
        rejects,
    ))
}

/// Membership rows in file order; duplicates pass through.
pub fn read_commit_memberships<'a>(
    path: &Path,
    format: DumpFormat,
    rejects: &'a mut RejectLog,
) -> Result<DumpReader<'a, File, CommitMembershipRecord>> {
    Ok(DumpReader::from_reader(
        open(path)?,
        label(path),
        format,
        rejects,
    ))
}

/// Folds one activity table into per-project counts (or the maximum
/// timestamp for [`EventKind::LatestCommitTime`]) and merges it into `acc`.
pub fn aggregate_events_from_reader<R: Read>(
    reader: R,
    source: &str,
    kind: EventKind,
    format: DumpFormat,
    rejects: &mut RejectLog,
    acc: &mut HashMap<(ProjectId, EventKind), u64>,
) -> Result<()> {
    match kind {
        EventKind::LatestCommitTime => {
            let rows: DumpReader<'_, R, TimedRow> =
                DumpReader::from_reader(reader, source, format, rejects);
            for row in rows {
                let row = row?;
                let slot = acc.entry((row.project_id, kind)).or_insert(0);
                *slot = (*slot).max(row.seconds);
            }
        }
        _ => {
            let rows: DumpReader<'_, R, ProjectRef> =
                DumpReader::from_reader(reader, source, format, rejects);
            for row in rows {
                *acc.entry((row?.0, kind)).or_insert(0) += 1;
            }
        }
    }
    Ok(())
}

/// Exactly one record per `(project, kind)` present in the inputs, sorted.
pub fn aggregate_event_counts(
    paths: &BTreeMap<EventKind, PathBuf>,
    format: DumpFormat,
    rejects: &mut RejectLog,
) -> Result<Vec<EventCountRecord>> {
    let mut acc = HashMap::new();
    for (&kind, path) in paths {
        aggregate_events_from_reader(open(path)?, &label(path), kind, format, rejects, &mut acc)?;
    }
    Ok(finish_events(acc))
}

pub fn finish_events(acc: HashMap<(ProjectId, EventKind), u64>) -> Vec<EventCountRecord> {
    let mut out: Vec<EventCountRecord> = acc
        .into_iter()
        .map(|((project_id, kind), value)| EventCountRecord {
            project_id,
            kind,
            value,
        })
        .collect();
    out.sort_unstable();
    out
}

/// Bidirectional id/name table built from the projects dump.
#[derive(Debug, Default, Clone)]
pub struct ProjectNames {
    by_id: HashMap<ProjectId, String>,
    by_name: HashMap<String, ProjectId>,
}

impl ProjectNames {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false, leaving the table unchanged, if the id is already known.
    pub fn insert(&mut self, id: ProjectId, name: impl Into<String>) -> bool {
        if self.by_id.contains_key(&id) {
            return false;
        }
        let name = name.into();
        self.by_name.entry(name.clone()).or_insert(id);
        self.by_id.insert(id, name);
        true
    }

    pub fn name(&self, id: ProjectId) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    pub fn require(&self, id: ProjectId) -> Result<&str> {
        self.name(id).ok_or(Error::MissingName(id))
    }

    pub fn id(&self, name: &str) -> Option<ProjectId> {
        self.by_name.get(name).copied()
    }

    pub fn contains(&self, id: ProjectId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProjectId, &str)> {
        self.by_id.iter().map(|(&id, n)| (id, n.as_str()))
    }
}

impl FromIterator<(ProjectId, String)> for ProjectNames {
    fn from_iter<I: IntoIterator<Item = (ProjectId, String)>>(iter: I) -> Self {
        let mut names = ProjectNames::new();
        for (id, n) in iter {
            names.insert(id, n);
        }
        names
    }
}
