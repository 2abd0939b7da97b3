//! Tab-separated checkpoint files written between pipeline stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::ingest::{EventCountRecord, ProjectRecord};
use crate::{Error, ProjectId, Result};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Creates `path`, runs `body` on a buffered writer and flushes it.
pub fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line: line as u64 + 1,
        message: message.into(),
    }
}

fn lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + '_> {
    let r = open(path)?;
    Ok(r.lines().enumerate().filter_map(move |(i, l)| match l {
        Ok(l) if l.is_empty() => None,
        Ok(l) => Some(Ok((i, l))),
        Err(e) => Some(Err(Error::io(path, e))),
    }))
}

/// `id<TAB>name<TAB>forked_from or -<TAB>0|1`
pub fn write_projects(path: &Path, projects: &[ProjectRecord]) -> Result<()> {
    write_file(path, |w| {
        for p in projects {
            let parent = p
                .forked_from
                .map_or_else(|| "-".to_owned(), |f| f.to_string());
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                p.project_id,
                p.name,
                parent,
                u8::from(p.deleted)
            )?;
        }
        Ok(())
    })
}

pub fn read_projects(path: &Path) -> Result<Vec<ProjectRecord>> {
    let mut out = Vec::new();
    for item in lines(path)? {
        let (i, line) = item?;
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, name, parent, deleted] = cols[..] else {
            return Err(parse_err(path, i, "expected four columns"));
        };
        let forked_from = match parent {
            "-" => None,
            p => Some(
                p.parse()
                    .map_err(|_| parse_err(path, i, "fork parent id"))?,
            ),
        };
        out.push(ProjectRecord {
            project_id: id.parse().map_err(|_| parse_err(path, i, "project id"))?,
            name: name.to_owned(),
            forked_from,
            deleted: deleted == "1",
        });
    }
    Ok(out)
}

/// `id<TAB>kind<TAB>value`
pub fn write_events(path: &Path, events: &[EventCountRecord]) -> Result<()> {
    write_file(path, |w| {
        for e in events {
            writeln!(w, "{}\t{}\t{}", e.project_id, e.kind, e.value)?;
        }
        Ok(())
    })
}

pub fn read_events(path: &Path) -> Result<Vec<EventCountRecord>> {
    let mut out = Vec::new();
    for item in lines(path)? {
        let (i, line) = item?;
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, kind, value] = cols[..] else {
            return Err(parse_err(path, i, "expected three columns"));
        };
        out.push(EventCountRecord {
            project_id: id.parse().map_err(|_| parse_err(path, i, "project id"))?,
            kind: kind.parse().map_err(|e: String| parse_err(path, i, e))?,
            value: value
                .parse()
                .map_err(|_| parse_err(path, i, "event value"))?,
        });
    }
    Ok(out)
}

pub fn write_ids<'a>(path: &Path, ids: impl IntoIterator<Item = &'a ProjectId>) -> Result<()> {
    write_file(path, |w| {
        for id in ids {
            writeln!(w, "{id}")?;
        }
        Ok(())
    })
}

pub fn read_ids(path: &Path) -> Result<Vec<ProjectId>> {
    lines(path)?
        .map(|item| {
            let (i, line) = item?;
            line.parse().map_err(|_| parse_err(path, i, "project id"))
        })
        .collect()
}

/// Reads non-empty lines verbatim.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    lines(path)?.map(|item| item.map(|(_, l)| l)).collect()
}

/// `(line number, text)` of each line that could not be parsed.
pub type LineRejects = Vec<(u64, String)>;

/// Reads a two-column `source<TAB>target` map; malformed lines are returned
/// as `(line number, text)` rejects.
pub fn read_pairs<R: BufRead>(r: R) -> std::io::Result<(Vec<(String, String)>, LineRejects)> {
    let mut pairs = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains('\t') => {
                pairs.push((a.to_owned(), b.to_owned()))
            }
            _ => rejects.push((i as u64 + 1, line)),
        }
    }
    Ok((pairs, rejects))
}
