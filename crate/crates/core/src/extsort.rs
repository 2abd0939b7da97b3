//! Bounded-memory external sort of commit memberships.
//!
//! Records are buffered up to the memory budget, sorted in parallel and
//! spilled to run files, then k-way merged. When there are more runs than
//! the budget allows open readers for, runs are merged in several passes.
//! Exact duplicates are collapsed at every step.
//!
//! The sorted file is a sequence of fixed-width little-endian records,
//! `commit_id: u64` followed by `project_id: u64`, with no header. A
//! tab-separated variant exists for debugging.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::slice::ParallelSliceMut;

use crate::ingest::{read_commit_memberships, CommitMembershipRecord, DumpFormat, RejectLog};
use crate::{CommitId, Error, ProjectId, Result};

/// Smallest accepted memory budget.
pub const MIN_MEMORY_BUDGET: usize = 1 << 20;
/// Size of one record in memory and in the binary file.
pub const RECORD_BYTES: usize = 16;

const READ_BUFFER: usize = 256 * 1024;
const WRITE_BUFFER: usize = 1 << 20;
/// Assumed lower bound on the size of one textual input row, used for the
/// disk-space estimate.
const MIN_ROW_BYTES: u64 = 8;

type Pair = (u64, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SortedFormat {
    #[default]
    Binary,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SortStats {
    pub input_records: u64,
    pub output_records: u64,
    pub runs: usize,
    pub merge_passes: usize,
    /// Records held in memory per run.
    pub run_capacity: usize,
}

#[derive(Debug, Clone)]
pub struct ExternalSorter {
    tmp_root: PathBuf,
    run_capacity: usize,
    fan_in: usize,
    input_bytes_hint: u64,
}

impl ExternalSorter {
    /// Sorter whose run buffer and merge readers together stay within
    /// `memory_budget` bytes. Run files go to a fresh directory under
    /// `tmp_root`.
    pub fn new(memory_budget: usize, tmp_root: impl Into<PathBuf>) -> Result<Self> {
        if memory_budget < MIN_MEMORY_BUDGET {
            return Err(Error::MemoryBudget {
                given: memory_budget,
                floor: MIN_MEMORY_BUDGET,
            });
        }
        Ok(ExternalSorter {
            tmp_root: tmp_root.into(),
            run_capacity: memory_budget / RECORD_BYTES,
            fan_in: (memory_budget / READ_BUFFER).clamp(2, 4096),
            input_bytes_hint: 0,
        })
    }

    /// Overrides the number of records per run and the merge fan-in.
    /// Used to exercise multi-pass merging on small inputs.
    #[doc(hidden)]
    pub fn with_limits(mut self, run_capacity: usize, fan_in: usize) -> Self {
        self.run_capacity = run_capacity.max(1);
        self.fan_in = fan_in.max(2);
        self
    }

    /// Size of the textual input, for the disk-space estimate on failure.
    pub fn with_input_size(mut self, bytes: u64) -> Self {
        self.input_bytes_hint = bytes;
        self
    }

    pub fn sort<I>(&self, input: I, output: &Path, format: SortedFormat) -> Result<SortStats>
    where
        I: IntoIterator<Item = Result<CommitMembershipRecord>>,
    {
        fs::create_dir_all(&self.tmp_root).map_err(|e| Error::io(&self.tmp_root, e))?;
        let tmp = tempfile::Builder::new()
            .prefix("extsort-")
            .tempdir_in(&self.tmp_root)
            .map_err(|e| Error::io(&self.tmp_root, e))?;
        let mut stats = SortStats {
            run_capacity: self.run_capacity,
            ..SortStats::default()
        };
        let mut runs: Vec<PathBuf> = Vec::new();
        let mut buf: Vec<Pair> = Vec::with_capacity(self.run_capacity);

        for rec in input {
            let rec = rec?;
            stats.input_records += 1;
            buf.push((rec.commit_id.0, rec.project_id.0));
            if buf.len() == self.run_capacity {
                runs.push(self.spill(&mut buf, tmp.path(), runs.len(), stats.input_records)?);
            }
        }

        if runs.is_empty() {
            sort_dedup(&mut buf);
            let mut sink = Sink::create(output, format)?;
            for &p in &buf {
                sink.push(p).map_err(|e| Error::io(output, e))?;
            }
            stats.output_records = sink.finish().map_err(|e| Error::io(output, e))?;
            return Ok(stats);
        }
        if !buf.is_empty() {
            runs.push(self.spill(&mut buf, tmp.path(), runs.len(), stats.input_records)?);
        }
        drop(buf);
        stats.runs = runs.len();

        let mut generation = 0usize;
        while runs.len() > self.fan_in {
            generation += 1;
            stats.merge_passes += 1;
            let mut next = Vec::with_capacity(runs.len().div_ceil(self.fan_in));
            for (i, group) in runs.chunks(self.fan_in).enumerate() {
                let path = tmp.path().join(format!("merge-{generation}-{i}.bin"));
                let mut sink = Sink::create(&path, SortedFormat::Binary)?;
                merge(group, &mut sink)
                    .map_err(|e| self.disk_error(e, &path, stats.input_records))?;
                sink.finish()
                    .map_err(|e| self.disk_error(e, &path, stats.input_records))?;
                for r in group {
                    let _ = fs::remove_file(r);
                }
                next.push(path);
            }
            debug!(
                "merge pass {generation}: {} runs -> {}",
                runs.len(),
                next.len()
            );
            runs = next;
        }
        stats.merge_passes += 1;
        let mut sink = Sink::create(output, format)?;
        merge(&runs, &mut sink).map_err(|e| Error::io(output, e))?;
        stats.output_records = sink.finish().map_err(|e| Error::io(output, e))?;
        info!(
            "sorted {} records into {} unique using {} runs and {} merge passes",
            stats.input_records, stats.output_records, stats.runs, stats.merge_passes
        );
        Ok(stats)
    }

    fn spill(&self, buf: &mut Vec<Pair>, dir: &Path, index: usize, seen: u64) -> Result<PathBuf> {
        sort_dedup(buf);
        let path = dir.join(format!("run-{index}.bin"));
        let write = || -> io::Result<()> {
            let mut w = BufWriter::with_capacity(WRITE_BUFFER, File::create(&path)?);
            for &(c, p) in buf.iter() {
                w.write_all(&c.to_le_bytes())?;
                w.write_all(&p.to_le_bytes())?;
            }
            w.flush()
        };
        write().map_err(|e| self.disk_error(e, &path, seen))?;
        buf.clear();
        Ok(path)
    }

    fn disk_error(&self, e: io::Error, path: &Path, seen: u64) -> Error {
        if e.kind() == ErrorKind::StorageFull {
            let expected = seen.max(self.input_bytes_hint / MIN_ROW_BYTES);
            Error::InsufficientDisk {
                dir: path.parent().unwrap_or(path).to_path_buf(),
                required: expected * RECORD_BYTES as u64 * 2,
            }
        } else {
            Error::io(path, e)
        }
    }
}

fn sort_dedup(buf: &mut Vec<Pair>) {
    buf.par_sort_unstable();
    buf.dedup();
}

enum Sink {
    Binary(BufWriter<File>, Option<Pair>, u64),
    Tsv(BufWriter<File>, Option<Pair>, u64),
}

impl Sink {
    fn create(path: &Path, format: SortedFormat) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let w = BufWriter::with_capacity(WRITE_BUFFER, f);
        Ok(match format {
            SortedFormat::Binary => Sink::Binary(w, None, 0),
            SortedFormat::Tsv => Sink::Tsv(w, None, 0),
        })
    }

    /// Writes `p` unless it repeats the previous record.
    fn push(&mut self, p: Pair) -> io::Result<()> {
        match self {
            Sink::Binary(w, last, n) => {
                if *last != Some(p) {
                    w.write_all(&p.0.to_le_bytes())?;
                    w.write_all(&p.1.to_le_bytes())?;
                    *last = Some(p);
                    *n += 1;
                }
            }
            Sink::Tsv(w, last, n) => {
                if *last != Some(p) {
                    writeln!(w, "{}\t{}", p.0, p.1)?;
                    *last = Some(p);
                    *n += 1;
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> io::Result<u64> {
        match self {
            Sink::Binary(mut w, _, n) | Sink::Tsv(mut w, _, n) => {
                w.flush()?;
                Ok(n)
            }
        }
    }
}

fn merge(runs: &[PathBuf], sink: &mut Sink) -> io::Result<()> {
    let mut readers = runs
        .iter()
        .map(|p| Ok(BufReader::with_capacity(READ_BUFFER, File::open(p)?)))
        .collect::<io::Result<Vec<_>>>()?;
    let mut heap = BinaryHeap::with_capacity(readers.len());
    for (i, r) in readers.iter_mut().enumerate() {
        if let Some(p) = read_pair(r)? {
            heap.push(Reverse((p, i)));
        }
    }
    while let Some(Reverse((p, i))) = heap.pop() {
        sink.push(p)?;
        if let Some(next) = read_pair(&mut readers[i])? {
            heap.push(Reverse((next, i)));
        }
    }
    Ok(())
}

fn read_pair<R: Read>(r: &mut R) -> io::Result<Option<Pair>> {
    let mut b = [0u8; RECORD_BYTES];
    let mut filled = 0;
    while filled < RECORD_BYTES {
        match r.read(&mut b[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(io::Error::new(
                    ErrorKind::UnexpectedEof,
                    "truncated membership record",
                ))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let c = u64::from_le_bytes(b[..8].try_into().unwrap());
    let p = u64::from_le_bytes(b[8..].try_into().unwrap());
    Ok(Some((c, p)))
}

/// Sorts a textual membership dump into a sorted, duplicate-free file.
pub fn sort_memberships(
    path_in: &Path,
    input_format: DumpFormat,
    path_out: &Path,
    memory_budget: usize,
    tmp_root: &Path,
    output_format: SortedFormat,
    rejects: &mut RejectLog,
) -> Result<SortStats> {
    let size = fs::metadata(path_in)
        .map_err(|e| Error::io(path_in, e))?
        .len();
    let sorter = ExternalSorter::new(memory_budget, tmp_root)?.with_input_size(size);
    let rows = read_commit_memberships(path_in, input_format, rejects)?;
    sorter.sort(rows, path_out, output_format)
}

/// Reader over the binary sorted-membership format.
pub struct SortedMembershipReader<R> {
    inner: R,
}

impl<R: Read> SortedMembershipReader<R> {
    pub fn new(inner: R) -> Self {
        SortedMembershipReader { inner }
    }
}

impl<R: Read> Iterator for SortedMembershipReader<R> {
    type Item = Result<CommitMembershipRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match read_pair(&mut self.inner) {
            Ok(Some((c, p))) => Some(Ok(CommitMembershipRecord {
                commit_id: CommitId(c),
                project_id: ProjectId(p),
            })),
            Ok(None) => None,
            Err(e) => Some(Err(e.into())),
        }
    }
}

pub fn read_sorted_memberships(path: &Path) -> Result<SortedMembershipReader<BufReader<File>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(SortedMembershipReader::new(BufReader::with_capacity(
        READ_BUFFER,
        f,
    )))
}
