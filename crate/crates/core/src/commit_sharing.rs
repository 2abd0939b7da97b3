//! Attractor edges between projects that share commits.
//!
//! For every commit, the highest-ranked project containing it becomes the
//! attractor, and every other project containing the commit gets an edge to
//! it. Each distinct pair is reported once along with how many commits
//! witnessed it. The pass walks a membership stream sorted by commit id, so
//! it only ever holds one commit group plus the aggregated pairs.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use log::warn;

use crate::ingest::CommitMembershipRecord;
use crate::scoring::ScoreTable;
use crate::{CommitId, Error, ProjectId, Real, Result};

/// Commit groups above this size are logged (and still processed).
pub const DEFAULT_GROUP_WARN: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SharedEdge {
    /// Highest-ranked project of the witnessing commits.
    pub attractor: ProjectId,
    pub sibling: ProjectId,
    /// Number of commits that produced this pair.
    pub shared_count: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmitStats {
    pub commits: u64,
    pub memberships: u64,
    pub largest_group: usize,
    pub oversized_groups: u64,
    /// Distinct pairs before the `min_shared` threshold.
    pub candidate_pairs: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct EmitOptions {
    pub min_shared: u64,
    pub group_warn: usize,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            min_shared: 1,
            group_warn: DEFAULT_GROUP_WARN,
        }
    }
}

/// Emits the attractor edges of a membership stream sorted by commit id.
///
/// Returns edges sorted by `(attractor, sibling)`; pairs witnessed by fewer
/// than `min_shared` commits are dropped. A decreasing commit id aborts with
/// [`Error::UnsortedInput`].
pub fn emit_shared_edges<F, I>(
    memberships: I,
    scores: &ScoreTable<F>,
    opts: EmitOptions,
) -> Result<(Vec<SharedEdge>, EmitStats)>
where
    F: Real,
    I: IntoIterator<Item = Result<CommitMembershipRecord>>,
{
    let mut stats = EmitStats::default();
    let mut pairs: HashMap<(ProjectId, ProjectId), u64> = HashMap::new();
    let mut group: Vec<ProjectId> = Vec::new();
    let mut current: Option<CommitId> = None;

    for rec in memberships {
        let rec = rec?;
        stats.memberships += 1;
        if current != Some(rec.commit_id) {
            if let Some(prev) = current {
                if rec.commit_id < prev {
                    return Err(Error::UnsortedInput {
                        previous: prev.0,
                        current: rec.commit_id.0,
                        record: stats.memberships,
                    });
                }
                flush_group(
                    prev,
                    &mut group,
                    scores,
                    &mut pairs,
                    &mut stats,
                    opts.group_warn,
                );
            }
            current = Some(rec.commit_id);
        }
        group.push(rec.project_id);
    }
    if let Some(prev) = current {
        flush_group(
            prev,
            &mut group,
            scores,
            &mut pairs,
            &mut stats,
            opts.group_warn,
        );
    }

    stats.candidate_pairs = pairs.len() as u64;
    let mut edges: Vec<SharedEdge> = pairs
        .into_iter()
        .filter(|&(_, n)| n >= opts.min_shared)
        .map(|((attractor, sibling), shared_count)| SharedEdge {
            attractor,
            sibling,
            shared_count,
        })
        .collect();
    edges.sort_unstable();
    Ok((edges, stats))
}

fn flush_group<F: Real>(
    commit: CommitId,
    group: &mut Vec<ProjectId>,
    scores: &ScoreTable<F>,
    pairs: &mut HashMap<(ProjectId, ProjectId), u64>,
    stats: &mut EmitStats,
    group_warn: usize,
) {
    stats.commits += 1;
    group.sort_unstable();
    group.dedup();
    stats.largest_group = stats.largest_group.max(group.len());
    if group.len() > group_warn {
        stats.oversized_groups += 1;
        warn!("commit {commit} is shared by {} projects", group.len());
    }
    if group.len() > 1 {
        let attractor = group
            .iter()
            .copied()
            .max_by_key(|&p| scores.rank_key(p))
            .expect("non-empty group");
        for &p in group.iter() {
            if p != attractor {
                *pairs.entry((attractor, p)).or_insert(0) += 1;
            }
        }
    }
    group.clear();
}

/// `attractor<TAB>sibling<TAB>shared_count` lines.
pub fn write_shared_edges<W: Write>(mut w: W, edges: &[SharedEdge]) -> std::io::Result<()> {
    for e in edges {
        writeln!(w, "{}\t{}\t{}", e.attractor, e.sibling, e.shared_count)?;
    }
    w.flush()
}

pub fn read_shared_edges<R: BufRead>(r: R) -> Result<Vec<SharedEdge>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |message: &str| Error::Parse {
            path: "shared_edges.tsv".into(),
            line: i as u64 + 1,
            message: message.to_owned(),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad("expected three columns"));
        }
        let attractor = cols[0].parse().map_err(|_| bad("attractor id"))?;
        let sibling = cols[1].parse().map_err(|_| bad("sibling id"))?;
        let shared_count = cols[2].parse().map_err(|_| bad("shared count"))?;
        out.push(SharedEdge {
            attractor,
            sibling,
            shared_count,
        });
    }
    Ok(out)
}
