//! Project ranking by a zero-corrected geometric mean of six activity metrics.
//!
//! The mean is `exp(mean(ln(x_i + delta))) - delta`. The offset keeps zero
//! metrics from collapsing the product to zero while still mapping the zero
//! vector to exactly zero. The same score orders projects everywhere
//! downstream, with the project id as tie-breaker.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::ingest::{EventCountRecord, EventKind};
use crate::{Error, ProjectId, Real, Result};

/// Offset used when none is configured.
pub const DEFAULT_DELTA: f64 = 0.001;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// `exp((1/n) * sum(ln(x_i + delta))) - delta`.
///
/// Every component must be finite and non-negative and `delta` must be
/// positive. The all-zero vector maps to exactly zero; otherwise the result
/// is clamped at zero to absorb rounding just below it.
pub fn geometric_mean_offset<F: Real>(x: &[F], delta: F) -> Result<F> {
    if !delta.is_finite() || delta <= F::zero() {
        return Err(Error::InvalidOffset(delta.to_f64().unwrap_or(f64::NAN)));
    }
    if x.is_empty() {
        return Err(Error::EmptyVector);
    }
    let mut all_zero = true;
    let mut log_sum = F::zero();
    for (index, &v) in x.iter().enumerate() {
        if !v.is_finite() || v < F::zero() {
            return Err(Error::NegativeMetric {
                index,
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
        all_zero &= v == F::zero();
        log_sum = log_sum + (v + delta).ln();
    }
    if all_zero {
        return Ok(F::zero());
    }
    let n = F::from_usize(x.len()).expect("vector length fits the scalar type");
    Ok(((log_sum / n).exp() - delta).max(F::zero()))
}

/// The six ranking metrics of one project. Missing metrics are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricVector<F> {
    /// Days between the configured epoch and the latest commit.
    pub recency: F,
    pub stars: F,
    pub forks: F,
    pub commits: F,
    pub issues: F,
    pub pull_requests: F,
}

impl<F: Real> MetricVector<F> {
    pub const DIMENSION: usize = 6;

    pub fn as_array(&self) -> [F; 6] {
        [
            self.recency,
            self.stars,
            self.forks,
            self.commits,
            self.issues,
            self.pull_requests,
        ]
    }

    pub fn from_array(a: [F; 6]) -> Self {
        MetricVector {
            recency: a[0],
            stars: a[1],
            forks: a[2],
            commits: a[3],
            issues: a[4],
            pull_requests: a[5],
        }
    }

    pub fn mean_metric(&self, delta: F) -> Result<F> {
        geometric_mean_offset(&self.as_array(), delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredProject<F> {
    pub project_id: ProjectId,
    pub mean_metric: F,
    pub metrics: MetricVector<F>,
}

impl<F: Real> ScoredProject<F> {
    pub fn new(project_id: ProjectId, metrics: MetricVector<F>, delta: F) -> Result<Self> {
        Ok(ScoredProject {
            project_id,
            mean_metric: metrics.mean_metric(delta)?,
            metrics,
        })
    }

    pub fn rank_key(&self) -> RankKey<F> {
        RankKey::new(self.mean_metric, self.project_id)
    }
}

/// Total order over projects: a greater key ranks higher.
///
/// Higher scores rank higher; equal scores rank the smaller project id
/// higher. Scores are never NaN (see [`geometric_mean_offset`]).
#[derive(Debug, Clone, Copy)]
pub struct RankKey<F> {
    pub score: F,
    pub project_id: ProjectId,
}

impl<F: Real> RankKey<F> {
    pub fn new(score: F, project_id: ProjectId) -> Self {
        RankKey { score, project_id }
    }
}

impl<F: Real> Ord for RankKey<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .partial_cmp(&other.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.project_id.cmp(&self.project_id))
    }
}

impl<F: Real> PartialOrd for RankKey<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<F: Real> PartialEq for RankKey<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<F: Real> Eq for RankKey<F> {}

pub fn rank_key<F: Real>(p: &ScoredProject<F>) -> RankKey<F> {
    p.rank_key()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreStats {
    pub projects: u64,
    /// Latest commits dated before the epoch; their recency is zero.
    pub recency_clamped: u64,
}

/// Builds one [`ScoredProject`] per id seen in `events` or `known`, sorted
/// by id.
///
/// `events` must hold at most one record per `(project, kind)`.
/// Recency is `max(0, latest_commit_time - epoch)` in days.
pub fn score_all<F, E, K>(
    events: E,
    known: K,
    epoch_seconds: i64,
    delta: F,
) -> Result<(Vec<ScoredProject<F>>, ScoreStats)>
where
    F: Real,
    E: IntoIterator<Item = EventCountRecord>,
    K: IntoIterator<Item = ProjectId>,
{
    let mut stats = ScoreStats::default();
    let mut acc: BTreeMap<ProjectId, MetricVector<F>> = BTreeMap::new();
    for id in known {
        acc.entry(id).or_default();
    }
    let day = F::from_i64(SECONDS_PER_DAY).unwrap();
    for ev in events {
        let m = acc.entry(ev.project_id).or_default();
        let count = F::from_u64(ev.value).unwrap();
        match ev.kind {
            EventKind::Stars => m.stars = count,
            EventKind::Forks => m.forks = count,
            EventKind::Commits => m.commits = count,
            EventKind::Issues => m.issues = count,
            EventKind::PullRequests => m.pull_requests = count,
            EventKind::LatestCommitTime => {
                let since = ev.value as i128 - epoch_seconds as i128;
                if since < 0 {
                    stats.recency_clamped += 1;
                    m.recency = F::zero();
                } else {
                    m.recency = F::from_i128(since).unwrap() / day;
                }
            }
        }
    }
    let scored = acc
        .into_iter()
        .map(|(id, m)| ScoredProject::new(id, m, delta))
        .collect::<Result<Vec<_>>>()?;
    stats.projects = scored.len() as u64;
    Ok((scored, stats))
}

/// Score lookup; projects without an entry score zero on every metric.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable<F> {
    by_id: HashMap<ProjectId, ScoredProject<F>>,
}

impl<F: Real> ScoreTable<F> {
    pub fn new() -> Self {
        ScoreTable {
            by_id: HashMap::new(),
        }
    }

    pub fn insert(&mut self, p: ScoredProject<F>) {
        self.by_id.insert(p.project_id, p);
    }

    pub fn get(&self, id: ProjectId) -> Option<&ScoredProject<F>> {
        self.by_id.get(&id)
    }

    pub fn mean(&self, id: ProjectId) -> F {
        self.by_id.get(&id).map_or(F::zero(), |p| p.mean_metric)
    }

    pub fn metrics(&self, id: ProjectId) -> MetricVector<F> {
        self.by_id.get(&id).map(|p| p.metrics).unwrap_or_default()
    }

    pub fn rank_key(&self, id: ProjectId) -> RankKey<F> {
        RankKey::new(self.mean(id), id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScoredProject<F>> {
        self.by_id.values()
    }
}

impl<F: Real> FromIterator<ScoredProject<F>> for ScoreTable<F> {
    fn from_iter<I: IntoIterator<Item = ScoredProject<F>>>(iter: I) -> Self {
        ScoreTable {
            by_id: iter.into_iter().map(|p| (p.project_id, p)).collect(),
        }
    }
}

/// `project_id<TAB>mean_metric<TAB>recency..pull_requests`, fixed nine
/// decimals.
pub fn write_scores_tsv<'a, F: Real, W: Write>(
    mut w: W,
    scores: impl IntoIterator<Item = &'a ScoredProject<F>>,
) -> std::io::Result<()> {
    for p in scores {
        write!(w, "{}\t{:.9}", p.project_id, p.mean_metric)?;
        for v in p.metrics.as_array() {
            write!(w, "\t{v:.9}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Metric checkpoint: `project_id` and the six metrics in shortest
/// round-trip form, so scores recompute bit-identically.
pub fn write_metrics<W: Write>(
    mut w: W,
    scores: impl IntoIterator<Item = ScoredProject<f64>>,
) -> std::io::Result<()> {
    for p in scores {
        write!(w, "{}", p.project_id)?;
        for v in p.metrics.as_array() {
            write!(w, "\t{v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_metrics<R: BufRead>(r: R, delta: f64) -> Result<ScoreTable<f64>> {
    let mut table = ScoreTable::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: "metrics.tsv".into(),
            line: i as u64 + 1,
            message,
        };
        let mut cols = line.split('\t');
        let id: ProjectId = cols
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e| bad(format!("project id: {e}")))?;
        let mut vals = [0f64; 6];
        for v in vals.iter_mut() {
            *v = cols
                .next()
                .ok_or_else(|| bad("expected six metric columns".into()))?
                .parse()
                .map_err(|e| bad(format!("metric: {e}")))?;
        }
        table.insert(ScoredProject::new(
            id,
            MetricVector::from_array(vals),
            delta,
        )?);
    }
    Ok(table)
}
