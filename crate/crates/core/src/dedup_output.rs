//! Leader election and the two deliverables: the dedup map and the noise list.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::components::ComponentAssignment;
use crate::ingest::ProjectNames;
use crate::scoring::{RankKey, ScoreTable};
use crate::tsv::LineRejects;
use crate::{Error, ProjectId, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeaderStrategy {
    #[default]
    Mean,
    Stars,
    Forks,
}

impl LeaderStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            LeaderStrategy::Mean => "mean",
            LeaderStrategy::Stars => "stars",
            LeaderStrategy::Forks => "forks",
        }
    }

    /// Ranking key of `id` under this strategy: metric descending, id ascending.
    pub fn key<F: Real>(self, scores: &ScoreTable<F>, id: ProjectId) -> RankKey<F> {
        let value = match self {
            LeaderStrategy::Mean => scores.mean(id),
            LeaderStrategy::Stars => scores.metrics(id).stars,
            LeaderStrategy::Forks => scores.metrics(id).forks,
        };
        RankKey::new(value, id)
    }
}

impl FromStr for LeaderStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(LeaderStrategy::Mean),
            "stars" => Ok(LeaderStrategy::Stars),
            "forks" => Ok(LeaderStrategy::Forks),
            other => Err(format!(
                "unknown leader strategy {other:?} (expected mean, stars or forks)"
            )),
        }
    }
}

impl fmt::Display for LeaderStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSummary<F> {
    pub component_id: u32,
    pub size: u64,
    pub leader: ProjectId,
    /// The leader's value of the strategy metric.
    pub leader_score: F,
}

/// One summary per component, in component id order.
pub fn elect_leaders<F: Real>(
    assign: &ComponentAssignment,
    scores: &ScoreTable<F>,
    strategy: LeaderStrategy,
) -> Vec<ClusterSummary<F>> {
    assign
        .groups()
        .into_par_iter()
        .enumerate()
        .map(|(c, members)| {
            let best = members
                .iter()
                .map(|&id| strategy.key(scores, id))
                .max()
                .expect("components are never empty");
            ClusterSummary {
                component_id: c as u32,
                size: members.len() as u64,
                leader: best.project_id,
                leader_score: best.score,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DedupRecord {
    pub source: String,
    pub target: String,
}

/// Maps every non-leader member of a multi-project component to its leader,
/// sorted by source name.
pub fn dedup_records<F: Real>(
    summaries: &[ClusterSummary<F>],
    assign: &ComponentAssignment,
    names: &ProjectNames,
) -> Result<Vec<DedupRecord>> {
    let mut out = Vec::new();
    for (id, c) in assign.iter() {
        let summary = &summaries[c as usize];
        if summary.size < 2 || summary.leader == id {
            continue;
        }
        out.push(DedupRecord {
            source: names.require(id)?.to_owned(),
            target: names.require(summary.leader)?.to_owned(),
        });
    }
    out.sort_unstable();
    Ok(out)
}

/// Dedup sources plus every denoise-removed and blacklisted project.
pub fn noise_names(
    records: &[DedupRecord],
    removed: &[ProjectId],
    blacklisted: &[ProjectId],
    names: &ProjectNames,
) -> Result<BTreeSet<String>> {
    let mut out: BTreeSet<String> = records.iter().map(|r| r.source.clone()).collect();
    for &id in removed.iter().chain(blacklisted) {
        out.insert(names.require(id)?.to_owned());
    }
    Ok(out)
}

/// `source<TAB>target` lines.
pub fn write_dedup_map<W: Write>(mut w: W, records: &[DedupRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}\t{}", r.source, r.target)?;
    }
    w.flush()
}

pub fn write_noise<'a, W: Write>(
    mut w: W,
    names: impl IntoIterator<Item = &'a String>,
) -> std::io::Result<()> {
    for n in names {
        writeln!(w, "{n}")?;
    }
    w.flush()
}

/// Parses a dedup map; malformed lines come back as `(line, text)` rejects.
pub fn read_dedup_map<R: BufRead>(r: R) -> Result<(Vec<DedupRecord>, LineRejects)> {
    let (pairs, rejects) = crate::tsv::read_pairs(r)?;
    let records = pairs
        .into_iter()
        .map(|(source, target)| DedupRecord { source, target })
        .collect();
    Ok((records, rejects))
}

/// `component<TAB>size<TAB>leader<TAB>leader_score`
pub fn write_summaries<W: Write>(
    mut w: W,
    summaries: &[ClusterSummary<f64>],
) -> std::io::Result<()> {
    for s in summaries {
        writeln!(
            w,
            "{}\t{}\t{}\t{:?}",
            s.component_id, s.size, s.leader, s.leader_score
        )?;
    }
    w.flush()
}

pub fn read_summaries<R: BufRead>(r: R) -> Result<Vec<ClusterSummary<f64>>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let parsed = (|| {
            let [c, size, leader, score] = cols[..] else {
                return None;
            };
            Some(ClusterSummary {
                component_id: c.parse().ok()?,
                size: size.parse().ok()?,
                leader: leader.parse().ok()?,
                leader_score: score.parse().ok()?,
            })
        })();
        out.push(parsed.ok_or_else(|| Error::Parse {
            path: "clusters.tsv".into(),
            line: i as u64 + 1,
            message: "expected component, size, leader, score".into(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{MetricVector, ScoredProject};

    fn scored(id: u64, mean: f64, stars: f64) -> ScoredProject<f64> {
        ScoredProject {
            project_id: ProjectId(id),
            mean_metric: mean,
            metrics: MetricVector {
                stars,
                ..MetricVector::default()
            },
        }
    }

    fn names(n: u64) -> ProjectNames {
        (1..=n).map(|i| (ProjectId(i), format!("u{i}/p"))).collect()
    }

    fn assign(groups: &[&[u64]]) -> ComponentAssignment {
        ComponentAssignment::from_labels(
            groups
                .iter()
                .enumerate()
                .flat_map(|(c, g)| g.iter().map(move |&id| (ProjectId(id), c as u64))),
        )
    }

    #[test]
    fn highest_mean_leads() {
        let scores: ScoreTable<f64> = [scored(1, 5.0, 0.0), scored(2, 3.0, 0.0)]
            .into_iter()
            .collect();
        let a = assign(&[&[1, 2], &[3]]);
        let s = elect_leaders(&a, &scores, LeaderStrategy::Mean);
        assert_eq!(s[0].leader, ProjectId(1));
        assert_eq!(s[0].size, 2);
        assert_eq!(s[1].leader, ProjectId(3));
        assert_eq!(s[1].size, 1);
    }

    #[test]
    fn strategies_can_disagree() {
        let scores: ScoreTable<f64> = [scored(1, 5.0, 1.0), scored(2, 3.0, 9.0)]
            .into_iter()
            .collect();
        let a = assign(&[&[1, 2]]);
        assert_eq!(
            elect_leaders(&a, &scores, LeaderStrategy::Mean)[0].leader,
            ProjectId(1)
        );
        let by_stars = elect_leaders(&a, &scores, LeaderStrategy::Stars);
        assert_eq!(by_stars[0].leader, ProjectId(2));
        assert_eq!(by_stars[0].leader_score, 9.0);
    }

    #[test]
    fn map_lists_non_leaders_sorted() {
        let scores: ScoreTable<f64> = [scored(2, 5.0, 0.0)].into_iter().collect();
        let a = assign(&[&[1, 2, 3], &[4]]);
        let s = elect_leaders(&a, &scores, LeaderStrategy::Mean);
        let recs = dedup_records(&s, &a, &names(4)).unwrap();
        let mut buf = Vec::new();
        write_dedup_map(&mut buf, &recs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "u1/p\tu2/p\nu3/p\tu2/p\n");
    }

    #[test]
    fn all_singletons_give_empty_map() {
        let scores = ScoreTable::<f64>::new();
        let a = assign(&[&[1], &[2]]);
        let s = elect_leaders(&a, &scores, LeaderStrategy::Mean);
        assert!(dedup_records(&s, &a, &names(2)).unwrap().is_empty());
    }

    #[test]
    fn missing_name_is_fatal() {
        let scores = ScoreTable::<f64>::new();
        let a = assign(&[&[1, 7]]);
        let s = elect_leaders(&a, &scores, LeaderStrategy::Mean);
        assert!(matches!(
            dedup_records(&s, &a, &names(2)),
            Err(Error::MissingName(ProjectId(7)))
        ));
    }

    #[test]
    fn noise_is_superset_of_sources() {
        let recs = vec![DedupRecord {
            source: "u2/p".into(),
            target: "u1/p".into(),
        }];
        let noise = noise_names(&recs, &[ProjectId(3)], &[ProjectId(4)], &names(4)).unwrap();
        let v: Vec<&str> = noise.iter().map(String::as_str).collect();
        assert_eq!(v, vec!["u2/p", "u3/p", "u4/p"]);
    }

    #[test]
    fn summaries_round_trip() {
        let s = vec![ClusterSummary {
            component_id: 0,
            size: 3,
            leader: ProjectId(8),
            leader_score: 0.1 + 0.2,
        }];
        let mut buf = Vec::new();
        write_summaries(&mut buf, &s).unwrap();
        assert_eq!(read_summaries(&buf[..]).unwrap(), s);
    }
}
