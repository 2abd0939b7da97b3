//! Studies run on finished dedup maps: cleaning an external project list,
//! comparing two maps, and commit-count percentiles.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::dedup_output::DedupRecord;
use crate::{Error, Result};

pub const DEFAULT_PERCENTILE_STEPS: [f64; 8] = [10.0, 25.0, 50.0, 60.0, 75.0, 90.0, 95.0, 99.0];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExternalDedup {
    /// Surviving names in first-seen order, remapped names replaced by
    /// their targets.
    pub kept: Vec<String>,
    pub remapped: Vec<(String, String)>,
    pub dropped_as_noise: Vec<String>,
    /// Entries that collapsed onto an already kept name.
    pub duplicates: u64,
}

/// Applies a dedup map and noise set to an external list of names. Map
/// sources are replaced by their target, other noise entries are dropped,
/// everything else is kept as is.
pub fn dedup_external_list<S: AsRef<str>>(
    projects: &[S],
    map: &HashMap<String, String>,
    noise: &HashSet<String>,
) -> ExternalDedup {
    let mut out = ExternalDedup::default();
    let mut seen: HashSet<String> = HashSet::new();
    for name in projects {
        let name = name.as_ref();
        let survivor = if let Some(target) = map.get(name) {
            out.remapped.push((name.to_owned(), target.clone()));
            target.clone()
        } else if noise.contains(name) {
            out.dropped_as_noise.push(name.to_owned());
            continue;
        } else {
            name.to_owned()
        };
        if seen.insert(survivor.clone()) {
            out.kept.push(survivor);
        } else {
            out.duplicates += 1;
        }
    }
    out
}

pub fn map_index(records: &[DedupRecord]) -> HashMap<String, String> {
    records
        .iter()
        .map(|r| (r.source.clone(), r.target.clone()))
        .collect()
}

/// Table statistics of one dedup map.
///
/// Cluster size is the number of sources mapped to a target, so the
/// average equals `repositories / independent_projects`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub repositories: u64,
    pub independent_projects: u64,
    pub largest_cluster: u64,
    pub avg_cluster_size: f64,
    pub cluster_size_stddev: f64,
    /// Names of the external list that the map deduplicates.
    pub external_duplicates: Option<u64>,
}

pub fn dataset_stats<S: AsRef<str>>(
    records: &[DedupRecord],
    external: Option<&[S]>,
) -> DatasetStats {
    let mut multiplicity: BTreeMap<&str, u64> = BTreeMap::new();
    for r in records {
        *multiplicity.entry(r.target.as_str()).or_default() += 1;
    }
    let k = multiplicity.len() as u64;
    let total: u64 = multiplicity.values().sum();
    let (avg, stddev) = if k == 0 {
        (0.0, 0.0)
    } else {
        let mean = total as f64 / k as f64;
        let var = multiplicity
            .values()
            .map(|&m| (m as f64 - mean).powi(2))
            .sum::<f64>()
            / k as f64;
        (mean, var.sqrt())
    };
    let external_duplicates = external.map(|list| {
        let sources: HashSet<&str> = records.iter().map(|r| r.source.as_str()).collect();
        list.iter().filter(|n| sources.contains(n.as_ref())).count() as u64
    });
    DatasetStats {
        repositories: records.len() as u64,
        independent_projects: k,
        largest_cluster: multiplicity.values().copied().max().unwrap_or(0),
        avg_cluster_size: avg,
        cluster_size_stddev: stddev,
        external_duplicates,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub a: DatasetStats,
    pub b: DatasetStats,
    /// Sources present in both maps.
    pub source_overlap: u64,
    /// Targets present in both maps.
    pub leader_overlap: u64,
}

pub fn compare_datasets<S: AsRef<str>>(
    a: &[DedupRecord],
    b: &[DedupRecord],
    external: Option<&[S]>,
) -> ComparisonReport {
    let set = |recs: &[DedupRecord], f: fn(&DedupRecord) -> &str| -> HashSet<String> {
        recs.iter().map(|r| f(r).to_owned()).collect()
    };
    let overlap = |x: &HashSet<String>, y: &HashSet<String>| x.intersection(y).count() as u64;
    ComparisonReport {
        a: dataset_stats(a, external),
        b: dataset_stats(b, external),
        source_overlap: overlap(&set(a, |r| &r.source), &set(b, |r| &r.source)),
        leader_overlap: overlap(&set(a, |r| &r.target), &set(b, |r| &r.target)),
    }
}

impl ComparisonReport {
    fn rows(&self) -> Vec<(&'static str, String, String)> {
        let ext = |s: &DatasetStats| {
            s.external_duplicates
                .map_or("-".to_owned(), |n| n.to_string())
        };
        vec![
            (
                "repositories",
                self.a.repositories.to_string(),
                self.b.repositories.to_string(),
            ),
            (
                "independent_projects",
                self.a.independent_projects.to_string(),
                self.b.independent_projects.to_string(),
            ),
            (
                "largest_cluster",
                self.a.largest_cluster.to_string(),
                self.b.largest_cluster.to_string(),
            ),
            (
                "avg_cluster_size",
                format!("{:.3}", self.a.avg_cluster_size),
                format!("{:.3}", self.b.avg_cluster_size),
            ),
            (
                "cluster_size_stddev",
                format!("{:.3}", self.a.cluster_size_stddev),
                format!("{:.3}", self.b.cluster_size_stddev),
            ),
            ("external_duplicates", ext(&self.a), ext(&self.b)),
        ]
    }

    /// Aligned two-column table followed by the overlap counts.
    pub fn to_table(&self, label_a: &str, label_b: &str) -> String {
        let rows = self.rows();
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let w1 = rows
            .iter()
            .map(|r| r.1.len())
            .chain([label_a.len()])
            .max()
            .unwrap_or(0);
        let w2 = rows
            .iter()
            .map(|r| r.2.len())
            .chain([label_b.len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", "metric", label_a, label_b);
        for (k, a, b) in &rows {
            let _ = writeln!(out, "{k:<w0$}  {a:>w1$}  {b:>w2$}");
        }
        let _ = writeln!(out, "source_overlap: {}", self.source_overlap);
        let _ = writeln!(out, "leader_overlap: {}", self.leader_overlap);
        out
    }

    /// `a.<field>=value` / `b.<field>=value` lines plus the overlaps.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (k, a, b) in self.rows() {
            let _ = writeln!(out, "a.{k}={a}");
            let _ = writeln!(out, "b.{k}={b}");
        }
        let _ = writeln!(out, "source_overlap={}", self.source_overlap);
        let _ = writeln!(out, "leader_overlap={}", self.leader_overlap);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PercentileTable {
    pub rows: Vec<(f64, u64)>,
}

/// Nearest-rank percentiles: the value at rank `ceil(p/100 * N)`, at least
/// one, of the ascending distribution. Only a histogram of distinct counts
/// is kept in memory.
pub fn commit_percentiles(
    counts: impl IntoIterator<Item = u64>,
    steps: &[f64],
) -> Result<PercentileTable> {
    if let Some(p) = steps.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
    }
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    let mut n = 0u64;
    for c in counts {
        *hist.entry(c).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Ok(PercentileTable::default());
    }
    let mut steps: Vec<f64> = steps.to_vec();
    steps.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(steps.len());
    let mut it = hist.iter();
    let (mut value, mut cum) = it.next().map(|(&v, &c)| (v, c)).unwrap();
    for p in steps {
        let rank = ((p / 100.0 * n as f64).ceil() as u64).clamp(1, n);
        while cum < rank {
            let (&v, &c) = it.next().expect("rank within total");
            value = v;
            cum += c;
        }
        rows.push((p, value));
    }
    Ok(PercentileTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: &str, t: &str) -> DedupRecord {
        DedupRecord {
            source: s.into(),
            target: t.into(),
        }
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn remap_drop_keep() {
        let map = map_index(&[rec("b/b", "a/a")]);
        let noise: HashSet<String> = ["b/b".to_owned(), "x/x".to_owned()].into();
        let r = dedup_external_list(&["b/b"], &map, &noise);
        assert_eq!(r.remapped, vec![("b/b".to_owned(), "a/a".to_owned())]);
        assert_eq!(r.kept, strings(&["a/a"]));
        let r = dedup_external_list(&["x/x", "q/q"], &map, &noise);
        assert_eq!(r.dropped_as_noise, strings(&["x/x"]));
        assert_eq!(r.kept, strings(&["q/q"]));
    }

    #[test]
    fn remapped_duplicates_collapse() {
        let map = map_index(&[rec("b/b", "a/a")]);
        let r = dedup_external_list(&["b/b", "a/a"], &map, &HashSet::new());
        assert_eq!(r.kept, strings(&["a/a"]));
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn overlaps_between_maps() {
        let a = [rec("b", "a")];
        let b = [rec("b", "a"), rec("c", "a")];
        let r = compare_datasets::<&str>(&a, &b, None);
        assert_eq!(r.source_overlap, 1);
        assert_eq!(r.leader_overlap, 1);
    }

    #[test]
    fn hand_computed_stats() {
        // Targets: a <- {b, c, d}, e <- {f}.
        let m = [rec("b", "a"), rec("c", "a"), rec("d", "a"), rec("f", "e")];
        let s = dataset_stats(&m, Some(&["c", "a", "f", "z"][..]));
        assert_eq!(s.repositories, 4);
        assert_eq!(s.independent_projects, 2);
        assert_eq!(s.largest_cluster, 3);
        assert_eq!(s.avg_cluster_size, 2.0);
        assert_eq!(s.cluster_size_stddev, 1.0);
        assert_eq!(s.external_duplicates, Some(2));
    }

    #[test]
    fn empty_map_stats_are_zero() {
        let s = dataset_stats::<&str>(&[], None);
        assert_eq!(s.repositories, 0);
        assert_eq!(s.avg_cluster_size, 0.0);
        assert_eq!(s.external_duplicates, None);
    }

    #[test]
    fn report_renders_both_forms() {
        let m = [rec("b", "a")];
        let r = compare_datasets::<&str>(&m, &m, None);
        assert!(r.to_key_values().contains("a.repositories=1\n"));
        assert!(r.to_key_values().ends_with("leader_overlap=1\n"));
        let table = r.to_table("ours", "theirs");
        assert!(table.starts_with("metric"));
        assert!(table.contains("source_overlap: 1"));
    }

    #[test]
    fn nearest_rank_examples() {
        let t = commit_percentiles([3, 1, 5, 2, 4], &[50.0]).unwrap();
        assert_eq!(t.rows, vec![(50.0, 3)]);
        let t = commit_percentiles([7; 9], &DEFAULT_PERCENTILE_STEPS).unwrap();
        assert!(t.rows.iter().all(|&(_, v)| v == 7));
        assert!(commit_percentiles([], &[50.0]).unwrap().rows.is_empty());
        let t = commit_percentiles([1, 2], &[0.0, 100.0]).unwrap();
        assert_eq!(t.rows, vec![(0.0, 1), (100.0, 2)]);
    }

    #[test]
    fn out_of_range_step_rejected() {
        assert!(commit_percentiles([1], &[101.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sort_oracle(counts: &[u64], p: f64) -> u64 {
            let mut v = counts.to_vec();
            v.sort_unstable();
            let rank = ((p / 100.0 * v.len() as f64).ceil() as usize).max(1);
            v[rank - 1]
        }

        fn map() -> impl Strategy<Value = Vec<DedupRecord>> {
            prop::collection::btree_map(20u32..60, 0u32..20, 0..40).prop_map(|m| {
                m.into_iter()
                    .map(|(s, t)| rec(&format!("s{s}"), &format!("t{t}")))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn percentiles_match_sort(counts in prop::collection::vec(0u64..1000, 1..500)) {
                let t = commit_percentiles(counts.iter().copied(), &DEFAULT_PERCENTILE_STEPS).unwrap();
                for &(p, v) in &t.rows {
                    prop_assert_eq!(v, sort_oracle(&counts, p));
                }
                prop_assert!(t.rows.windows(2).all(|w| w[0].1 <= w[1].1));
            }

            #[test]
            fn self_comparison_overlaps_equal_totals(m in map()) {
                let r = compare_datasets::<&str>(&m, &m, None);
                prop_assert_eq!(r.source_overlap, r.a.repositories);
                prop_assert_eq!(r.leader_overlap, r.a.independent_projects);
                prop_assert_eq!(&r.a, &r.b);
            }

            #[test]
            fn stats_respect_bounds(m in map()) {
                let s = dataset_stats::<&str>(&m, None);
                prop_assert!(s.independent_projects <= s.repositories);
                prop_assert!(s.largest_cluster <= s.repositories);
            }

            #[test]
            fn external_output_avoids_noise(
                list in prop::collection::vec(0u32..30, 0..40),
                noisy in prop::collection::btree_set(0u32..30, 0..10),
            ) {
                let names: Vec<String> = list.iter().map(|i| format!("n{i}")).collect();
                let map: HashMap<String, String> =
                    (0..10).map(|i| (format!("n{i}"), format!("n{}", i + 100))).collect();
                let mut noise: HashSet<String> = noisy.iter().map(|i| format!("n{i}")).collect();
                noise.extend(map.keys().cloned());
                let r = dedup_external_list(&names, &map, &noise);
                prop_assert!(r.kept.iter().all(|k| !noise.contains(k)));
            }
        }
    }
}
