//! The undirected project graph: fork links merged with shared-commit links.
//!
//! Nodes are stored sorted by project id with a compressed adjacency list,
//! so neighbor iteration is always in ascending id order and every
//! traversal is deterministic.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::blacklist::BlacklistRuleSet;
use crate::commit_sharing::SharedEdge;
use crate::ingest::ProjectNames;
use crate::{Error, ProjectId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Fork,
    SharedCommit,
    Both,
}

impl Provenance {
    pub fn merge(self, other: Provenance) -> Provenance {
        if self == other {
            self
        } else {
            Provenance::Both
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Fork => "fork",
            Provenance::SharedCommit => "shared_commit",
            Provenance::Both => "both",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fork" => Ok(Provenance::Fork),
            "shared_commit" => Ok(Provenance::SharedCommit),
            "both" => Ok(Provenance::Both),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// Undirected edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub a: ProjectId,
    pub b: ProjectId,
    pub provenance: Provenance,
}

impl Edge {
    /// Normalizes endpoint order; `None` for self-loops.
    pub fn new(x: ProjectId, y: ProjectId, provenance: Provenance) -> Option<Edge> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(Edge {
                a: x,
                b: y,
                provenance,
            }),
            std::cmp::Ordering::Greater => Some(Edge {
                a: y,
                b: x,
                provenance,
            }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupGraph {
    nodes: Vec<ProjectId>,
    offsets: Vec<usize>,
    adjacency: Vec<(u32, Provenance)>,
}

impl DedupGraph {
    pub fn empty() -> Self {
        DedupGraph {
            nodes: Vec::new(),
            offsets: vec![0],
            adjacency: Vec::new(),
        }
    }

    /// Builds a graph from explicit nodes plus edges. Edge endpoints are
    /// added as nodes, self-loops dropped, parallel edges merged.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = ProjectId>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Self {
        let mut edges: Vec<Edge> = edges.into_iter().filter(|e| e.a != e.b).collect();
        edges.sort_unstable_by_key(|e| (e.a, e.b));
        let mut merged: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            match merged.last_mut() {
                Some(last) if last.a == e.a && last.b == e.b => {
                    last.provenance = last.provenance.merge(e.provenance)
                }
                _ => merged.push(e),
            }
        }

        let mut ids: Vec<ProjectId> = nodes.into_iter().collect();
        ids.extend(merged.iter().flat_map(|e| [e.a, e.b]));
        ids.sort_unstable();
        ids.dedup();
        assert!(
            ids.len() <= u32::MAX as usize,
            "graph exceeds u32 node indices"
        );

        let index = |id: ProjectId| ids.binary_search(&id).expect("endpoint registered") as u32;
        let mut degree = vec![0usize; ids.len()];
        let mut halves: Vec<(u32, u32, Provenance)> = Vec::with_capacity(merged.len() * 2);
        for e in &merged {
            let (ia, ib) = (index(e.a), index(e.b));
            degree[ia as usize] += 1;
            degree[ib as usize] += 1;
            halves.push((ia, ib, e.provenance));
            halves.push((ib, ia, e.provenance));
        }
        halves.sort_unstable_by_key(|&(from, to, _)| (from, to));

        let mut offsets = Vec::with_capacity(ids.len() + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let adjacency = halves.into_iter().map(|(_, to, p)| (to, p)).collect();
        DedupGraph {
            nodes: ids,
            offsets,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node ids in ascending order.
    pub fn nodes(&self) -> &[ProjectId] {
        &self.nodes
    }

    pub fn contains(&self, id: ProjectId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn index_of(&self, id: ProjectId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn degree(&self, id: ProjectId) -> Option<usize> {
        self.index_of(id).map(|i| self.degree_at(i))
    }

    pub(crate) fn degree_at(&self, idx: usize) -> usize {
        self.offsets[idx + 1] - self.offsets[idx]
    }

    pub(crate) fn neighbors_at(&self, idx: usize) -> &[(u32, Provenance)] {
        &self.adjacency[self.offsets[idx]..self.offsets[idx + 1]]
    }

    /// Neighbors in ascending id order with the provenance of each edge.
    pub fn neighbors(&self, id: ProjectId) -> impl Iterator<Item = (ProjectId, Provenance)> + '_ {
        let slice = match self.index_of(id) {
            Some(i) => self.neighbors_at(i),
            None => &[],
        };
        slice.iter().map(|&(j, p)| (self.nodes[j as usize], p))
    }

    /// Every edge once, sorted by `(a, b)`.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.nodes.len()).flat_map(move |i| {
            self.neighbors_at(i)
                .iter()
                .filter(move |&&(j, _)| (j as usize) > i)
                .map(move |&(j, p)| Edge {
                    a: self.nodes[i],
                    b: self.nodes[j as usize],
                    provenance: p,
                })
        })
    }

    pub fn provenance(&self, x: ProjectId, y: ProjectId) -> Option<Provenance> {
        let i = self.index_of(x)?;
        let j = self.index_of(y)? as u32;
        let adj = self.neighbors_at(i);
        adj.binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|pos| adj[pos].1)
    }

    /// Subgraph on the nodes accepted by `keep`, including nodes left
    /// without edges.
    pub fn induced_subgraph(&self, keep: impl Fn(ProjectId) -> bool) -> DedupGraph {
        let nodes: Vec<ProjectId> = self.nodes.iter().copied().filter(|&n| keep(n)).collect();
        let kept: HashSet<ProjectId> = nodes.iter().copied().collect();
        let edges = self
            .edges()
            .filter(|e| kept.contains(&e.a) && kept.contains(&e.b))
            .collect::<Vec<_>>();
        DedupGraph::from_edges(nodes, edges)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub fork_edges: u64,
    pub shared_edges: u64,
    /// Edges dropped because an endpoint has no project record.
    pub unknown_endpoint_edges: u64,
    /// Edges dropped because an endpoint is blacklisted.
    pub blacklisted_edges: u64,
}

/// Ids of every named project matched by the blacklist, ascending.
pub fn blacklisted_ids(names: &ProjectNames, blacklist: &BlacklistRuleSet) -> BTreeSet<ProjectId> {
    if blacklist.is_empty() {
        return BTreeSet::new();
    }
    names
        .iter()
        .filter(|(_, n)| blacklist.matches(n))
        .map(|(id, _)| id)
        .collect()
}

/// Merges fork links `(child, parent)` and shared-commit edges into one
/// undirected graph, omitting every edge that touches a blacklisted or
/// unnamed project.
pub fn build_graph(
    fork_edges: impl IntoIterator<Item = (ProjectId, ProjectId)>,
    shared: impl IntoIterator<Item = SharedEdge>,
    blacklist: &BlacklistRuleSet,
    names: &ProjectNames,
) -> (DedupGraph, BuildStats) {
    let banned = blacklisted_ids(names, blacklist);
    let mut stats = BuildStats::default();
    let mut edges = Vec::new();
    let mut admit = |x: ProjectId, y: ProjectId, p: Provenance, stats: &mut BuildStats| {
        if !names.contains(x) || !names.contains(y) {
            stats.unknown_endpoint_edges += 1;
        } else if banned.contains(&x) || banned.contains(&y) {
            stats.blacklisted_edges += 1;
        } else if let Some(e) = Edge::new(x, y, p) {
            edges.push(e);
        }
    };
    for (child, parent) in fork_edges {
        stats.fork_edges += 1;
        admit(child, parent, Provenance::Fork, &mut stats);
    }
    for e in shared {
        stats.shared_edges += 1;
        admit(e.attractor, e.sibling, Provenance::SharedCommit, &mut stats);
    }
    (DedupGraph::from_edges([], edges), stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenoiseVariant {
    /// Disconnect a node unless its neighbors' degrees sum to its own.
    #[default]
    NeighborDegree,
    /// Disconnect every node whose degree falls in the window.
    Naive,
}

impl FromStr for DenoiseVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "formula" | "neighbor-degree" => Ok(DenoiseVariant::NeighborDegree),
            "naive" => Ok(DenoiseVariant::Naive),
            other => Err(format!(
                "unknown denoise variant {other:?} (expected formula or naive)"
            )),
        }
    }
}

impl fmt::Display for DenoiseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenoiseVariant::NeighborDegree => "formula",
            DenoiseVariant::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiseParams {
    pub lo: usize,
    pub hi: usize,
    pub variant: DenoiseVariant,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        DenoiseParams {
            lo: 2,
            hi: 5,
            variant: DenoiseVariant::NeighborDegree,
        }
    }
}

/// Removes noisy nodes in one simultaneous pass over the input degrees.
///
/// A node with degree `d` in `[lo, hi]` is kept only if the degrees of its
/// neighbors sum to `d`, meaning it and its neighbors form a component on
/// their own. Removed nodes lose all edges and leave the node set; their
/// former neighbors stay, possibly isolated. Returns the pruned graph and the
/// removed ids in ascending order.
pub fn denoise(g: &DedupGraph, params: DenoiseParams) -> Result<(DedupGraph, Vec<ProjectId>)> {
    if params.lo > params.hi {
        return Err(Error::Config(format!(
            "denoise window [{}, {}] is empty",
            params.lo, params.hi
        )));
    }
    let n = g.node_count();
    let mut removed = vec![false; n];
    for (i, flag) in removed.iter_mut().enumerate() {
        let d = g.degree_at(i);
        if d < params.lo || d > params.hi {
            continue;
        }
        *flag = match params.variant {
            DenoiseVariant::Naive => true,
            DenoiseVariant::NeighborDegree => {
                let s: usize = g
                    .neighbors_at(i)
                    .iter()
                    .map(|&(j, _)| g.degree_at(j as usize))
                    .sum();
                s != d
            }
        };
    }
    let gone: Vec<ProjectId> = (0..n).filter(|&i| removed[i]).map(|i| g.nodes[i]).collect();
    let nodes = (0..n).filter(|&i| !removed[i]).map(|i| g.nodes[i]);
    let edges = g
        .edges()
        .filter(|e| !removed[g.index_of(e.a).unwrap()] && !removed[g.index_of(e.b).unwrap()]);
    let pruned = DedupGraph::from_edges(nodes.collect::<Vec<_>>(), edges.collect::<Vec<_>>());
    Ok((pruned, gone))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphPath {
    pub nodes: Vec<ProjectId>,
    /// `provenance[i]` labels the edge `nodes[i] -- nodes[i + 1]`.
    pub provenance: Vec<Provenance>,
}

impl GraphPath {
    pub fn hops(&self) -> usize {
        self.provenance.len()
    }
}

/// Minimum-hop path, or `None` when the endpoints are disconnected.
///
/// Among equally short paths, each step goes to the smallest-id neighbor
/// that still lies on a shortest path.
pub fn shortest_path(g: &DedupGraph, from: ProjectId, to: ProjectId) -> Result<Option<GraphPath>> {
    let src = g
        .index_of(from)
        .ok_or_else(|| Error::UnknownProject(from.to_string()))?;
    let dst = g
        .index_of(to)
        .ok_or_else(|| Error::UnknownProject(to.to_string()))?;

    // Distances to the target, explored until the source is settled.
    let mut dist = vec![u32::MAX; g.node_count()];
    dist[dst] = 0;
    let mut queue = VecDeque::from([dst]);
    while let Some(u) = queue.pop_front() {
        if u == src {
            break;
        }
        for &(v, _) in g.neighbors_at(u) {
            let v = v as usize;
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if dist[src] == u32::MAX {
        return Ok(None);
    }

    let mut nodes = vec![from];
    let mut provenance = Vec::new();
    let mut at = src;
    while at != dst {
        let &(next, p) = g
            .neighbors_at(at)
            .iter()
            .find(|&&(v, _)| dist[v as usize] == dist[at] - 1)
            .expect("a closer neighbor exists on a shortest path");
        at = next as usize;
        nodes.push(g.nodes[at]);
        provenance.push(p);
    }
    Ok(Some(GraphPath { nodes, provenance }))
}

/// Graph checkpoint: `a<TAB>b<TAB>provenance` per edge, then a bare id per
/// node without edges.
pub fn write_graph<W: Write>(mut w: W, g: &DedupGraph) -> std::io::Result<()> {
    for e in g.edges() {
        writeln!(w, "{}\t{}\t{}", e.a, e.b, e.provenance)?;
    }
    for (i, id) in g.nodes.iter().enumerate() {
        if g.degree_at(i) == 0 {
            writeln!(w, "{id}")?;
        }
    }
    w.flush()
}

pub fn read_graph<R: BufRead>(r: R) -> Result<DedupGraph> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: "graph checkpoint".into(),
            line: i as u64 + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        match cols.as_slice() {
            [id] => nodes.push(id.parse().map_err(|e| bad(format!("node id: {e}")))?),
            [a, b, p] => {
                let a: ProjectId = a.parse().map_err(|e| bad(format!("edge end: {e}")))?;
                let b: ProjectId = b.parse().map_err(|e| bad(format!("edge end: {e}")))?;
                let p: Provenance = p.parse().map_err(bad)?;
                edges.extend(Edge::new(a, b, p));
            }
            _ => return Err(bad("expected an id or an edge line".into())),
        }
    }
    Ok(DedupGraph::from_edges(nodes, edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u64) -> ProjectId {
        ProjectId(n)
    }

    fn graph(edges: &[(u64, u64)]) -> DedupGraph {
        DedupGraph::from_edges(
            [],
            edges
                .iter()
                .filter_map(|&(a, b)| Edge::new(id(a), id(b), Provenance::Fork))
                .collect::<Vec<_>>(),
        )
    }

    fn names(list: &[(u64, &str)]) -> ProjectNames {
        list.iter().map(|&(i, n)| (id(i), n.to_owned())).collect()
    }

    #[test]
    fn fork_and_shared_edge_merge_to_both() {
        let names = names(&[(1, "a/a"), (2, "b/b")]);
        let shared = SharedEdge {
            attractor: id(2),
            sibling: id(1),
            shared_count: 1,
        };
        let (g, _) = build_graph([(id(1), id(2))], [shared], &BlacklistRuleSet::new(), &names);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.provenance(id(1), id(2)), Some(Provenance::Both));
    }

    #[test]
    fn blacklisted_suffix_removes_node_and_edges() {
        let names = names(&[(1, "x/x.github.io"), (2, "b/b"), (3, "c/c")]);
        let (rules, _) = BlacklistRuleSet::parse("suffix github.io");
        let (g, stats) = build_graph([(id(2), id(1)), (id(3), id(2))], [], &rules, &names);
        assert!(!g.contains(id(1)));
        assert_eq!(g.edge_count(), 1);
        assert_eq!(stats.blacklisted_edges, 1);
    }

    #[test]
    fn unknown_fork_parent_is_counted() {
        let names = names(&[(1, "a/a")]);
        let (g, stats) = build_graph([(id(1), id(99))], [], &BlacklistRuleSet::new(), &names);
        assert!(g.is_empty());
        assert_eq!(stats.unknown_endpoint_edges, 1);
    }

    #[test]
    fn empty_inputs_give_empty_graph() {
        let (g, _) = build_graph([], [], &BlacklistRuleSet::new(), &ProjectNames::new());
        assert!(g.is_empty());
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn neighbors_are_sorted_and_edges_unique() {
        let g = graph(&[(5, 1), (1, 3), (3, 1), (1, 1), (2, 1)]);
        let ns: Vec<u64> = g.neighbors(id(1)).map(|(n, _)| n.0).collect();
        assert_eq!(ns, vec![2, 3, 5]);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn denoise_keeps_isolated_path_center() {
        let g = graph(&[(1, 2), (2, 3)]);
        let (out, removed) = denoise(&g, DenoiseParams::default()).unwrap();
        assert!(removed.is_empty());
        assert_eq!(out, g);
    }

    #[test]
    fn denoise_cuts_long_path_interior() {
        let g = graph(&[(1, 2), (2, 3), (3, 4)]);
        let (out, removed) = denoise(&g, DenoiseParams::default()).unwrap();
        assert_eq!(removed, vec![id(2), id(3)]);
        assert_eq!(out.edge_count(), 0);
        assert_eq!(out.nodes(), &[id(1), id(4)]);
    }

    #[test]
    fn denoise_ignores_degrees_outside_window() {
        // Node 10 has degree 6 and bridges two stars.
        let g = graph(&[
            (10, 1),
            (10, 2),
            (10, 3),
            (10, 4),
            (10, 20),
            (10, 30),
            (20, 21),
            (20, 22),
            (20, 23),
            (20, 24),
            (20, 25),
            (30, 31),
            (30, 32),
            (30, 33),
            (30, 34),
            (30, 35),
        ]);
        let (out, removed) = denoise(&g, DenoiseParams::default()).unwrap();
        assert!(removed.is_empty());
        assert!(out.contains(id(10)));
    }

    #[test]
    fn naive_variant_drops_whole_window() {
        let g = graph(&[(1, 2), (2, 3)]);
        let params = DenoiseParams {
            variant: DenoiseVariant::Naive,
            ..DenoiseParams::default()
        };
        let (_, removed) = denoise(&g, params).unwrap();
        assert_eq!(removed, vec![id(2)]);
    }

    #[test]
    fn denoise_rejects_empty_window() {
        let params = DenoiseParams {
            lo: 4,
            hi: 3,
            ..DenoiseParams::default()
        };
        assert!(denoise(&DedupGraph::empty(), params).is_err());
    }

    #[test]
    fn path_on_a_line() {
        let g = graph(&[(1, 2), (2, 3)]);
        let p = shortest_path(&g, id(1), id(3)).unwrap().unwrap();
        assert_eq!(p.nodes, vec![id(1), id(2), id(3)]);
        assert_eq!(p.provenance, vec![Provenance::Fork; 2]);
    }

    #[test]
    fn disconnected_pair_has_no_path() {
        let g = graph(&[(1, 2), (3, 4)]);
        assert_eq!(shortest_path(&g, id(1), id(4)).unwrap(), None);
    }

    #[test]
    fn diamond_prefers_smaller_intermediate() {
        // A=1, B=3, C=2, D=4: both A-B-D and A-C-D are two hops; C < B.
        let g = graph(&[(1, 3), (3, 4), (1, 2), (2, 4)]);
        let p = shortest_path(&g, id(1), id(4)).unwrap().unwrap();
        assert_eq!(p.nodes, vec![id(1), id(2), id(4)]);
    }

    #[test]
    fn unknown_endpoint_is_an_error() {
        let g = graph(&[(1, 2)]);
        assert!(matches!(
            shortest_path(&g, id(1), id(9)),
            Err(Error::UnknownProject(_))
        ));
    }

    #[test]
    fn trivial_path_to_self() {
        let g = graph(&[(1, 2)]);
        let p = shortest_path(&g, id(2), id(2)).unwrap().unwrap();
        assert_eq!(p.nodes, vec![id(2)]);
        assert_eq!(p.hops(), 0);
    }

    #[test]
    fn checkpoint_round_trip_keeps_isolated_nodes() {
        let g = DedupGraph::from_edges(
            [id(9)],
            [Edge::new(id(1), id(2), Provenance::SharedCommit).unwrap()],
        );
        let mut buf = Vec::new();
        write_graph(&mut buf, &g).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "1\t2\tshared_commit\n9\n"
        );
        assert_eq!(read_graph(&buf[..]).unwrap(), g);
    }

    #[test]
    fn induced_subgraph_keeps_isolated_members() {
        let g = graph(&[(1, 2), (2, 3)]);
        let sub = g.induced_subgraph(|n| n != id(2));
        assert_eq!(sub.nodes(), &[id(1), id(3)]);
        assert_eq!(sub.edge_count(), 0);
    }
}
