//! Connected components by union-find.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::graph::DedupGraph;
use crate::{Error, ProjectId, Result};

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Project to component mapping. Component ids are dense and numbered in
/// order of each component's smallest member id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComponentAssignment {
    nodes: Vec<ProjectId>,
    component: Vec<u32>,
    sizes: Vec<u64>,
}

impl ComponentAssignment {
    /// Builds an assignment from arbitrary `(project, label)` pairs,
    /// renumbering labels by smallest member.
    pub fn from_labels(pairs: impl IntoIterator<Item = (ProjectId, u64)>) -> Self {
        let mut pairs: Vec<(ProjectId, u64)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        pairs.dedup_by_key(|p| p.0);
        let mut renumber: BTreeMap<u64, u32> = BTreeMap::new();
        let mut sizes = Vec::new();
        let mut nodes = Vec::with_capacity(pairs.len());
        let mut component = Vec::with_capacity(pairs.len());
        for (id, label) in pairs {
            let next = renumber.len() as u32;
            let c = *renumber.entry(label).or_insert(next);
            if c as usize == sizes.len() {
                sizes.push(0);
            }
            sizes[c as usize] += 1;
            nodes.push(id);
            component.push(c);
        }
        ComponentAssignment {
            nodes,
            component,
            sizes,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn component_of(&self, id: ProjectId) -> Option<u32> {
        self.nodes
            .binary_search(&id)
            .ok()
            .map(|i| self.component[i])
    }

    pub fn size(&self, component: u32) -> Option<u64> {
        self.sizes.get(component as usize).copied()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    /// `(project, component)` in ascending project order.
    pub fn iter(&self) -> impl Iterator<Item = (ProjectId, u32)> + '_ {
        self.nodes
            .iter()
            .copied()
            .zip(self.component.iter().copied())
    }

    /// Members of every component, indexed by component id, each ascending.
    pub fn groups(&self) -> Vec<Vec<ProjectId>> {
        let mut groups: Vec<Vec<ProjectId>> = self
            .sizes
            .iter()
            .map(|&s| Vec::with_capacity(s as usize))
            .collect();
        for (id, c) in self.iter() {
            groups[c as usize].push(id);
        }
        groups
    }
}

pub fn connected_components(g: &DedupGraph) -> ComponentAssignment {
    let n = g.node_count();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for &(j, _) in g.neighbors_at(i) {
            if (j as usize) > i {
                ds.union(i, j as usize);
            }
        }
    }
    // Nodes are ascending, so the first visit of each root is its smallest member.
    let mut label = vec![u32::MAX; n];
    let mut sizes = Vec::new();
    let mut component = Vec::with_capacity(n);
    for i in 0..n {
        let root = ds.find(i);
        if label[root] == u32::MAX {
            label[root] = sizes.len() as u32;
            sizes.push(0);
        }
        sizes[label[root] as usize] += 1;
        component.push(label[root]);
    }
    ComponentAssignment {
        nodes: g.nodes().to_vec(),
        component,
        sizes,
    }
}

/// `project_id<TAB>component_id` lines in project order.
pub fn write_components<W: Write>(mut w: W, a: &ComponentAssignment) -> std::io::Result<()> {
    for (id, c) in a.iter() {
        writeln!(w, "{id}\t{c}")?;
    }
    w.flush()
}

pub fn read_components<R: BufRead>(r: R) -> Result<ComponentAssignment> {
    let mut pairs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parsed = line
            .split_once('\t')
            .and_then(|(a, b)| Some((a.parse::<ProjectId>().ok()?, b.parse::<u64>().ok()?)));
        match parsed {
            Some(p) => pairs.push(p),
            None => {
                return Err(Error::Parse {
                    path: "components.tsv".into(),
                    line: i as u64 + 1,
                    message: "expected project_id<TAB>component_id".into(),
                })
            }
        }
    }
    Ok(ComponentAssignment::from_labels(pairs))
}
