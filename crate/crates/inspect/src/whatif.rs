//! Re-clustering preview for one component under staged rules.

use std::collections::HashSet;

use repodedup_core::blacklist::BlacklistRuleSet;
use repodedup_core::components::connected_components;
use repodedup_core::dedup_output::elect_leaders;
use repodedup_core::graph::denoise;
use repodedup_core::ProjectId;
use serde::Serialize;

use crate::{InspectError, RunSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultingComponent {
    pub size: u64,
    pub leader: String,
    pub leader_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhatIfResult {
    pub affected_component: u32,
    /// The preview only reclusters the component's own subgraph.
    pub scope: &'static str,
    pub original_size: u64,
    /// Largest first, ties by leader name.
    pub resulting_components: Vec<ResultingComponent>,
    /// Projects matched by staged rules or dropped by the repeated denoise,
    /// sorted by name.
    pub removed_nodes: Vec<String>,
    pub removed_by_rules: u64,
    pub removed_by_denoise: u64,
}

/// Removes staged-rule matches from the component, then repeats denoise
/// and component search on what is left. When no staged rule touches the
/// component it is returned unchanged.
pub fn what_if(
    snap: &RunSnapshot,
    component: u32,
    staged: &BlacklistRuleSet,
) -> Result<WhatIfResult, InspectError> {
    let members = snap
        .members(component)
        .ok_or(InspectError::UnknownComponent(component))?;
    let summary = &snap.summaries[component as usize];
    let banned: HashSet<ProjectId> = members
        .iter()
        .copied()
        .filter(|&id| snap.names.name(id).is_some_and(|n| staged.matches(n)))
        .collect();

    let mut result = WhatIfResult {
        affected_component: component,
        scope: "induced_subgraph",
        original_size: members.len() as u64,
        resulting_components: Vec::new(),
        removed_nodes: Vec::new(),
        removed_by_rules: banned.len() as u64,
        removed_by_denoise: 0,
    };
    if banned.is_empty() {
        result.resulting_components.push(ResultingComponent {
            size: summary.size,
            leader: snap.name(summary.leader),
            leader_score: summary.leader_score,
        });
        return Ok(result);
    }

    let keep: HashSet<ProjectId> = members
        .iter()
        .copied()
        .filter(|id| !banned.contains(id))
        .collect();
    let sub = snap.graph.induced_subgraph(|id| keep.contains(&id));
    let (pruned, denoised) = denoise(&sub, snap.denoise)?;
    let assign = connected_components(&pruned);
    let mut parts: Vec<ResultingComponent> = elect_leaders(&assign, &snap.scores, snap.strategy)
        .into_iter()
        .map(|s| ResultingComponent {
            size: s.size,
            leader: snap.name(s.leader),
            leader_score: s.leader_score,
        })
        .collect();
    parts.sort_by(|a, b| b.size.cmp(&a.size).then_with(|| a.leader.cmp(&b.leader)));

    let mut removed: Vec<String> = banned
        .iter()
        .chain(denoised.iter())
        .map(|&id| snap.name(id))
        .collect();
    removed.sort();
    result.removed_by_denoise = denoised.len() as u64;
    result.resulting_components = parts;
    result.removed_nodes = removed;
    Ok(result)
}
