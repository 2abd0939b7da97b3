//! Immutable view of a finished run, loaded once from its work directory.

use std::collections::HashMap;
use std::path::Path;

use repodedup_core::components::{connected_components, ComponentAssignment};
use repodedup_core::dedup_output::{elect_leaders, ClusterSummary, LeaderStrategy};
use repodedup_core::graph::{read_graph, DedupGraph, DenoiseParams};
use repodedup_core::ingest::ProjectNames;
use repodedup_core::pipeline::{self, files};
use repodedup_core::scoring::read_metrics;
use repodedup_core::{tsv, ProjectId, ScoreTable64};

use crate::InspectError;

#[derive(Debug)]
pub struct RunSnapshot {
    pub names: ProjectNames,
    pub scores: ScoreTable64,
    /// Graph after blacklist removal and denoising.
    pub graph: DedupGraph,
    pub components: ComponentAssignment,
    pub summaries: Vec<ClusterSummary<f64>>,
    pub groups: Vec<Vec<ProjectId>>,
    pub denoise: DenoiseParams,
    pub strategy: LeaderStrategy,
    /// Blacklist text the run was built with.
    pub base_blacklist: String,
}

fn metadata(path: &Path) -> Result<HashMap<String, String>, InspectError> {
    Ok(tsv::read_lines(path)?
        .into_iter()
        .filter_map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        })
        .collect())
}

fn field<T: std::str::FromStr>(
    meta: &HashMap<String, String>,
    key: &str,
) -> Result<T, InspectError> {
    meta.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| InspectError::Metadata(format!("missing or invalid {key}")))
}

impl RunSnapshot {
    /// Loads the checkpoints of a completed pipeline run.
    pub fn load(work_dir: &Path) -> Result<Self, InspectError> {
        let meta = metadata(&work_dir.join(files::METADATA))?;
        let delta: f64 = field(&meta, "delta")?;
        let denoise = DenoiseParams {
            lo: field(&meta, "denoise_lo")?,
            hi: field(&meta, "denoise_hi")?,
            variant: field(&meta, "denoise_variant")?,
        };
        let strategy: LeaderStrategy = field(&meta, "strategy")?;
        let names = pipeline::load_names(work_dir)?;
        let scores = read_metrics(tsv::open(&work_dir.join(files::METRICS))?, delta)?;
        let graph = read_graph(tsv::open(&work_dir.join(files::DENOISED))?)?;
        let blacklist_path = work_dir.join(files::BLACKLIST);
        let base_blacklist =
            std::fs::read_to_string(&blacklist_path).map_err(|source| InspectError::Io {
                path: blacklist_path,
                source,
            })?;
        Ok(Self::from_parts(
            names,
            scores,
            graph,
            denoise,
            strategy,
            base_blacklist,
        ))
    }

    /// Builds a snapshot from in-memory parts, recomputing components and
    /// leaders from `graph`.
    pub fn from_parts(
        names: ProjectNames,
        scores: ScoreTable64,
        graph: DedupGraph,
        denoise: DenoiseParams,
        strategy: LeaderStrategy,
        base_blacklist: String,
    ) -> Self {
        let components = connected_components(&graph);
        let summaries = elect_leaders(&components, &scores, strategy);
        let groups = components.groups();
        RunSnapshot {
            names,
            scores,
            graph,
            components,
            summaries,
            groups,
            denoise,
            strategy,
            base_blacklist,
        }
    }

    pub fn name(&self, id: ProjectId) -> String {
        self.names
            .name(id)
            .map_or_else(|| id.to_string(), str::to_owned)
    }

    pub fn score(&self, id: ProjectId) -> f64 {
        self.scores.mean(id)
    }

    pub fn members(&self, component: u32) -> Option<&[ProjectId]> {
        self.groups.get(component as usize).map(Vec::as_slice)
    }
}
