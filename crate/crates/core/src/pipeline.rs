//! Stage orchestration with file checkpoints in the work directory.
//!
//! Each stage reads the checkpoints of earlier stages and writes its own,
//! so a run can resume from any stage. `manifest.txt` records digests of
//! the inputs; resuming past a stage whose inputs changed is refused.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use sha2::{Digest, Sha256};

use crate::blacklist::{hex_digest, BlacklistRuleSet, DEFAULT_BLACKLIST};
use crate::commit_sharing::{
    emit_shared_edges, read_shared_edges, write_shared_edges, EmitOptions,
};
use crate::components::{connected_components, read_components, write_components};
use crate::config::{PipelineConfig, Severity};
use crate::dedup_output::{
    dedup_records, elect_leaders, noise_names, read_summaries, write_dedup_map, write_noise,
    write_summaries,
};
use crate::extsort::{read_sorted_memberships, sort_memberships, SortedFormat};
use crate::graph::{blacklisted_ids, build_graph, denoise, read_graph, write_graph};
use crate::ingest::{self, EventKind, ProjectNames, RejectLog};
use crate::scoring::{read_metrics, score_all, write_metrics, write_scores_tsv};
use crate::{tsv, Error, Result};

/// Checkpoint and deliverable file names inside the work directory.
pub mod files {
    pub const MANIFEST: &str = "manifest.txt";
    pub const PROJECTS: &str = "projects.tsv";
    pub const EVENTS: &str = "events.tsv";
    pub const REJECTS: &str = "rejects.log";
    pub const SORT_REJECTS: &str = "sort_rejects.log";
    pub const METRICS: &str = "metrics.tsv";
    pub const SCORES: &str = "scores.tsv";
    pub const SORTED: &str = "memberships.sorted.bin";
    pub const SHARED_EDGES: &str = "shared_edges.tsv";
    pub const GRAPH: &str = "graph.tsv";
    pub const BLACKLIST: &str = "blacklist.txt";
    pub const BLACKLISTED: &str = "blacklisted.txt";
    pub const DENOISED: &str = "denoised.tsv";
    pub const REMOVED: &str = "removed.txt";
    pub const COMPONENTS: &str = "components.tsv";
    pub const CLUSTERS: &str = "clusters.tsv";
    pub const DEDUP_MAP: &str = "deduplicate_names";
    pub const NOISE: &str = "forks_clones_noise_names";
    pub const METADATA: &str = "run_metadata.txt";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Score,
    Sort,
    SharedEdges,
    Graph,
    Denoise,
    Components,
    Leaders,
    Outputs,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Score,
        Stage::Sort,
        Stage::SharedEdges,
        Stage::Graph,
        Stage::Denoise,
        Stage::Components,
        Stage::Leaders,
        Stage::Outputs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Score => "score",
            Stage::Sort => "sort",
            Stage::SharedEdges => "shared-edges",
            Stage::Graph => "graph",
            Stage::Denoise => "denoise",
            Stage::Components => "components",
            Stage::Leaders => "leaders",
            Stage::Outputs => "outputs",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s || st.as_str().replace('-', "_") == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Stage::ALL.iter().map(|s| s.as_str()).collect();
                format!("unknown stage {s:?} (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub from: Option<Stage>,
    pub to: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: Stage,
    /// `(counter, value)` pairs describing the stage's work.
    pub counters: Vec<(&'static str, u64)>,
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.stage)?;
        for (k, v) in &self.counters {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub work_dir: PathBuf,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    dir: &'a Path,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn names(&self) -> Result<ProjectNames> {
        Ok(tsv::read_projects(&self.path(files::PROJECTS))?
            .into_iter()
            .map(|p| (p.project_id, p.name))
            .collect())
    }
}

/// Runs the configured stages in order.
pub fn run(cfg: &PipelineConfig, opts: RunOptions) -> Result<RunReport> {
    let problems: Vec<String> = cfg
        .validate()
        .into_iter()
        .filter(|f| f.severity == Severity::Error)
        .map(|f| f.to_string())
        .collect();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let from = opts.from.unwrap_or(Stage::Ingest);
    let to = opts.to.unwrap_or(Stage::Outputs);
    if from > to {
        return Err(Error::Config(format!(
            "--from {from} comes after --to {to}"
        )));
    }
    let dir = cfg.work_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ctx = Ctx { cfg, dir };

    let (blacklist, blacklist_text) = load_blacklist(cfg)?;
    let manifest = Manifest::compute(cfg, &blacklist)?;
    if from > Stage::Ingest {
        let previous = Manifest::read(&ctx.path(files::MANIFEST))?;
        manifest.check_resume(&previous, from)?;
    }
    manifest.write(&ctx.path(files::MANIFEST))?;

    let mut report = RunReport {
        stages: Vec::new(),
        work_dir: dir.to_owned(),
    };
    for stage in Stage::ALL.into_iter().filter(|s| (from..=to).contains(s)) {
        info!("stage {stage} starting");
        let counters = match stage {
            Stage::Ingest => stage_ingest(&ctx),
            Stage::Score => stage_score(&ctx),
            Stage::Sort => stage_sort(&ctx),
            Stage::SharedEdges => stage_shared_edges(&ctx),
            Stage::Graph => stage_graph(&ctx, &blacklist, &blacklist_text),
            Stage::Denoise => stage_denoise(&ctx),
            Stage::Components => stage_components(&ctx),
            Stage::Leaders => stage_leaders(&ctx),
            Stage::Outputs => stage_outputs(&ctx, &blacklist),
        }
        .map_err(|e| Error::Stage {
            stage: stage.as_str(),
            source: Box::new(e),
        })?;
        let r = StageReport { stage, counters };
        info!("{r}");
        report.stages.push(r);
    }
    Ok(report)
}

/// The configured rule file, or the built-in list. Unparsable lines abort.
pub fn load_blacklist(cfg: &PipelineConfig) -> Result<(BlacklistRuleSet, String)> {
    let (text, label) = match &cfg.blacklist {
        Some(p) => (
            fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            p.clone(),
        ),
        None => (
            DEFAULT_BLACKLIST.to_owned(),
            PathBuf::from("<built-in blacklist>"),
        ),
    };
    let (rules, rejects) = BlacklistRuleSet::parse(&text);
    if let Some(r) = rejects.first() {
        return Err(Error::Parse {
            path: label,
            line: r.line as u64,
            message: r.reason.clone(),
        });
    }
    Ok((rules, text))
}

fn stage_ingest(ctx: &Ctx) -> Result<Vec<(&'static str, u64)>> {
    let cfg = ctx.cfg;
    let log_path = ctx.path(files::REJECTS);
    let mut rejects = RejectLog::to_writer(std::io::BufWriter::new(
        File::create(&log_path).map_err(|e| Error::io(&log_path, e))?,
    ));

    let projects_path = cfg.inputs.projects.as_deref().expect("validated");
    let mut seen = HashSet::new();
    let mut projects = Vec::new();
    let mut deleted = 0;
    let mut reader = ingest::read_projects(projects_path, cfg.format, &mut rejects)?;
    while let Some(rec) = reader.next() {
        let rec = rec?;
        if !seen.insert(rec.project_id) {
            reader.reject_current(&format!("duplicate project id {}", rec.project_id))?;
            continue;
        }
        deleted += u64::from(rec.deleted);
        projects.push(rec);
    }
    projects.sort_unstable_by_key(|p| p.project_id);
    tsv::write_projects(&ctx.path(files::PROJECTS), &projects)?;

    let i = &cfg.inputs;
    let tables: BTreeMap<EventKind, PathBuf> = [
        (EventKind::Stars, &i.stars),
        (EventKind::Forks, &i.forks),
        (EventKind::Commits, &i.commits),
        (EventKind::Issues, &i.issues),
        (EventKind::PullRequests, &i.pull_requests),
        (EventKind::LatestCommitTime, &i.latest_commit),
    ]
    .into_iter()
    .filter_map(|(k, p)| p.clone().map(|p| (k, p)))
    .collect();
    let events = ingest::aggregate_event_counts(&tables, cfg.format, &mut rejects)?;
    tsv::write_events(&ctx.path(files::EVENTS), &events)?;
    rejects.flush().map_err(|e| Error::io(&log_path, e))?;
    if rejects.count() > 0 {
        warn!(
            "{} malformed rows rejected, see {}",
            rejects.count(),
            log_path.display()
        );
    }
    Ok(vec![
        ("projects", projects.len() as u64),
        ("deleted", deleted),
        ("event_records", events.len() as u64),
        ("rejects", rejects.count()),
    ])
}

fn stage_score(ctx: &Ctx) -> Result<Vec<(&'static str, u64)>> {
    let cfg = ctx.cfg;
    let projects = tsv::read_projects(&ctx.path(files::PROJECTS))?;
    let events = tsv::read_events(&ctx.path(files::EVENTS))?;
    let (scored, stats) = score_all::<f64, _, _>(
        events,
        projects.iter().map(|p| p.project_id),
        cfg.epoch_seconds(),
        cfg.delta,
    )?;
    if stats.recency_clamped > 0 {
        warn!(
            "{} projects have a latest commit before the epoch {}; recency set to 0",
            stats.recency_clamped, cfg.epoch
        );
    }
    tsv::write_file(&ctx.path(files::METRICS), |w| {
        write_metrics(w, scored.iter().copied())
    })?;
    tsv::write_file(&ctx.path(files::SCORES), |w| {
        write_scores_tsv(w, scored.iter())
    })?;
    Ok(vec![
        ("scored", stats.projects),
        ("recency_clamped", stats.recency_clamped),
    ])
}

fn stage_sort(ctx: &Ctx) -> Result<Vec<(&'static str, u64)>> {
    let cfg = ctx.cfg;
    let log_path = ctx.path(files::SORT_REJECTS);
    let mut rejects = RejectLog::to_writer(std::io::BufWriter::new(
        File::create(&log_path).map_err(|e| Error::io(&log_path, e))?,
    ));
    let stats = sort_memberships(
        cfg.inputs.project_commits.as_deref().expect("validated"),
        cfg.format,
        &ctx.path(files::SORTED),
        cfg.memory_budget,
        cfg.tmp_root(),
        SortedFormat::Binary,
        &mut rejects,
    )?;
    rejects.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(vec![
        ("memberships", stats.input_records),
        ("unique_memberships", stats.output_records),
        ("runs", stats.runs as u64),
        ("merge_passes", stats.merge_passes as u64),
        ("rejects", rejects.count()),
    ])
}

fn stage_shared_edges(ctx: &Ctx) -> Result<Vec<(&'static str, u64)>> {
    let cfg = ctx.cfg;
    let scores = read_metrics(tsv::open(&ctx.path(files::METRICS))?, cfg.delta)?;
    let opts = EmitOptions {
        min_shared: cfg.min_shared,
        group_warn: cfg.group_warn,
    };
    let (edges, stats) = emit_shared_edges(
        read_sorted_memberships(&ctx.path(files::SORTED))?,
        &scores,
        opts,
    )?;
    tsv::write_file(&ctx.path(files::SHARED_EDGES), |w| {
        write_shared_edges(w, &edges)
    })?;
    Ok(vec![
        ("commits", stats.commits),
        ("largest_group", stats.largest_group as u64),
        ("oversized_groups", stats.oversized_groups),
        ("candidate_pairs", stats.candidate_pairs),
        ("edges", edges.len() as u64),
    ])
}

fn stage_graph(
    ctx: &Ctx,
    blacklist: &BlacklistRuleSet,
    text: &str,
) -> Result<Vec<(&'static str, u64)>> {
    let projects = tsv::read_projects(&ctx.path(files::PROJECTS))?;
    let names: ProjectNames = projects
        .iter()
        .map(|p| (p.project_id, p.name.clone()))
        .collect();
    let forks = projects
        .iter()
        .filter_map(|p| p.forked_from.map(|parent| (p.project_id, parent)));
    let shared = read_shared_edges(tsv::open(&ctx.path(files::SHARED_EDGES))?)?;
    let (g, stats) = build_graph(forks, shared, blacklist, &names);
    let banned = blacklisted_ids(&names, blacklist);
    tsv::write_file(&ctx.path(files::GRAPH), |w| write_graph(w, &g))?;
    tsv::write_ids(&ctx.path(files::BLACKLISTED), &banned)?;
    fs::write(ctx.path(files::BLACKLIST), text)
        .map_err(|e| Error::io(ctx.path(files::BLACKLIST), e))?;
    if stats.unknown_endpoint_edges > 0 {
        warn!(
            "{} edges reference unknown projects and were dropped",
            stats.unknown_endpoint_edges
        );
    }
    Ok(vec![
        ("nodes", g.node_count() as u64),
        ("edges", g.edge_count() as u64),
        ("fork_links", stats.fork_edges),
        ("shared_links", stats.shared_edges),
        ("unknown_endpoint_edges", stats.unknown_endpoint_edges),
        ("blacklisted_edges", stats.blacklisted_edges),
        ("blacklisted_projects", banned.len() as u64),
    ])
}

fn stage_denoise(ctx: &Ctx) -> Result<Vec<(&'static str, u64)>> {
    let g = read_graph(tsv::open(&ctx.path(files::GRAPH))?)?;
    let (pruned, removed) = denoise(&g, ctx.cfg.denoise)?;
    tsv::write_file(&ctx.path(files::DENOISED), |w| write_graph(w, &pruned))?;
    tsv::write_ids(&ctx.path(files::REMOVED), &removed)?;
    Ok(vec![
        ("removed", removed.len() as u64),
        ("nodes", pruned.node_count() as u64),
        ("edges", pruned.edge_count() as u64),
    ])
}

fn stage_components(ctx: &Ctx) -> Result<Vec<(&'static str, u64)>> {
    let g = read_graph(tsv::open(&ctx.path(files::DENOISED))?)?;
    let a = connected_components(&g);
    tsv::write_file(&ctx.path(files::COMPONENTS), |w| write_components(w, &a))?;
    Ok(vec![
        ("components", a.component_count() as u64),
        ("largest", a.sizes().iter().copied().max().unwrap_or(0)),
    ])
}

fn stage_leaders(ctx: &Ctx) -> Result<Vec<(&'static str, u64)>> {
    let scores = read_metrics(tsv::open(&ctx.path(files::METRICS))?, ctx.cfg.delta)?;
    let a = read_components(tsv::open(&ctx.path(files::COMPONENTS))?)?;
    let summaries = elect_leaders(&a, &scores, ctx.cfg.strategy);
    tsv::write_file(&ctx.path(files::CLUSTERS), |w| {
        write_summaries(w, &summaries)
    })?;
    Ok(vec![("clusters", summaries.len() as u64)])
}

fn stage_outputs(ctx: &Ctx, blacklist: &BlacklistRuleSet) -> Result<Vec<(&'static str, u64)>> {
    let names = ctx.names()?;
    let a = read_components(tsv::open(&ctx.path(files::COMPONENTS))?)?;
    let summaries = read_summaries(tsv::open(&ctx.path(files::CLUSTERS))?)?;
    let removed = tsv::read_ids(&ctx.path(files::REMOVED))?;
    let banned = tsv::read_ids(&ctx.path(files::BLACKLISTED))?;
    let records = dedup_records(&summaries, &a, &names)?;
    let noise = noise_names(&records, &removed, &banned, &names)?;
    tsv::write_file(&ctx.path(files::DEDUP_MAP), |w| {
        write_dedup_map(w, &records)
    })?;
    tsv::write_file(&ctx.path(files::NOISE), |w| write_noise(w, &noise))?;

    let multi = summaries.iter().filter(|s| s.size >= 2).count() as u64;
    let counters = vec![
        ("components", summaries.len() as u64),
        ("multi_project_clusters", multi),
        ("dedup_records", records.len() as u64),
        ("noise_names", noise.len() as u64),
        ("denoise_removed", removed.len() as u64),
        ("blacklisted", banned.len() as u64),
    ];
    write_metadata(ctx, blacklist, &counters)?;
    Ok(counters)
}

fn write_metadata(ctx: &Ctx, blacklist: &BlacklistRuleSet, counters: &[(&str, u64)]) -> Result<()> {
    let c = ctx.cfg;
    tsv::write_file(&ctx.path(files::METADATA), |w| {
        writeln!(w, "delta = {}", c.delta)?;
        writeln!(w, "recency_unit = days")?;
        writeln!(w, "epoch = {}", c.epoch)?;
        writeln!(w, "min_shared = {}", c.min_shared)?;
        writeln!(w, "denoise_lo = {}", c.denoise.lo)?;
        writeln!(w, "denoise_hi = {}", c.denoise.hi)?;
        writeln!(w, "denoise_variant = {}", c.denoise.variant)?;
        writeln!(w, "strategy = {}", c.strategy)?;
        writeln!(w, "tie_break = project_id ascending")?;
        writeln!(w, "blacklist_rules = {}", blacklist.len())?;
        writeln!(w, "blacklist_digest = {}", blacklist.digest())?;
        writeln!(w, "format = {}", c.format)?;
        for (k, v) in counters {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Manifest {
    inputs: BTreeMap<String, String>,
    blacklist: String,
}

fn file_digest(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    fn compute(cfg: &PipelineConfig, blacklist: &BlacklistRuleSet) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        for (key, path) in cfg.input_list() {
            inputs.insert(key.to_owned(), file_digest(path)?);
        }
        inputs.insert(
            "settings".to_owned(),
            hex_digest(format!("{}|{}|{}", cfg.format, cfg.delta, cfg.epoch).as_bytes()),
        );
        Ok(Manifest {
            inputs,
            blacklist: blacklist.digest(),
        })
    }

    fn read(path: &Path) -> Result<Self> {
        let lines = tsv::read_lines(path).map_err(|_| {
            Error::Config(format!(
                "cannot resume: no checkpoint manifest at {}; run from the first stage",
                path.display()
            ))
        })?;
        let mut m = Manifest::default();
        for line in lines {
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some("input"), Some(k), Some(d)) => {
                    m.inputs.insert(k.to_owned(), d.to_owned());
                }
                (Some("blacklist"), Some(d), None) => m.blacklist = d.to_owned(),
                _ => {}
            }
        }
        Ok(m)
    }

    fn write(&self, path: &Path) -> Result<()> {
        tsv::write_file(path, |w| {
            for (k, d) in &self.inputs {
                writeln!(w, "input\t{k}\t{d}")?;
            }
            writeln!(w, "blacklist\t{}", self.blacklist)
        })
    }

    fn check_resume(&self, previous: &Manifest, from: Stage) -> Result<()> {
        if self.inputs != previous.inputs {
            let changed: BTreeSet<&String> = self
                .inputs
                .keys()
                .chain(previous.inputs.keys())
                .filter(|k| self.inputs.get(*k) != previous.inputs.get(*k))
                .collect();
            return Err(Error::Config(format!(
                "inputs changed since the checkpoints were written ({}); rerun from ingest",
                changed.into_iter().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        if from > Stage::Graph && self.blacklist != previous.blacklist {
            return Err(Error::Config(
                "blacklist changed since the checkpoints were written; rerun from graph".into(),
            ));
        }
        Ok(())
    }
}

/// Projects named in the checkpoint, for tools working on a finished run.
pub fn load_names(work_dir: &Path) -> Result<ProjectNames> {
    Ctx {
        cfg: &PipelineConfig::default(),
        dir: work_dir,
    }
    .names()
}
