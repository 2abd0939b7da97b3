use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use repodedup_core::analysis::{
    commit_percentiles, compare_datasets, dedup_external_list, map_index, DEFAULT_PERCENTILE_STEPS,
};
use repodedup_core::components::read_components;
use repodedup_core::config::{PipelineConfig, Severity, CONFIG_REFERENCE};
use repodedup_core::dedup_output::read_dedup_map;
use repodedup_core::dot::export_dot;
use repodedup_core::graph::read_graph;
use repodedup_core::ingest::EventKind;
use repodedup_core::pipeline::{self, files, RunOptions, Stage};
use repodedup_core::{tsv, ProjectId};

#[derive(Parser)]
#[command(
    name = "repodedup",
    version,
    about = "Cluster duplicated repositories in forge dumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline (or a range of its stages).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Resume from this stage using existing checkpoints.
        #[arg(long, value_parser = parse_stage)]
        from: Option<Stage>,
        /// Stop after this stage.
        #[arg(long, value_parser = parse_stage)]
        to: Option<Stage>,
        /// Overrides `work_dir` from the config.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Check a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print every config key with its default.
    ConfigReference,
    /// Serve the inspection API over a finished run.
    Inspect {
        /// Config of the run; its work_dir is served.
        #[arg(
            long,
            conflicts_with = "work_dir",
            required_unless_present = "work_dir"
        )]
        config: Option<PathBuf>,
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Staged-rule file; defaults to staged_blacklist.txt in the work dir.
        #[arg(long)]
        session: Option<PathBuf>,
    },
    /// Compare two dedup maps.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// External project list to count duplicates in.
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long, default_value = "a")]
        label_a: String,
        #[arg(long, default_value = "b")]
        label_b: String,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Nearest-rank percentiles of per-project commit counts.
    Percentiles {
        /// Two-column `project, count` file (tab or comma separated).
        #[arg(
            long,
            conflicts_with = "work_dir",
            required_unless_present = "work_dir"
        )]
        counts: Option<PathBuf>,
        /// Finished run; every ingested project counts, missing ones as 0.
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<f64>>,
    },
    /// Deduplicate an external list of project names.
    DedupList {
        /// One `owner/name` per line.
        list: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        noise: PathBuf,
    },
    /// Export the denoised graph (or one component) as DOT.
    Dot {
        #[arg(long)]
        work_dir: PathBuf,
        #[arg(long)]
        component: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Kv,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            from,
            to,
            work_dir,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(w) = work_dir {
                cfg.work_dir = w;
            }
            let report = pipeline::run(&cfg, RunOptions { from, to })?;
            for s in &report.stages {
                println!("{s}");
            }
            println!("outputs in {}", report.work_dir.display());
        }
        Command::Validate { config } => {
            let findings = load_config(&config)?.validate();
            for f in &findings {
                println!("{f}");
            }
            if findings.iter().any(|f| f.severity == Severity::Error) {
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
        Command::ConfigReference => print!("{CONFIG_REFERENCE}"),
        Command::Inspect {
            config,
            work_dir,
            listen,
            session,
        } => {
            let dir = match (config, work_dir) {
                (_, Some(w)) => w,
                (Some(c), None) => load_config(&c)?.work_dir,
                (None, None) => bail!("--config or --work-dir is required"),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(repodedup_inspect::serve(&dir, session.as_deref(), listen))?;
        }
        Command::Compare {
            a,
            b,
            external,
            label_a,
            label_b,
            format,
        } => {
            let map_a = read_map(&a)?;
            let map_b = read_map(&b)?;
            let ext = external.map(|p| tsv::read_lines(&p)).transpose()?;
            let report = compare_datasets(&map_a, &map_b, ext.as_deref());
            match format {
                ReportFormat::Table => print!("{}", report.to_table(&label_a, &label_b)),
                ReportFormat::Kv => print!("{}", report.to_key_values()),
            }
        }
        Command::Percentiles {
            counts,
            work_dir,
            steps,
        } => {
            let values = match (counts, work_dir) {
                (Some(p), _) => read_counts(&p)?,
                (None, Some(w)) => run_commit_counts(&w)?,
                (None, None) => bail!("--counts or --work-dir is required"),
            };
            let steps = steps.unwrap_or_else(|| DEFAULT_PERCENTILE_STEPS.to_vec());
            let table = commit_percentiles(values, &steps)?;
            println!("percentile\tcommits");
            for (p, v) in table.rows {
                println!("{p}\t{v}");
            }
        }
        Command::DedupList { list, map, noise } => {
            let names = tsv::read_lines(&list)?;
            let index = map_index(&read_map(&map)?);
            let noise: HashSet<String> = tsv::read_lines(&noise)?.into_iter().collect();
            let r = dedup_external_list(&names, &index, &noise);
            let mut out = io::stdout().lock();
            for k in &r.kept {
                writeln!(out, "{k}")?;
            }
            eprintln!(
                "input={} kept={} remapped={} dropped_as_noise={} duplicates={}",
                names.len(),
                r.kept.len(),
                r.remapped.len(),
                r.dropped_as_noise.len(),
                r.duplicates
            );
        }
        Command::Dot {
            work_dir,
            component,
        } => {
            let names = pipeline::load_names(&work_dir)?;
            let g = read_graph(tsv::open(&work_dir.join(files::DENOISED))?)?;
            let filter: Option<HashSet<ProjectId>> = match component {
                Some(c) => {
                    let a = read_components(tsv::open(&work_dir.join(files::COMPONENTS))?)?;
                    Some(
                        a.iter()
                            .filter(|&(_, k)| k == c)
                            .map(|(id, _)| id)
                            .collect(),
                    )
                }
                None => None,
            };
            print!("{}", export_dot(&g, &names, filter.as_ref()));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_map(path: &Path) -> Result<Vec<repodedup_core::dedup_output::DedupRecord>> {
    let (records, rejects) = read_dedup_map(tsv::open(path)?)?;
    if !rejects.is_empty() {
        log::warn!(
            "{}: {} malformed lines skipped",
            path.display(),
            rejects.len()
        );
        for (line, text) in rejects.iter().take(5) {
            log::warn!("{}:{line}: {text:?}", path.display());
        }
    }
    Ok(records)
}

fn read_counts(path: &Path) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (i, line) in tsv::open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let count = line
            .split(['\t', ','])
            .nth(1)
            .and_then(|v| v.trim().parse().ok())
            .with_context(|| format!("{}:{}: expected `project, count`", path.display(), i + 1))?;
        out.push(count);
    }
    Ok(out)
}

fn run_commit_counts(work_dir: &Path) -> Result<Vec<u64>> {
    let mut counts: HashMap<ProjectId, u64> = tsv::read_projects(&work_dir.join(files::PROJECTS))?
        .into_iter()
        .map(|p| (p.project_id, 0))
        .collect();
    for e in tsv::read_events(&work_dir.join(files::EVENTS))? {
        if e.kind == EventKind::Commits {
            counts.insert(e.project_id, e.value);
        }
    }
    Ok(counts.into_values().collect())
}
