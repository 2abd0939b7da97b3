//! Pipeline configuration file.
//!
//! A plain `key = value` file; `#` starts a comment. Relative paths are
//! resolved against the directory holding the config file. Every key and
//! its default is listed in [`CONFIG_REFERENCE`].

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::dedup_output::LeaderStrategy;
use crate::extsort::MIN_MEMORY_BUDGET;
use crate::graph::{DenoiseParams, DenoiseVariant};
use crate::ingest::DumpFormat;
use crate::{Error, Result};

pub const CONFIG_REFERENCE: &str = "\
# Input tables (headerless dumps). projects and project_commits are required;
# a missing activity table leaves that metric at zero for every project.
projects        = projects.csv        # id, login/name, forked_from, [deleted]
project_commits = project_commits.csv # commit_id, project_id
stars           = watchers.csv        # project_id, ...   (one row per star)
forks           = forks.csv           # project_id, ...   (one row per fork)
commits         = commits.csv         # project_id, ...   (one row per commit)
issues          = issues.csv          # project_id, ...   (one row per issue)
pull_requests   = pull_requests.csv   # project_id, ...   (one row per pull request)
latest_commit   = commit_times.csv    # project_id, timestamp (latest wins)

work_dir        = work                # checkpoints and deliverables
tmp_dir         =                     # sort run files; defaults to work_dir
format          = csv                 # csv | tsv
delta           = 0.001               # offset of the geometric mean
epoch           = 1970-01-01          # recency counts days since this date
min_shared      = 1                   # commits needed for a shared-commit edge
group_warn      = 200000              # log commits shared by more projects
denoise_lo      = 2
denoise_hi      = 5
denoise_variant = formula             # formula | naive
strategy        = mean                # mean | stars | forks
blacklist       =                     # rule file; empty uses the built-in list
memory_budget   = 64MiB               # external sort budget, at least 1MiB
";

pub const DEFAULT_MEMORY_BUDGET: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputPaths {
    pub projects: Option<PathBuf>,
    pub project_commits: Option<PathBuf>,
    pub stars: Option<PathBuf>,
    pub forks: Option<PathBuf>,
    pub commits: Option<PathBuf>,
    pub issues: Option<PathBuf>,
    pub pull_requests: Option<PathBuf>,
    pub latest_commit: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub work_dir: PathBuf,
    pub tmp_dir: Option<PathBuf>,
    pub format: DumpFormat,
    pub delta: f64,
    pub epoch: NaiveDate,
    pub min_shared: u64,
    pub group_warn: usize,
    pub denoise: DenoiseParams,
    pub strategy: LeaderStrategy,
    pub blacklist: Option<PathBuf>,
    pub memory_budget: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: InputPaths::default(),
            work_dir: PathBuf::from("work"),
            tmp_dir: None,
            format: DumpFormat::Csv,
            delta: crate::scoring::DEFAULT_DELTA,
            epoch: NaiveDate::from_ymd_opt(1970, 1, 1).unwrap(),
            min_shared: 1,
            group_warn: crate::commit_sharing::DEFAULT_GROUP_WARN,
            denoise: DenoiseParams::default(),
            strategy: LeaderStrategy::Mean,
            blacklist: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub key: &'static str,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.key, self.message)
    }
}

/// Parses `64MiB`, `64M`, `512K`, `1G` or a plain byte count.
pub fn parse_bytes(s: &str) -> Option<usize> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: usize = num.parse().ok()?;
    let shift = match unit.trim() {
        "" | "B" => 0,
        "K" | "KiB" | "k" => 10,
        "M" | "MiB" => 20,
        "G" | "GiB" => 30,
        _ => return None,
    };
    n.checked_mul(1usize << shift)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; range checks are left to [`validate`](Self::validate).
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.work_dir = base_dir.join(&cfg.work_dir);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Config(format!("line {}: {msg}", i + 1));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let path = || (!value.is_empty()).then(|| base_dir.join(value));
            let num = || {
                value.parse::<u64>().map_err(|_| {
                    bad(format!(
                        "{key} must be a non-negative integer, got {value:?}"
                    ))
                })
            };
            match key {
                "projects" => cfg.inputs.projects = path(),
                "project_commits" => cfg.inputs.project_commits = path(),
                "stars" => cfg.inputs.stars = path(),
                "forks" => cfg.inputs.forks = path(),
                "commits" => cfg.inputs.commits = path(),
                "issues" => cfg.inputs.issues = path(),
                "pull_requests" => cfg.inputs.pull_requests = path(),
                "latest_commit" => cfg.inputs.latest_commit = path(),
                "work_dir" => {
                    cfg.work_dir = path().ok_or_else(|| bad("work_dir must not be empty".into()))?
                }
                "tmp_dir" => cfg.tmp_dir = path(),
                "blacklist" => cfg.blacklist = path(),
                "format" => cfg.format = value.parse().map_err(bad)?,
                "delta" => {
                    cfg.delta = value
                        .parse()
                        .map_err(|_| bad(format!("delta must be a number, got {value:?}")))?
                }
                "epoch" => {
                    cfg.epoch = NaiveDate::parse_from_str(value, "%Y-%m-%d")
                        .map_err(|_| bad(format!("epoch must be YYYY-MM-DD, got {value:?}")))?
                }
                "min_shared" => cfg.min_shared = num()?,
                "group_warn" => cfg.group_warn = num()? as usize,
                "denoise_lo" => cfg.denoise.lo = num()? as usize,
                "denoise_hi" => cfg.denoise.hi = num()? as usize,
                "denoise_variant" => {
                    cfg.denoise.variant = value.parse::<DenoiseVariant>().map_err(bad)?
                }
                "strategy" => cfg.strategy = value.parse().map_err(bad)?,
                "memory_budget" => {
                    cfg.memory_budget = parse_bytes(value).ok_or_else(|| {
                        bad(format!(
                            "memory_budget must be a size like 64MiB, got {value:?}"
                        ))
                    })?
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    /// Range and existence checks. An empty list means the config is usable.
    pub fn validate(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let mut err = |key, message: String| {
            out.push(Finding {
                severity: Severity::Error,
                key,
                message,
            })
        };
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            err(
                "delta",
                format!("must be positive and finite, got {}", self.delta),
            );
        }
        if self.denoise.lo > self.denoise.hi {
            err(
                "denoise_lo",
                format!("{} exceeds denoise_hi {}", self.denoise.lo, self.denoise.hi),
            );
        }
        if self.min_shared == 0 {
            err("min_shared", "must be at least 1".into());
        }
        if self.memory_budget < MIN_MEMORY_BUDGET {
            err(
                "memory_budget",
                format!(
                    "{} bytes is below the {MIN_MEMORY_BUDGET}-byte floor",
                    self.memory_budget
                ),
            );
        }
        let required = [
            ("projects", &self.inputs.projects),
            ("project_commits", &self.inputs.project_commits),
        ];
        for (key, p) in required {
            if p.is_none() {
                err(key, "required input is not set".into());
            }
        }
        for (key, p) in self.input_list() {
            if !p.is_file() {
                err(key, format!("{} does not exist", p.display()));
            }
        }
        if let Some(b) = &self.blacklist {
            if !b.is_file() {
                err("blacklist", format!("{} does not exist", b.display()));
            }
        }
        if let Some(t) = &self.tmp_dir {
            if !t.is_dir() {
                err("tmp_dir", format!("{} is not a directory", t.display()));
            }
        }
        if self.work_dir.exists() && !self.work_dir.is_dir() {
            err(
                "work_dir",
                format!("{} is not a directory", self.work_dir.display()),
            );
        }
        if self.denoise.hi > 0
            && self.denoise.lo < 2
            && self.denoise.variant == DenoiseVariant::Naive
        {
            out.push(Finding {
                severity: Severity::Warning,
                key: "denoise_lo",
                message: "the naive variant with lo < 2 disconnects leaf projects".into(),
            });
        }
        out
    }

    /// Every configured input file with its key.
    pub fn input_list(&self) -> Vec<(&'static str, &Path)> {
        let i = &self.inputs;
        [
            ("projects", &i.projects),
            ("project_commits", &i.project_commits),
            ("stars", &i.stars),
            ("forks", &i.forks),
            ("commits", &i.commits),
            ("issues", &i.issues),
            ("pull_requests", &i.pull_requests),
            ("latest_commit", &i.latest_commit),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }

    pub fn epoch_seconds(&self) -> i64 {
        self.epoch
            .and_hms_opt(0, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp()
    }

    pub fn tmp_root(&self) -> &Path {
        self.tmp_dir.as_deref().unwrap_or(&self.work_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> &'static Path {
        Path::new("/cfg")
    }

    #[test]
    fn defaults_match_reference() {
        let cfg = PipelineConfig::parse("", base()).unwrap();
        assert_eq!(cfg.delta, 0.001);
        assert_eq!(cfg.denoise, DenoiseParams::default());
        assert_eq!(cfg.memory_budget, 64 << 20);
        assert_eq!(cfg.work_dir, Path::new("/cfg/work"));
        assert_eq!(cfg.epoch_seconds(), 0);
    }

    #[test]
    fn reference_text_parses() {
        let cfg = PipelineConfig::parse(CONFIG_REFERENCE, base()).unwrap();
        assert_eq!(
            cfg.inputs.projects.as_deref(),
            Some(Path::new("/cfg/projects.csv"))
        );
        assert_eq!(cfg.blacklist, None);
        assert_eq!(cfg.tmp_dir, None);
        assert_eq!(cfg.strategy, LeaderStrategy::Mean);
    }

    #[test]
    fn values_and_relative_paths() {
        let cfg = PipelineConfig::parse(
            "projects = data/p.csv\nformat = tsv\ndelta=0.5\nepoch = 2000-01-01\ndenoise_variant = naive\nmemory_budget = 2M\nstrategy = stars\n",
            base(),
        )
        .unwrap();
        assert_eq!(
            cfg.inputs.projects.as_deref(),
            Some(Path::new("/cfg/data/p.csv"))
        );
        assert_eq!(cfg.format, DumpFormat::Tsv);
        assert_eq!(cfg.delta, 0.5);
        assert_eq!(cfg.epoch_seconds(), 946_684_800);
        assert_eq!(cfg.denoise.variant, DenoiseVariant::Naive);
        assert_eq!(cfg.memory_budget, 2 << 20);
        assert_eq!(cfg.strategy, LeaderStrategy::Stars);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let err = PipelineConfig::parse("delta = 1\nbogus = 2\n", base()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(PipelineConfig::parse("no equals sign", base()).is_err());
        assert!(PipelineConfig::parse("min_shared = -1", base()).is_err());
    }

    fn valid_config(dir: &Path) -> PipelineConfig {
        std::fs::write(dir.join("p.csv"), "").unwrap();
        std::fs::write(dir.join("c.csv"), "").unwrap();
        PipelineConfig::parse("projects = p.csv\nproject_commits = c.csv\n", dir).unwrap()
    }

    #[test]
    fn valid_config_has_no_findings() {
        let dir = tempfile::tempdir().unwrap();
        assert!(valid_config(dir.path()).validate().is_empty());
    }

    #[test]
    fn nonpositive_delta_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = valid_config(dir.path());
        cfg.delta = 0.0;
        let f = cfg.validate();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].key, "delta");
        assert_eq!(f[0].severity, Severity::Error);
    }

    #[test]
    fn inverted_denoise_window_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = valid_config(dir.path());
        cfg.denoise.lo = 6;
        assert!(cfg.validate().iter().any(|f| f.key == "denoise_lo"));
    }

    #[test]
    fn missing_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = valid_config(dir.path());
        cfg.inputs.stars = Some(dir.path().join("absent.csv"));
        let f = cfg.validate();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].key, "stars");
    }

    #[test]
    fn byte_sizes() {
        assert_eq!(parse_bytes("1048576"), Some(1 << 20));
        assert_eq!(parse_bytes("64MiB"), Some(64 << 20));
        assert_eq!(parse_bytes("3 G"), Some(3 << 30));
        assert_eq!(parse_bytes("12X"), None);
    }
}
