//! Staged blacklist rules, persisted in blacklist file format.

use std::path::{Path, PathBuf};

use repodedup_core::blacklist::{BlacklistRuleSet, Rule};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::InspectError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StagedRule {
    pub id: String,
    pub kind: String,
    pub value: String,
}

/// Stable identifier of a rule: the first 12 hex digits of the SHA-256 of
/// its canonical line.
pub fn rule_id(rule: &Rule) -> String {
    Sha256::digest(rule.to_string().as_bytes())
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug)]
pub struct Session {
    path: PathBuf,
    rules: Vec<Rule>,
}

impl Session {
    /// Opens the session file, creating an empty session if it is absent.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, InspectError> {
        let path = path.into();
        let rules = match std::fs::read_to_string(&path) {
            Ok(text) => {
                let mut rules: Vec<Rule> = Vec::new();
                for (i, raw) in text.lines().enumerate() {
                    let line = raw.split('#').next().unwrap_or("").trim();
                    if line.is_empty() {
                        continue;
                    }
                    let rule: Rule = line.parse().map_err(|reason| {
                        InspectError::InvalidRule(format!("{}:{}: {reason}", path.display(), i + 1))
                    })?;
                    if !rules.contains(&rule) {
                        rules.push(rule);
                    }
                }
                rules
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(source) => return Err(InspectError::Io { path, source }),
        };
        Ok(Session { path, rules })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn staged(&self) -> Vec<StagedRule> {
        self.rules
            .iter()
            .map(|r| StagedRule {
                id: rule_id(r),
                kind: r.kind.to_string(),
                value: r.value.clone(),
            })
            .collect()
    }

    pub fn rule_set(&self) -> BlacklistRuleSet {
        let mut set = BlacklistRuleSet::new();
        set.extend(self.rules.iter().cloned());
        set
    }

    /// Stages `rule` and persists the session. Staging a rule twice is a
    /// no-op that returns the existing entry.
    pub fn stage(&mut self, rule: Rule) -> Result<StagedRule, InspectError> {
        let staged = StagedRule {
            id: rule_id(&rule),
            kind: rule.kind.to_string(),
            value: rule.value.clone(),
        };
        if !self.rules.contains(&rule) {
            self.rules.push(rule);
            self.persist()?;
        }
        Ok(staged)
    }

    pub fn unstage(&mut self, id: &str) -> Result<StagedRule, InspectError> {
        let pos = self
            .rules
            .iter()
            .position(|r| rule_id(r) == id)
            .ok_or_else(|| InspectError::UnknownRule(id.to_owned()))?;
        let rule = self.rules.remove(pos);
        self.persist()?;
        Ok(StagedRule {
            id: id.to_owned(),
            kind: rule.kind.to_string(),
            value: rule.value,
        })
    }

    /// Session file text: one rule per line in staging order.
    pub fn to_text(&self) -> String {
        self.rules.iter().map(|r| format!("{r}\n")).collect()
    }

    /// Base blacklist verbatim followed by the staged rules.
    pub fn export(&self, base: &str) -> String {
        let mut out = base.to_owned();
        if !out.is_empty() && !out.ends_with('\n') && !self.rules.is_empty() {
            out.push('\n');
        }
        out.push_str(&self.to_text());
        out
    }

    fn persist(&self) -> Result<(), InspectError> {
        let io = |source| InspectError::Io {
            path: self.path.clone(),
            source,
        };
        let tmp = self.path.with_extension("tmp");
        std::fs::write(&tmp, self.to_text()).map_err(io)?;
        std::fs::rename(&tmp, &self.path).map_err(io)
    }
}
