//! Projects excluded before graph assembly.
//!
//! A blacklist file holds one rule per line:
//!
//! ```text
//! # comment
//! name   boostorg/spirit
//! suffix github.io
//! owner  dvcsconnectortest
//! ```
//!
//! Matching is case-sensitive plain string comparison.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// Blacklist shipped with the tool: the suffix heuristic for personal web
/// sites plus popular projects observed to glue unrelated clusters together.
pub const DEFAULT_BLACKLIST: &str = include_str!("../data/default_blacklist.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleKind {
    Name,
    Suffix,
    Owner,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Name => "name",
            RuleKind::Suffix => "suffix",
            RuleKind::Owner => "owner",
        }
    }
}

impl FromStr for RuleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "name" => Ok(RuleKind::Name),
            "suffix" => Ok(RuleKind::Suffix),
            "owner" => Ok(RuleKind::Owner),
            other => Err(format!("unknown rule kind {other:?}")),
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub kind: RuleKind,
    pub value: String,
}

impl Rule {
    pub fn new(kind: RuleKind, value: impl Into<String>) -> Result<Self, String> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_whitespace) {
            return Err(format!(
                "{kind} rule value {value:?} must be a single non-empty word"
            ));
        }
        if kind == RuleKind::Owner && value.contains('/') {
            return Err(format!("owner {value:?} must not contain '/'"));
        }
        Ok(Rule { kind, value })
    }

    pub fn matches(&self, name: &str) -> bool {
        match self.kind {
            RuleKind::Name => name == self.value,
            RuleKind::Suffix => name.ends_with(&self.value),
            RuleKind::Owner => name.split_once('/').is_some_and(|(o, _)| o == self.value),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind, self.value)
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut words = line.split_whitespace();
        let kind: RuleKind = words.next().ok_or("empty rule")?.parse()?;
        let value = words
            .next()
            .ok_or_else(|| format!("{kind} rule has no value"))?;
        if words.next().is_some() {
            return Err("trailing text after rule value".into());
        }
        Rule::new(kind, value)
    }
}

/// A line of a blacklist file that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleReject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlacklistRuleSet {
    pub exact: BTreeSet<String>,
    pub suffixes: BTreeSet<String>,
    pub owners: BTreeSet<String>,
}

impl BlacklistRuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses blacklist text, collecting unparsable lines instead of failing.
    pub fn parse(text: &str) -> (Self, Vec<RuleReject>) {
        let mut set = Self::new();
        let mut rejects = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.parse::<Rule>() {
                Ok(rule) => set.add(rule),
                Err(reason) => rejects.push(RuleReject {
                    line: i + 1,
                    reason,
                }),
            }
        }
        (set, rejects)
    }

    pub fn add(&mut self, rule: Rule) {
        let bucket = match rule.kind {
            RuleKind::Name => &mut self.exact,
            RuleKind::Suffix => &mut self.suffixes,
            RuleKind::Owner => &mut self.owners,
        };
        bucket.insert(rule.value);
    }

    pub fn extend(&mut self, rules: impl IntoIterator<Item = Rule>) {
        for r in rules {
            self.add(r);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty() && self.suffixes.is_empty() && self.owners.is_empty()
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.suffixes.len() + self.owners.len()
    }

    pub fn matches(&self, name: &str) -> bool {
        if self.exact.contains(name) {
            return true;
        }
        if let Some((owner, _)) = name.split_once('/') {
            if self.owners.contains(owner) {
                return true;
            }
        }
        self.suffixes.iter().any(|s| name.ends_with(s.as_str()))
    }

    pub fn rules(&self) -> impl Iterator<Item = Rule> + '_ {
        let mk = |kind: RuleKind| {
            move |v: &String| Rule {
                kind,
                value: v.clone(),
            }
        };
        self.exact
            .iter()
            .map(mk(RuleKind::Name))
            .chain(self.suffixes.iter().map(mk(RuleKind::Suffix)))
            .chain(self.owners.iter().map(mk(RuleKind::Owner)))
    }

    /// Canonical file text: one rule per line in kind then value order.
    pub fn to_text(&self) -> String {
        self.rules().map(|r| format!("{r}\n")).collect()
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
