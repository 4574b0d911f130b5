use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::CliError;
use crate::config::{parse_text, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.txt";

const SOURCE_PREFIX: &str = "# source: ";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JobKind {
    Generate,
    Train,
    Eval,
    Augment,
    Analyze,
    ExportEmbeddings,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Generate => "generate",
            JobKind::Train => "train",
            JobKind::Eval => "eval",
            JobKind::Augment => "augment",
            JobKind::Analyze => "analyze",
            JobKind::ExportEmbeddings => "export-embeddings",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            JobKind::Generate,
            JobKind::Train,
            JobKind::Eval,
            JobKind::Augment,
            JobKind::Analyze,
            JobKind::ExportEmbeddings,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// A fully resolved command: everything needed to rerun it.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub kind: JobKind,
    /// Command arguments that are not config keys, in flag order.
    pub args: Vec<(String, String)>,
    pub config: RunConfig,
    /// Where non-default config values came from, in precedence order.
    pub sources: Vec<String>,
}

impl Job {
    pub fn arg(&self, key: &str) -> Option<&str> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn args_named<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.args.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# hgmda run manifest\n");
        for s in &self.sources {
            let _ = writeln!(out, "{SOURCE_PREFIX}{s}");
        }
        let _ = writeln!(out, "command = {}", self.kind.name());
        for (k, v) in &self.args {
            let _ = writeln!(out, "arg.{k} = {v}");
        }
        let _ = writeln!(out, "config_hash = {}", self.config.hash());
        out.push_str(&self.config.to_text());
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |m: String| CliError::Config(format!("manifest: {m}"));
        let sources = text
            .lines()
            .filter_map(|l| l.strip_prefix(SOURCE_PREFIX))
            .map(str::to_string)
            .collect();
        let mut kind = None;
        let mut hash = None;
        let mut args = Vec::new();
        let mut entries = Vec::new();
        for (k, v) in parse_text(text)? {
            if k == "command" {
                kind = Some(JobKind::parse(&v).ok_or_else(|| bad(format!("unknown command {v:?}")))?);
            } else if k == "config_hash" {
                hash = Some(v);
            } else if let Some(name) = k.strip_prefix("arg.") {
                args.push((name.to_string(), v));
            } else {
                entries.push((k, v));
            }
        }
        let mut config = RunConfig::default();
        config.apply(&entries)?;
        let kind = kind.ok_or_else(|| bad("missing command".into()))?;
        match hash {
            Some(h) if h == config.hash() => {}
            Some(h) => return Err(bad(format!("config hash {h} does not match its entries ({})", config.hash()))),
            None => return Err(bad("missing config_hash".into())),
        }
        Ok(Self {
            kind,
            args,
            config,
            sources,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join(MANIFEST_FILE), self.to_text())?;
        Ok(())
    }
}
