//! Run configuration: defaults, `key = value` files, command-line flags.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use policyforge::mbl::ResetSpec;
use policyforge::policy::PolicyKind;
use policyforge::synth::{SynthBounds, SynthBudget, SynthConfig, TemplateKind};

pub const CACHE_DIR_ENV: &str = "POLICYFORGE_CACHE_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub policy: String,
    pub assoc: usize,
    pub reset: String,
    /// Conformance suite depth.
    pub k: usize,
    /// Blocks available to queries and the learner; must exceed `assoc`.
    /// Defaults to `assoc + 4`.
    pub alphabet: Option<usize>,
    pub repetitions: usize,
    /// Probability of flipping each simulated outcome.
    pub noise: f64,
    pub seed: u64,
    /// Oracle queries for `learn`, search nodes for `synthesize`.
    pub budget: Option<u64>,
    pub timeout_secs: Option<u64>,
    pub template: String,
    pub max_age: u8,
    pub expr_depth: usize,
    pub threads: usize,
    pub runs_dir: PathBuf,
    /// Not serialized, so runs that differ only in where they write produce
    /// identical artifacts.
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub cache_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            policy: "lru".into(),
            assoc: 4,
            reset: "flush".into(),
            k: 1,
            alphabet: None,
            repetitions: 1,
            noise: 0.0,
            seed: 0,
            budget: None,
            timeout_secs: None,
            template: "simple".into(),
            max_age: 3,
            expr_depth: 2,
            threads: 0,
            runs_dir: PathBuf::from("runs"),
            out: None,
            cache_dir: PathBuf::from(".policyforge-cache"),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("bad value `{value}` for `{key}`: {e}"))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

impl RunConfig {
    /// Defaults, then the config file, then every flag that was given.
    pub fn resolve(file: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for (key, value) in flags {
            if let Some(value) = value {
                cfg.set(key, value)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. Dashes and underscores are interchangeable in keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "policy" => self.policy = value.to_string(),
            "assoc" => self.assoc = parse_value(key, value)?,
            "reset" => self.reset = value.to_string(),
            "k" => self.k = parse_value(key, value)?,
            "alphabet" => self.alphabet = optional(key, value)?,
            "repetitions" => self.repetitions = parse_value(key, value)?,
            "noise" => self.noise = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "budget" => self.budget = optional(key, value)?,
            "timeout_secs" | "timeout" => self.timeout_secs = optional(key, value)?,
            "template" => self.template = value.to_string(),
            "max_age" => self.max_age = parse_value(key, value)?,
            "expr_depth" => self.expr_depth = parse_value(key, value)?,
            "threads" => self.threads = parse_value(key, value)?,
            "runs_dir" => self.runs_dir = PathBuf::from(value),
            "out" => self.out = optional(key, value)?,
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            other => bail!("unknown setting `{other}`"),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are
    /// skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_text(&text)
            .with_context(|| format!("in config file {}", path.display()))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", k + 1))?;
            self.set(key, value)
                .with_context(|| format!("line {}", k + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        if !kind.supports(self.assoc) {
            bail!("{kind} is not defined for associativity {}", self.assoc);
        }
        let alphabet = self.alphabet_size();
        if alphabet <= self.assoc {
            bail!(
                "alphabet ({alphabet}) must be larger than assoc ({})",
                self.assoc
            );
        }
        if self.repetitions == 0 || self.repetitions % 2 == 0 {
            bail!("repetitions must be odd, got {}", self.repetitions);
        }
        if !(0.0..1.0).contains(&self.noise) {
            bail!("noise must be in [0, 1), got {}", self.noise);
        }
        self.reset_spec()?;
        self.template_kind()?;
        if self.max_age == 0 || self.max_age > 15 {
            bail!("max_age must be between 1 and 15");
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.unwrap_or(self.assoc + 4)
    }

    pub fn kind(&self) -> Result<PolicyKind> {
        self.policy.parse().map_err(|e| anyhow!("{e}"))
    }

    pub fn reset_spec(&self) -> Result<ResetSpec> {
        ResetSpec::parse(&self.reset).map_err(|e| anyhow!("bad reset `{}`: {e}", self.reset))
    }

    pub fn template_kind(&self) -> Result<TemplateKind> {
        self.template.parse().map_err(|e| anyhow!("{e}"))
    }

    pub fn timeout(&self) -> Option<Duration> {
        self.timeout_secs.map(Duration::from_secs)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            kind: self.template_kind()?,
            bounds: SynthBounds {
                max_age: self.max_age,
                expr_depth: self.expr_depth,
            },
            budget: SynthBudget {
                max_nodes: self.budget,
                timeout: self.timeout(),
            },
            threads: self.threads,
        })
    }

    /// `out` if given, else `runs_dir/<unix time>-seed<seed>`. Created.
    pub fn run_dir(&self) -> Result<PathBuf> {
        let dir = match &self.out {
            Some(dir) => dir.clone(),
            None => {
                let now = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                self.runs_dir.join(format!("{now}-seed{}", self.seed))
            }
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}
