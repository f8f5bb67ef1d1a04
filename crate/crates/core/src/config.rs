//! Run configuration for `atm train`: built-in defaults, overridden by a
//! line-based `key=value` file, overridden by command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{AtmError, Result};
use crate::training::{Concentration, TrainConfig};

pub const RESOLVED_FILE: &str = "config.resolved";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AtmError::Usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(AtmError::Usage(format!(
            "invalid boolean {value:?} for {key}"
        ))),
    }
}

/// `1.0` is symmetric; `0.5,0.5,2` gives one concentration per topic.
pub fn parse_concentration(value: &str) -> Result<Concentration> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| parse::<f64>("dirichlet_alpha", p.trim()))
        .collect::<Result<_>>()?;
    Ok(match parts.as_slice() {
        [a] => Concentration::Symmetric(*a),
        _ => Concentration::PerTopic(parts),
    })
}

fn format_concentration(c: &Concentration) -> String {
    match c {
        Concentration::Symmetric(a) => a.to_string(),
        Concentration::PerTopic(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "topics" => t.topics = parse(key, value)?,
            "embed" => t.embed = parse(key, value)?,
            "hidden" => t.hidden = parse(key, value)?,
            "lambda" => t.lambda = parse(key, value)?,
            "critic_iters" => t.critic_iters = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "beta1" => t.beta1 = parse(key, value)?,
            "beta2" => t.beta2 = parse(key, value)?,
            "dirichlet_alpha" => t.dirichlet_alpha = parse_concentration(value)?,
            "leak" => t.leak = parse(key, value)?,
            "max_iters" => t.max_generator_iters = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "early_stop" => t.early_stop = parse_bool(key, value)?,
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "vocab" => self.vocab = Some(PathBuf::from(value)),
            _ => return Err(AtmError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AtmError::Usage(format!("{origin}:{}: expected key=value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| AtmError::Usage(format!("{origin}:{}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| AtmError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its effective value, in `set` order. Readable back
    /// through [`RunConfig::apply_text`].
    pub fn resolved(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k}={v}").expect("write to String");
        put("topics", t.topics.to_string());
        put("embed", t.embed.to_string());
        put("hidden", t.hidden.to_string());
        put("lambda", t.lambda.to_string());
        put("critic_iters", t.critic_iters.to_string());
        put("batch_size", t.batch_size.to_string());
        put("learning_rate", t.learning_rate.to_string());
        put("beta1", t.beta1.to_string());
        put("beta2", t.beta2.to_string());
        put("dirichlet_alpha", format_concentration(&t.dirichlet_alpha));
        put("leak", t.leak.to_string());
        put("max_iters", t.max_generator_iters.to_string());
        put("seed", t.seed.to_string());
        put("eval_every", t.eval_every.to_string());
        put("early_stop", t.early_stop.to_string());
        if let Some(p) = &self.corpus {
            put("corpus", p.display().to_string());
        }
        if let Some(p) = &self.vocab {
            put("vocab", p.display().to_string());
        }
        out
    }
}
