//! Flat `key=value` text files for grammars and sweeps. Blank lines and
//! lines starting with `#` are ignored, list values are comma-separated
//! and nested settings use dotted keys such as `model.hidden=64`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pprobe_core::data::{GrammarConfig, LabelWords};
use pprobe_core::pareto::Mode;
use pprobe_core::trainer::{SweepConfig, Task};

use crate::error::{config_err, io_err, Error, Result};

/// One `key=value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(bad("empty key".into()));
        }
        if !seen.insert(key.clone()) {
            return Err(bad(format!("key `{key}` given twice")));
        }
        out.push(Entry {
            line: i + 1,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| config_err(key, format!("cannot parse {v:?}: {e}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    split_list(v).map(|item| value(key, item)).collect()
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Applies grammar keys on top of `base`. Changing `labels` requires a
/// `words.<label>` entry per label; the lexicon keeps only entries for
/// words that some label still uses.
pub fn apply_grammar_entries(mut g: GrammarConfig, entries: &[Entry]) -> Result<GrammarConfig> {
    let mut words: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut names: Option<Vec<String>> = None;
    for e in entries {
        let (key, v) = (e.key.as_str(), e.value.as_str());
        match key {
            "labels" => names = Some(split_list(v).map(String::from).collect()),
            "templates" => {
                g.templates = split_list(v)
                    .map(|t| t.split_whitespace().map(String::from).collect())
                    .collect()
            }
            "lexicon" => {
                for pair in split_list(v) {
                    let (s, t) = pair
                        .split_once(':')
                        .ok_or_else(|| config_err(key, format!("expected source:target, got {pair:?}")))?;
                    g.lexicon.insert(s.trim().to_string(), t.trim().to_string());
                }
            }
            "min_len" => g.min_len = value(key, v)?,
            "max_len" => g.max_len = value(key, v)?,
            "final_label" => g.final_label = (!v.is_empty()).then(|| v.to_string()),
            "postpose" => {
                g.postpose = if v.is_empty() {
                    None
                } else {
                    let (m, h) = v
                        .split_once(':')
                        .ok_or_else(|| config_err(key, "expected modifier:head"))?;
                    Some((m.trim().to_string(), h.trim().to_string()))
                }
            }
            "rare_rate" => g.rare_rate = value(key, v)?,
            "seed" => g.seed = value(key, v)?,
            _ => match key.strip_prefix("words.") {
                Some(label) => {
                    words.insert(label.to_string(), split_list(v).map(String::from).collect());
                }
                None => return Err(config_err(key, "unknown grammar key")),
            },
        }
    }
    if let Some(names) = names {
        let mut labels = Vec::with_capacity(names.len());
        for name in names {
            let w = words
                .remove(&name)
                .ok_or_else(|| config_err(&format!("words.{name}"), "missing word list for label"))?;
            labels.push(LabelWords { label: name, words: w });
        }
        g.labels = labels;
    }
    for (label, w) in words {
        let slot = g
            .labels
            .iter_mut()
            .find(|l| l.label == label)
            .ok_or_else(|| config_err(&format!("words.{label}"), "no such label"))?;
        slot.words = w;
    }
    let used: BTreeSet<&String> = g.labels.iter().flat_map(|l| &l.words).collect();
    let lexicon = std::mem::take(&mut g.lexicon);
    g.lexicon = lexicon.into_iter().filter(|(k, _)| used.contains(k)).collect();
    g.validate()?;
    Ok(g)
}

/// Grammar file contents; keys that are absent keep the default grammar's
/// values.
pub fn parse_grammar(text: &str, path: &Path) -> Result<GrammarConfig> {
    let entries = parse_entries(text, path)?;
    apply_grammar_entries(GrammarConfig::default_grammar(1), &entries)
}

pub fn read_grammar(path: &Path) -> Result<GrammarConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_grammar(&text, path)
}

/// Every field of `g` as key=value lines; [`parse_grammar`] reads it back.
pub fn grammar_to_string(g: &GrammarConfig) -> String {
    let mut s = String::new();
    let names: Vec<&str> = g.labels.iter().map(|l| l.label.as_str()).collect();
    writeln!(s, "labels={}", names.join(",")).unwrap();
    for l in &g.labels {
        writeln!(s, "words.{}={}", l.label, l.words.join(",")).unwrap();
    }
    let lexicon: Vec<String> = g
        .labels
        .iter()
        .flat_map(|l| &l.words)
        .filter_map(|w| g.lexicon.get(w).map(|t| format!("{w}:{t}")))
        .collect();
    writeln!(s, "lexicon={}", lexicon.join(",")).unwrap();
    let templates: Vec<String> = g.templates.iter().map(|t| t.join(" ")).collect();
    writeln!(s, "templates={}", templates.join(",")).unwrap();
    writeln!(s, "min_len={}", g.min_len).unwrap();
    writeln!(s, "max_len={}", g.max_len).unwrap();
    writeln!(s, "final_label={}", g.final_label.as_deref().unwrap_or("")).unwrap();
    match &g.postpose {
        Some((m, h)) => writeln!(s, "postpose={m}:{h}").unwrap(),
        None => writeln!(s, "postpose=").unwrap(),
    }
    writeln!(s, "rare_rate={}", g.rare_rate).unwrap();
    writeln!(s, "seed={}", g.seed).unwrap();
    s
}

/// A sweep configuration plus the output directory named in the file.
#[derive(Debug, Clone)]
pub struct SweepFile {
    pub config: SweepConfig,
    pub out: Option<PathBuf>,
}

/// Parses a sweep file. `task` and `mode` are required. `grammar=<path>`
/// is resolved against `base_dir`; `grammar.<key>` entries override
/// single grammar fields.
pub fn parse_sweep(text: &str, path: &Path, base_dir: &Path) -> Result<SweepFile> {
    let entries = parse_entries(text, path)?;
    let find = |k: &str| entries.iter().find(|e| e.key == k);
    let task: Task = value("task", &find("task").ok_or_else(|| config_err("task", "required"))?.value)?;
    let mode: Mode = value("mode", &find("mode").ok_or_else(|| config_err("mode", "required"))?.value)?;
    let mut cfg = SweepConfig::new(task, mode);
    let mut out = None;
    let mut grammar_file = None;
    let mut grammar_entries = Vec::new();
    for e in &entries {
        let (key, v) = (e.key.as_str(), e.value.as_str());
        match key {
            "task" | "mode" => {}
            "lambdas" => cfg.lambdas = list(key, v)?,
            "seeds" => cfg.seeds = list(key, v)?,
            "steps" => cfg.steps = value(key, v)?,
            "eval_interval" => cfg.eval_interval = value(key, v)?,
            "batch_size" => cfg.batch_size = value(key, v)?,
            "learning_rate" => cfg.learning_rate = value(key, v)?,
            "probe_learning_rate" => cfg.probe_learning_rate = value(key, v)?,
            "axis" => cfg.axis = value(key, v)?,
            "train_sentences" => cfg.train_sentences = value(key, v)?,
            "heldout_sentences" => cfg.heldout_sentences = value(key, v)?,
            "min_count" => cfg.min_count = value(key, v)?,
            "out" => out = Some(base_dir.join(v)),
            "model.embed" => cfg.model.embed = value(key, v)?,
            "model.hidden" => cfg.model.hidden = value(key, v)?,
            "model.enc_layers" => cfg.model.enc_layers = value(key, v)?,
            "model.dec_layers" => cfg.model.dec_layers = value(key, v)?,
            "model.attention" => cfg.model.attention = value(key, v)?,
            "probe.hidden" => cfg.probe.hidden = value(key, v)?,
            "probe.layers" => cfg.probe.layers = value(key, v)?,
            "retrain.learning_rate" => cfg.retrain.learning_rate = value(key, v)?,
            "retrain.batch_size" => cfg.retrain.batch_size = value(key, v)?,
            "retrain.eval_interval" => cfg.retrain.eval_interval = value(key, v)?,
            "retrain.patience" => cfg.retrain.patience = value(key, v)?,
            "retrain.max_steps" => cfg.retrain.max_steps = value(key, v)?,
            "baseline.steps" => cfg.baseline.steps = value(key, v)?,
            "baseline.interval" => cfg.baseline.interval = value(key, v)?,
            "baseline.checkpoints" => cfg.baseline.checkpoints = value(key, v)?,
            "grammar" => grammar_file = Some(base_dir.join(v)),
            _ => match key.strip_prefix("grammar.") {
                Some(sub) => grammar_entries.push(Entry {
                    line: e.line,
                    key: sub.to_string(),
                    value: e.value.clone(),
                }),
                None => return Err(config_err(key, "unknown key")),
            },
        }
    }
    let base = match grammar_file {
        Some(p) => read_grammar(&p)?,
        None => cfg.grammar.clone(),
    };
    cfg.grammar = apply_grammar_entries(base, &grammar_entries).map_err(|e| match e {
        Error::Config { key, msg } => Error::Config {
            key: format!("grammar.{key}"),
            msg,
        },
        other => other,
    })?;
    cfg.validate()?;
    Ok(SweepFile { config: cfg, out })
}

pub fn read_sweep(path: &Path) -> Result<SweepFile> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_sweep(&text, path, path.parent().unwrap_or(Path::new(".")))
}

/// Environment variable that replaces the configured seed list with a
/// single seed.
pub const SEED_ENV: &str = "PPROBE_SEED";

pub fn apply_seed_override(cfg: &mut SweepConfig, env: Option<&str>) -> Result<()> {
    if let Some(v) = env {
        cfg.seeds = vec![value(SEED_ENV, v.trim())?];
    }
    Ok(())
}
