//! JSON configuration: one document with `env`, `jammer`, `agent` and `run`
//! records. Every record is optional and is merged over the defaults, so a
//! file only needs the fields it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agents::TrainConfig;
use crate::env::EnvConfig;
use crate::jammer::JammerConfig;
use crate::{Error, Result};

use super::{AgentKind, Sweep};

/// The `run` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub figure: Option<String>,
    pub agents: Vec<AgentKind>,
    pub seeds: Vec<u64>,
    pub eval_window: u64,
    /// Slots of greedy-policy evaluation after training; 0 skips it.
    pub eval_slots: u64,
    pub sweep: Option<Sweep>,
    pub out: Option<PathBuf>,
    pub sequential: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            figure: None,
            agents: vec![AgentKind::Dueling],
            seeds: vec![0],
            eval_window: 1000,
            eval_slots: 0,
            sweep: None,
            out: None,
            sequential: false,
        }
    }
}

/// A fully resolved configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub env: EnvConfig,
    pub agent: TrainConfig,
    pub run: RunConfig,
    /// The raw document, kept so sweeps can override arbitrary fields.
    pub raw: Value,
}

fn defaults() -> Value {
    let mut doc = Map::new();
    doc.insert("env".into(), serde_json::to_value(EnvConfig::default()).expect("serialisable"));
    doc.insert("jammer".into(), serde_json::to_value(JammerConfig::default()).expect("serialisable"));
    doc.insert("agent".into(), serde_json::to_value(TrainConfig::default()).expect("serialisable"));
    Value::Object(doc)
}

/// Overlays `patch` on `base`, rejecting keys `base` does not have.
fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let sub = format!("{path}.{k}");
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() => merge(slot, v, &sub)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(Error::config(sub, "unknown field")),
                }
            }
            Ok(())
        }
        (_, _) => Err(Error::config(path, "expected an object")),
    }
}

/// Typed view of a merged `{env, jammer, agent}` document.
pub fn resolve(doc: &Value) -> Result<(EnvConfig, TrainConfig)> {
    let part = |name: &str| doc.get(name).cloned().unwrap_or(Value::Null);
    let mut env: EnvConfig =
        serde_json::from_value(part("env")).map_err(|e| Error::config("env", e.to_string()))?;
    env.jammer =
        serde_json::from_value(part("jammer")).map_err(|e| Error::config("jammer", e.to_string()))?;
    let agent: TrainConfig =
        serde_json::from_value(part("agent")).map_err(|e| Error::config("agent", e.to_string()))?;
    env.validate()?;
    agent.validate()?;
    Ok((env, agent))
}

/// Parses a configuration document.
pub fn parse(text: &str) -> Result<FileConfig> {
    let patch: Value = serde_json::from_str(text)?;
    let Value::Object(top) = &patch else {
        return Err(Error::config("$", "expected a JSON object"));
    };
    let mut raw = defaults();
    let mut run = RunConfig::default();
    for (k, v) in top {
        match k.as_str() {
            "env" | "jammer" | "agent" => {
                let slot = raw.get_mut(k.as_str()).expect("defaults carry every record");
                merge(slot, v, k)?;
            }
            "run" => {
                run = serde_json::from_value(v.clone()).map_err(|e| Error::config("run", e.to_string()))?;
            }
            other => return Err(Error::config(other, "unknown record")),
        }
    }
    let (env, agent) = resolve(&raw)?;
    Ok(FileConfig { env, agent, run, raw })
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

/// The `{env, jammer, agent}` document for typed configs.
pub fn to_document(env: &EnvConfig, agent: &TrainConfig) -> Value {
    let mut doc = Map::new();
    doc.insert("env".into(), serde_json::to_value(env).expect("serialisable"));
    doc.insert("jammer".into(), serde_json::to_value(&env.jammer).expect("serialisable"));
    doc.insert("agent".into(), serde_json::to_value(agent).expect("serialisable"));
    Value::Object(doc)
}

/// Sets the field at dotted `path` to `value`, keeping integer fields
/// integral.
pub fn set_path(doc: &mut Value, path: &str, value: f64) -> Result<()> {
    let mut slot = &mut *doc;
    for part in path.split('.') {
        slot = slot
            .get_mut(part)
            .ok_or_else(|| Error::config(path, "no such parameter"))?;
    }
    *slot = match slot {
        Value::Number(n) if n.is_u64() || n.is_i64() => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::config(path, format!("expects a non-negative integer, got {value}")));
            }
            Value::from(value as u64)
        }
        Value::Number(_) => Value::from(value),
        _ => return Err(Error::config(path, "is not a numeric parameter")),
    };
    Ok(())
}
