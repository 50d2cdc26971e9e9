use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or unreadable input (exit 1).
    Config(String),
    /// The experiment itself failed (exit 2).
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numeric(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<loewner_core::error::Error> for Failure {
    fn from(e: loewner_core::error::Error) -> Self {
        use loewner_core::error::Error;
        match e {
            Error::Parameter { .. } | Error::Format(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl<R: fmt::Debug> From<loewner_core::growth::Aborted<R>> for Failure {
    fn from(a: loewner_core::growth::Aborted<R>) -> Self {
        a.error.into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Emit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Emit::Csv),
            "json" => Ok(Emit::Json),
            "svg" => Ok(Emit::Svg),
            other => Err(format!("unknown emit format `{other}` (csv, json, svg)")),
        }
    }
}

/// Everything a run needs, resolved from the config file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub emit: BTreeSet<Emit>,
    pub params: Table,
}

/// Options shared by every command, as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub emit: Option<Vec<Emit>>,
    pub set: Vec<String>,
}

const WORKERS_ENV: &str = "LOEWNER_FORGE_WORKERS";

fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Merges the config file, environment and flags; flags win.
pub fn resolve(command: &str, o: &Overrides) -> Outcome<RunConfig> {
    let mut file = Table::new();
    if let Some(path) = &o.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        file = text
            .parse::<Table>()
            .map_err(|e| config_err(format!("config {}: {e}", path.display())))?;
    }
    let mut params = match file.remove(command) {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(config_err(format!("section [{command}] must be a table"))),
        None => Table::new(),
    };
    for (key, v) in &file {
        if !v.is_table() && !matches!(key.as_str(), "seed" | "workers" | "out" | "emit") {
            return Err(config_err(format!("unknown top-level key `{key}`")));
        }
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config_err(format!("--set expects key=value, got `{kv}`")))?;
        params.insert(k.trim().to_string(), parse_value(v.trim()));
    }

    let top_int = |key: &str| -> Outcome<Option<i64>> {
        match file.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(config_err(format!("`{key}` must be an integer"))),
        }
    };
    let seed = match o.seed {
        Some(s) => s,
        None => match top_int("seed")? {
            Some(s) if s >= 0 => s as u64,
            Some(_) => return Err(config_err("`seed` must be non-negative")),
            None => 0,
        },
    };
    let workers = match o.workers {
        Some(w) => w,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| config_err(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
            Err(_) => match top_int("workers")? {
                Some(w) if w > 0 => w as usize,
                Some(_) => return Err(config_err("`workers` must be positive")),
                None => 1,
            },
        },
    };
    if workers == 0 {
        return Err(config_err("`workers` must be positive"));
    }
    let output_dir = match (&o.out, file.get("out")) {
        (Some(p), _) => p.clone(),
        (None, Some(Value::String(s))) => PathBuf::from(s),
        (None, Some(_)) => return Err(config_err("`out` must be a string")),
        (None, None) => PathBuf::from(format!("out/{command}")),
    };
    let emit: BTreeSet<Emit> = match (&o.emit, file.get("emit")) {
        (Some(e), _) => e.iter().copied().collect(),
        (None, Some(Value::Array(a))) => a
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| config_err("`emit` entries must be strings"))?
                    .parse::<Emit>()
                    .map_err(config_err)
            })
            .collect::<Outcome<_>>()?,
        (None, Some(_)) => return Err(config_err("`emit` must be a list")),
        (None, None) => [Emit::Csv, Emit::Json].into_iter().collect(),
    };
    Ok(RunConfig {
        command: command.to_string(),
        seed,
        workers,
        output_dir,
        emit,
        params,
    })
}

/// Typed view of a command's parameter table. Every read is recorded so that
/// unknown keys can be rejected and the resolved values echoed.
#[derive(Debug)]
pub struct Params {
    command: String,
    table: Table,
    used: RefCell<BTreeSet<String>>,
    resolved: RefCell<Table>,
}

impl Params {
    pub fn new(command: &str, table: Table) -> Self {
        Self {
            command: command.to_string(),
            table,
            used: RefCell::default(),
            resolved: RefCell::default(),
        }
    }

    fn err(&self, key: &str, what: &str) -> Failure {
        config_err(format!("[{}] `{key}` {what}", self.command))
    }

    fn take(&self, key: &str, default: Option<Value>) -> Outcome<Value> {
        self.used.borrow_mut().insert(key.to_string());
        let v = match self.table.get(key).cloned().or(default) {
            Some(v) => v,
            None => return Err(self.err(key, "is required but missing")),
        };
        self.resolved.borrow_mut().insert(key.to_string(), v.clone());
        Ok(v)
    }

    fn as_f64(&self, key: &str, v: &Value) -> Outcome<f64> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(self.err(key, "must be a number")),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Outcome<f64> {
        let v = self.take(key, Some(Value::Float(default)))?;
        let x = self.as_f64(key, &v)?;
        if !x.is_finite() {
            return Err(self.err(key, "must be finite"));
        }
        Ok(x)
    }

    pub fn usize(&self, key: &str, default: usize) -> Outcome<usize> {
        match self.take(key, Some(Value::Integer(default as i64)))? {
            Value::Integer(i) if i >= 0 => Ok(i as usize),
            _ => Err(self.err(key, "must be a non-negative integer")),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Outcome<bool> {
        match self.take(key, Some(Value::Boolean(default)))? {
            Value::Boolean(b) => Ok(b),
            _ => Err(self.err(key, "must be true or false")),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> Outcome<String> {
        match self.take(key, Some(Value::String(default.into())))? {
            Value::String(s) => Ok(s),
            _ => Err(self.err(key, "must be a string")),
        }
    }

    /// One of a fixed set of names.
    pub fn choice(&self, key: &str, default: &str, allowed: &[&str]) -> Outcome<String> {
        let s = self.string(key, default)?;
        if !allowed.contains(&s.as_str()) {
            return Err(self.err(key, &format!("must be one of {allowed:?}, got `{s}`")));
        }
        Ok(s)
    }

    pub fn path(&self, key: &str) -> Outcome<PathBuf> {
        match self.take(key, None)? {
            Value::String(s) => Ok(PathBuf::from(s)),
            _ => Err(self.err(key, "must be a path string")),
        }
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> Outcome<Vec<f64>> {
        let d = Value::Array(default.iter().map(|&x| Value::Float(x)).collect());
        match self.take(key, Some(d))? {
            Value::Array(a) => a.iter().map(|v| self.as_f64(key, v)).collect(),
            _ => Err(self.err(key, "must be a list of numbers")),
        }
    }

    /// Complex numbers written as `[re, im]` pairs.
    pub fn complex_list(&self, key: &str) -> Outcome<Vec<Complex64>> {
        match self.take(key, Some(Value::Array(Vec::new())))? {
            Value::Array(a) => a
                .iter()
                .map(|v| match v {
                    Value::Array(p) if p.len() == 2 => {
                        Ok(Complex64::new(self.as_f64(key, &p[0])?, self.as_f64(key, &p[1])?))
                    }
                    _ => Err(self.err(key, "entries must be [re, im] pairs")),
                })
                .collect(),
            _ => Err(self.err(key, "must be a list of [re, im] pairs")),
        }
    }

    /// Raw list for callers with their own entry syntax.
    pub fn list(&self, key: &str) -> Outcome<Vec<Value>> {
        match self.take(key, Some(Value::Array(Vec::new())))? {
            Value::Array(a) => Ok(a),
            _ => Err(self.err(key, "must be a list")),
        }
    }

    /// Rejects keys no getter asked for.
    pub fn finish(&self) -> Outcome<Table> {
        let used = self.used.borrow();
        if let Some(k) = self.table.keys().find(|k| !used.contains(*k)) {
            return Err(self.err(k, "is not a parameter of this command"));
        }
        Ok(self.resolved.borrow().clone())
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

/// Resolves a relative input path against the directory of a manifest or the
/// current directory.
pub fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
