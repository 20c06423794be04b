//! Flat key-value run configuration.
//!
//! A config file holds `key = value` pairs with TOML value syntax and no
//! tables. `--set key=value` overrides are applied on top, in order. Every
//! `*_db` key is `10·log₁₀` of a linear power.

use clipped_ofdm::bfpa::{self, AmplifierResponse, BfpaModel, LinearPa, ModelCard};
use clipped_ofdm::link_analysis::{SystemConfig, QAM_ORDERS};
use clipped_ofdm::imp_count::MAX_SUBCARRIERS;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use toml::{Spanned, Value};

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_STREAMS: usize = 16;
pub const DEFAULT_SIGMA_CH_DB: f64 = -30.0;
pub const THREADS_ENV: &str = "CLIPPED_OFDM_THREADS";

pub const KEYS: &[&str] = &[
    "n_s",
    "n_t",
    "n_r",
    "m",
    "j",
    "sigma_ch_db",
    "eta",
    "e_u_db",
    "e_c",
    "trials",
    "seed",
    "parallel_streams",
    "pa",
    "pa_path",
    "pa_order",
    "pa_p_mod",
];

/// Where a value came from, for error messages.
#[derive(Clone, Debug, PartialEq)]
pub enum Origin {
    Line(usize),
    Override(usize),
    Env,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(n) => write!(f, "override #{n}"),
            Origin::Env => write!(f, "environment"),
        }
    }
}

#[derive(Debug, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub origin: Option<Origin>,
    pub msg: String,
}

impl ConfigError {
    fn at(key: &str, origin: &Origin, msg: impl Into<String>) -> Self {
        Self { key: Some(key.to_string()), origin: Some(origin.clone()), msg: msg.into() }
    }

    pub fn plain(msg: impl Into<String>) -> Self {
        Self { key: None, origin: None, msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(key) = &self.key {
            write!(f, " in `{key}`")?;
        }
        if let Some(origin) = &self.origin {
            write!(f, " ({origin})")?;
        }
        write!(f, ": {}", self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub enum PaSource {
    Reference,
    Linear,
    /// JSON model card as written by `fit-pa`.
    Card(PathBuf),
    /// Two-column AM-AM text fitted on load.
    AmAm { path: PathBuf, order: usize, p_mod: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub trials: usize,
    pub seed: u64,
    pub parallel_streams: usize,
    pub pa: PaSource,
}

/// The amplifier a run uses. `bfpa` is set for Bessel-Fourier sources.
pub struct Amplifier {
    pub response: Box<dyn AmplifierResponse>,
    pub bfpa: Option<BfpaModel>,
}

struct Entry {
    value: Value,
    origin: Origin,
    base: Option<PathBuf>,
}

pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::plain(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf);
        for (key, value, line) in parse_text(&text)? {
            entries.insert(key, Entry { value, origin: Origin::Line(line), base: base.clone() });
        }
    }
    for (i, raw) in overrides.iter().enumerate() {
        let origin = Origin::Override(i + 1);
        let (key, value) = parse_override(raw, &origin)?;
        entries.insert(key, Entry { value, origin, base: None });
    }
    build(&entries)
}

/// Key, value and 1-based line of every entry in a config file.
pub fn parse_text(text: &str) -> Result<Vec<(String, Value, usize)>, ConfigError> {
    let table: BTreeMap<Spanned<String>, Spanned<Value>> = toml::from_str(text).map_err(|e| ConfigError {
        key: None,
        origin: e.span().map(|s| Origin::Line(line_of(text, s.start))),
        msg: e.message().to_string(),
    })?;
    let mut out = Vec::with_capacity(table.len());
    for (key, value) in table {
        let line = line_of(text, key.span().start);
        let key = key.into_inner();
        check_key(&key, &Origin::Line(line))?;
        if matches!(value.get_ref(), Value::Table(_) | Value::Array(_)) {
            return Err(ConfigError::at(&key, &Origin::Line(line), "tables and arrays are not supported"));
        }
        out.push((key, value.into_inner(), line));
    }
    out.sort_by_key(|e| e.2);
    Ok(out)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn check_key(key: &str, origin: &Origin) -> Result<(), ConfigError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError::at(key, origin, format!("unknown key; expected one of {}", KEYS.join(", "))))
    }
}

/// `key=value` with TOML value syntax; bare words are read as strings.
pub fn parse_override(raw: &str, origin: &Origin) -> Result<(String, Value), ConfigError> {
    let Some((key, value)) = raw.split_once('=') else {
        return Err(ConfigError { key: None, origin: Some(origin.clone()), msg: format!("expected key=value, got {raw:?}") });
    };
    let key = key.trim();
    check_key(key, origin)?;
    let value = value.trim();
    let parsed = toml::from_str::<BTreeMap<String, Value>>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

fn build(entries: &BTreeMap<String, Entry>) -> Result<RunConfig, ConfigError> {
    let get = |key: &str| entries.get(key);
    let defaults = SystemConfig::default();
    let mut system = SystemConfig { sigma_ch_sq: from_db(DEFAULT_SIGMA_CH_DB), ..defaults };

    if let Some(e) = get("n_s") {
        system.n_s = count(e, "n_s", 1, MAX_SUBCARRIERS)?;
    }
    if let Some(e) = get("n_t") {
        system.n_t = count(e, "n_t", 1, usize::MAX)?;
    }
    if let Some(e) = get("n_r") {
        system.n_r = count(e, "n_r", 1, usize::MAX)?;
    }
    if let Some(e) = get("m") {
        let m = count(e, "m", 1, usize::MAX)?;
        if !QAM_ORDERS.contains(&m) {
            return Err(ConfigError::at("m", &e.origin, format!("must be one of {QAM_ORDERS:?}, got {m}")));
        }
        system.m = m;
    }
    if let Some(e) = get("j") {
        system.j = count(e, "j", 1, usize::MAX)?;
    }
    if let Some(e) = get("sigma_ch_db") {
        system.sigma_ch_sq = from_db(finite(e, "sigma_ch_db")?);
    }
    if let Some(e) = get("eta") {
        let eta = real(e, "eta")?;
        if !(eta > 0.0) {
            return Err(ConfigError::at("eta", &e.origin, format!("must be > 0, got {eta}")));
        }
        system.eta = eta;
    }
    if let Some(e) = get("e_u_db") {
        system.e_u = from_db(finite(e, "e_u_db")?);
    }
    if let Some(e) = get("e_c") {
        let e_c = finite(e, "e_c")?;
        if e_c < 0.0 {
            return Err(ConfigError::at("e_c", &e.origin, format!("must be >= 0, got {e_c}")));
        }
        system.e_c = e_c;
    }
    system.validate().map_err(|err| ConfigError::plain(err.to_string()))?;

    let trials = match get("trials") {
        Some(e) => count(e, "trials", 1, usize::MAX)?,
        None => DEFAULT_TRIALS,
    };
    let seed = match get("seed") {
        Some(e) => count(e, "seed", 0, usize::MAX)? as u64,
        None => DEFAULT_SEED,
    };
    let parallel_streams = match get("parallel_streams") {
        Some(e) => count(e, "parallel_streams", 1, usize::MAX)?,
        None => DEFAULT_STREAMS,
    };
    let pa = pa_source(entries)?;
    Ok(RunConfig { system, trials, seed, parallel_streams, pa })
}

fn pa_source(entries: &BTreeMap<String, Entry>) -> Result<PaSource, ConfigError> {
    let kind = match entries.get("pa") {
        Some(e) => (text(e, "pa")?, Some(e)),
        None => ("reference".to_string(), None),
    };
    let path = |kind_entry: Option<&Entry>| -> Result<PathBuf, ConfigError> {
        let Some(e) = entries.get("pa_path") else {
            let origin = kind_entry.map(|k| k.origin.clone());
            return Err(ConfigError { key: Some("pa_path".into()), origin, msg: "required by this pa source".into() });
        };
        let p = PathBuf::from(text(e, "pa_path")?);
        Ok(match (&e.base, p.is_relative()) {
            (Some(base), true) => base.join(p),
            _ => p,
        })
    };
    Ok(match kind.0.as_str() {
        "reference" => PaSource::Reference,
        "linear" => PaSource::Linear,
        "card" => PaSource::Card(path(kind.1)?),
        "am_am" => {
            let order = match entries.get("pa_order") {
                Some(e) => count(e, "pa_order", 1, bfpa::MAX_ORDER)?,
                None => bfpa::REFERENCE_ORDER,
            };
            let p_mod = match entries.get("pa_p_mod") {
                Some(e) => {
                    let v = finite(e, "pa_p_mod")?;
                    if v <= 0.0 {
                        return Err(ConfigError::at("pa_p_mod", &e.origin, format!("must be > 0, got {v}")));
                    }
                    v
                }
                None => bfpa::REFERENCE_P_MOD,
            };
            PaSource::AmAm { path: path(kind.1)?, order, p_mod }
        }
        other => {
            let origin = kind.1.map(|e| e.origin.clone()).unwrap_or(Origin::Env);
            return Err(ConfigError::at(
                "pa",
                &origin,
                format!("unknown source {other:?}; expected reference, linear, card or am_am"),
            ));
        }
    })
}

fn count(e: &Entry, key: &str, min: usize, max: usize) -> Result<usize, ConfigError> {
    match e.value {
        Value::Integer(v) if v >= min as i64 && (v as u64) <= max as u64 => Ok(v as usize),
        Value::Integer(v) => Err(ConfigError::at(
            key,
            &e.origin,
            if max == usize::MAX { format!("must be >= {min}, got {v}") } else { format!("must be in {min}..={max}, got {v}") },
        )),
        ref other => Err(ConfigError::at(key, &e.origin, format!("expected an integer, got {}", other.type_str()))),
    }
}

fn real(e: &Entry, key: &str) -> Result<f64, ConfigError> {
    match e.value {
        Value::Float(v) if !v.is_nan() => Ok(v),
        Value::Integer(v) => Ok(v as f64),
        ref other => Err(ConfigError::at(key, &e.origin, format!("expected a number, got {other}"))),
    }
}

fn finite(e: &Entry, key: &str) -> Result<f64, ConfigError> {
    let v = real(e, key)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::at(key, &e.origin, format!("must be finite, got {v}")))
    }
}

fn text(e: &Entry, key: &str) -> Result<String, ConfigError> {
    match &e.value {
        Value::String(s) => Ok(s.clone()),
        other => Err(ConfigError::at(key, &e.origin, format!("expected a string, got {}", other.type_str()))),
    }
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Stream count after the `CLIPPED_OFDM_THREADS` cap.
pub fn capped_streams(configured: usize, env: Option<&str>) -> Result<usize, ConfigError> {
    let Some(raw) = env else {
        return Ok(configured);
    };
    match raw.trim().parse::<usize>() {
        Ok(cap) if cap >= 1 => Ok(configured.min(cap)),
        _ => Err(ConfigError::at(THREADS_ENV, &Origin::Env, format!("expected a positive integer, got {raw:?}"))),
    }
}

impl PaSource {
    pub fn load(&self) -> Result<Amplifier, ConfigError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| ConfigError {
                key: Some("pa_path".into()),
                origin: None,
                msg: format!("cannot read {}: {e}", p.display()),
            })
        };
        let bad = |p: &Path, e: &dyn fmt::Display| ConfigError {
            key: Some("pa_path".into()),
            origin: None,
            msg: format!("{}: {e}", p.display()),
        };
        let model = match self {
            PaSource::Reference => BfpaModel::reference().model,
            PaSource::Linear => {
                let pa = LinearPa::new(1.0, 1.0).expect("unit linear amplifier is valid");
                return Ok(Amplifier { response: Box::new(pa), bfpa: None });
            }
            PaSource::Card(p) => {
                let card: ModelCard = serde_json::from_str(&read(p)?).map_err(|e| bad(p, &e))?;
                BfpaModel::from_card(&card).map_err(|e| bad(p, &e))?
            }
            PaSource::AmAm { path, order, p_mod } => {
                let samples = bfpa::parse_am_am(&read(path)?).map_err(|e| bad(path, &e))?;
                bfpa::fit(&samples, *order, *p_mod).map_err(|e| bad(path, &e))?.model
            }
        };
        Ok(Amplifier { response: Box::new(model.clone()), bfpa: Some(model) })
    }
}
