use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::protocol::{merge_tables, preset_table, ExperimentConfig};

/// Keys that are valid but absent from the serialized defaults.
const OPTIONAL_KEYS: &[(&str, Kind)] = &[
    ("preset", Kind::Text),
    ("detector.center_ns", Kind::Number),
    ("detector.profile_file", Kind::Text),
    ("attack.attack_prob", Kind::Number),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Number,
    Text,
}

/// Command-line overrides applied after the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
}

/// 1-based line of `key_path` in a TOML document, found by tracking section
/// headers. Dotted keys inside sections and inline dotted keys are matched.
pub fn find_line(text: &str, key_path: &str) -> Option<usize> {
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[') {
            section = h.trim_end_matches(']').trim().to_string();
            if section == key_path {
                return Some(i + 1);
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let key: String = key.split('.').map(|p| p.trim().trim_matches('"')).collect::<Vec<_>>().join(".");
        let full = if section.is_empty() { key } else { format!("{section}.{key}") };
        if full == key_path {
            return Some(i + 1);
        }
    }
    None
}

fn with_line(err: Error, text: &str) -> Error {
    match err {
        Error::Config { key, line: None, message } => {
            let line = find_line(text, &key);
            Error::Config { key, line, message }
        }
        other => other,
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Checks `user` against the shape of `defaults`, normalizing numbers in
/// place: integers become floats where floats are expected, and integral
/// floats become integers where counts are expected.
fn check_schema(user: &mut Table, defaults: &Table, prefix: &str) -> Result<()> {
    for (key, value) in user.iter_mut() {
        let path = join(prefix, key);
        let Some(expected) = defaults.get(key) else {
            let Some((_, kind)) = OPTIONAL_KEYS.iter().find(|(k, _)| *k == path) else {
                return Err(Error::config(path, "unknown key"));
            };
            match (kind, &*value) {
                (Kind::Number, Value::Integer(i)) => *value = Value::Float(*i as f64),
                (Kind::Number, Value::Float(_)) | (Kind::Text, Value::String(_)) => {}
                (kind, v) => {
                    let want = if *kind == Kind::Number { "number" } else { "string" };
                    return Err(Error::config(path, format!("expected a {want}, found {}", type_name(v))));
                }
            }
            continue;
        };
        let mismatch = |v: &Value| Error::config(&path, format!("expected {}, found {}", type_name(expected), type_name(v)));
        match (expected, &mut *value) {
            (Value::Table(d), Value::Table(u)) => check_schema(u, d, &path)?,
            (Value::Float(_), Value::Integer(i)) => *value = Value::Float(*i as f64),
            (Value::Float(_), Value::Float(_)) => {}
            (Value::Float(_) | Value::String(_), Value::String(s)) if path == "source.ref_bandwidth_ghz" => {
                if s != "inf" {
                    return Err(Error::config(path, format!("expected a number or \"inf\", found {s:?}")));
                }
            }
            (Value::String(_), Value::Float(_) | Value::Integer(_)) if path == "source.ref_bandwidth_ghz" => {
                if let Value::Integer(i) = value {
                    *value = Value::Float(*i as f64);
                }
            }
            (Value::Integer(_), Value::Integer(i)) => {
                if *i < 0 {
                    return Err(Error::config(path, format!("{i} must be >= 0")));
                }
            }
            (Value::Integer(_), Value::Float(f)) => {
                if !(f.fract() == 0.0 && *f >= 0.0 && *f <= i64::MAX as f64) {
                    return Err(Error::config(path, format!("expected a whole number, found {f}")));
                }
                *value = Value::Integer(*f as i64);
            }
            (Value::Array(_), Value::Array(items)) => {
                for item in items.iter_mut() {
                    match item {
                        Value::Integer(i) => *item = Value::Float(*i as f64),
                        Value::Float(_) => {}
                        other => return Err(Error::config(&path, format!("expected numbers, found {}", type_name(other)))),
                    }
                }
            }
            (Value::String(_), Value::String(_)) | (Value::Boolean(_), Value::Boolean(_)) => {}
            (_, v) => return Err(mismatch(v)),
        }
    }
    Ok(())
}

/// Deserializes each user leaf on its own against the defaults, so that an
/// invalid value (for example an unknown enum variant) is reported by key.
fn check_values(user: &Table, defaults: &Table, prefix: &str) -> Result<()> {
    for (key, value) in user {
        let path = join(prefix, key);
        if let Value::Table(t) = value {
            check_values(t, defaults, &path)?;
            continue;
        }
        let mut trial = defaults.clone();
        let mut overlay = Table::new();
        let parts: Vec<&str> = path.split('.').collect();
        let mut cursor = &mut overlay;
        for p in &parts[..parts.len() - 1] {
            cursor = cursor
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("fresh table");
        }
        cursor.insert(parts[parts.len() - 1].to_string(), value.clone());
        merge_tables(&mut trial, &overlay);
        if let Err(Error::Config { message, .. }) = ExperimentConfig::from_table(trial) {
            return Err(Error::config(path, message));
        }
    }
    Ok(())
}

fn parse_toml(text: &str, path: &Path) -> Result<Table> {
    text.parse::<Table>().map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Config {
            key: "config".into(),
            line,
            message: format!("{}: {}", path.display(), e.message()),
        }
    })
}

/// Resolves a configuration: defaults, then the preset (command line first,
/// else the file's `preset` key), then the file, then command-line flags.
/// The result is validated before it is returned.
pub fn resolve_config(file: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let defaults = ExperimentConfig::default().to_table();
    let (text, mut user) = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let table = parse_toml(&text, path)?;
            (text, table)
        }
        None => (String::new(), Table::new()),
    };
    let with_line = |e: Error| with_line(e, &text);
    check_schema(&mut user, &defaults, "").map_err(with_line)?;
    let preset = overrides
        .preset
        .clone()
        .or_else(|| user.get("preset").and_then(|v| v.as_str()).map(str::to_string));
    user.remove("preset");
    check_values(&user, &defaults, "").map_err(with_line)?;

    let mut table = defaults;
    if let Some(name) = &preset {
        merge_tables(&mut table, &preset_table(name).map_err(with_line)?);
        table.insert("preset".into(), Value::String(name.clone()));
    }
    merge_tables(&mut table, &user);
    let mut cfg = ExperimentConfig::from_table(table).map_err(with_line)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(rounds) = overrides.rounds {
        cfg.protocol.rounds = rounds;
    }
    cfg.validate().map_err(with_line)?;
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    resolve_config(Some(path), &Overrides::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn config_error(text: &str) -> (String, Option<usize>) {
        match parse_config(file(text).path()) {
            Err(Error::Config { key, line, .. }) => (key, line),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(parse_config(file("").path()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn negative_loss_names_key_and_line() {
        assert_eq!(
            config_error("seed = 3\n\n[channel]\nloss_db = -1\n"),
            ("channel.loss_db".to_string(), Some(4))
        );
    }

    #[test]
    fn unknown_keys_and_bad_types() {
        assert_eq!(config_error("[channel]\nlos_db = 3\n"), ("channel.los_db".into(), Some(2)));
        assert_eq!(config_error("[grid]\ndt_ns = \"x\"\n"), ("grid.dt_ns".into(), Some(2)));
        assert_eq!(config_error("[source]\nmode = \"speckle\"\n"), ("source.mode".into(), Some(2)));
        assert_eq!(config_error("[protocol]\nrounds = 2.5\n"), ("protocol.rounds".into(), Some(2)));
        assert_eq!(config_error("[nope]\nx = 1\n").0, "nope");
        assert_eq!(config_error("channel = 3\n").0, "channel");
        assert_eq!(config_error("[channel\n").0, "config");
    }

    #[test]
    fn preset_key_and_overrides() {
        let cfg = parse_config(file("preset = \"fig5c4\"\n").path()).unwrap();
        assert_eq!(cfg.channel.loss_db, 20.0);
        assert_eq!(cfg.protocol.rounds, 5_000_000_000);

        let f = file("preset = \"fig2g\"\n[channel]\nloss_db = 5\n[protocol]\nrounds = 1e4\n");
        let cfg = resolve_config(
            Some(f.path()),
            &Overrides {
                seed: Some(9),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.channel.loss_db, 5.0);
        assert_eq!(cfg.protocol.rounds, 10_000);
        assert_eq!(cfg.protocol.duty_joint, 1.0);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.preset.as_deref(), Some("fig2g"));
    }

    #[test]
    fn optional_keys_and_infinite_bandwidth() {
        let cfg = parse_config(
            file("[detector]\ncenter_ns = 2\n[attack]\nattack_prob = 1\n[source]\nref_bandwidth_ghz = \"inf\"\n").path(),
        )
        .unwrap();
        assert_eq!(cfg.detector.center_ns, Some(2.0));
        assert_eq!(cfg.attack.attack_prob, Some(1.0));
        assert!(cfg.source.ref_bandwidth_ghz.is_infinite());
        assert_eq!(
            config_error("[source]\nref_bandwidth_ghz = \"wide\"\n"),
            ("source.ref_bandwidth_ghz".into(), Some(2))
        );
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::preset("fig3e").unwrap();
        let f = file(&cfg.to_toml());
        assert_eq!(parse_config(f.path()).unwrap(), cfg);
    }
}
