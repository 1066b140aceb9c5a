//! `--config` files are turned into ordinary flags.
//!
//! Top-level keys apply to any subcommand that has a flag of that name;
//! a table named after the subcommand applies unconditionally, so unknown
//! keys there are reported as usage errors. The generated flags are placed
//! right after the subcommand, so flags given on the command line win.
//!
//! ```toml
//! jobs = 4
//! seed = 42
//!
//! [query]
//! endpoint = "http://localhost:8000/v1"
//! model = "llava-1.5-7b"
//! ```

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;
use serde_json::Value;

use crate::Cli;

const VALUE_FLAGS: &[&str] = &["--config", "--jobs", "--log-format"];

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn subcommand_index(argv: &[OsString], names: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if VALUE_FLAGS.contains(&s.as_ref()) {
            i += 2;
            continue;
        }
        if names.iter().any(|n| *n == s) {
            return Some(i);
        }
        if !s.starts_with('-') {
            return None;
        }
        i += 1;
    }
    None
}

pub fn read_config(path: &Path) -> Result<serde_json::Map<String, Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::to_value(t).map_err(|e| e.to_string())?
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(format!("{}: expected a table of settings", path.display())),
    }
}

fn push_flag(out: &mut Vec<OsString>, key: &str, value: &Value) -> Result<(), String> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        Value::Bool(true) => out.push(flag.into()),
        Value::Bool(false) | Value::Null => {}
        Value::String(s) => out.extend([flag.into(), s.into()]),
        Value::Number(n) => out.extend([flag.into(), n.to_string().into()]),
        Value::Array(items) => {
            for item in items {
                push_flag(out, key, item)?;
            }
        }
        Value::Object(_) => return Err(format!("setting {key:?} cannot be a table")),
    }
    Ok(())
}

/// Returns `argv` with the config file's settings spliced in as flags.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let settings = read_config(Path::new(&path))?;
    let cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(at) = subcommand_index(&argv, &names) else {
        return Ok(argv);
    };
    let name = argv[at].to_string_lossy().into_owned();
    let sub = cmd.find_subcommand(&name).expect("known subcommand");
    let known = |key: &str| {
        let long = key.replace('_', "-");
        sub.get_arguments()
            .chain(cmd.get_arguments())
            .any(|a| a.get_long() == Some(long.as_str()))
    };

    let mut flags = Vec::new();
    for (key, value) in &settings {
        if key == "config" || value.is_object() {
            continue;
        }
        if known(key) {
            push_flag(&mut flags, key, value)?;
        }
    }
    if let Some(Value::Object(section)) = settings.get(&name) {
        for (key, value) in section {
            push_flag(&mut flags, key, value)?;
        }
    }
    let mut out = argv[..=at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[at + 1..]);
    Ok(out)
}
