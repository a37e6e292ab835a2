//! Flat `key = value` configuration files.
//!
//! Keys are long flag names (`b-level` or `b_level`). A key is turned into
//! `--key=value` and appended to the command line only when the flag was not
//! given explicitly, so flags always win. Boolean flags take `true`/`false`.

use std::ffi::OsString;
use std::fs;

use clap::CommandFactory;

use crate::Cli;

fn parse_file(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", n + 1));
        }
        out.push((key, v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
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

/// Append config-file settings that the command line does not already set.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    let entries = parse_file(&text)?;

    let cmd = Cli::command();
    let known = |sub: &clap::Command, key: &str| sub.get_arguments().find(|a| a.get_long() == Some(key)).cloned();
    let Some(sub) = args.iter().skip(1).find_map(|a| cmd.find_subcommand(a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };

    let mut merged = args.clone();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let Some(arg) = known(sub, &key) else {
            if cmd.get_subcommands().any(|s| known(s, &key).is_some()) {
                continue;
            }
            return Err(format!("unknown config key {key:?}"));
        };
        let flag = format!("--{key}");
        let given = args.iter().any(|a| {
            let s = a.to_string_lossy();
            s == flag || s.starts_with(&format!("{flag}="))
        });
        if given {
            continue;
        }
        if arg.get_action().takes_values() {
            merged.push(format!("{flag}={value}").into());
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => merged.push(flag.into()),
                "false" | "no" | "0" => {}
                other => return Err(format!("config key {key:?} expects true or false, got {other:?}")),
            }
        }
    }
    Ok(merged)
}
