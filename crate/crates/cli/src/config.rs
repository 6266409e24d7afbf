//! `key=value` config files, spliced into the argument list ahead of the
//! command-line flags so that later flags override them.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::UsageError;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, UsageError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key=value, found `{line}`", i + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Finds `--config FILE` (or `--config=FILE`) in `args` and inserts the
/// file's settings right after the subcommand name.
pub fn expand(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>, UsageError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strs.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| UsageError(format!("cannot read config file {path}: {e}")))?;
    let Some((at, sub)) = strs
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cmd.find_subcommand(a).map(|s| (i, s)))
    else {
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (key, value) in parse(&text)? {
        if key == "config" {
            return Err(UsageError("config files cannot include other config files".into()));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| UsageError(format!("config key `{key}` is not a flag of `{}`", sub.get_name())))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            let on: bool =
                value.parse().map_err(|_| UsageError(format!("config key `{key}` expects true or false, found `{value}`")))?;
            if on {
                injected.push(OsString::from(format!("--{key}")));
            }
        } else {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut out = args;
    out.splice(at + 1..at + 1, injected);
    Ok(out)
}
