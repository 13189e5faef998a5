//! `--config` files and the `SEMIFLEX_THREADS` cap.
//!
//! A config file is flat `key=value` text; `#` starts a comment. `command`
//! names the subcommand when none is given; every other key becomes a
//! `--key value` flag unless the same flag is already on the command line.

use std::fs;
use std::path::Path;

use anyhow::Context;

use crate::{IoFailure, Usage};

pub const COMMANDS: [&str; 6] = ["trajectories", "phase-scan", "green", "sample", "converge", "spectrum"];

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, Usage> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Usage(format!("config line {}: expected key=value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Removes `--config path` from `args` and merges the file into them.
pub fn expand_args(mut args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err(Usage("--config needs a path".into()).into());
            }
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(IoFailure)
        .with_context(|| format!("reading config {path}"))?;
    let entries = parse_config(&text)?;
    let has_command = args.iter().skip(1).any(|a| COMMANDS.contains(&a.as_str()));
    if !has_command {
        match entries.iter().find(|(k, _)| k == "command") {
            Some((_, c)) => args.insert(1, c.clone()),
            None => return Err(Usage("no subcommand given and config has no 'command' key".into()).into()),
        }
    }
    for (k, v) in entries {
        if k == "command" {
            continue;
        }
        let flag = format!("--{k}");
        let present = args
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if present {
            continue;
        }
        match v.as_str() {
            "true" => args.push(flag),
            "false" => {}
            _ => {
                args.push(flag);
                args.push(v);
            }
        }
    }
    Ok(args)
}

/// Caps the global rayon pool at `SEMIFLEX_THREADS`, if set.
pub fn apply_thread_cap() -> Result<(), Usage> {
    let Ok(v) = std::env::var("SEMIFLEX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Usage(format!("SEMIFLEX_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Usage(format!("cannot configure thread pool: {e}")))
}
