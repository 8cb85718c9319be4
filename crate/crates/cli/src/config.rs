//! `key=value` config files, merged into the argument list.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;
use svbop_core::Error;

use crate::args::Cli;

/// Path given by `--config`, found before full parsing.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        entries.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(entries)
}

fn subcommand_name(args: &[OsString]) -> Option<String> {
    let cmd = Cli::command();
    let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    args.iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| names.contains(&a.as_str()))
}

fn given_on_command_line(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

/// Appends config entries not already given as flags. Boolean flags take
/// `true` or `false`.
pub fn merge(args: Vec<OsString>, path: &Path) -> Result<Vec<OsString>, Error> {
    let entries = parse_config(&std::fs::read_to_string(path)?)?;
    let cmd = Cli::command();
    let sub = subcommand_name(&args).and_then(|n| cmd.find_subcommand(&n).cloned());
    let mut merged = args.clone();
    for (key, value) in entries {
        if key == "config" {
            return Err(Error::ConfigConflict(
                "config files cannot include other config files".into(),
            ));
        }
        let arg = sub
            .iter()
            .flat_map(|s| s.get_arguments())
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Error::ConfigConflict(format!("unknown config key `{key}`")))?;
        if given_on_command_line(&args, &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            merged.push(format!("--{key}").into());
            merged.push(value.into());
        } else {
            match value.as_str() {
                "true" => merged.push(format!("--{key}").into()),
                "false" => {}
                other => {
                    return Err(Error::ConfigConflict(format!(
                        "`{key}` expects true or false, got `{other}`"
                    )));
                }
            }
        }
    }
    Ok(merged)
}
