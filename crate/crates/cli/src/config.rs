use std::ffi::OsString;
use std::path::Path;

use anyhow::Context;
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};
use serde_json::Value;

use crate::UsageError;

/// Appends `--key value` for every config entry whose flag was not set on
/// the command line or through the environment. Keys are long flag names.
pub fn merge(cmd: &Command, argv: Vec<OsString>, matches: &ArgMatches, path: &Path) -> anyhow::Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(entries) = value else {
        return Err(UsageError(format!("config {} must hold a JSON object", path.display())).into());
    };
    let Some((sub_name, sub_matches)) = matches.subcommand() else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(sub_name).expect("parsed subcommand exists");
    let mut extra: Vec<OsString> = Vec::new();
    for (key, v) in entries {
        if key == "config" {
            return Err(UsageError("config files cannot include other configs".into()).into());
        }
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| UsageError(format!("unknown config key `{key}` for `{sub_name}`")))?;
        let id = arg.get_id().as_str();
        let explicit = [sub_matches, matches].iter().any(|m| {
            matches!(
                m.try_contains_id(id).ok().and_then(|_| m.value_source(id)),
                Some(ValueSource::CommandLine | ValueSource::EnvVariable)
            )
        });
        if explicit {
            continue;
        }
        let flag = format!("--{key}");
        match (arg.get_action(), &v) {
            (ArgAction::SetTrue, Value::Bool(true)) => extra.push(flag.into()),
            (ArgAction::SetTrue, Value::Bool(false)) => {}
            (ArgAction::SetTrue, _) => return Err(UsageError(format!("config key `{key}` must be a boolean")).into()),
            (ArgAction::Append, Value::Array(items)) if arg.get_long() == Some("input") => {
                for item in items {
                    extra.push(flag.clone().into());
                    extra.push(scalar(&key, item)?.into());
                }
            }
            (_, Value::Array(items)) => {
                let parts: anyhow::Result<Vec<String>> = items.iter().map(|i| scalar(&key, i)).collect();
                extra.push(format!("{flag}={}", parts?.join(",")).into());
            }
            _ => extra.push(format!("{flag}={}", scalar(&key, &v)?).into()),
        }
    }
    let mut out = argv;
    out.extend(extra);
    Ok(out)
}

fn scalar(key: &str, v: &Value) -> anyhow::Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(UsageError(format!("config key `{key}` has an unsupported value {v}")).into()),
    }
}
