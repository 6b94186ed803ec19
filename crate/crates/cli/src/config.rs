//! `--config FILE` support: a JSON object whose keys are flag names. Its
//! entries are spliced into the argument list right after the subcommand,
//! skipping any flag that is also given explicitly, so explicit flags win.

use std::ffi::OsString;
use std::fs;

use serde_json::Value;

use crate::CliError;

pub fn merge(mut argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
    let Value::Object(entries) = doc else {
        return Err(CliError::Config(format!(
            "{path}: expected a JSON object of flag values"
        )));
    };
    let mut injected = Vec::new();
    for (key, value) in entries {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || is_explicit(&argv, &flag) {
            continue;
        }
        let rendered = match value {
            Value::Null | Value::Bool(false) => continue,
            Value::Bool(true) => None,
            Value::Number(v) => Some(v.to_string()),
            Value::String(v) => Some(v),
            Value::Array(items) => Some(
                items
                    .iter()
                    .map(scalar)
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| {
                        CliError::Config(format!("{path}: `{key}` must be a list of scalars"))
                    })?
                    .join(","),
            ),
            Value::Object(_) => {
                return Err(CliError::Config(format!(
                    "{path}: `{key}` must not be an object"
                )));
            }
        };
        injected.push(OsString::from(flag));
        injected.extend(rendered.map(OsString::from));
    }
    let at = 2.min(argv.len());
    argv.splice(at..at, injected);
    Ok(argv)
}

fn scalar(value: &Value) -> Option<String> {
    match value {
        Value::Number(v) => Some(v.to_string()),
        Value::String(v) => Some(v.clone()),
        Value::Bool(v) => Some(v.to_string()),
        _ => None,
    }
}

fn config_path(argv: &[OsString]) -> Option<String> {
    let args: Vec<_> = argv.iter().map(|a| a.to_string_lossy()).collect();
    args.iter().enumerate().find_map(|(k, arg)| {
        if arg == "--config" {
            args.get(k + 1).map(|p| p.to_string())
        } else {
            arg.strip_prefix("--config=").map(str::to_string)
        }
    })
}

fn is_explicit(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|arg| {
        let arg = arg.to_string_lossy();
        arg == flag
            || arg
                .strip_prefix(flag)
                .is_some_and(|rest| rest.starts_with('='))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<OsString> {
        list.iter().map(OsString::from).collect()
    }

    #[test]
    fn explicit_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"n": 100, "reps": 7, "bandwidth_mult": 0.5, "keep_statistics": true}"#,
        )
        .unwrap();
        let merged = merge(args(&[
            "xsu",
            "mc",
            "--config",
            path.to_str().unwrap(),
            "--reps=9",
        ]))
        .unwrap();
        let merged: Vec<String> = merged
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        assert_eq!(&merged[..2], ["xsu", "mc"]);
        assert!(merged.windows(2).any(|w| w == ["--n", "100"]));
        assert!(merged.windows(2).any(|w| w == ["--bandwidth-mult", "0.5"]));
        assert!(merged.contains(&"--keep-statistics".to_string()));
        assert!(!merged.contains(&"7".to_string()));
    }

    #[test]
    fn lists_are_comma_joined() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"n_grid": [200, 500]}"#).unwrap();
        let merged = merge(args(&[
            "xsu",
            "clt-demo",
            &format!("--config={}", path.display()),
        ]))
        .unwrap();
        assert_eq!(merged[2], "--n-grid");
        assert_eq!(merged[3], "200,500");
    }

    #[test]
    fn rejects_non_objects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, "[1, 2]").unwrap();
        assert!(merge(args(&["xsu", "mc", "--config", path.to_str().unwrap()])).is_err());
    }
}
