//! `key=value` config files. Entries become flags placed right after the
//! subcommand, so any flag repeated on the command line wins.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use veclm::error::{Error, Result};

use crate::args::SUBCOMMANDS;

/// Flags from a config file, in file order.
pub fn parse(text: &str, path: &Path) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Data {
                path: path.into(),
                line: i + 1,
                message: "expected key=value".into(),
            });
        };
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if key.is_empty() || key == "config" {
            return Err(Error::Data {
                path: path.into(),
                line: i + 1,
                message: format!("invalid key {key:?}"),
            });
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// The argument vector with config-file flags spliced in after the
/// subcommand name.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let extra = parse(&text, &path)?;
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(args.len(), |i| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_become_flags() {
        let text = "# comment\ndim = 64\ndeterministic=true\nfine_tune=false\n";
        let flags = parse(text, Path::new("c.cfg")).unwrap();
        assert_eq!(flags, vec![OsString::from("--dim"), "64".into(), "--deterministic".into()]);
        assert!(matches!(parse("dim 64\n", Path::new("c.cfg")), Err(Error::Data { line: 1, .. })));
    }

    #[test]
    fn spliced_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "dim=8\n").unwrap();
        let args: Vec<OsString> = ["veclm", "--config", cfg.to_str().unwrap(), "embed", "--dim", "16"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged = merge(args).unwrap();
        let tail: Vec<_> = merged[4..].iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(tail, ["--dim", "8", "--dim", "16"]);
    }
}
