//! Flat `key = value` configuration files merged into the command line.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(String, std::io::Error),
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("--config needs a path")]
    MissingPath,
}

/// Parses `key = value` lines. Blank lines and `#` comments are ignored and
/// duplicate keys are rejected.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: &str| ConfigError::Syntax { line: i + 1, msg: msg.to_string() };
        let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected key = value"))?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim().to_string());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(syntax("invalid key"));
        }
        if k == "config" {
            return Err(syntax("config files cannot include other config files"));
        }
        if out.iter().any(|(e, _)| *e == k) {
            return Err(syntax(&format!("duplicate key {k}")));
        }
        out.push((k, v));
    }
    Ok(out)
}

/// Removes `--config PATH` from argv and inserts the file's entries as flags
/// right after the subcommand (or after the program name when there is
/// none), so that explicit flags given later take precedence.
pub fn expand_args(argv: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, ConfigError> {
    let mut args = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or(ConfigError::MissingPath)?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            args.push(a);
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| ConfigError::Io(path.clone(), e))?;
    let entries = parse_kv(&text)?;
    let at = args.iter().position(|a| subcommands.contains(&a.as_str())).map_or(1.min(args.len()), |i| i + 1);
    let flags: Vec<String> = entries
        .into_iter()
        .flat_map(|(k, v)| match v.as_str() {
            "true" => vec![format!("--{k}")],
            _ => vec![format!("--{k}"), v],
        })
        .collect();
    args.splice(at..at, flags);
    Ok(args)
}
