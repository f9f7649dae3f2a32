//! Flat `key = value` experiment files.
//!
//! Each entry becomes the flag `--key value` (or `--key` for `true`),
//! inserted before the command-line flags so that explicit flags win.

use std::fs;

pub fn parse_config(text: &str) -> Result<Vec<String>, String> {
    let mut args = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') {
            return Err(format!("line {}: bad key {key:?}", no + 1));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` from `argv` and splices the file's flags in right
/// after the subcommand name.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    let mut rest = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or("--config needs a file path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let file_args = parse_config(&text)?;
    // argv[0] is the program, the first non-flag after it the subcommand
    let sub = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 2).unwrap_or(rest.len());
    let mut out = rest[..sub].to_vec();
    out.extend(file_args);
    out.extend_from_slice(&rest[sub..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags_and_booleans() {
        let args = parse_config("# table\nM = 1000\nR=3,4\n\nexact = true\ntiming=false\n").unwrap();
        assert_eq!(args, vec!["--M", "1000", "--R", "3,4", "--exact"]);
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn file_flags_precede_command_line_flags() {
        let dir = std::env::temp_dir().join(format!("rr-config-{}", std::process::id()));
        fs::write(&dir, "M = 10\nseed = 4\n").unwrap();
        let argv: Vec<String> = ["rr", "price", "--config", dir.to_str().unwrap(), "--M", "20"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_config(argv).unwrap();
        assert_eq!(out, vec!["rr", "price", "--M", "10", "--seed", "4", "--M", "20"]);
        fs::remove_file(dir).ok();
    }
}
