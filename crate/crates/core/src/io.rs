//! Address list files: one address per line, optional tab-separated
//! trailing columns, `#` starts a comment line.

use std::path::Path;

use crate::addr::{format_address, parse_address, Ipv6Addr};
use crate::error::{Error, Result};

/// Non-comment lines as (1-based line number, columns).
pub fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').map(str::trim).collect()))
        }
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses the first column of every record.
pub fn parse_addresses(text: &str, path: &Path) -> Result<Vec<Ipv6Addr>> {
    records(text)
        .map(|(line, cols)| parse_address(cols[0]).map_err(|e| Error::data(path, line, e.to_string())))
        .collect()
}

pub fn read_addresses(path: &Path) -> Result<Vec<Ipv6Addr>> {
    parse_addresses(&read_text(path)?, path)
}

/// Canonical addresses under a format header line.
pub fn addresses_text(format: &str, addrs: &[Ipv6Addr]) -> String {
    let mut out = format!("# {format}\n");
    for a in addrs {
        out.push_str(&format_address(*a));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_columns() {
        let text = "# header\n\n2001:db8::1\tfixed-iid\n  # note\n2001:db8::2\n";
        let addrs = parse_addresses(text, Path::new("x.txt")).unwrap();
        assert_eq!(addrs, vec!["2001:db8::1".parse().unwrap(), "2001:db8::2".parse().unwrap()]);
    }

    #[test]
    fn bad_line_reports_path_and_line() {
        let err = parse_addresses("2001:db8::1\n\n2001:db8::zz\n", Path::new("seeds.txt")).unwrap_err();
        match &err {
            Error::Data { line, .. } => assert_eq!(*line, 3),
            other => panic!("{other:?}"),
        }
        assert!(err.to_string().starts_with("seeds.txt:3:"));
    }
}
