//! Artifact emission: atomic file writes plus CSV and JSON encoders.
//!
//! Files are written to a temporary sibling and renamed into place, so a
//! crashed run never leaves a half-written artifact behind. Nothing here
//! embeds timestamps: identical runs produce byte-identical files.

use anyhow::{Context, Result};
use serde::Serialize;
use std::fs;
use std::path::Path;

/// Write `bytes` to `path` atomically (temp file + rename), creating parent
/// directories as needed.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".to_string());
    let tmp = path.with_file_name(format!(".tmp-{file_name}"));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", path.display()))?;
    Ok(())
}

/// Write a CSV file with a header row; fields use `.` decimals and are
/// joined with commas. Values must not themselves contain commas.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "csv row width");
        text.push_str(&row.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Serialize a value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).context("serialising JSON artifact")?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Fixed-precision decimal rendering for CSV cells: trims the noise of
/// shortest-round-trip float printing while staying exact for the grid
/// values used in these tables.
pub fn csv_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        let s = format!("{v:.12}");
        let s = s.trim_end_matches('0');
        let s = s.strip_suffix('.').unwrap_or(s);
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        // No temp litter left behind.
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["out.txt"]);
    }

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(
            &path,
            &["zeta", "mean"],
            &[
                vec!["0.0".into(), "0.9".into()],
                vec!["0.1".into(), "0.8".into()],
            ],
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "zeta,mean\n0.0,0.9\n0.1,0.8\n");
    }

    #[test]
    fn numbers_render_with_point_decimals_and_no_exponent() {
        assert_eq!(csv_num(0.0), "0.0");
        assert_eq!(csv_num(2.0), "2.0");
        assert_eq!(csv_num(0.1), "0.1");
        assert_eq!(csv_num(0.25), "0.25");
        assert_eq!(csv_num(1e-4), "0.0001");
        assert_eq!(csv_num(-1.5), "-1.5");
    }
}
