//! Machine-readable run reports and small console tables.
//!
//! Reports are JSON with a fixed envelope: tool identity, the effective
//! configuration, content digests of every input file, then the
//! command-specific body. They contain no wall-clock times or host
//! details, so a rerun over the same inputs produces the same bytes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: "csfilter",
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// SHA-256 of a file's contents, streamed.
pub fn digest_file(path: &Path) -> anyhow::Result<InputDigest> {
    let mut file =
        File::open(path).with_context(|| format!("digesting `{}`", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .with_context(|| format!("digesting `{}`", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
    })
}

#[derive(Debug, Serialize)]
pub struct ReportEnvelope<B: Serialize> {
    pub tool: ToolInfo,
    pub command: &'static str,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    #[serde(flatten)]
    pub body: B,
}

impl<B: Serialize> ReportEnvelope<B> {
    pub fn new(
        command: &'static str,
        config: &PipelineConfig,
        inputs: Vec<InputDigest>,
        body: B,
    ) -> Self {
        Self {
            tool: ToolInfo::default(),
            command,
            config: config.clone(),
            inputs,
            body,
        }
    }

    /// Writes the report as pretty JSON with a trailing newline.
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let file = File::create(path)
            .with_context(|| format!("creating report `{}`", path.display()))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, self)
            .with_context(|| format!("writing report `{}`", path.display()))?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }
}

/// Renders a right-ragged console table: header row, dashed rule, then
/// data rows, columns padded to their widest cell.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let columns = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(columns) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let render_row = |out: &mut String, cells: &[String]| {
        for (i, cell) in cells.iter().enumerate().take(columns) {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            if i + 1 < columns {
                for _ in cell.chars().count()..widths[i] {
                    out.push(' ');
                }
            }
        }
        out.push('\n');
    };
    let header_cells: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    render_row(&mut out, &header_cells);
    let rule_width = widths.iter().sum::<usize>() + 2 * (columns.saturating_sub(1));
    out.push_str(&"-".repeat(rule_width));
    out.push('\n');
    for row in rows {
        render_row(&mut out, row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_pads_columns() {
        let table = render_table(
            &["metric", "value"],
            &[
                vec!["mer".into(), "0.1234".into()],
                vec!["retention".into(), "0.98".into()],
            ],
        );
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "metric     value");
        assert_eq!(lines[1], "-----------------");
        assert_eq!(lines[2], "mer        0.1234");
        assert_eq!(lines[3], "retention  0.98");
    }

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        std::fs::write(&path, b"abc").unwrap();
        let digest = digest_file(&path).unwrap();
        assert_eq!(
            digest.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn envelope_serializes_flat_body() {
        #[derive(Serialize)]
        struct Body {
            kept: usize,
        }
        let cfg = PipelineConfig::default();
        let envelope = ReportEnvelope::new("filter", &cfg, vec![], Body { kept: 3 });
        let json = serde_json::to_value(&envelope).unwrap();
        assert_eq!(json["command"], "filter");
        assert_eq!(json["kept"], 3);
        assert_eq!(json["tool"]["name"], "csfilter");
        assert!(json["config"]["workers"].is_null());
    }
}
