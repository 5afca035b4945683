//! CSV and JSON artifacts stamped with the config hash and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `# key=value` and `# units: …` comment lines, then a header row
/// and the records.
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    units: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# command={} config_sha256={} seed={}", prov.command, prov.config_sha256, prov.seed)?;
    writeln!(out, "# units: {units}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    units: &'a str,
    report: &'a T,
}

/// Writes `{command, config_sha256, seed, units, report}` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, units: &str, report: &T) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &Stamped { provenance: prov, units, report })?;
    writeln!(out)?;
    out.flush()
}
