use std::io::Write;
use std::path::Path;

use anyhow::Context as _;
use serde::Serialize;
use uwise_core::IndexSetCollection;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `header` and one line per row; rows are already comma-joined.
pub fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut f = std::io::BufWriter::new(file);
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    f.flush()?;
    Ok(())
}

/// One-based index sets as a JSON array of arrays.
pub fn dump_sets(path: &Path, sets: &IndexSetCollection) -> anyhow::Result<()> {
    let mut text = sets.to_json();
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
