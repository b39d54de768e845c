//! Output files. Every file is written to a temporary sibling and renamed
//! into place, so readers never see a partial file.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tilesim_core::device::TraceZone;

/// Fixed CSV headers, one per emitted table.
pub mod schema {
    pub const ADD: &[&str] = &[
        "tiles",
        "unit",
        "fmt",
        "cycles",
        "flops_per_cycle",
        "predicted_flops_per_cycle",
        "roofline_flops_per_cycle",
    ];
    pub const DOT: &[&str] = &[
        "cores",
        "tiles_per_core",
        "granularity",
        "routing",
        "cycles",
    ];
    pub const STENCIL: &[&str] = &[
        "cores",
        "tiles_per_core",
        "variant",
        "cycles_per_iteration",
        "cycles_per_tile",
    ];
    pub const ROOFLINE: &[&str] = &["ai", "unit", "bound_flops_per_cycle"];
    pub const SOLVE_HISTORY: &[&str] = &["cores", "iter", "residual_norm", "cumulative_cycles"];
    pub const SOLVE_SUMMARY: &[&str] = &[
        "converged",
        "iters",
        "cycles_per_iter",
        "cycles_per_iter_per_tile",
        "fmt",
        "mode",
        "nx",
        "ny",
        "nz",
        "cores",
    ];
    pub const SHADOW_HISTORY: &[&str] = &["cores", "iter", "residual_norm"];
    pub const VALIDATE: &[&str] = &["check", "seed", "status", "detail"];
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    core_x: usize,
    core_y: usize,
    task: &'a str,
    label: &'a str,
    start_cycle: u64,
    end_cycle: u64,
}

/// One JSON object per line.
pub fn jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("serializable record");
        out.push(b'\n');
    }
    out
}

pub fn trace_jsonl(zones: &[TraceZone]) -> Vec<u8> {
    jsonl(zones.iter().map(|z| TraceRecord {
        core_x: z.core.x,
        core_y: z.core.y,
        task: z.task.name(),
        label: &z.label,
        start_cycle: z.start_cycle,
        end_cycle: z.end_cycle,
    }))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(schema::DOT);
        assert_eq!(
            String::from_utf8(t.to_bytes()).unwrap(),
            "cores,tiles_per_core,granularity,routing,cycles\n"
        );
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
