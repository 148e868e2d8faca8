//! File formats: SNAP input with a JSON node-map sidecar, partition and
//! cloud documents, metric CSV, and staged output directories.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use commflow::metrics::MetricRow;
use commflow::resolver::PartitionCloud;
use commflow::snap::{parse_snap, NodeMap, SnapGraph};
use commflow::Partition;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Reads a SNAP temporal edge list.
pub fn ingest_snap(path: &Path) -> Result<SnapGraph> {
    let file = fs::File::open(path).map_err(|e| HarnessError::in_file(path, e))?;
    parse_snap(BufReader::new(file)).map_err(|e| HarnessError::in_file(path, e))
}

/// `graph.txt` -> `graph.nodes.json`.
pub fn sidecar_path(edge_list: &Path) -> PathBuf {
    edge_list.with_extension("nodes.json")
}

/// Representative partitions, indexed `[repetition][segment]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub repetitions: Vec<Vec<Partition>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudsDoc {
    pub clouds: Vec<PartitionCloud>,
}

/// Pretty JSON with sorted object keys and a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| HarnessError::Internal(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| HarnessError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_canonical_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::in_file(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::in_file(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::in_file(path, e))
}

pub fn write_node_map(path: &Path, map: &NodeMap) -> Result<()> {
    write_json(path, map)
}

pub fn metrics_csv(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Internal(e.to_string()))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))?;
    let rows: std::result::Result<Vec<MetricRow>, csv::Error> = r.deserialize().collect();
    rows.map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))
}

/// A directory that is written under a temporary name and moved into place
/// by [`StagedDir::commit`]. Dropping it uncommitted removes the partial
/// output.
pub struct StagedDir {
    staging: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl StagedDir {
    pub fn new(target: &Path) -> Result<Self> {
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| HarnessError::in_file(parent, e))?;
        let name = target
            .file_name()
            .ok_or_else(|| HarnessError::Usage(format!("{} is not a directory name", target.display())))?;
        let staging = parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| HarnessError::in_file(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| HarnessError::in_file(&staging, e))?;
        Ok(Self {
            staging,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| HarnessError::in_file(&self.target, e))?;
        }
        fs::rename(&self.staging, &self.target).map_err(|e| HarnessError::in_file(&self.target, e))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_dir_cleans_up() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("exp");
        {
            let staged = StagedDir::new(&target).unwrap();
            write_text(&staged.path().join("a.txt"), "x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);

        let staged = StagedDir::new(&target).unwrap();
        write_text(&staged.path().join("a.txt"), "y").unwrap();
        staged.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "y");
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![MetricRow {
            segment: 2,
            method: "ensemble".into(),
            metric: "precision".into(),
            mean: Some(0.5),
            stderr: None,
            runs: 3,
            undefined: 3,
        }];
        let text = metrics_csv(&rows).unwrap();
        assert!(text.starts_with("segment,method,metric,mean,stderr,runs,undefined\n"));
        let tmp = tempfile::NamedTempFile::new().unwrap();
        fs::write(tmp.path(), &text).unwrap();
        assert_eq!(read_metrics_csv(tmp.path()).unwrap(), rows);
    }

    #[test]
    fn missing_snap_file_names_the_path() {
        let err = ingest_snap(Path::new("/nonexistent/graph.txt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/graph.txt"));
        assert_eq!(err.exit_code(), 2);
    }
}
