//! Dataset manifests: CSV listings that map image paths to class labels.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors from reading a manifest file.
#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest must start with header `path,label`, got `{found}`")]
    BadHeader { found: String },
    #[error("manifest line {line}: duplicate path {path}")]
    DuplicatePath { line: usize, path: PathBuf },
    #[error("manifest line {line}: empty label")]
    EmptyLabel { line: usize },
}

/// One manifest row: an image path (resolved to the manifest's directory)
/// and its class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

/// A parsed dataset listing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Labels in entry order.
    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }
}

/// Reads a `path,label` CSV. Relative image paths are resolved against the
/// manifest's own directory, so a manifest can sit next to its images.
/// The file must exist, paths must be unique, and labels nonempty; image
/// files themselves are only checked when loaded.
pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                ManifestError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, e))
            }
            _ => ManifestError::Parse { line: 1, message: e.to_string() },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| ManifestError::Parse { line: 1, message: e.to_string() })?;
    if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
        return Err(ManifestError::BadHeader {
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }

    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut entries = Vec::new();
    let mut seen: HashSet<PathBuf> = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| ManifestError::Parse { line, message: e.to_string() })?;
        if record.len() != 2 {
            return Err(ManifestError::Parse {
                line,
                message: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let raw = Path::new(&record[0]);
        let resolved = if raw.is_absolute() {
            raw.to_path_buf()
        } else {
            base.join(raw)
        };
        let label = record[1].to_string();
        if label.is_empty() {
            return Err(ManifestError::EmptyLabel { line });
        }
        if !seen.insert(resolved.clone()) {
            return Err(ManifestError::DuplicatePath { line, path: resolved });
        }
        entries.push(ManifestEntry { path: resolved, label });
    }
    Ok(Manifest { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_manifest(dir: &Path, content: &str) -> PathBuf {
        let path = dir.join("set.csv");
        let mut file = std::fs::File::create(&path).unwrap();
        file.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_entries_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), "path,label\na.png,alice\nsub/b.png,bob\n");
        let manifest = load_manifest(&path).unwrap();
        assert_eq!(manifest.len(), 2);
        assert_eq!(manifest.entries[0].path, dir.path().join("a.png"));
        assert_eq!(manifest.entries[0].label, "alice");
        assert_eq!(manifest.entries[1].path, dir.path().join("sub/b.png"));
        assert_eq!(manifest.labels(), vec!["alice", "bob"]);
    }

    #[test]
    fn keeps_absolute_paths_as_given() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), "path,label\n/data/x.png,x\n");
        let manifest = load_manifest(&path).unwrap();
        assert_eq!(manifest.entries[0].path, PathBuf::from("/data/x.png"));
    }

    #[test]
    fn header_only_file_is_a_valid_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), "path,label\n");
        let manifest = load_manifest(&path).unwrap();
        assert!(manifest.is_empty());
    }

    #[test]
    fn accepts_crlf_line_endings() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), "path,label\r\na.png,alice\r\n");
        assert_eq!(load_manifest(&path).unwrap().len(), 1);
    }

    #[test]
    fn rejects_duplicate_paths_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), "path,label\na.png,x\nb.png,y\na.png,z\n");
        match load_manifest(&path).unwrap_err() {
            ManifestError::DuplicatePath { line, path } => {
                assert_eq!(line, 4);
                assert!(path.ends_with("a.png"));
            }
            other => panic!("expected DuplicatePath, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_labels_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), "path,label\na.png,x\nb.png,\n");
        assert!(matches!(
            load_manifest(&path).unwrap_err(),
            ManifestError::EmptyLabel { line: 3 }
        ));
    }

    #[test]
    fn rejects_wrong_header_and_wrong_field_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), "file,class\na.png,x\n");
        assert!(matches!(
            load_manifest(&path).unwrap_err(),
            ManifestError::BadHeader { .. }
        ));
        // A ragged row is a parse error naming its line.
        let path = write_manifest(dir.path(), "path,label\na.png,x,extra\n");
        assert!(matches!(
            load_manifest(&path).unwrap_err(),
            ManifestError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn missing_file_reports_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_manifest(&dir.path().join("nope.csv")).unwrap_err(),
            ManifestError::Io(_)
        ));
    }
}
