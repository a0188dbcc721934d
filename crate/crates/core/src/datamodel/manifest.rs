//! JSON-lines manifest reader and writer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Descriptor, Entity, EntityKind, Sidecar};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    kind: EntityKind,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blob: Option<u64>,
}

/// Reads a manifest, resolving `blob` rows from `sidecar` when given.
pub fn load_manifest(manifest_path: &Path, sidecar: Option<&Path>) -> Result<Corpus> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let sidecar = sidecar.map(Sidecar::read).transpose()?;
    parse_manifest(&text, sidecar.as_ref(), manifest_path)
}

/// Parses manifest text. `origin` is only used in diagnostics.
pub fn parse_manifest(text: &str, sidecar: Option<&Sidecar>, origin: &Path) -> Result<Corpus> {
    let line_err = |line: usize, message: String| Error::Manifest {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut entities = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| line_err(line, e.to_string()))?;
        if rec.kind == EntityKind::GeometricWord {
            return Err(line_err(line, "kind `word` cannot be ingested".into()));
        }
        let values = match (rec.descriptor, rec.blob) {
            (Some(v), None) => v,
            (None, Some(row)) => {
                let sc = sidecar
                    .ok_or_else(|| line_err(line, "`blob` given but no sidecar supplied".into()))?;
                sc.row_f64(row as usize).ok_or_else(|| {
                    line_err(line, format!("blob row {row} out of range ({} rows)", sc.count()))
                })?
            }
            _ => {
                return Err(line_err(
                    line,
                    "exactly one of `descriptor` or `blob` is required".into(),
                ))
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(rec.id));
        }
        let descriptor = Descriptor::new(values).map_err(|e| line_err(line, e.to_string()))?;
        entities.push(Entity {
            id: rec.id,
            kind: rec.kind,
            label: rec.label,
            parent: rec.parent,
            descriptor,
        });
    }
    Corpus::new(entities)
}

/// Serializes a corpus as manifest text. With `blob` set, descriptors are
/// referenced by row and the returned sidecar holds them; every kind must then
/// share one dim and every value must be exactly representable as `f32`.
pub fn manifest_string(corpus: &Corpus, blob: bool) -> Result<(String, Option<Sidecar>)> {
    let mut out = String::new();
    let mut rows: Vec<&[f64]> = Vec::new();
    for e in corpus.entities() {
        let (descriptor, blob_row) = if blob {
            let v = e.descriptor.values();
            if v.iter().any(|&x| f64::from(x as f32) != x) {
                return Err(Error::Sidecar(format!(
                    "descriptor of `{}` is not exactly representable as f32",
                    e.id
                )));
            }
            rows.push(v);
            (None, Some(rows.len() as u64 - 1))
        } else {
            (Some(e.descriptor.values().to_vec()), None)
        };
        let rec = Record {
            kind: e.kind,
            id: e.id.clone(),
            label: e.label.clone(),
            parent: e.parent.clone(),
            descriptor,
            blob: blob_row,
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    let sidecar = if blob {
        Some(Sidecar::from_rows(&rows)?)
    } else {
        None
    };
    Ok((out, sidecar))
}

/// Writes `corpus` to `manifest_path`; descriptors go to `sidecar` if given.
pub fn save_manifest(corpus: &Corpus, manifest_path: &Path, sidecar: Option<&Path>) -> Result<()> {
    let (text, blob) = manifest_string(corpus, sidecar.is_some())?;
    if let (Some(path), Some(blob)) = (sidecar, blob) {
        blob.write(path)?;
    }
    crate::fsutil::write_atomic(manifest_path, text.as_bytes())
}
