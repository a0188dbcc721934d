//! Geometric-word knowledge graph for cross-domain and cross-modal 3D shape
//! retrieval.
//!
//! Pipeline: ingest part/view/model/image descriptors ([`datamodel`]), fit a
//! PCA harmonization and a k-means geometric-word vocabulary ([`vocab`]),
//! assemble the entity graph ([`kgraph`]), train GCN embeddings with a
//! link-prediction objective ([`embed`]), and rank candidate shapes with the
//! four-channel similarity ([`simsearch`]). [`evalmetrics`] scores rankings
//! and [`synthgen`] produces corpora with known ground truth.

pub mod cli;
pub mod datamodel;
pub mod embed;
pub mod error;
pub mod evalmetrics;
pub mod fsutil;
pub mod kgraph;
pub mod linalg;
pub mod simsearch;
pub mod synthgen;
pub mod vocab;

pub use error::{Error, Result};

/// Fails unless the JSON object at `path` carries `"schema": expected`.
pub(crate) fn check_schema(raw: &serde_json::Value, expected: &str, path: &std::path::Path) -> Result<()> {
    let found = raw.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
    if found != expected {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}
