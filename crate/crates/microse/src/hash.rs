//! Encoding-independent weight hash.
//!
//! SHA-256 over every layer parameter as little-endian `i16` codes: for each
//! layer in order (`lstm1`, `lstm2`, `dense1`, `dense2`), each weight matrix
//! decoded to dense row-major form with pruned entries as zero, then each
//! bias vector. LSTM matrices come in the order `W_x{i,f,o,c}`,
//! `W_h{i,f,o,c}` and biases in the order `i, f, o, c`. The hash therefore
//! identifies the weights, not their storage format.

use std::path::{Path, PathBuf};

use microse_core::engine::{LayerId, SeModel};
use sha2::{Digest, Sha256};

pub fn weight_hash(model: &SeModel) -> String {
    let mut h = Sha256::new();
    for layer in LayerId::ALL {
        for m in model.layer_matrices(layer) {
            for v in m.decode() {
                h.update(v.to_le_bytes());
            }
        }
        for b in model.layer_biases(layer) {
            for v in b {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// `<model>.sha256` next to the model file.
pub fn sidecar_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

/// Sidecar line in `sha256sum` style: hex digest, two spaces, file name.
pub fn sidecar_line(hash: &str, model_path: &Path) -> String {
    let name = model_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{hash}  {name}\n")
}

/// The digest from a sidecar file's first field.
pub fn parse_sidecar(text: &str) -> Option<String> {
    let d = text.split_whitespace().next()?;
    (d.len() == 64 && d.bytes().all(|b| b.is_ascii_hexdigit())).then(|| d.to_ascii_lowercase())
}
