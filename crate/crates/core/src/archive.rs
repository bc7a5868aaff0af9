//! Self-describing parameter archives.
//!
//! Layout: the 8-byte magic `FFPARAM1`, a little-endian `u64` header length,
//! a JSON header `{kind, config, tensors: [{name, shape, offset}]}`, then every
//! tensor as little-endian `f64` values in header order. Loading checks that
//! the archive's tensors agree by name and shape with the model built from
//! the stored config before any value is copied.

use std::io::{Read, Write};
use std::path::Path;

use facefake_nn::Layer;
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 8] = b"FFPARAM1";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a parameter archive: {0}")]
    Format(String),
    #[error("archive holds a {found} model, expected {expected}")]
    Kind { expected: String, found: String },
    #[error("shape mismatch for {name}: model expects {expected:?}, archive has {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor count mismatch: model has {model}, archive has {archive}")]
    Count { model: usize, archive: usize },
    #[error("tensor name mismatch at position {index}: model {model}, archive {archive}")]
    Name {
        index: usize,
        model: String,
        archive: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Index of the first value in the data section.
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Archive {
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub data: Vec<f64>,
}

impl Archive {
    /// Snapshot every parameter (trainable and buffers) of `model`.
    pub fn capture(kind: &str, config: &impl Serialize, model: &dyn Layer) -> Self {
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        model.visit_params(&mut |p| {
            tensors.push(TensorEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                offset: data.len(),
            });
            data.extend_from_slice(&p.value);
        });
        Self {
            kind: kind.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            tensors,
            data,
        }
    }

    pub fn config<T: for<'de> Deserialize<'de>>(&self) -> Result<T, ArchiveError> {
        serde_json::from_value(self.config.clone()).map_err(|e| ArchiveError::Format(format!("config: {e}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), ArchiveError> {
        if self.kind != kind {
            return Err(ArchiveError::Kind {
                expected: kind.to_string(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    /// Validate names and shapes against `model`, then copy the values in.
    pub fn restore(&self, model: &mut dyn Layer) -> Result<(), ArchiveError> {
        let mut expected = Vec::new();
        model.visit_params(&mut |p| expected.push((p.name.clone(), p.shape.clone())));
        if expected.len() != self.tensors.len() {
            return Err(ArchiveError::Count {
                model: expected.len(),
                archive: self.tensors.len(),
            });
        }
        for (index, ((name, shape), t)) in expected.iter().zip(&self.tensors).enumerate() {
            if *name != t.name {
                return Err(ArchiveError::Name {
                    index,
                    model: name.clone(),
                    archive: t.name.clone(),
                });
            }
            if *shape != t.shape {
                return Err(ArchiveError::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: t.shape.clone(),
                });
            }
            let len: usize = t.shape.iter().product();
            if t.offset + len > self.data.len() {
                return Err(ArchiveError::Format(format!(
                    "tensor {} runs past the data section",
                    t.name
                )));
            }
        }
        let mut i = 0;
        model.visit_params_mut(&mut |p| {
            let t = &self.tensors[i];
            let n = p.value.len();
            p.value.copy_from_slice(&self.data[t.offset..t.offset + n]);
            i += 1;
        });
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            tensors: self.tensors.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(ArchiveError::Format("bad magic".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..)
            .filter(|b| b.len() >= hlen)
            .ok_or_else(|| ArchiveError::Format("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| ArchiveError::Format(format!("header: {e}")))?;
        let raw = &body[hlen..];
        if raw.len() % 8 != 0 {
            return Err(ArchiveError::Format(
                "data section is not a whole number of f64 values".into(),
            ));
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            kind: header.kind,
            config: header.config,
            tensors: header.tensors,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        let io = |source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        let io = |source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(io)?
            .read_to_end(&mut bytes)
            .map_err(io)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use facefake_nn::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_shape_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Linear::new("fc", 3, 2, &mut rng);
        let arch = Archive::capture("linear", &serde_json::json!({"in": 3}), &a);
        let back = Archive::from_bytes(&arch.to_bytes()).unwrap();
        let mut b = Linear::new("fc", 3, 2, &mut rng);
        back.restore(&mut b).unwrap();
        let (mut va, mut vb) = (Vec::new(), Vec::new());
        a.visit_params(&mut |p| va.extend_from_slice(&p.value));
        b.visit_params(&mut |p| vb.extend_from_slice(&p.value));
        assert_eq!(va, vb);

        let mut wrong = Linear::new("fc", 4, 2, &mut rng);
        assert!(matches!(
            back.restore(&mut wrong),
            Err(ArchiveError::ShapeMismatch { .. })
        ));
        assert!(Archive::from_bytes(b"garbage").is_err());
    }
}
