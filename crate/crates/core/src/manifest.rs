//! The on-disk dataset manifest: one JSON document listing every face crop.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::Label;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest failed validation: {0:?}")]
    Invalid(Vec<Violation>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub crop_path: String,
    pub video_id: String,
    pub frame_index: usize,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_video_id: Option<String>,
    /// Source folder (dataset part) of the video; drives the holdout split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folder: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            version: MANIFEST_VERSION,
            entries: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    UnsupportedVersion(u32),
    DuplicateCropPath(String),
    /// Training manifests only carry REAL/FAKE.
    UnlabeledEntry(String),
    /// A FAKE entry names an original that never appears as a REAL video.
    MissingOriginal {
        video_id: String,
        original_video_id: String,
    },
    /// One video assigned to more than one folder.
    FolderConflict {
        video_id: String,
    },
    /// One video carrying both labels.
    LabelConflict {
        video_id: String,
    },
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct video ids in first-seen order.
    pub fn video_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.video_id.as_str()))
            .map(|e| e.video_id.as_str())
            .collect()
    }

    pub fn video_labels(&self) -> BTreeMap<&str, Label> {
        self.entries.iter().map(|e| (e.video_id.as_str(), e.label)).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let io = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(io)
    }

    /// Load and reject any manifest with violations.
    pub fn load_validated(path: &Path) -> Result<Self, ManifestError> {
        let m = Self::load(path)?;
        let v = validate_manifest(&m);
        if v.is_empty() {
            Ok(m)
        } else {
            Err(ManifestError::Invalid(v))
        }
    }
}

/// Every invariant breach in `manifest`; empty iff the manifest is valid.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    if manifest.version != MANIFEST_VERSION {
        out.push(Violation::UnsupportedVersion(manifest.version));
    }
    let mut paths = HashSet::new();
    let mut reported = HashSet::new();
    for e in &manifest.entries {
        if !paths.insert(e.crop_path.as_str()) && reported.insert(e.crop_path.as_str()) {
            out.push(Violation::DuplicateCropPath(e.crop_path.clone()));
        }
        if e.label == Label::Unknown {
            out.push(Violation::UnlabeledEntry(e.crop_path.clone()));
        }
    }

    let mut folders: BTreeMap<&str, BTreeSet<Option<u32>>> = BTreeMap::new();
    let mut labels: BTreeMap<&str, BTreeSet<Label>> = BTreeMap::new();
    for e in &manifest.entries {
        folders.entry(&e.video_id).or_default().insert(e.folder);
        labels.entry(&e.video_id).or_default().insert(e.label);
    }
    for (vid, f) in &folders {
        if f.len() > 1 {
            out.push(Violation::FolderConflict {
                video_id: vid.to_string(),
            });
        }
    }
    for (vid, l) in &labels {
        if l.len() > 1 {
            out.push(Violation::LabelConflict {
                video_id: vid.to_string(),
            });
        }
    }

    let pairing = manifest.entries.iter().any(|e| e.original_video_id.is_some());
    if pairing {
        let reals: HashSet<&str> = manifest
            .entries
            .iter()
            .filter(|e| e.label == Label::Real)
            .map(|e| e.video_id.as_str())
            .collect();
        let mut missing = BTreeSet::new();
        for e in &manifest.entries {
            if let (Label::Fake, Some(orig)) = (e.label, &e.original_video_id) {
                if !reals.contains(orig.as_str()) {
                    missing.insert((e.video_id.clone(), orig.clone()));
                }
            }
        }
        out.extend(
            missing
                .into_iter()
                .map(|(video_id, original_video_id)| Violation::MissingOriginal {
                    video_id,
                    original_video_id,
                }),
        );
    }
    out
}
