use std::collections::BTreeSet;

use crate::manifest::DatasetManifest;

/// Partition by source folder: entries whose folder is in `holdout` go to the
/// second manifest, the rest (including entries without a folder) to the first.
/// Entries of one video always share a folder, so no video straddles the split.
pub fn split_by_folder(manifest: &DatasetManifest, holdout: &BTreeSet<u32>) -> (DatasetManifest, DatasetManifest) {
    let (val, train): (Vec<_>, Vec<_>) = manifest
        .entries
        .iter()
        .cloned()
        .partition(|e| e.folder.is_some_and(|f| holdout.contains(&f)));
    (DatasetManifest::new(train), DatasetManifest::new(val))
}
