use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::extract::crops_from_detections;
use super::source::FrameDirVideo;
use super::ssim::{ssim_map, SsimParams};
use super::PreprocessError;
use crate::detector::VideoDetections;
use crate::manifest::{validate_manifest, DatasetManifest, ManifestEntry, ManifestError};
use crate::par;
use crate::types::Label;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn detections_path(out_dir: &Path, video_id: &str) -> std::path::PathBuf {
    out_dir.join("detections").join(format!("{video_id}.json"))
}

#[derive(Clone, Debug)]
pub struct VideoInput {
    pub video: FrameDirVideo,
    pub label: Label,
    /// For fakes, the id of the real video it was derived from.
    pub original: Option<String>,
    pub folder: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterializeOptions {
    /// Total growth of box width and height; half goes on each side.
    pub margin: f64,
    pub ssim: SsimParams,
}

impl Default for MaterializeOptions {
    fn default() -> Self {
        Self {
            margin: 0.30,
            ssim: SsimParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct MaterializeReport {
    pub manifest: DatasetManifest,
    /// `(video_id, reason)` for every video that could not be processed.
    pub failures: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub crops_written: usize,
    pub masks_written: usize,
}

struct VideoResult {
    entries: Vec<ManifestEntry>,
    masks: usize,
    warnings: Vec<String>,
}

/// Write crops, SSIM masks for paired fakes and a validated manifest under
/// `out_dir`, reading `out_dir/detections/<video_id>.json` for every video.
/// Per-video failures are collected; the call fails only when no video
/// succeeds. An empty video list yields an empty manifest and writes nothing.
pub fn materialize_dataset(
    videos: &[VideoInput],
    out_dir: &Path,
    opts: &MaterializeOptions,
) -> Result<MaterializeReport, PreprocessError> {
    opts.ssim.validate()?;
    if videos.is_empty() {
        return Ok(MaterializeReport::default());
    }
    let by_id: BTreeMap<&str, &VideoInput> = videos.iter().map(|v| (v.video.video_id.as_str(), v)).collect();
    let results = par::map_slice(videos, |v| process_video(v, &by_id, out_dir, opts));

    let mut report = MaterializeReport::default();
    let mut entries = Vec::new();
    for (v, r) in videos.iter().zip(results) {
        match r {
            Ok(r) => {
                report.masks_written += r.masks;
                report.warnings.extend(r.warnings);
                entries.extend(r.entries);
            }
            Err(e) => report.failures.push((v.video.video_id.clone(), e.to_string())),
        }
    }
    if report.failures.len() == videos.len() {
        return Err(PreprocessError::NothingSucceeded(report.failures));
    }

    let reals: BTreeSet<String> = entries
        .iter()
        .filter(|e| e.label == Label::Real)
        .map(|e| e.video_id.clone())
        .collect();
    let mut unpaired = BTreeSet::new();
    for e in &mut entries {
        if let Some(orig) = e.original_video_id.as_ref().filter(|o| !reals.contains(*o)) {
            unpaired.insert((e.video_id.clone(), orig.clone()));
            e.original_video_id = None;
        }
    }
    for (vid, orig) in unpaired {
        report.warnings.push(format!(
            "{vid}: original {orig} has no crops in this manifest; pairing dropped"
        ));
    }
    entries.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    report.crops_written = entries.len();
    let manifest = DatasetManifest::new(entries);
    let violations = validate_manifest(&manifest);
    if !violations.is_empty() {
        return Err(ManifestError::Invalid(violations).into());
    }
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    report.manifest = manifest;
    Ok(report)
}

fn process_video(
    input: &VideoInput,
    by_id: &BTreeMap<&str, &VideoInput>,
    out_dir: &Path,
    opts: &MaterializeOptions,
) -> Result<VideoResult, PreprocessError> {
    let id = &input.video.video_id;
    let detections = VideoDetections::load(&detections_path(out_dir, id))?;
    let crops = crops_from_detections(&input.video, &detections, opts.margin, input.label)?;
    let pair = match (input.label, &input.original) {
        (Label::Fake, Some(orig)) => by_id.get(orig.as_str()).map(|v| &v.video),
        _ => None,
    };
    let mut warnings = Vec::new();
    if input.label == Label::Fake && pair.is_none() && !crops.is_empty() {
        warnings.push(format!("{id}: no paired real video; masks skipped"));
    }

    let mut entries = Vec::with_capacity(crops.len());
    let mut masks = 0;
    let mut real_frame: Option<(usize, crate::image::ImageBuffer)> = None;
    for (k, crop) in &crops {
        let name = format!("{}_{k}.png", crop.frame_index);
        let rel = format!("crops/{id}/{name}");
        crop.image.save_png(&out_dir.join(&rel))?;
        if let Some(real) = pair.filter(|r| crop.frame_index < r.frame_count()) {
            if real_frame.as_ref().is_none_or(|(i, _)| *i != crop.frame_index) {
                real_frame = Some((crop.frame_index, real.load_frame(crop.frame_index)?));
            }
            let (_, frame) = real_frame.as_ref().expect("just loaded");
            if frame.height() as i64 >= crop.rect.y1 && frame.width() as i64 >= crop.rect.x1 {
                let r = crop.rect;
                let real_crop = frame.crop(r.x0, r.y0, r.x1, r.y1);
                let mask = ssim_map(&crop.image, &real_crop, &opts.ssim)?;
                mask.save_png(&out_dir.join(format!("masks/{id}/{name}")))?;
                masks += 1;
            }
        }
        entries.push(ManifestEntry {
            crop_path: rel,
            video_id: id.clone(),
            frame_index: crop.frame_index,
            label: input.label,
            original_video_id: input.original.clone().filter(|_| input.label == Label::Fake),
            folder: input.folder,
        });
    }
    Ok(VideoResult {
        entries,
        masks,
        warnings,
    })
}
