//! Video inputs. The canonical form is a directory of `%06d.png` frames plus
//! `meta.json`; container files are turned into that form by an external
//! decoder process.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{io_err, PreprocessError};
use crate::image::ImageBuffer;
use crate::types::Label;

pub const META_FILE: &str = "meta.json";
/// Per-dataset label file (one record per video id).
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoMeta {
    pub fps: f64,
    pub frame_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDirVideo {
    pub video_id: String,
    pub dir: PathBuf,
    pub meta: VideoMeta,
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

impl FrameDirVideo {
    pub fn open(dir: &Path) -> Result<Self, PreprocessError> {
        let meta_path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: VideoMeta = serde_json::from_str(&text).map_err(|e| PreprocessError::Parse {
            path: meta_path.display().to_string(),
            message: e.to_string(),
        })?;
        let video_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| PreprocessError::Config(format!("{} has no directory name", dir.display())))?;
        Ok(Self {
            video_id,
            dir: dir.to_path_buf(),
            meta,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.meta.frame_count
    }

    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.dir.join(frame_file_name(index))
    }

    pub fn load_frame(&self, index: usize) -> Result<ImageBuffer, PreprocessError> {
        if index >= self.meta.frame_count {
            return Err(PreprocessError::Config(format!(
                "frame {index} out of range for {} ({} frames)",
                self.video_id, self.meta.frame_count
            )));
        }
        Ok(ImageBuffer::load_png(&self.frame_path(index))?)
    }
}

/// Label record for one video, as stored in `metadata.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub label: Label,
    /// Source video of a fake.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folder: Option<u32>,
}

/// `metadata.json`: video id to label record.
pub type VideoMetadata = BTreeMap<String, VideoRecord>;

pub fn load_metadata(path: &Path) -> Result<VideoMetadata, PreprocessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PreprocessError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Converts a video container into a frame directory by running an external
/// program. `{input}` and `{output}` in `args` are replaced by the video path
/// and the destination directory. The program must write `%06d.png` frames;
/// if it does not write `meta.json`, one is created from the frame count with
/// `default_fps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalDecoder {
    pub program: String,
    pub args: Vec<String>,
    #[serde(default = "default_fps")]
    pub default_fps: f64,
    #[serde(default = "default_extensions")]
    pub extensions: Vec<String>,
}

fn default_fps() -> f64 {
    30.0
}

fn default_extensions() -> Vec<String> {
    ["mp4", "avi", "mov", "mkv", "webm"].map(String::from).to_vec()
}

impl ExternalDecoder {
    /// Decoder backed by `ffmpeg`, emitting numbered PNG frames.
    pub fn ffmpeg() -> Self {
        Self {
            program: "ffmpeg".into(),
            args: [
                "-loglevel",
                "error",
                "-y",
                "-i",
                "{input}",
                "-start_number",
                "0",
                "{output}/%06d.png",
            ]
            .map(String::from)
            .to_vec(),
            default_fps: default_fps(),
            extensions: default_extensions(),
        }
    }

    pub fn accepts(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| self.extensions.iter().any(|x| x.eq_ignore_ascii_case(e)))
    }

    pub fn decode(&self, video: &Path, out_dir: &Path) -> Result<FrameDirVideo, PreprocessError> {
        std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let fill = |a: &String| {
            a.replace("{input}", &video.display().to_string())
                .replace("{output}", &out_dir.display().to_string())
        };
        let status = Command::new(&self.program)
            .args(self.args.iter().map(fill))
            .status()
            .map_err(|e| PreprocessError::Decoder(format!("{}: {e}", self.program)))?;
        if !status.success() {
            return Err(PreprocessError::Decoder(format!(
                "{} exited with {status} on {}",
                self.program,
                video.display()
            )));
        }
        let meta_path = out_dir.join(META_FILE);
        if !meta_path.exists() {
            let mut count = 0;
            while out_dir.join(frame_file_name(count)).exists() {
                count += 1;
            }
            if count == 0 {
                return Err(PreprocessError::Decoder(format!(
                    "no frames decoded from {}",
                    video.display()
                )));
            }
            let meta = VideoMeta {
                fps: self.default_fps,
                frame_count: count,
            };
            std::fs::write(&meta_path, serde_json::to_string(&meta).expect("meta serializes"))
                .map_err(io_err(&meta_path))?;
        }
        FrameDirVideo::open(out_dir)
    }
}

/// Every video under `input_dir`, sorted by id: frame directories directly,
/// container files through `decoder` (decoded below `work_dir`).
pub fn list_videos(
    input_dir: &Path,
    decoder: Option<&ExternalDecoder>,
    work_dir: &Path,
) -> Result<Vec<FrameDirVideo>, PreprocessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input_dir)
        .map_err(io_err(input_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    let mut videos = Vec::new();
    for path in paths {
        if path.is_dir() && path.join(META_FILE).is_file() {
            videos.push(FrameDirVideo::open(&path)?);
        } else if let Some(dec) = decoder.filter(|d| path.is_file() && d.accepts(&path)) {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            videos.push(dec.decode(&path, &work_dir.join(stem))?);
        }
    }
    Ok(videos)
}
