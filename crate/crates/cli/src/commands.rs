use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use facefake_core::aggregation::aggregate_video;
use facefake_core::classifier::{build_variant, load_checkpoint, EfficientNet, VariantSpec};
use facefake_core::detector::{BlobScorer, CascadeScorers, ConvCascade, Stage, VideoDetections};
use facefake_core::manifest::DatasetManifest;
use facefake_core::metrics::{
    comparison_table, evaluate, reference_rows, LabeledPredictionSet, MetricsReport, TableRow,
};
use facefake_core::par;
use facefake_core::preprocess::materialize::{detections_path, MANIFEST_FILE};
use facefake_core::preprocess::source::load_metadata;
use facefake_core::preprocess::{
    crops_from_detections, detect_video, list_videos, materialize_dataset, FrameDirVideo, MaterializeOptions,
    VideoInput, VideoMetadata, METADATA_FILE,
};
use facefake_core::synth::{annotated_frames, write_dataset};
use facefake_core::training::{split_by_folder, train, CropDataset, TrainPaths};
use facefake_core::{FramePrediction, ImageBuffer, Label, VideoPrediction};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.ffp";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.txt";

const PREDICT_BATCH: usize = 32;

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("{what} is required (flag or paths section)")))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(dir.display(), e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::data(path.display(), e))
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out = required(&cfg.paths.output, "output directory")?;
    cfg.synth.validate().map_err(CliError::Config)?;
    let meta = write_dataset(&cfg.synth, out).map_err(|e| CliError::data("synth", e))?;
    let fakes = meta.values().filter(|r| r.label == Label::Fake).count();
    println!(
        "wrote {} videos ({} FAKE, {} REAL) to {}",
        meta.len(),
        fakes,
        meta.len() - fakes,
        out.display()
    );
    Ok(())
}

/// Number of synthetic videos and frame stride used for detector training.
#[derive(Clone, Copy, Debug)]
pub struct DetectorData {
    pub videos: usize,
    pub stride: usize,
}

pub fn train_detector(cfg: &RunConfig, data: DetectorData) -> Result<(), CliError> {
    let out = required(&cfg.paths.output, "output directory")?;
    cfg.synth.validate().map_err(CliError::Config)?;
    let frames = annotated_frames(&cfg.synth, data.videos, data.stride);
    if frames.is_empty() {
        return Err(CliError::Config("no annotated frames; raise --videos".into()));
    }
    log::info!("training detector on {} annotated frames", frames.len());
    let (cascade, losses) = ConvCascade::train(&frames, &cfg.detector.train)?;
    create_dir(out)?;
    cascade.save(out)?;
    for (stage, l) in ["proposal", "refine", "output"].iter().zip(&losses) {
        if let (Some(first), Some(last)) = (l.first(), l.last()) {
            println!("{stage}: loss {first:.4} -> {last:.4}");
        }
    }
    println!("detector weights written to {}", out.display());
    Ok(())
}

/// Loaded stage scorers: trained weights or the colour-blob heuristics.
enum Detector {
    Trained(ConvCascade),
    Blob([BlobScorer; 3]),
}

impl Detector {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        cfg.detector.cascade.validate()?;
        Ok(match &cfg.detector.weights {
            Some(dir) => Detector::Trained(ConvCascade::load(dir)?),
            None => Detector::Blob(Stage::ALL.map(BlobScorer::synthetic_faces)),
        })
    }

    fn scorers(&self) -> CascadeScorers<'_> {
        match self {
            Detector::Trained(c) => c.scorers(),
            Detector::Blob([p, r, o]) => CascadeScorers::new(p, r, o),
        }
    }
}

fn open_videos(cfg: &RunConfig, input: &Path, work: &Path) -> Result<Vec<FrameDirVideo>, CliError> {
    if !input.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", input.display())));
    }
    let videos = list_videos(input, cfg.preprocess.decoder.as_ref(), work)?;
    if videos.is_empty() {
        return Err(CliError::Data(format!("no videos found in {}", input.display())));
    }
    Ok(videos)
}

pub fn extract(cfg: &RunConfig) -> Result<(), CliError> {
    let input = required(&cfg.paths.input, "input directory")?;
    let out = required(&cfg.paths.output, "output directory")?;
    let opts = MaterializeOptions {
        margin: cfg.preprocess.margin,
        ssim: cfg.preprocess.ssim.clone(),
    };
    opts.ssim.validate()?;
    let detector = Detector::load(cfg)?;
    let videos = open_videos(cfg, input, &out.join("decoded"))?;
    let meta_path = input.join(METADATA_FILE);
    if !meta_path.is_file() {
        return Err(CliError::Data(format!(
            "{} is missing; extraction needs labels",
            meta_path.display()
        )));
    }
    let metadata = load_metadata(&meta_path)?;

    let detected = par::map_slice(&videos, |v| -> Result<VideoDetections, String> {
        let d = detect_video(v, detector.scorers(), &cfg.detector.cascade, &cfg.preprocess.sampling)
            .map_err(|e| e.to_string())?;
        d.save(&detections_path(out, &v.video_id)).map_err(|e| e.to_string())?;
        Ok(d)
    });
    let mut inputs = Vec::new();
    let mut failures = Vec::new();
    for (video, d) in videos.into_iter().zip(detected) {
        let id = video.video_id.clone();
        match (d, metadata.get(&id)) {
            (Err(e), _) => failures.push((id, e)),
            (Ok(_), None) => failures.push((id, format!("no record in {METADATA_FILE}"))),
            (Ok(d), Some(rec)) => {
                log::info!("{id}: {} faces", d.face_count());
                inputs.push(VideoInput {
                    video,
                    label: rec.label,
                    original: rec.original.clone(),
                    folder: rec.folder,
                });
            }
        }
    }
    for (id, reason) in &failures {
        log::warn!("{id}: {reason}");
    }
    if inputs.is_empty() {
        return Err(CliError::Data(format!(
            "no video was processed successfully ({} failures)",
            failures.len()
        )));
    }
    let report = materialize_dataset(&inputs, out, &opts)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    for (id, reason) in &report.failures {
        log::warn!("{id}: {reason}");
    }
    println!(
        "{} videos, {} crops, {} masks, {} failed; manifest {}",
        inputs.len() - report.failures.len(),
        report.crops_written,
        report.masks_written,
        failures.len() + report.failures.len(),
        out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

pub fn build_model(cfg: &RunConfig) -> Result<EfficientNet, CliError> {
    let mut backbone = build_variant(
        &VariantSpec::Named(cfg.classifier.variant.clone()),
        cfg.classifier.width_budget,
    )?;
    if let Some(size) = cfg.classifier.input_size {
        backbone = backbone.with_resolution(size);
        backbone.validate()?;
    }
    Ok(EfficientNet::new(backbone, cfg.seed)?)
}

pub fn train_classifier(cfg: &RunConfig) -> Result<(), CliError> {
    let manifest_path = required(&cfg.paths.manifest, "manifest")?;
    let out = required(&cfg.paths.output, "output directory")?;
    let mut model = build_model(cfg)?;
    cfg.training.validate(&model.config().name)?;
    cfg.aggregation
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = DatasetManifest::load_validated(manifest_path).map_err(|e| CliError::data("manifest", e))?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let (train_m, val_m) = split_by_folder(&manifest, &cfg.training.holdout_folders);
    let res = model.config().input_resolution;
    let train_data = CropDataset::load(&train_m, root, res)?;
    let holdout = if val_m.is_empty() {
        log::warn!("holdout folders select no crops; training without validation");
        None
    } else {
        Some(CropDataset::load(&val_m, root, res)?)
    };
    log::info!(
        "training {} on {} crops, {} holdout crops",
        model.config().name,
        train_data.len(),
        holdout.as_ref().map_or(0, CropDataset::len)
    );
    create_dir(out)?;
    let paths = TrainPaths {
        checkpoint: Some(out.join(CHECKPOINT_FILE)),
        log: Some(out.join(TRAIN_LOG_FILE)),
    };
    let outcome = train(
        &mut model,
        &train_data,
        holdout.as_ref(),
        &cfg.training,
        &cfg.aggregation,
        &paths,
    )?;
    match outcome.validations.last() {
        Some(last) => println!("{}", serde_json::to_string(last).expect("report serializes")),
        None => println!(
            "{{\"step\":{},\"final_loss\":{}}}",
            outcome.losses.len(),
            outcome.losses.last().copied().unwrap_or(f64::NAN)
        ),
    }
    println!(
        "checkpoint (step {}) written to {}",
        outcome.checkpoint_step,
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

/// One row of the prediction report.
#[derive(Clone, Debug, Serialize)]
pub struct VideoReport {
    pub video_id: String,
    pub p_fake: f64,
    pub frames_used: usize,
    pub frames_discarded: usize,
    pub fallback_used: bool,
    pub faces: usize,
    /// No face was found; `p_fake` is the uninformative 0.5.
    pub no_face: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VideoReport {
    fn neutral(video_id: &str, error: Option<String>) -> Self {
        Self {
            video_id: video_id.to_string(),
            p_fake: 0.5,
            frames_used: 0,
            frames_discarded: 0,
            fallback_used: false,
            faces: 0,
            no_face: error.is_none(),
            error,
        }
    }

    fn from_prediction(v: VideoPrediction, faces: usize) -> Self {
        Self {
            video_id: v.video_id,
            p_fake: v.p_fake,
            frames_used: v.frames_used,
            frames_discarded: v.frames_discarded,
            fallback_used: v.fallback_used,
            faces,
            no_face: false,
            error: None,
        }
    }
}

#[derive(Serialize)]
struct PredictReport<'a> {
    checkpoint: &'a Path,
    checkpoint_step: usize,
    config: &'a RunConfig,
    videos: &'a [VideoReport],
}

fn score_crops(
    model: &EfficientNet,
    video_id: &str,
    crops: &[(usize, ImageBuffer)],
    cfg: &RunConfig,
) -> Result<VideoReport, String> {
    if crops.is_empty() {
        return Ok(VideoReport::neutral(video_id, None));
    }
    let mut frames = Vec::with_capacity(crops.len());
    for chunk in crops.chunks(PREDICT_BATCH) {
        let images: Vec<ImageBuffer> = chunk.iter().map(|c| c.1.clone()).collect();
        let probs = model.predict_images(&images).map_err(|e| e.to_string())?;
        frames.extend(
            chunk
                .iter()
                .zip(probs)
                .map(|(c, p)| FramePrediction::new(video_id, c.0, p)),
        );
    }
    let v = aggregate_video(&frames, &cfg.aggregation).map_err(|e| e.to_string())?;
    Ok(VideoReport::from_prediction(v, crops.len()))
}

fn predict_videos(
    model: &EfficientNet,
    cfg: &RunConfig,
    input: &Path,
    out: &Path,
    folders: &BTreeSet<u32>,
) -> Result<Vec<VideoReport>, CliError> {
    let detector = Detector::load(cfg)?;
    let mut videos = open_videos(cfg, input, &out.join("decoded"))?;
    if !folders.is_empty() {
        let meta_path = input.join(METADATA_FILE);
        let metadata: VideoMetadata = load_metadata(&meta_path)?;
        videos.retain(|v| {
            metadata
                .get(&v.video_id)
                .and_then(|r| r.folder)
                .is_some_and(|f| folders.contains(&f))
        });
        if videos.is_empty() {
            return Err(CliError::Data(format!("no videos in folders {folders:?}")));
        }
    }
    let reports = par::map_slice(&videos, |v| {
        let run = || -> Result<VideoReport, String> {
            let d = detect_video(v, detector.scorers(), &cfg.detector.cascade, &cfg.preprocess.sampling)
                .map_err(|e| e.to_string())?;
            let crops =
                crops_from_detections(v, &d, cfg.preprocess.margin, Label::Unknown).map_err(|e| e.to_string())?;
            let crops: Vec<(usize, ImageBuffer)> = crops.into_iter().map(|(_, c)| (c.frame_index, c.image)).collect();
            score_crops(model, &v.video_id, &crops, cfg)
        };
        run().unwrap_or_else(|e| VideoReport::neutral(&v.video_id, Some(e)))
    });
    Ok(reports)
}

fn predict_manifest(
    model: &EfficientNet,
    cfg: &RunConfig,
    path: &Path,
    folders: &BTreeSet<u32>,
) -> Result<Vec<VideoReport>, CliError> {
    let manifest = DatasetManifest::load(path).map_err(|e| CliError::data("manifest", e))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut groups: BTreeMap<&str, Vec<(usize, PathBuf)>> = BTreeMap::new();
    for e in &manifest.entries {
        if folders.is_empty() || e.folder.is_some_and(|f| folders.contains(&f)) {
            groups
                .entry(e.video_id.as_str())
                .or_default()
                .push((e.frame_index, root.join(&e.crop_path)));
        }
    }
    if groups.is_empty() {
        return Err(CliError::Data(format!("{} selects no crops", path.display())));
    }
    let groups: Vec<(&str, Vec<(usize, PathBuf)>)> = groups.into_iter().collect();
    Ok(par::map_slice(&groups, |(id, crops)| {
        let run = || -> Result<VideoReport, String> {
            let loaded = crops
                .iter()
                .map(|(i, p)| ImageBuffer::load_png(p).map(|img| (*i, img)).map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            score_crops(model, id, &loaded, cfg)
        };
        run().unwrap_or_else(|e| VideoReport::neutral(id, Some(e)))
    }))
}

pub fn predict(cfg: &RunConfig, folders: &BTreeSet<u32>) -> Result<(), CliError> {
    let input = required(&cfg.paths.input, "input")?;
    let checkpoint = required(&cfg.paths.checkpoint, "checkpoint")?;
    let out = required(&cfg.paths.output, "output directory")?;
    cfg.aggregation
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (model, ckpt) = load_checkpoint(checkpoint).map_err(|e| CliError::data(checkpoint.display(), e))?;
    create_dir(out)?;
    let reports = if input.is_file() {
        predict_manifest(&model, cfg, input, folders)?
    } else {
        predict_videos(&model, cfg, input, out, folders)?
    };
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    for r in &reports {
        if let Some(e) = &r.error {
            log::warn!("{}: {e}", r.video_id);
        } else if r.no_face {
            log::warn!("{}: no face found; predicting 0.5", r.video_id);
        }
    }
    if failed == reports.len() {
        return Err(CliError::Data(format!(
            "no video was processed successfully ({failed} failures)"
        )));
    }
    let csv_path = out.join(PREDICTIONS_FILE);
    write_predictions_csv(&csv_path, &reports).map_err(|e| CliError::data(csv_path.display(), e))?;
    write_json(
        &out.join(REPORT_FILE),
        &PredictReport {
            checkpoint,
            checkpoint_step: ckpt.step,
            config: cfg,
            videos: &reports,
        },
    )?;
    println!(
        "{} predictions ({failed} failed) written to {}",
        reports.len(),
        csv_path.display()
    );
    Ok(())
}

fn write_predictions_csv(path: &Path, reports: &[VideoReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["filename", "label"])?;
    for r in reports {
        w.write_record([r.video_id.as_str(), &format!("{:.6}", r.p_fake)])?;
    }
    w.flush()?;
    Ok(())
}

/// `filename,<value>` rows of a CSV with a header line.
pub fn read_two_column_csv(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let err = |e: csv::Error| CliError::data(path.display(), e);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(err)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(err)?;
        match (record.get(0), record.get(1), record.len()) {
            (Some(name), Some(value), 2) => rows.push((name.to_string(), value.to_string())),
            _ => {
                return Err(CliError::Data(format!(
                    "{}: expected two columns, got {record:?}",
                    path.display()
                )))
            }
        }
    }
    Ok(rows)
}

/// Labels from a `filename,label` CSV (0/1 or REAL/FAKE) or a metadata JSON.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, u8>, CliError> {
    let pairs: Vec<(String, Label)> = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        load_metadata(path)?.into_iter().map(|(k, r)| (k, r.label)).collect()
    } else {
        read_two_column_csv(path)?
            .into_iter()
            .map(|(k, v)| {
                v.parse::<Label>()
                    .map(|l| (k, l))
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
            })
            .collect::<Result<_, _>>()?
    };
    pairs
        .into_iter()
        .map(|(k, l)| match l.target() {
            Some(y) => Ok((k, y)),
            None => Err(CliError::Data(format!("{k}: label must be REAL or FAKE"))),
        })
        .collect()
}

pub fn evaluate_predictions(cfg: &RunConfig) -> Result<MetricsReport, CliError> {
    let preds_path = required(&cfg.paths.predictions, "predictions CSV")?;
    let labels_path = required(&cfg.paths.labels, "labels file")?;
    let labels = read_labels(labels_path)?;
    let mut pairs = Vec::new();
    for (name, value) in read_two_column_csv(preds_path)? {
        let p: f64 = value
            .parse()
            .map_err(|_| CliError::Data(format!("{name}: probability {value:?} is not a number")))?;
        let y = labels
            .get(&name)
            .or_else(|| {
                Path::new(&name)
                    .file_stem()
                    .and_then(|s| labels.get(s.to_string_lossy().as_ref()))
            })
            .ok_or_else(|| CliError::Data(format!("{name}: no label in {}", labels_path.display())))?;
        pairs.push((*y, p));
    }
    let set = LabeledPredictionSet::new(pairs).map_err(|e| CliError::data(preds_path.display(), e))?;
    evaluate(&set, cfg.evaluation.threshold).map_err(|e| CliError::data("evaluate", e))
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let out = required(&cfg.paths.output, "output directory")?;
    let report = evaluate_predictions(cfg)?;
    create_dir(out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    let mut rows = vec![TableRow::from_report("This run", &report)];
    rows.extend(reference_rows());
    let table = comparison_table(&rows);
    std::fs::write(out.join(TABLE_FILE), &table).map_err(|e| CliError::data(out.display(), e))?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    print!("{table}");
    Ok(())
}
