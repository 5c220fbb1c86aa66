//! Result, ground-truth and report JSON files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use noctis_core::{
    average_precision, bop_iou_thresholds, ApReport, BBox, DetectionResult,
    GroundTruthAnnotation,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::RleJson;

/// One entry of a result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub scene_id: u32,
    pub image_id: u32,
    pub category_id: u32,
    pub score: f64,
    pub bbox: [f64; 4],
    pub segmentation: RleJson,
    /// Per-image runtime in seconds, `-1` when not recorded.
    pub time: f64,
}

impl ResultEntry {
    pub fn new(d: &DetectionResult, time: f64) -> Self {
        Self {
            scene_id: d.scene_id,
            image_id: d.image_id,
            category_id: d.object_id,
            score: d.score,
            bbox: d.bbox.to_array(),
            segmentation: RleJson::from(&d.mask),
            time,
        }
    }

    pub fn to_detection(&self, index: usize) -> noctis_core::Result<DetectionResult> {
        let [x, y, w, h] = self.bbox;
        Ok(DetectionResult {
            scene_id: self.scene_id,
            image_id: self.image_id,
            object_id: self.category_id,
            score: self.score,
            bbox: BBox::new(x, y, w, h),
            mask: self.segmentation.to_mask()?,
            proposal_index: index,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub scene_id: u32,
    pub image_id: u32,
    pub object_id: u32,
    pub mask: RleJson,
    #[serde(default)]
    pub ignore: bool,
}

impl From<&GroundTruthAnnotation> for GtEntry {
    fn from(g: &GroundTruthAnnotation) -> Self {
        Self {
            scene_id: g.scene_id,
            image_id: g.image_id,
            object_id: g.object_id,
            mask: RleJson::from(&g.mask),
            ignore: g.ignore,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub mean_ap: f64,
    pub per_object: BTreeMap<u32, f64>,
    pub per_iou: BTreeMap<String, f64>,
}

impl From<&ApReport> for ReportJson {
    fn from(r: &ApReport) -> Self {
        Self {
            mean_ap: r.mean_ap,
            per_object: r.per_object.iter().copied().collect(),
            per_iou: r
                .per_iou
                .iter()
                .map(|(t, ap)| (format!("{t:.2}"), *ap))
                .collect(),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

fn to_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>> {
    serde_json::to_vec(value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

/// Writes a compact, newline-free JSON array.
pub fn write_results(path: &Path, entries: &[ResultEntry]) -> Result<()> {
    let bytes = to_json(path, &entries)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultEntry>> {
    read_json(path)
}

pub fn write_ground_truth(path: &Path, gts: &[GroundTruthAnnotation]) -> Result<()> {
    let entries: Vec<GtEntry> = gts.iter().map(GtEntry::from).collect();
    let bytes = to_json(path, &entries)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthAnnotation>> {
    let entries: Vec<GtEntry> = read_json(path)?;
    entries
        .into_iter()
        .map(|g| {
            Ok(GroundTruthAnnotation {
                scene_id: g.scene_id,
                image_id: g.image_id,
                object_id: g.object_id,
                mask: g.mask.to_mask().map_err(|e| Error::format(path, e.to_string()))?,
                ignore: g.ignore,
            })
        })
        .collect()
}

/// AP over thresholds 0.50:0.05:0.95 of a result file against a GT file.
///
/// Every category in the results must appear among the GT object ids.
pub fn evaluate_dataset(results_path: &Path, gt_path: &Path) -> Result<ApReport> {
    let results = read_results(results_path)?;
    let gts = read_ground_truth(gt_path)?;
    let known: BTreeSet<u32> = gts.iter().map(|g| g.object_id).collect();
    if let Some(r) = results.iter().find(|r| !known.contains(&r.category_id)) {
        return Err(Error::UnknownObject(r.category_id));
    }
    let dets = results
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_detection(i))
        .collect::<noctis_core::Result<Vec<_>>>()
        .map_err(|e| Error::format(results_path, e.to_string()))?;
    Ok(average_precision(&dets, &gts, &bop_iou_thresholds())?)
}
