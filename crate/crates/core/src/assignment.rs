//! Proposal prefiltering, label assignment, confidence thresholding and mask
//! non-maximum suppression.

use alloc::format;
use alloc::vec::Vec;

use crate::descriptor::{BBox, SceneProposals, TemplateLibrary};
use crate::error::{Error, Result};
use crate::rle::RleMask;
use crate::scoring::{instance_score_matrix, InstanceScoreMatrix, ScoreConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentConfig {
    /// Minimum mean of box and mask confidence for a proposal to be scored.
    pub min_proposal_conf: f64,
    /// Minimum mask area as a fraction of the image.
    pub min_relative_area: f64,
    /// Minimum object matching score of a kept detection.
    pub conf_threshold: f64,
    /// Mask IoU above which the lower-scored detection is suppressed.
    pub nms_iou: f64,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            min_proposal_conf: 0.15,
            min_relative_area: 1e-4,
            conf_threshold: 0.2,
            nms_iou: 0.5,
        }
    }
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min-prop-conf", self.min_proposal_conf),
            ("min-rel-area", self.min_relative_area),
            ("nms-iou", self.nms_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        // Values above 1 are allowed for the score threshold; they simply drop everything.
        if !(self.conf_threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "conf-thresh must be >= 0, got {}",
                self.conf_threshold
            )));
        }
        Ok(())
    }
}

/// A labelled, scored, masked detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub scene_id: u32,
    pub image_id: u32,
    pub object_id: u32,
    pub score: f64,
    pub bbox: BBox,
    pub mask: RleMask,
    /// Index of the originating proposal in the unfiltered scene.
    pub proposal_index: usize,
}

/// Indices of proposals passing the confidence and relative-area filters.
pub fn prefilter_indices(scene: &SceneProposals, cfg: &AssignmentConfig) -> Vec<usize> {
    let (w, h) = scene.image_size;
    let pixels = w as f64 * h as f64;
    scene
        .proposals
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let conf = (p.box_conf + p.mask_conf) / 2.0;
            let rel_area = if pixels > 0.0 {
                p.mask.area() as f64 / pixels
            } else {
                0.0
            };
            conf >= cfg.min_proposal_conf && rel_area >= cfg.min_relative_area
        })
        .map(|(i, _)| i)
        .collect()
}

/// Drops low-confidence and tiny proposals, preserving order.
pub fn prefilter_proposals(scene: &SceneProposals, cfg: &AssignmentConfig) -> SceneProposals {
    let keep = prefilter_indices(scene, cfg);
    SceneProposals {
        scene_id: scene.scene_id,
        image_id: scene.image_id,
        image_size: scene.image_size,
        proposals: keep.iter().map(|&i| scene.proposals[i].clone()).collect(),
    }
}

/// A row-wise argmax of the score matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub proposal_id: usize,
    pub object_index: usize,
    pub object_id: u32,
    pub score: f64,
}

/// Best object per proposal; ties go to the lowest object index.
pub fn assign_labels(m: &InstanceScoreMatrix) -> Result<Vec<Assignment>> {
    if m.n_objects() == 0 {
        return Err(Error::NoObjects);
    }
    Ok((0..m.n_proposals())
        .map(|p| {
            let row = m.row(p);
            let mut k = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[k] {
                    k = j;
                }
            }
            Assignment {
                proposal_id: m.proposal_ids[p],
                object_index: k,
                object_id: m.object_ids[k],
                score: row[k],
            }
        })
        .collect())
}

/// Keeps detections scoring at least `delta_conf`.
pub fn confidence_filter(dets: Vec<DetectionResult>, delta_conf: f64) -> Vec<DetectionResult> {
    dets.into_iter().filter(|d| d.score >= delta_conf).collect()
}

/// Greedy label-agnostic NMS over mask IoU.
///
/// Detections are visited by descending score (ties by proposal index) and
/// dropped when their IoU with an already kept mask exceeds `iou_threshold`.
/// Two empty masks never suppress each other.
pub fn mask_nms(mut dets: Vec<DetectionResult>, iou_threshold: f64) -> Result<Vec<DetectionResult>> {
    if let Some(first) = dets.first() {
        let size = first.mask.size();
        if let Some(bad) = dets.iter().find(|d| d.mask.size() != size) {
            return Err(Error::MaskSizeMismatch {
                a: size,
                b: bad.mask.size(),
            });
        }
    }
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.proposal_index.cmp(&b.proposal_index))
    });
    let mut kept: Vec<DetectionResult> = Vec::with_capacity(dets.len());
    for d in dets {
        let mut suppressed = false;
        for k in &kept {
            let inter = d.mask.intersection_area(&k.mask)?;
            let union = d.mask.area() + k.mask.area() - inter;
            if union > 0 && inter as f64 / union as f64 > iou_threshold {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(d);
        }
    }
    Ok(kept)
}

/// Prefilter, score, label, threshold and suppress the proposals of one image.
pub fn run_matching(
    scene: &SceneProposals,
    lib: &TemplateLibrary,
    score_cfg: &ScoreConfig,
    assign_cfg: &AssignmentConfig,
) -> Result<Vec<DetectionResult>> {
    assign_cfg.validate()?;
    score_cfg.validate()?;
    scene.validate()?;
    let keep = prefilter_indices(scene, assign_cfg);
    let filtered = SceneProposals {
        scene_id: scene.scene_id,
        image_id: scene.image_id,
        image_size: scene.image_size,
        proposals: keep.iter().map(|&i| scene.proposals[i].clone()).collect(),
    };
    let mut matrix = instance_score_matrix(&filtered, lib, score_cfg)?;
    matrix.proposal_ids = keep;
    let dets = assign_labels(&matrix)?
        .into_iter()
        .map(|a| {
            let p = &scene.proposals[a.proposal_id];
            DetectionResult {
                scene_id: scene.scene_id,
                image_id: scene.image_id,
                object_id: a.object_id,
                score: a.score,
                bbox: p.bbox,
                mask: p.mask.clone(),
                proposal_index: a.proposal_id,
            }
        })
        .collect();
    let dets = confidence_filter(dets, assign_cfg.conf_threshold);
    mask_nms(dets, assign_cfg.nms_iou)
}
