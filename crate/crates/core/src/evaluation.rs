//! Average precision over mask IoU thresholds.
//!
//! Per object and threshold, detections are matched greedily in descending
//! score order to the unmatched ground truth of the same image with the
//! highest IoU (inclusive `>=` threshold). Precision is interpolated at 101
//! recall points. Per-object AP averages over thresholds and the mean AP
//! averages over objects that have at least one non-ignored annotation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::assignment::DetectionResult;
use crate::error::{Error, Result};
use crate::rle::RleMask;

/// Number of recall sample points in the interpolated precision curve.
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthAnnotation {
    pub scene_id: u32,
    pub image_id: u32,
    pub object_id: u32,
    pub mask: RleMask,
    /// Detections matched to an ignored annotation count as neither TP nor FP.
    pub ignore: bool,
}

/// IoU thresholds `0.50, 0.55, ..., 0.95`.
pub fn bop_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// `k / 100` for `k = 0..=100`.
pub fn recall_points() -> impl Iterator<Item = f64> {
    (0..RECALL_POINTS).map(|i| i as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    /// `(object_id, AP averaged over thresholds)`, ascending by id.
    pub per_object: Vec<(u32, f64)>,
    /// `(threshold, AP averaged over objects)`, in input order.
    pub per_iou: Vec<(f64, f64)>,
    pub mean_ap: f64,
    /// `per_object_iou[o][t]`.
    pub per_object_iou: Vec<Vec<f64>>,
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("no IoU thresholds".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::InvalidConfig(format!("IoU threshold {t} outside (0, 1]")));
    }
    Ok(())
}

fn pair_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

pub fn average_precision(
    dets: &[DetectionResult],
    gts: &[GroundTruthAnnotation],
    iou_thresholds: &[f64],
) -> Result<ApReport> {
    check_thresholds(iou_thresholds)?;
    let objects: BTreeSet<u32> = gts.iter().filter(|g| !g.ignore).map(|g| g.object_id).collect();

    let mut per_object = Vec::with_capacity(objects.len());
    let mut per_object_iou = Vec::with_capacity(objects.len());
    for &obj in &objects {
        let aps = object_ap(dets, gts, obj, iou_thresholds)?;
        per_object.push((obj, aps.iter().sum::<f64>() / aps.len() as f64));
        per_object_iou.push(aps);
    }

    let n_obj = objects.len();
    let per_iou = iou_thresholds
        .iter()
        .enumerate()
        .map(|(t, &thr)| {
            let v = if n_obj == 0 {
                0.0
            } else {
                per_object_iou.iter().map(|a| a[t]).sum::<f64>() / n_obj as f64
            };
            (thr, v)
        })
        .collect();
    let mean_ap = if n_obj == 0 {
        0.0
    } else {
        per_object.iter().map(|(_, a)| a).sum::<f64>() / n_obj as f64
    };
    Ok(ApReport {
        per_object,
        per_iou,
        mean_ap,
        per_object_iou,
    })
}

/// AP of one object at every threshold.
fn object_ap(
    dets: &[DetectionResult],
    gts: &[GroundTruthAnnotation],
    obj: u32,
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    let gt: Vec<&GroundTruthAnnotation> = gts.iter().filter(|g| g.object_id == obj).collect();
    let n_pos = gt.iter().filter(|g| !g.ignore).count();
    let mut order: Vec<&DetectionResult> = dets.iter().filter(|d| d.object_id == obj).collect();
    // Stable: equal scores keep input order.
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    // IoU of every detection against every same-image annotation, computed once.
    let mut ious: Vec<Vec<(usize, f64)>> = Vec::with_capacity(order.len());
    for d in &order {
        let mut row = Vec::new();
        for (g, a) in gt.iter().enumerate() {
            if a.scene_id == d.scene_id && a.image_id == d.image_id {
                row.push((g, pair_iou(&d.mask, &a.mask)?));
            }
        }
        ious.push(row);
    }

    let mut out = Vec::with_capacity(thresholds.len());
    let mut taken = alloc::vec![false; gt.len()];
    let mut hits: Vec<bool> = Vec::with_capacity(order.len());
    for &thr in thresholds {
        taken.iter_mut().for_each(|t| *t = false);
        hits.clear();
        for row in &ious {
            let pick = |want_ignored: bool| {
                let mut best: Option<(usize, f64)> = None;
                for &(g, iou) in row {
                    if taken[g] || gt[g].ignore != want_ignored || iou < thr {
                        continue;
                    }
                    if best.is_none_or(|(_, b)| iou > b) {
                        best = Some((g, iou));
                    }
                }
                best.map(|(g, _)| g)
            };
            if let Some(g) = pick(false) {
                taken[g] = true;
                hits.push(true);
            } else if let Some(g) = pick(true) {
                taken[g] = true;
            } else {
                hits.push(false);
            }
        }
        out.push(interpolated_ap(&hits, n_pos));
    }
    Ok(out)
}

/// 101-point interpolated AP of a ranked TP/FP sequence.
fn interpolated_ap(hits: &[bool], n_pos: usize) -> f64 {
    if n_pos == 0 || hits.is_empty() {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        recall.push(tp as f64 / n_pos as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len() - 1).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut sum = 0.0;
    let mut idx = 0;
    for r in recall_points() {
        while idx < recall.len() && recall[idx] < r {
            idx += 1;
        }
        if idx == recall.len() {
            break;
        }
        sum += precision[idx];
    }
    sum / RECALL_POINTS as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::BBox;
    use crate::rle::{rle_encode, BinaryMask};
    use alloc::vec;

    fn strip(c0: u32, c1: u32) -> RleMask {
        rle_encode(&BinaryMask::from_fn(1, 100, |_, c| c >= c0 && c < c1))
    }

    fn det(obj: u32, score: f64, mask: RleMask) -> DetectionResult {
        DetectionResult {
            scene_id: 0,
            image_id: 0,
            object_id: obj,
            score,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            mask,
            proposal_index: 0,
        }
    }

    fn gt(obj: u32, mask: RleMask) -> GroundTruthAnnotation {
        GroundTruthAnnotation {
            scene_id: 0,
            image_id: 0,
            object_id: obj,
            mask,
            ignore: false,
        }
    }

    #[test]
    fn thresholds_are_exact_hundredths() {
        let t = bop_iou_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[4], 0.7);
        assert_eq!(t[9], 0.95);
    }

    #[test]
    fn perfect_prediction() {
        let r = average_precision(&[det(1, 0.9, strip(0, 10))], &[gt(1, strip(0, 10))], &bop_iou_thresholds()).unwrap();
        assert_eq!(r.mean_ap, 1.0);
        assert_eq!(r.per_object, vec![(1, 1.0)]);
    }

    #[test]
    fn no_detections() {
        let r = average_precision(&[], &[gt(1, strip(0, 10))], &bop_iou_thresholds()).unwrap();
        assert_eq!(r.mean_ap, 0.0);
    }

    #[test]
    fn iou_point_seven_passes_half_the_thresholds() {
        // |gt| = 10, |det| = 7 inside it: IoU 7/10.
        let r = average_precision(&[det(1, 0.9, strip(0, 7))], &[gt(1, strip(0, 10))], &bop_iou_thresholds()).unwrap();
        assert_eq!(r.mean_ap, 0.5);
        assert_eq!(r.per_iou[4], (0.7, 1.0));
        assert_eq!(r.per_iou[5].1, 0.0);
    }

    #[test]
    fn fp_ranked_first_halves_precision() {
        let dets = [det(1, 0.9, strip(50, 60)), det(1, 0.5, strip(0, 10))];
        let r = average_precision(&dets, &[gt(1, strip(0, 10))], &[0.5]).unwrap();
        assert!((r.mean_ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_gt_interleaved_fp() {
        let dets = [det(1, 0.9, strip(0, 10)), det(1, 0.8, strip(80, 90)), det(1, 0.7, strip(40, 50))];
        let gts = [gt(1, strip(0, 10)), gt(1, strip(40, 50))];
        let r = average_precision(&dets, &gts, &[0.5]).unwrap();
        // recall <= 0.5 at precision 1 (51 points), recall 1 at precision 2/3 (50 points).
        let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        assert!((r.mean_ap - expected).abs() < 1e-12);
    }

    #[test]
    fn ignored_gt_neither_tp_nor_fp() {
        let mut ign = gt(1, strip(50, 60));
        ign.ignore = true;
        let dets = [det(1, 0.9, strip(50, 60)), det(1, 0.5, strip(0, 10))];
        let r = average_precision(&dets, &[gt(1, strip(0, 10)), ign], &[0.5]).unwrap();
        assert_eq!(r.mean_ap, 1.0);
    }

    #[test]
    fn objects_absent_from_gt_are_not_averaged() {
        let dets = [det(1, 0.9, strip(0, 10)), det(2, 0.9, strip(20, 30))];
        let r = average_precision(&dets, &[gt(1, strip(0, 10))], &[0.5]).unwrap();
        assert_eq!(r.per_object, vec![(1, 1.0)]);
        assert_eq!(r.mean_ap, 1.0);
    }

    #[test]
    fn rejects_bad_thresholds() {
        assert!(average_precision(&[], &[], &[]).is_err());
        assert!(average_precision(&[], &[], &[0.0]).is_err());
        assert!(average_precision(&[], &[], &[1.5]).is_err());
    }
}
