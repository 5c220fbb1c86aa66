//! Naive loop-form reimplementations used as test oracles.
//!
//! Nothing here shares code with the batched kernels beyond the data model:
//! similarities are recomputed per pair from the stored `f32` values, masks
//! are compared pixel by pixel, and AP is taken directly from the definition.

use alloc::vec::Vec;

use crate::assignment::DetectionResult;
use crate::descriptor::{GridPos, PatchGridDescriptor, SceneProposals, TemplateLibrary};
use crate::error::{Error, Result};
use crate::evaluation::GroundTruthAnnotation;
use crate::rle::{rle_decode, RleMask};
use crate::scoring::{InstanceScoreMatrix, ScoreConfig};
use crate::similarity::{CyclicDistanceMap, CyclicEntry};

pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for i in 0..a.len() {
        ab += a[i] as f64 * b[i] as f64;
        aa += a[i] as f64 * a[i] as f64;
        bb += b[i] as f64 * b[i] as f64;
    }
    ab / libm::sqrt(aa * bb)
}

fn valid_cells(d: &PatchGridDescriptor) -> Vec<GridPos> {
    let mut cells = Vec::new();
    for r in 0..d.grid() {
        for c in 0..d.grid() {
            if d.is_valid(r, c) {
                cells.push((r as u16, c as u16));
            }
        }
    }
    cells
}

fn cell_cos(a: &PatchGridDescriptor, pa: GridPos, b: &PatchGridDescriptor, pb: GridPos) -> f64 {
    naive_cosine(
        a.patch(pa.0 as usize, pa.1 as usize),
        b.patch(pb.0 as usize, pb.1 as usize),
    )
}

/// Exhaustive roundtrip search; ties go to the lowest index both ways.
pub fn naive_cyclic_distance(
    crop: &PatchGridDescriptor,
    template: &PatchGridDescriptor,
) -> CyclicDistanceMap {
    let a = valid_cells(crop);
    let b = valid_cells(template);
    let mut entries = Vec::new();
    for &s in &a {
        let mut t = 0;
        for j in 1..b.len() {
            if cell_cos(crop, s, template, b[j]) > cell_cos(crop, s, template, b[t]) {
                t = j;
            }
        }
        let mut u = 0;
        for i in 1..a.len() {
            if cell_cos(crop, a[i], template, b[t]) > cell_cos(crop, a[u], template, b[t]) {
                u = i;
            }
        }
        let dr = s.0 as f64 - a[u].0 as f64;
        let dc = s.1 as f64 - a[u].1 as f64;
        entries.push(CyclicEntry {
            position: s,
            best_match: t,
            roundtrip: u,
            cdist: libm::sqrt(dr * dr + dc * dc),
            best_similarity: cell_cos(crop, s, template, b[t]),
        });
    }
    CyclicDistanceMap { entries }
}

pub fn naive_sub_appearance(
    crop: &PatchGridDescriptor,
    template: &PatchGridDescriptor,
    delta_ct: f64,
) -> f64 {
    let map = naive_cyclic_distance(crop, template);
    let mut total = 0.0;
    for e in &map.entries {
        let keep = if e.cdist <= delta_ct { 1.0 } else { 0.0 };
        total += e.best_similarity * keep;
    }
    total / map.entries.len() as f64
}

fn naive_top_k_mean(mut sims: Vec<f64>, k: usize) -> f64 {
    let k = if k < sims.len() { k } else { sims.len() };
    let mut total = 0.0;
    for _ in 0..k {
        let mut m = 0;
        for i in 1..sims.len() {
            if sims[i] > sims[m] {
                m = i;
            }
        }
        total += sims.remove(m);
    }
    total / k as f64
}

/// Unbatched proposal x object score matrix.
pub fn naive_instance_score_matrix(
    scene: &SceneProposals,
    lib: &TemplateLibrary,
    cfg: &ScoreConfig,
) -> InstanceScoreMatrix {
    let mut scores = Vec::new();
    for p in &scene.proposals {
        let conf = (p.box_conf + p.mask_conf) / 2.0;
        for obj in lib.objects() {
            let mut sems = Vec::new();
            let mut appe = f64::NEG_INFINITY;
            for t in &obj.templates {
                sems.push(naive_cosine(p.descriptor.cls().as_slice(), t.cls().as_slice()));
                let s = naive_sub_appearance(&p.descriptor, t, cfg.delta_ct);
                if s > appe {
                    appe = s;
                }
            }
            let sem = naive_top_k_mean(sems, cfg.semantic_top_k);
            let mut weighted = cfg.w_appe * appe;
            if cfg.clamp_weighted_appearance {
                weighted = weighted.max(0.0).min(1.0);
            }
            scores.push((sem + weighted) / 2.0 * conf);
        }
    }
    InstanceScoreMatrix {
        proposal_ids: (0..scene.proposals.len()).collect(),
        object_ids: lib.objects().iter().map(|o| o.object_id).collect(),
        scores,
    }
}

fn pixel_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    if a.size() != b.size() {
        return Err(Error::MaskSizeMismatch { a: a.size(), b: b.size() });
    }
    let (da, db) = (rle_decode(a), rle_decode(b));
    let mut inter = 0u64;
    let mut union = 0u64;
    for (x, y) in da.column_major().iter().zip(db.column_major()) {
        inter += (*x && *y) as u64;
        union += (*x || *y) as u64;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Mean AP over objects with at least one non-ignored annotation.
///
/// Interpolated precision at recall `r` is the maximum precision over every
/// rank whose recall reaches `r`, evaluated at `r = 0, 0.01, ..., 1`.
pub fn naive_ap(
    dets: &[DetectionResult],
    gts: &[GroundTruthAnnotation],
    thresholds: &[f64],
) -> Result<f64> {
    let mut objects: Vec<u32> = Vec::new();
    for g in gts {
        if !g.ignore && !objects.contains(&g.object_id) {
            objects.push(g.object_id);
        }
    }
    if objects.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &obj in &objects {
        // Insertion sort by descending score keeps input order on ties.
        let mut ranked: Vec<&DetectionResult> = Vec::new();
        for d in dets.iter().filter(|d| d.object_id == obj) {
            let pos = ranked.iter().position(|r| r.score < d.score).unwrap_or(ranked.len());
            ranked.insert(pos, d);
        }
        let n_pos = gts.iter().filter(|g| g.object_id == obj && !g.ignore).count();
        let mut obj_total = 0.0;
        for &thr in thresholds {
            let mut used: Vec<bool> = gts.iter().map(|_| false).collect();
            let mut tp_flags: Vec<bool> = Vec::new();
            for d in &ranked {
                let mut best_real: Option<(usize, f64)> = None;
                let mut best_ign: Option<(usize, f64)> = None;
                for (gi, g) in gts.iter().enumerate() {
                    if g.object_id != obj || used[gi] || g.scene_id != d.scene_id || g.image_id != d.image_id {
                        continue;
                    }
                    let iou = pixel_iou(&d.mask, &g.mask)?;
                    if iou < thr {
                        continue;
                    }
                    let slot = if g.ignore { &mut best_ign } else { &mut best_real };
                    match slot {
                        Some((_, b)) if iou <= *b => {}
                        _ => *slot = Some((gi, iou)),
                    }
                }
                if let Some((gi, _)) = best_real {
                    used[gi] = true;
                    tp_flags.push(true);
                } else if let Some((gi, _)) = best_ign {
                    used[gi] = true;
                } else {
                    tp_flags.push(false);
                }
            }
            let mut curve: Vec<(f64, f64)> = Vec::new();
            let mut tp = 0usize;
            for (i, &hit) in tp_flags.iter().enumerate() {
                if hit {
                    tp += 1;
                }
                curve.push((tp as f64 / n_pos as f64, tp as f64 / (i + 1) as f64));
            }
            let mut ap = 0.0;
            for k in 0..101 {
                let r = k as f64 / 100.0;
                let mut best = 0.0f64;
                for &(rec, prec) in &curve {
                    if rec >= r && prec > best {
                        best = prec;
                    }
                }
                ap += best;
            }
            obj_total += ap / 101.0;
        }
        total += obj_total / thresholds.len() as f64;
    }
    Ok(total / objects.len() as f64)
}
