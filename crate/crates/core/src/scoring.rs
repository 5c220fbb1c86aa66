//! Semantic, appearance and object matching scores, and the tiled
//! proposal x object score matrix.
//!
//! The appearance score needs a full patch-by-patch similarity block for
//! every (proposal, object, template) triple. Those blocks are the only
//! buffer whose size grows with the square of the patch count, so they are
//! materialised one tile of `batch_proposals x batch_objects` at a time in a
//! single reusable buffer.

use alloc::format;
use alloc::vec::Vec;

use crate::descriptor::{Embedding, PatchGridDescriptor, SceneProposals, TemplateLibrary};
use crate::error::{Error, Result};
use crate::similarity::{
    check_delta_ct, cosine_similarity, dot, fill_similarity, for_each_cyclic, ColumnScratch,
    PreparedGrid,
};

/// How per-template appearance scores are combined into one per object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AppearanceAggregation {
    #[default]
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    /// Cyclic threshold in grid cells; patches with a larger roundtrip
    /// distance are dropped from the appearance score.
    pub delta_ct: f64,
    pub w_appe: f64,
    /// Clamp `w_appe * s_appe` to `[0, 1]`.
    pub clamp_weighted_appearance: bool,
    pub semantic_top_k: usize,
    pub appearance_aggregation: AppearanceAggregation,
    pub batch_proposals: usize,
    pub batch_objects: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            delta_ct: 5.0,
            w_appe: 2.0,
            clamp_weighted_appearance: true,
            semantic_top_k: 5,
            appearance_aggregation: AppearanceAggregation::Max,
            batch_proposals: 8,
            batch_objects: 4,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        check_delta_ct(self.delta_ct)?;
        if !(self.w_appe > 0.0) || !self.w_appe.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "w-appe must be > 0, got {}",
                self.w_appe
            )));
        }
        if self.semantic_top_k == 0 {
            return Err(Error::InvalidConfig("top-k must be >= 1".into()));
        }
        if self.batch_proposals == 0 || self.batch_objects == 0 {
            return Err(Error::InvalidConfig("batch sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean of the `min(top_k, n)` largest similarities. Sorts `sims` in place.
fn top_k_mean(sims: &mut [f64], top_k: usize) -> f64 {
    sims.sort_by(|a, b| b.total_cmp(a));
    let k = top_k.min(sims.len());
    sims[..k].iter().sum::<f64>() / k as f64
}

/// Top-k average of class-token similarities against an object's templates.
pub fn semantic_score(
    proposal_cls: &Embedding,
    template_cls: &[&Embedding],
    top_k: usize,
) -> Result<f64> {
    if template_cls.is_empty() {
        return Err(Error::EmptyTemplates);
    }
    if top_k == 0 {
        return Err(Error::InvalidConfig("top-k must be >= 1".into()));
    }
    let mut sims = template_cls
        .iter()
        .map(|t| cosine_similarity(proposal_cls.as_slice(), t.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Ok(top_k_mean(&mut sims, top_k))
}

/// Filtered average best-match similarity of one similarity block.
///
/// The denominator counts every valid crop patch; filtered patches add zero.
fn sub_appearance_from_block(
    block: &[f64],
    crop: &PreparedGrid,
    n_tpl: usize,
    delta_ct: f64,
    scratch: &mut ColumnScratch,
) -> f64 {
    let mut sum = 0.0;
    for_each_cyclic(block, n_tpl, crop.positions(), scratch, |_, _, _, cdist, best| {
        if cdist <= delta_ct {
            sum += best;
        }
    });
    sum / crop.len() as f64
}

fn sub_appearance_prepared(
    crop: &PreparedGrid,
    tpl: &PreparedGrid,
    delta_ct: f64,
    block: &mut Vec<f64>,
    scratch: &mut ColumnScratch,
) -> f64 {
    block.clear();
    block.resize(crop.len() * tpl.len(), 0.0);
    fill_similarity(crop, tpl, block);
    sub_appearance_from_block(block, crop, tpl.len(), delta_ct, scratch)
}

fn check_dims(a: &PatchGridDescriptor, b: &PatchGridDescriptor) -> Result<()> {
    if a.embed_dim() != b.embed_dim() || a.grid() != b.grid() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor {}x{}x{} vs {}x{}x{}",
            a.grid(),
            a.grid(),
            a.embed_dim(),
            b.grid(),
            b.grid(),
            b.embed_dim()
        )));
    }
    Ok(())
}

/// Cyclic-threshold filtered appearance score of a crop against one template.
pub fn sub_appearance_score(
    crop: &PatchGridDescriptor,
    template: &PatchGridDescriptor,
    delta_ct: f64,
) -> Result<f64> {
    check_delta_ct(delta_ct)?;
    check_dims(crop, template)?;
    let (c, t) = (PreparedGrid::new(crop), PreparedGrid::new(template));
    Ok(sub_appearance_prepared(
        &c,
        &t,
        delta_ct,
        &mut Vec::new(),
        &mut ColumnScratch::default(),
    ))
}

/// Maximum sub-appearance score over an object's templates.
pub fn appearance_score(
    crop: &PatchGridDescriptor,
    templates: &[PatchGridDescriptor],
    delta_ct: f64,
) -> Result<f64> {
    check_delta_ct(delta_ct)?;
    if templates.is_empty() {
        return Err(Error::EmptyTemplates);
    }
    let c = PreparedGrid::new(crop);
    let mut block = Vec::new();
    let mut scratch = ColumnScratch::default();
    let mut best = f64::NEG_INFINITY;
    for t in templates {
        check_dims(crop, t)?;
        let s = sub_appearance_prepared(&c, &PreparedGrid::new(t), delta_ct, &mut block, &mut scratch);
        if s > best {
            best = s;
        }
    }
    Ok(best)
}

/// Mean of the box and mask confidences.
pub fn proposal_confidence(box_conf: f64, mask_conf: f64) -> Result<f64> {
    for c in [box_conf, mask_conf] {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidProposal(format!("confidence {c} outside [0, 1]")));
        }
    }
    Ok((box_conf + mask_conf) / 2.0)
}

/// `((s_sem + a) / 2) * conf` with `a = w_appe * s_appe`, optionally clamped
/// to `[0, 1]`.
pub fn object_matching_score(s_sem: f64, s_appe: f64, conf: f64, cfg: &ScoreConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&conf) {
        return Err(Error::InvalidProposal(format!("confidence {conf} outside [0, 1]")));
    }
    let mut a = cfg.w_appe * s_appe;
    if cfg.clamp_weighted_appearance {
        a = a.clamp(0.0, 1.0);
    }
    Ok((s_sem + a) / 2.0 * conf)
}

/// Object matching scores, one row per proposal and one column per object.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceScoreMatrix {
    /// Index of each row's proposal in the scene it was computed from.
    pub proposal_ids: Vec<usize>,
    pub object_ids: Vec<u32>,
    /// Row-major `proposal_ids.len() x object_ids.len()`.
    pub scores: Vec<f64>,
}

impl InstanceScoreMatrix {
    pub fn n_proposals(&self) -> usize {
        self.proposal_ids.len()
    }

    pub fn n_objects(&self) -> usize {
        self.object_ids.len()
    }

    pub fn get(&self, p: usize, k: usize) -> f64 {
        self.scores[p * self.n_objects() + k]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let n = self.n_objects();
        &self.scores[p * n..(p + 1) * n]
    }
}

/// Buffer accounting of one score matrix computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScoringStats {
    /// Length, in reals, of the patch similarity tile buffer.
    pub sim_buffer_reals: usize,
    /// `batch_proposals * batch_objects * max_templates * n_patch^2`.
    pub sim_buffer_bound: usize,
    pub tiles: usize,
}

pub fn instance_score_matrix(
    scene: &SceneProposals,
    lib: &TemplateLibrary,
    cfg: &ScoreConfig,
) -> Result<InstanceScoreMatrix> {
    instance_score_matrix_with_stats(scene, lib, cfg).map(|(m, _)| m)
}

pub fn instance_score_matrix_with_stats(
    scene: &SceneProposals,
    lib: &TemplateLibrary,
    cfg: &ScoreConfig,
) -> Result<(InstanceScoreMatrix, ScoringStats)> {
    cfg.validate()?;
    scene.validate()?;
    if let Some((dim, grid)) = scene.descriptor_shape() {
        if dim != lib.embed_dim() || grid != lib.grid() {
            return Err(Error::DimensionMismatch(format!(
                "proposals are {grid}x{grid}x{dim}, library is {g}x{g}x{d}",
                g = lib.grid(),
                d = lib.embed_dim()
            )));
        }
    }

    let n_p = scene.proposals.len();
    let n_o = lib.objects().len();
    let n_patch = lib.grid() * lib.grid();
    let mut stats = ScoringStats {
        sim_buffer_bound: cfg.batch_proposals * cfg.batch_objects * lib.max_templates() * n_patch * n_patch,
        ..ScoringStats::default()
    };

    let crops: Vec<PreparedGrid> = scene
        .proposals
        .iter()
        .map(|p| PreparedGrid::new(&p.descriptor))
        .collect();
    let templates: Vec<Vec<PreparedGrid>> = lib
        .objects()
        .iter()
        .map(|o| o.templates.iter().map(PreparedGrid::new).collect())
        .collect();
    let confs = scene
        .proposals
        .iter()
        .map(|p| proposal_confidence(p.box_conf, p.mask_conf))
        .collect::<Result<Vec<_>>>()?;

    let p_tiles = tile_ranges(n_p, cfg.batch_proposals);
    let o_tiles = tile_ranges(n_o, cfg.batch_objects);
    let tile_need = |ps: &core::ops::Range<usize>, os: &core::ops::Range<usize>| -> usize {
        ps.clone()
            .map(|p| {
                os.clone()
                    .flat_map(|k| templates[k].iter())
                    .map(|t| crops[p].len() * t.len())
                    .sum::<usize>()
            })
            .sum()
    };
    let need = p_tiles
        .iter()
        .flat_map(|ps| o_tiles.iter().map(move |os| (ps, os)))
        .map(|(ps, os)| tile_need(ps, os))
        .max()
        .unwrap_or(0);
    let mut tile = alloc::vec![0.0f64; need];
    stats.sim_buffer_reals = need;

    let mut scores = alloc::vec![0.0f64; n_p * n_o];
    let mut sem_sims = Vec::with_capacity(lib.max_templates());
    let mut scratch = ColumnScratch::default();
    let mut offsets: Vec<usize> = Vec::new();

    for ps in &p_tiles {
        for os in &o_tiles {
            stats.tiles += 1;
            // Fill every similarity block of the tile first.
            offsets.clear();
            let mut off = 0;
            for p in ps.clone() {
                for k in os.clone() {
                    for t in &templates[k] {
                        let len = crops[p].len() * t.len();
                        offsets.push(off);
                        fill_similarity(&crops[p], t, &mut tile[off..off + len]);
                        off += len;
                    }
                }
            }
            // Then reduce each cell from its blocks.
            let mut block_idx = 0;
            for p in ps.clone() {
                let crop = &crops[p];
                for k in os.clone() {
                    let mut appe = f64::NEG_INFINITY;
                    sem_sims.clear();
                    for t in &templates[k] {
                        let start = offsets[block_idx];
                        block_idx += 1;
                        let block = &tile[start..start + crop.len() * t.len()];
                        let s = sub_appearance_from_block(block, crop, t.len(), cfg.delta_ct, &mut scratch);
                        match cfg.appearance_aggregation {
                            AppearanceAggregation::Max => {
                                if s > appe {
                                    appe = s;
                                }
                            }
                        }
                        sem_sims.push(dot(crop.cls_unit(), t.cls_unit()).clamp(-1.0, 1.0));
                    }
                    let sem = top_k_mean(&mut sem_sims, cfg.semantic_top_k);
                    scores[p * n_o + k] = object_matching_score(sem, appe, confs[p], cfg)?;
                }
            }
        }
    }

    Ok((
        InstanceScoreMatrix {
            proposal_ids: (0..n_p).collect(),
            object_ids: lib.object_ids(),
            scores,
        },
        stats,
    ))
}

fn tile_ranges(n: usize, batch: usize) -> Vec<core::ops::Range<usize>> {
    (0..n)
        .step_by(batch)
        .map(|s| s..(s + batch).min(n))
        .collect()
}
