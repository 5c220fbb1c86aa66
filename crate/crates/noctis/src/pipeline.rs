//! Multi-scene matching with scene-level parallelism.

use std::time::Instant;

use noctis_core::{run_matching, AssignmentConfig, DetectionResult, SceneProposals, ScoreConfig, TemplateLibrary};
use rayon::prelude::*;

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SceneMatch {
    pub scene_id: u32,
    pub image_id: u32,
    pub n_proposals: usize,
    /// Sorted by proposal index.
    pub detections: Vec<DetectionResult>,
    pub seconds: f64,
}

/// Runs the matching pipeline on every scene using `jobs` worker threads.
///
/// Output order follows `(scene_id, image_id)` and is independent of `jobs`.
pub fn match_scenes(
    scenes: &[SceneProposals],
    lib: &TemplateLibrary,
    score_cfg: &ScoreConfig,
    assign_cfg: &AssignmentConfig,
    jobs: usize,
) -> Result<Vec<SceneMatch>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let mut out = pool.install(|| {
        scenes
            .par_iter()
            .map(|scene| {
                let start = Instant::now();
                let mut detections = run_matching(scene, lib, score_cfg, assign_cfg)?;
                detections.sort_by_key(|d| d.proposal_index);
                Ok(SceneMatch {
                    scene_id: scene.scene_id,
                    image_id: scene.image_id,
                    n_proposals: scene.proposals.len(),
                    detections,
                    seconds: start.elapsed().as_secs_f64(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    out.sort_by_key(|m| (m.scene_id, m.image_id));
    Ok(out)
}
