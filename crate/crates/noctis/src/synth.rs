//! Deterministic synthetic benchmarks with planted object identities.
//!
//! Templates are random isotropic unit vectors on random connected validity
//! blobs. Each non-distractor proposal copies a random template of a random
//! object, adds Gaussian noise with per-component standard deviation
//! `noise_sigma` and renormalises every vector. Distractors are fresh random
//! descriptors. Proposal masks are disjoint rectangles laid out on a regular
//! grid over the image; the ground truth of a planted proposal is its own
//! mask with the planted object id.

use std::fs;
use std::path::Path;

use noctis_core::{
    rle_encode, BBox, BinaryMask, Embedding, GroundTruthAnnotation, ObjectTemplates,
    PatchGridDescriptor, ProposalRecord, SceneProposals, TemplateLibrary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::results::write_ground_truth;
use crate::store::{write_scene_proposals, write_template_library};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_objects: usize,
    pub n_templates: usize,
    pub n_proposals: usize,
    pub n_scenes: usize,
    pub embed_dim: usize,
    pub grid: usize,
    pub noise_sigma: f64,
    pub distractor_fraction: f64,
    /// `(width, height)`.
    pub image_size: (u32, u32),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2025,
            n_objects: 5,
            n_templates: 7,
            n_proposals: 20,
            n_scenes: 1,
            embed_dim: 1024,
            grid: 16,
            noise_sigma: 0.05,
            distractor_fraction: 0.2,
            image_size: (640, 480),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(noctis_core::Error::InvalidConfig(m.into()).into());
        if self.n_objects == 0 || self.n_templates == 0 || self.n_proposals == 0 || self.n_scenes == 0 {
            return bad("object, template, proposal and scene counts must be positive");
        }
        if self.embed_dim == 0 || self.grid == 0 || self.grid > 256 {
            return bad("embed-dim must be positive and grid in 1..=256");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise-sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.distractor_fraction) {
            return bad("distractor-fraction must be in [0, 1]");
        }
        let (cols, rows) = layout(self.n_proposals);
        if self.image_size.0 / cols < 4 || self.image_size.1 / rows < 4 {
            return bad("image too small for the requested number of proposals");
        }
        Ok(())
    }

    pub fn n_distractors(&self) -> usize {
        (self.distractor_fraction * self.n_proposals as f64).round() as usize
    }
}

/// Planted identity of one proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLabel {
    pub scene_id: u32,
    pub image_id: u32,
    pub proposal_index: usize,
    pub object_id: u32,
    pub template_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBenchmark {
    pub library: TemplateLibrary,
    pub scenes: Vec<SceneProposals>,
    pub ground_truth: Vec<GroundTruthAnnotation>,
    pub planted: Vec<PlantedLabel>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

fn perturb(rng: &mut ChaCha8Rng, v: &[f32], sigma: f64) -> Vec<f32> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    let noisy: Vec<f64> = v
        .iter()
        .map(|&x| x as f64 + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
    noisy.iter().map(|x| (x / norm) as f32).collect()
}

/// Random 4-connected blob covering at least a quarter of the grid.
fn validity_blob(rng: &mut ChaCha8Rng, grid: usize) -> Vec<bool> {
    let cells = grid * grid;
    let min = cells.div_ceil(4);
    let target = rng.random_range(min..=cells);
    let mut valid = vec![false; cells];
    let mut in_frontier = vec![false; cells];
    let mut frontier = vec![rng.random_range(0..cells)];
    in_frontier[frontier[0]] = true;
    let mut count = 0;
    while count < target {
        let cell = frontier.swap_remove(rng.random_range(0..frontier.len()));
        valid[cell] = true;
        count += 1;
        let (r, c) = (cell / grid, cell % grid);
        let mut push = |n: usize| {
            if !valid[n] && !in_frontier[n] {
                in_frontier[n] = true;
                frontier.push(n);
            }
        };
        if r > 0 {
            push(cell - grid);
        }
        if r + 1 < grid {
            push(cell + grid);
        }
        if c > 0 {
            push(cell - 1);
        }
        if c + 1 < grid {
            push(cell + 1);
        }
    }
    valid
}

fn descriptor_on(
    rng: &mut ChaCha8Rng,
    grid: usize,
    valid: Vec<bool>,
    mut patch: impl FnMut(&mut ChaCha8Rng, usize) -> Vec<f32>,
    cls: Vec<f32>,
) -> PatchGridDescriptor {
    let dim = cls.len();
    let mut patches = vec![0.0f32; grid * grid * dim];
    for (cell, &ok) in valid.iter().enumerate() {
        if ok {
            patches[cell * dim..(cell + 1) * dim].copy_from_slice(&patch(rng, cell));
        }
    }
    PatchGridDescriptor::new(grid, Embedding::new(cls).expect("finite"), patches, valid)
        .expect("generated descriptor is valid")
}

fn random_descriptor(rng: &mut ChaCha8Rng, grid: usize, dim: usize) -> PatchGridDescriptor {
    let valid = validity_blob(rng, grid);
    let cls = unit_vector(rng, dim);
    descriptor_on(rng, grid, valid, |rng, _| unit_vector(rng, dim), cls)
}

fn noisy_copy(rng: &mut ChaCha8Rng, t: &PatchGridDescriptor, sigma: f64) -> PatchGridDescriptor {
    let dim = t.embed_dim();
    let g = t.grid();
    let cls = perturb(rng, t.cls().as_slice(), sigma);
    descriptor_on(
        rng,
        g,
        t.valid().to_vec(),
        |rng, cell| perturb(rng, &t.patches()[cell * dim..(cell + 1) * dim], sigma),
        cls,
    )
}

/// `(cols, rows)` of the proposal layout grid.
fn layout(n: usize) -> (u32, u32) {
    let cols = (n as f64).sqrt().ceil().max(1.0) as u32;
    let rows = (n as u32).div_ceil(cols);
    (cols, rows)
}

/// Random rectangle inside layout cell `slot`, as `(x, y, w, h)`.
fn slot_rect(rng: &mut ChaCha8Rng, slot: usize, n: usize, (width, height): (u32, u32)) -> (u32, u32, u32, u32) {
    let (cols, rows) = layout(n);
    let (cw, ch) = (width / cols, height / rows);
    let (cx, cy) = ((slot as u32 % cols) * cw, (slot as u32 / cols) * ch);
    let w = rng.random_range(cw / 2..=cw - 1);
    let h = rng.random_range(ch / 2..=ch - 1);
    let x = cx + rng.random_range(0..=cw - w);
    let y = cy + rng.random_range(0..=ch - h);
    (x, y, w, h)
}

/// Builds the benchmark in memory; identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthBenchmark> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let objects: Vec<ObjectTemplates> = (1..=cfg.n_objects as u32)
        .map(|object_id| ObjectTemplates {
            object_id,
            templates: (0..cfg.n_templates)
                .map(|_| random_descriptor(&mut rng, cfg.grid, cfg.embed_dim))
                .collect(),
        })
        .collect();
    let library = TemplateLibrary::new(objects)?;

    let (width, height) = cfg.image_size;
    let n = cfg.n_proposals;
    let n_planted = n - cfg.n_distractors();
    let mut scenes = Vec::with_capacity(cfg.n_scenes);
    let mut ground_truth = Vec::new();
    let mut planted = Vec::new();
    for s in 0..cfg.n_scenes as u32 {
        // Random slot permutation so planted and distractor masks interleave.
        let mut slots: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            slots.swap(i, rng.random_range(0..=i));
        }
        let mut proposals = Vec::with_capacity(n);
        for (index, &slot) in slots.iter().enumerate() {
            let (x, y, w, h) = slot_rect(&mut rng, slot, n, cfg.image_size);
            let mask = rle_encode(&BinaryMask::from_fn(height, width, |r, c| {
                c >= x && c < x + w && r >= y && r < y + h
            }));
            let bbox = BBox::new(x as f64, y as f64, w as f64, h as f64);
            let (descriptor, box_conf, mask_conf) = if index < n_planted {
                let k = rng.random_range(0..cfg.n_objects);
                let i = rng.random_range(0..cfg.n_templates);
                let obj = &library.objects()[k];
                planted.push(PlantedLabel {
                    scene_id: s,
                    image_id: s,
                    proposal_index: index,
                    object_id: obj.object_id,
                    template_index: i,
                });
                ground_truth.push(GroundTruthAnnotation {
                    scene_id: s,
                    image_id: s,
                    object_id: obj.object_id,
                    mask: mask.clone(),
                    ignore: false,
                });
                let d = noisy_copy(&mut rng, &obj.templates[i], cfg.noise_sigma);
                (d, rng.random_range(0.6..=1.0), rng.random_range(0.6..=1.0))
            } else {
                let d = random_descriptor(&mut rng, cfg.grid, cfg.embed_dim);
                (d, rng.random_range(0.3..=1.0), rng.random_range(0.3..=1.0))
            };
            proposals.push(ProposalRecord {
                bbox,
                mask,
                box_conf,
                mask_conf,
                descriptor,
            });
        }
        scenes.push(SceneProposals {
            scene_id: s,
            image_id: s,
            image_size: cfg.image_size,
            proposals,
        });
    }
    Ok(SynthBenchmark {
        library,
        scenes,
        ground_truth,
        planted,
    })
}

/// Directory of one scene's proposal container inside `proposals/`.
pub fn scene_dir_name(scene: &SceneProposals) -> String {
    format!("scene{:06}_img{:06}", scene.scene_id, scene.image_id)
}

/// Writes `templates/`, `proposals/<scene>/`, `gt.json` and `planted.json`.
pub fn write_benchmark(bench: &SynthBenchmark, out: &Path) -> Result<()> {
    write_template_library(&bench.library, &out.join("templates"))?;
    for scene in &bench.scenes {
        write_scene_proposals(scene, &out.join("proposals").join(scene_dir_name(scene)))?;
    }
    write_ground_truth(&out.join("gt.json"), &bench.ground_truth)?;
    let path = out.join("planted.json");
    let bytes = serde_json::to_vec(&bench.planted).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn generate_benchmark(cfg: &SynthConfig, out: &Path) -> Result<SynthBenchmark> {
    let bench = generate(cfg)?;
    write_benchmark(&bench, out)?;
    Ok(bench)
}
