//! Descriptor data model: per-crop class and patch embeddings, template
//! libraries and per-image proposal sets.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rle::RleMask;

/// Default embedding width of a ViT-L backbone.
pub const DEFAULT_EMBED_DIM: usize = 1024;
/// Default side length of the patch grid.
pub const DEFAULT_GRID: usize = 16;

/// A single embedding, stored in the 32-bit precision it was produced in.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDescriptor("non-finite embedding value".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Grid coordinate of a patch, `(row, col)`.
pub type GridPos = (u16, u16);

/// Class embedding plus a `grid x grid` lattice of patch embeddings.
///
/// Patches are row-major and embedding-contiguous. Patches outside the
/// instance mask are flagged invalid and stored as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGridDescriptor {
    grid: usize,
    cls: Embedding,
    patches: Vec<f32>,
    valid: Vec<bool>,
}

impl PatchGridDescriptor {
    pub fn new(grid: usize, cls: Embedding, patches: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let dim = cls.len();
        if dim == 0 || grid == 0 {
            return Err(Error::InvalidDescriptor("zero embedding width or grid".into()));
        }
        if grid > u16::MAX as usize {
            return Err(Error::InvalidDescriptor(format!("grid {grid} too large")));
        }
        let cells = grid * grid;
        if valid.len() != cells {
            return Err(Error::DimensionMismatch(format!(
                "{} validity flags for a {grid}x{grid} grid",
                valid.len()
            )));
        }
        if patches.len() != cells * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} patch values, expected {}",
                patches.len(),
                cells * dim
            )));
        }
        if patches.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDescriptor("non-finite patch value".into()));
        }
        if sq_norm(cls.as_slice()) == 0.0 {
            return Err(Error::ZeroVector);
        }
        let mut n_valid = 0;
        for (cell, (chunk, &ok)) in patches.chunks_exact(dim).zip(&valid).enumerate() {
            if ok {
                n_valid += 1;
                if sq_norm(chunk) == 0.0 {
                    return Err(Error::ZeroVector);
                }
            } else if chunk.iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidDescriptor(format!(
                    "invalid patch {cell} has a nonzero embedding"
                )));
            }
        }
        if n_valid == 0 {
            return Err(Error::NoValidPatches);
        }
        Ok(Self {
            grid,
            cls,
            patches,
            valid,
        })
    }

    /// Builds a descriptor from a list of valid patches; all other cells are zero.
    pub fn from_valid_patches(
        grid: usize,
        cls: Embedding,
        valid_patches: &[(GridPos, Vec<f32>)],
    ) -> Result<Self> {
        let dim = cls.len();
        let mut patches = alloc::vec![0.0f32; grid * grid * dim];
        let mut valid = alloc::vec![false; grid * grid];
        for ((r, c), emb) in valid_patches {
            let (r, c) = (*r as usize, *c as usize);
            if r >= grid || c >= grid || emb.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "patch at ({r}, {c}) with width {}",
                    emb.len()
                )));
            }
            let cell = r * grid + c;
            valid[cell] = true;
            patches[cell * dim..(cell + 1) * dim].copy_from_slice(emb);
        }
        Self::new(grid, cls, patches, valid)
    }

    pub fn embed_dim(&self) -> usize {
        self.cls.len()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn cls(&self) -> &Embedding {
        &self.cls
    }

    /// Raw patch storage, `grid * grid * embed_dim` values.
    pub fn patches(&self) -> &[f32] {
        &self.patches
    }

    /// Row-major validity flags.
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn patch(&self, row: usize, col: usize) -> &[f32] {
        let d = self.embed_dim();
        let cell = row * self.grid + col;
        &self.patches[cell * d..(cell + 1) * d]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.grid + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Valid patches in row-major order with their grid positions.
    pub fn valid_patches(&self) -> impl Iterator<Item = (GridPos, &[f32])> + '_ {
        let d = self.embed_dim();
        let g = self.grid;
        self.valid
            .iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(move |(cell, _)| {
                (
                    ((cell / g) as u16, (cell % g) as u16),
                    &self.patches[cell * d..(cell + 1) * d],
                )
            })
    }
}

fn sq_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum()
}

/// All templates of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTemplates {
    pub object_id: u32,
    pub templates: Vec<PatchGridDescriptor>,
}

/// Template descriptors for every known object, kept sorted by object id.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateLibrary {
    embed_dim: usize,
    grid: usize,
    objects: Vec<ObjectTemplates>,
}

impl TemplateLibrary {
    pub fn new(mut objects: Vec<ObjectTemplates>) -> Result<Self> {
        let first = objects
            .first()
            .and_then(|o| o.templates.first())
            .ok_or(Error::EmptyLibrary)?;
        let (embed_dim, grid) = (first.embed_dim(), first.grid());
        objects.sort_by_key(|o| o.object_id);
        for pair in objects.windows(2) {
            if pair[0].object_id == pair[1].object_id {
                return Err(Error::InvalidLibrary(format!(
                    "duplicate object id {}",
                    pair[0].object_id
                )));
            }
        }
        for obj in &objects {
            if obj.object_id == 0 {
                return Err(Error::InvalidLibrary("object ids must be positive".into()));
            }
            if obj.templates.is_empty() {
                return Err(Error::InvalidLibrary(format!(
                    "object {} has no templates",
                    obj.object_id
                )));
            }
            for t in &obj.templates {
                if t.embed_dim() != embed_dim || t.grid() != grid {
                    return Err(Error::DimensionMismatch(format!(
                        "object {} template is {}x{}x{}, library is {grid}x{grid}x{embed_dim}",
                        obj.object_id,
                        t.grid(),
                        t.grid(),
                        t.embed_dim()
                    )));
                }
            }
        }
        Ok(Self {
            embed_dim,
            grid,
            objects,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn objects(&self) -> &[ObjectTemplates] {
        &self.objects
    }

    pub fn object_ids(&self) -> Vec<u32> {
        self.objects.iter().map(|o| o.object_id).collect()
    }

    pub fn max_templates(&self) -> usize {
        self.objects.iter().map(|o| o.templates.len()).max().unwrap_or(0)
    }
}

/// Axis-aligned box `(x, y, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// One segmentation proposal of a query image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalRecord {
    pub bbox: BBox,
    pub mask: RleMask,
    pub box_conf: f64,
    pub mask_conf: f64,
    pub descriptor: PatchGridDescriptor,
}

/// All proposals of one query image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneProposals {
    pub scene_id: u32,
    pub image_id: u32,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
    pub proposals: Vec<ProposalRecord>,
}

impl SceneProposals {
    /// Checks per-proposal invariants and descriptor shape consistency.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let mut shape: Option<(usize, usize)> = None;
        for (i, p) in self.proposals.iter().enumerate() {
            let b = p.bbox;
            let in_bounds = [b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite())
                && b.x >= 0.0
                && b.y >= 0.0
                && b.w >= 0.0
                && b.h >= 0.0
                && b.x + b.w <= w as f64
                && b.y + b.h <= h as f64;
            if !in_bounds {
                return Err(Error::InvalidProposal(format!(
                    "proposal {i}: bbox {:?} outside {w}x{h} image",
                    b.to_array()
                )));
            }
            if p.mask.size() != (h, w) {
                return Err(Error::InvalidProposal(format!(
                    "proposal {i}: mask size {:?} does not match image {h}x{w}",
                    p.mask.size()
                )));
            }
            for (name, c) in [("box_conf", p.box_conf), ("mask_conf", p.mask_conf)] {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidProposal(format!(
                        "proposal {i}: {name} {c} outside [0, 1]"
                    )));
                }
            }
            let s = (p.descriptor.embed_dim(), p.descriptor.grid());
            match shape {
                None => shape = Some(s),
                Some(prev) if prev != s => {
                    return Err(Error::DimensionMismatch(format!(
                        "proposal {i} descriptor {s:?} differs from {prev:?}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `(embed_dim, grid)` shared by all proposal descriptors, if any.
    pub fn descriptor_shape(&self) -> Option<(usize, usize)> {
        self.proposals
            .first()
            .map(|p| (p.descriptor.embed_dim(), p.descriptor.grid()))
    }
}
