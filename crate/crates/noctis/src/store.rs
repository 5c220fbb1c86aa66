//! On-disk descriptor containers.
//!
//! A container is a directory holding `manifest.json` plus raw blobs per
//! descriptor: `*.cls.f32` (D little-endian f32), `*.patch.f32`
//! (G*G*D little-endian f32, row-major grid, embedding-contiguous) and
//! `*.valid.u8` (G*G bytes, 0 or 1). Template containers list objects;
//! proposal containers describe one image.

use std::fs;
use std::path::{Path, PathBuf};

use noctis_core::{
    BBox, Embedding, ObjectTemplates, PatchGridDescriptor, ProposalRecord, RleMask,
    SceneProposals, TemplateLibrary,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "noctis-desc/1";
pub const MANIFEST: &str = "manifest.json";

/// Uncompressed RLE as stored in JSON: `size` is `[H, W]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleJson {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl From<&RleMask> for RleJson {
    fn from(m: &RleMask) -> Self {
        Self {
            size: [m.height(), m.width()],
            counts: m.counts().to_vec(),
        }
    }
}

impl RleJson {
    pub fn to_mask(&self) -> noctis_core::Result<RleMask> {
        RleMask::new(self.size[0], self.size[1], self.counts.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRefs {
    pub cls: String,
    pub patch: String,
    pub valid: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub object_id: u32,
    pub templates: Vec<BlobRefs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateManifest {
    pub format: String,
    pub embed_dim: usize,
    pub grid: [usize; 2],
    pub objects: Vec<ObjectEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalEntry {
    pub bbox: [f64; 4],
    pub mask: RleJson,
    pub box_conf: f64,
    pub mask_conf: f64,
    #[serde(flatten)]
    pub blobs: BlobRefs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalManifest {
    pub format: String,
    pub embed_dim: usize,
    pub grid: [usize; 2],
    pub scene_id: u32,
    pub image_id: u32,
    /// `[W, H]`.
    pub image_size: [u32; 2],
    pub proposals: Vec<ProposalEntry>,
}

#[derive(Deserialize)]
struct FormatProbe {
    format: String,
}

/// Either kind of container manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyManifest {
    Templates(TemplateManifest),
    Proposals(ProposalManifest),
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a manifest and checks its format tag before parsing the rest.
pub fn read_manifest(dir: &Path) -> Result<AnyManifest> {
    let path = dir.join(MANIFEST);
    let bytes = read_bytes(&path)?;
    let json = |source| Error::Json {
        path: path.clone(),
        source,
    };
    let probe: FormatProbe = serde_json::from_slice(&bytes).map_err(json)?;
    if probe.format != FORMAT_TAG {
        return Err(Error::UnsupportedVersion {
            path,
            found: probe.format,
        });
    }
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(json)?;
    if value.get("objects").is_some() {
        Ok(AnyManifest::Templates(
            serde_json::from_value(value).map_err(json)?,
        ))
    } else {
        Ok(AnyManifest::Proposals(
            serde_json::from_value(value).map_err(json)?,
        ))
    }
}

fn write_manifest<T: Serialize>(dir: &Path, manifest: &T) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    bytes.push(b'\n');
    write_bytes(&path, &bytes)
}

fn check_shape(path: &Path, embed_dim: usize, grid: [usize; 2]) -> Result<usize> {
    if grid[0] != grid[1] || grid[0] == 0 || embed_dim == 0 {
        return Err(Error::format(
            path,
            format!("unsupported shape: grid {grid:?}, embed_dim {embed_dim}"),
        ));
    }
    Ok(grid[0])
}

fn f32_blob(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f32_blob(path: &Path, len: usize) -> Result<Vec<f32>> {
    let bytes = read_bytes(path)?;
    if bytes.len() != len * 4 {
        return Err(Error::BlobLength {
            path: path.to_owned(),
            len: bytes.len(),
            expected: len * 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_valid_blob(path: &Path, len: usize) -> Result<Vec<bool>> {
    let bytes = read_bytes(path)?;
    if bytes.len() != len {
        return Err(Error::BlobLength {
            path: path.to_owned(),
            len: bytes.len(),
            expected: len,
        });
    }
    bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(path, format!("validity byte {other}"))),
        })
        .collect()
}

fn write_descriptor(dir: &Path, stem: &str, d: &PatchGridDescriptor) -> Result<BlobRefs> {
    let refs = BlobRefs {
        cls: format!("{stem}.cls.f32"),
        patch: format!("{stem}.patch.f32"),
        valid: format!("{stem}.valid.u8"),
    };
    write_bytes(&dir.join(&refs.cls), &f32_blob(d.cls().as_slice()))?;
    write_bytes(&dir.join(&refs.patch), &f32_blob(d.patches()))?;
    let valid: Vec<u8> = d.valid().iter().map(|&v| v as u8).collect();
    write_bytes(&dir.join(&refs.valid), &valid)?;
    Ok(refs)
}

fn read_descriptor(dir: &Path, refs: &BlobRefs, embed_dim: usize, grid: usize) -> Result<PatchGridDescriptor> {
    let cells = grid * grid;
    let cls = read_f32_blob(&dir.join(&refs.cls), embed_dim)?;
    let patches = read_f32_blob(&dir.join(&refs.patch), cells * embed_dim)?;
    let valid = read_valid_blob(&dir.join(&refs.valid), cells)?;
    let at = |e: noctis_core::Error| Error::format(dir.join(&refs.patch), e.to_string());
    PatchGridDescriptor::new(grid, Embedding::new(cls).map_err(at)?, patches, valid).map_err(at)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_template_library(lib: &TemplateLibrary, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let mut objects = Vec::with_capacity(lib.objects().len());
    for obj in lib.objects() {
        let templates = obj
            .templates
            .iter()
            .enumerate()
            .map(|(i, t)| write_descriptor(dir, &format!("obj{:06}_tpl{:03}", obj.object_id, i), t))
            .collect::<Result<Vec<_>>>()?;
        objects.push(ObjectEntry {
            object_id: obj.object_id,
            templates,
        });
    }
    write_manifest(
        dir,
        &TemplateManifest {
            format: FORMAT_TAG.into(),
            embed_dim: lib.embed_dim(),
            grid: [lib.grid(), lib.grid()],
            objects,
        },
    )
}

pub fn read_template_library(dir: &Path) -> Result<TemplateLibrary> {
    let m = match read_manifest(dir)? {
        AnyManifest::Templates(m) => m,
        AnyManifest::Proposals(_) => {
            return Err(Error::format(dir.join(MANIFEST), "not a template container"))
        }
    };
    let manifest_path = dir.join(MANIFEST);
    let grid = check_shape(&manifest_path, m.embed_dim, m.grid)?;
    if m.objects.is_empty() {
        return Err(noctis_core::Error::EmptyLibrary.into());
    }
    let objects = m
        .objects
        .iter()
        .map(|o| {
            Ok(ObjectTemplates {
                object_id: o.object_id,
                templates: o
                    .templates
                    .iter()
                    .map(|r| read_descriptor(dir, r, m.embed_dim, grid))
                    .collect::<Result<Vec<_>>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TemplateLibrary::new(objects)?)
}

pub fn write_scene_proposals(scene: &SceneProposals, dir: &Path) -> Result<()> {
    scene.validate()?;
    create_dir(dir)?;
    // An empty scene has no descriptors to take the shape from.
    let (embed_dim, grid) = scene
        .descriptor_shape()
        .unwrap_or((noctis_core::descriptor::DEFAULT_EMBED_DIM, noctis_core::descriptor::DEFAULT_GRID));
    let proposals = scene
        .proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(ProposalEntry {
                bbox: p.bbox.to_array(),
                mask: RleJson::from(&p.mask),
                box_conf: p.box_conf,
                mask_conf: p.mask_conf,
                blobs: write_descriptor(dir, &format!("prop{i:05}"), &p.descriptor)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(
        dir,
        &ProposalManifest {
            format: FORMAT_TAG.into(),
            embed_dim,
            grid: [grid, grid],
            scene_id: scene.scene_id,
            image_id: scene.image_id,
            image_size: [scene.image_size.0, scene.image_size.1],
            proposals,
        },
    )
}

pub fn read_scene_proposals(dir: &Path) -> Result<SceneProposals> {
    let m = match read_manifest(dir)? {
        AnyManifest::Proposals(m) => m,
        AnyManifest::Templates(_) => {
            return Err(Error::format(dir.join(MANIFEST), "not a proposal container"))
        }
    };
    let manifest_path = dir.join(MANIFEST);
    let grid = check_shape(&manifest_path, m.embed_dim, m.grid)?;
    let proposals = m
        .proposals
        .iter()
        .map(|p| {
            let mask = p
                .mask
                .to_mask()
                .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
            let [x, y, w, h] = p.bbox;
            Ok(ProposalRecord {
                bbox: BBox::new(x, y, w, h),
                mask,
                box_conf: p.box_conf,
                mask_conf: p.mask_conf,
                descriptor: read_descriptor(dir, &p.blobs, m.embed_dim, grid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = SceneProposals {
        scene_id: m.scene_id,
        image_id: m.image_id,
        image_size: (m.image_size[0], m.image_size[1]),
        proposals,
    };
    scene
        .validate()
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok(scene)
}

/// Proposal containers under `path`: `path` itself when it holds a manifest,
/// otherwise every immediate subdirectory that does, sorted by
/// `(scene_id, image_id)`.
pub fn read_proposal_set(path: &Path) -> Result<Vec<SceneProposals>> {
    if path.join(MANIFEST).is_file() {
        return Ok(vec![read_scene_proposals(path)?]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.join(MANIFEST).is_file() {
            dirs.push(p);
        }
    }
    if dirs.is_empty() {
        return Err(Error::io(
            path.join(MANIFEST),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no proposal containers found"),
        ));
    }
    dirs.sort();
    let mut scenes = dirs
        .iter()
        .map(|d| read_scene_proposals(d))
        .collect::<Result<Vec<_>>>()?;
    scenes.sort_by_key(|s| (s.scene_id, s.image_id));
    Ok(scenes)
}
