//! Cosine similarity kernels, best-match search and cyclic (roundtrip)
//! patch distances.

use alloc::format;
use alloc::vec::Vec;

use crate::descriptor::{GridPos, PatchGridDescriptor};
use crate::error::{Error, Result};

/// Cosine similarity of two equally sized vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((ab / libm::sqrt(aa * bb)).clamp(-1.0, 1.0))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn best_match_index(row: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in row.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Euclidean distance between two grid cells, in cell units.
pub fn grid_distance(a: GridPos, b: GridPos) -> f64 {
    let dr = a.0 as i64 - b.0 as i64;
    let dc = a.1 as i64 - b.1 as i64;
    libm::sqrt((dr * dr + dc * dc) as f64)
}

/// Unit-normalized valid patches (and class token) of one descriptor, in `f64`.
#[derive(Debug, Clone)]
pub struct PreparedGrid {
    dim: usize,
    positions: Vec<GridPos>,
    units: Vec<f64>,
    cls_unit: Vec<f64>,
}

impl PreparedGrid {
    pub fn new(desc: &PatchGridDescriptor) -> Self {
        let dim = desc.embed_dim();
        let n = desc.valid_count();
        let mut positions = Vec::with_capacity(n);
        let mut units = Vec::with_capacity(n * dim);
        for (pos, v) in desc.valid_patches() {
            positions.push(pos);
            push_unit(&mut units, v);
        }
        let mut cls_unit = Vec::with_capacity(dim);
        push_unit(&mut cls_unit, desc.cls().as_slice());
        Self {
            dim,
            positions,
            units,
            cls_unit,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[GridPos] {
        &self.positions
    }

    pub fn unit_patch(&self, i: usize) -> &[f64] {
        &self.units[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cls_unit(&self) -> &[f64] {
        &self.cls_unit
    }
}

// Descriptor validation guarantees nonzero norms.
fn push_unit(out: &mut Vec<f64>, v: &[f32]) {
    let norm = libm::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
    out.extend(v.iter().map(|&x| x as f64 / norm));
}

/// Dot product with a fixed four-lane reduction order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Writes the `a.len() x b.len()` row-major cosine matrix into `out`.
pub(crate) fn fill_similarity(a: &PreparedGrid, b: &PreparedGrid, out: &mut [f64]) {
    let nb = b.len();
    debug_assert_eq!(out.len(), a.len() * nb);
    for (i, row) in out.chunks_exact_mut(nb).enumerate() {
        let pa = a.unit_patch(i);
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = dot(pa, b.unit_patch(j)).clamp(-1.0, 1.0);
        }
    }
}

/// Scratch buffers for the column argmax of a similarity block.
#[derive(Debug, Default, Clone)]
pub(crate) struct ColumnScratch {
    best_val: Vec<f64>,
    best_idx: Vec<u32>,
}

impl ColumnScratch {
    /// Column-wise argmax (lowest row on ties) of an `n_a x n_b` block.
    fn column_argmax(&mut self, sim: &[f64], n_b: usize) -> &[u32] {
        self.best_val.clear();
        self.best_val.resize(n_b, f64::NEG_INFINITY);
        self.best_idx.clear();
        self.best_idx.resize(n_b, 0);
        for (i, row) in sim.chunks_exact(n_b).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > self.best_val[j] {
                    self.best_val[j] = v;
                    self.best_idx[j] = i as u32;
                }
            }
        }
        &self.best_idx
    }
}

/// Per crop patch: best template match, roundtrip patch, cyclic distance and
/// the best similarity, delivered to `visit` in crop-patch order.
pub(crate) fn for_each_cyclic(
    sim: &[f64],
    n_b: usize,
    crop_positions: &[GridPos],
    scratch: &mut ColumnScratch,
    mut visit: impl FnMut(usize, usize, usize, f64, f64),
) {
    let col_best = scratch.column_argmax(sim, n_b);
    for (l, row) in sim.chunks_exact(n_b).enumerate() {
        let mut t = 0usize;
        let mut best = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                t = j;
            }
        }
        let u = col_best[t] as usize;
        let cdist = grid_distance(crop_positions[l], crop_positions[u]);
        visit(l, t, u, cdist, best);
    }
}

/// Cosine similarities between the valid patches of two descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSimMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols`.
    pub values: Vec<f64>,
    pub row_positions: Vec<GridPos>,
    pub col_positions: Vec<GridPos>,
}

impl PatchSimMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

fn check_pair(a: &PatchGridDescriptor, b: &PatchGridDescriptor) -> Result<()> {
    if a.embed_dim() != b.embed_dim() {
        return Err(Error::DimensionMismatch(format!(
            "embedding widths {} and {}",
            a.embed_dim(),
            b.embed_dim()
        )));
    }
    Ok(())
}

pub fn pairwise_patch_similarity(
    a: &PatchGridDescriptor,
    b: &PatchGridDescriptor,
) -> Result<PatchSimMatrix> {
    check_pair(a, b)?;
    let (pa, pb) = (PreparedGrid::new(a), PreparedGrid::new(b));
    let mut values = alloc::vec![0.0; pa.len() * pb.len()];
    fill_similarity(&pa, &pb, &mut values);
    Ok(PatchSimMatrix {
        rows: pa.len(),
        cols: pb.len(),
        values,
        row_positions: pa.positions,
        col_positions: pb.positions,
    })
}

/// Roundtrip data for one valid crop patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicEntry {
    /// Grid position of the crop patch.
    pub position: GridPos,
    /// Index (among template valid patches) of the best match.
    pub best_match: usize,
    /// Index (among crop valid patches) of the roundtrip patch.
    pub roundtrip: usize,
    /// Grid distance between the crop patch and its roundtrip patch.
    pub cdist: f64,
    /// Similarity of the crop patch to its best template match.
    pub best_similarity: f64,
}

/// Cyclic distances of every valid crop patch against one template.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicDistanceMap {
    pub entries: Vec<CyclicEntry>,
}

impl CyclicDistanceMap {
    pub fn cdists(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.cdist)
    }
}

pub fn cyclic_distance_map(
    crop: &PatchGridDescriptor,
    template: &PatchGridDescriptor,
) -> Result<CyclicDistanceMap> {
    let sim = pairwise_patch_similarity(crop, template)?;
    let mut scratch = ColumnScratch::default();
    let mut entries = Vec::with_capacity(sim.rows);
    for_each_cyclic(
        &sim.values,
        sim.cols,
        &sim.row_positions,
        &mut scratch,
        |l, t, u, cdist, best| {
            entries.push(CyclicEntry {
                position: sim.row_positions[l],
                best_match: t,
                roundtrip: u,
                cdist,
                best_similarity: best,
            })
        },
    );
    Ok(CyclicDistanceMap { entries })
}

pub(crate) fn check_delta_ct(delta_ct: f64) -> Result<()> {
    if !(delta_ct >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "delta-ct must be ≥ 0, got {delta_ct}"
        )));
    }
    Ok(())
}

/// Keep-flags of the cyclic threshold filter: `cdist <= delta_ct`.
pub fn patch_filter_flags(cmap: &CyclicDistanceMap, delta_ct: f64) -> Result<Vec<bool>> {
    check_delta_ct(delta_ct)?;
    Ok(cmap.cdists().map(|d| d <= delta_ct).collect())
}
