//! Uncompressed run-length encoded binary masks.
//!
//! Counts run over pixels in column-major (Fortran) order and always start
//! with a run of zeros, which may be empty. Only that leading run may have
//! length zero.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Binary mask stored column-major, `index = col * height + row`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: u32,
    width: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn zeros(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            bits: alloc::vec![false; height as usize * width as usize],
        }
    }

    /// Builds a mask from a predicate over `(row, col)`.
    pub fn from_fn(height: u32, width: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height as usize * width as usize);
        for col in 0..width {
            for row in 0..height {
                bits.push(f(row, col));
            }
        }
        Self { height, width, bits }
    }

    /// Wraps column-major pixel values.
    pub fn from_column_major(height: u32, width: u32, bits: Vec<bool>) -> Result<Self> {
        let expected = height as u64 * width as u64;
        if bits.len() as u64 != expected {
            return Err(Error::RleLengthMismatch {
                expected,
                got: bits.len() as u64,
            });
        }
        Ok(Self { height, width, bits })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[col as usize * self.height as usize + row as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let h = self.height as usize;
        self.bits[col as usize * h + row as usize] = value;
    }

    pub fn column_major(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// Run-length encoded mask of size `(height, width)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl RleMask {
    /// Validates that counts cover exactly `height * width` pixels and that
    /// only the leading run may be empty.
    pub fn new(height: u32, width: u32, counts: Vec<u32>) -> Result<Self> {
        let expected = height as u64 * width as u64;
        let got: u64 = counts.iter().map(|&c| c as u64).sum();
        if got != expected {
            return Err(Error::RleLengthMismatch { expected, got });
        }
        if let Some(pos) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::RleNonCanonical(pos + 1));
        }
        Ok(Self {
            height,
            width,
            counts,
        })
    }

    pub fn empty(height: u32, width: u32) -> Self {
        let n = height * width;
        let counts = if n == 0 { Vec::new() } else { alloc::vec![n] };
        Self {
            height,
            width,
            counts,
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// `(height, width)`.
    pub fn size(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Foreground runs as half-open `[start, end)` column-major pixel ranges.
    pub fn foreground_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    /// Number of pixels set in both masks.
    pub fn intersection_area(&self, other: &RleMask) -> Result<u64> {
        self.check_size(other)?;
        let mut a = self.foreground_runs().peekable();
        let mut b = other.foreground_runs().peekable();
        let mut total = 0u64;
        while let (Some(&(a0, a1)), Some(&(b0, b1))) = (a.peek(), b.peek()) {
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                total += hi - lo;
            }
            if a1 <= b1 {
                a.next();
            } else {
                b.next();
            }
        }
        Ok(total)
    }

    fn check_size(&self, other: &RleMask) -> Result<()> {
        if self.size() != other.size() {
            return Err(Error::MaskSizeMismatch {
                a: self.size(),
                b: other.size(),
            });
        }
        Ok(())
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &bit in &mask.bits {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    if run > 0 || !counts.is_empty() {
        counts.push(run);
    }
    RleMask {
        height: mask.height,
        width: mask.width,
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> BinaryMask {
    let mut bits = Vec::with_capacity(rle.height as usize * rle.width as usize);
    for (i, &c) in rle.counts.iter().enumerate() {
        bits.extend(core::iter::repeat_n(i % 2 == 1, c as usize));
    }
    BinaryMask {
        height: rle.height,
        width: rle.width,
        bits,
    }
}

/// Intersection over union of two equally sized masks.
///
/// Two empty masks have no defined IoU and yield [`Error::UndefinedIou`].
pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Err(Error::UndefinedIou);
    }
    Ok(inter as f64 / union as f64)
}
