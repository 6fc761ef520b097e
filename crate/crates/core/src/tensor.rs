//! Spatiotemporal field containers, block tiling and per-member normalization.
//!
//! A [`TensorField`] stores one member's `(time, height, width)` volume in
//! row-major `(t, y, x)` order. Fields are tiled into fixed-shape blocks by
//! [`partition`]; boundary tiles are filled by edge replication and the pad
//! widths are kept in the [`BlockGrid`] so [`reassemble`] can crop them away.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// One member's full `(T, H, W)` volume.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub member_id: u32,
    pub shape: [usize; 3],
    pub values: Vec<f64>,
    value_range: (f64, f64),
}

impl TensorField {
    pub fn new(member_id: u32, shape: [usize; 3], values: Vec<f64>) -> Result<Self> {
        let count = shape.iter().product::<usize>();
        if count == 0 {
            return Err(Error::Shape(format!("zero-sized field {shape:?}")));
        }
        if values.len() != count {
            return Err(Error::Shape(format!(
                "field {shape:?} needs {count} samples, got {}",
                values.len()
            )));
        }
        let value_range = value_range(&values);
        Ok(Self {
            member_id,
            shape,
            values,
            value_range,
        })
    }

    pub fn zeros(member_id: u32, shape: [usize; 3]) -> Result<Self> {
        Self::new(member_id, shape, vec![0.0; shape.iter().product()])
    }

    /// `(min, max)` over all samples.
    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> f64 {
        self.values[self.index(t, y, x)]
    }

    /// Same member and shape, new samples.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.member_id, self.shape, values)
    }
}

fn value_range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Position of a block's first sample inside its member's field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockOrigin {
    pub member_id: u32,
    pub t0: usize,
    pub y0: usize,
    pub x0: usize,
}

impl BlockOrigin {
    fn as_array(&self) -> [usize; 4] {
        [self.member_id as usize, self.t0, self.y0, self.x0]
    }
}

/// A `D x H_b x W_b` tile of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct Block3D {
    pub origin: BlockOrigin,
    pub shape: [usize; 3],
    pub values: Vec<f64>,
}

impl Block3D {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Partition metadata sufficient to put a field back together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    pub member_id: u32,
    pub field_shape: [usize; 3],
    pub block_shape: [usize; 3],
    /// Replicated samples appended on the trailing edge of each axis.
    pub padding: [usize; 3],
    /// Number of tiles along each axis.
    pub counts: [usize; 3],
}

impl BlockGrid {
    pub fn new(member_id: u32, field_shape: [usize; 3], block_shape: [usize; 3]) -> Result<Self> {
        if block_shape.iter().any(|&b| b == 0) {
            return Err(Error::Shape(format!("block shape {block_shape:?} has a zero axis")));
        }
        if field_shape.iter().any(|&n| n == 0) {
            return Err(Error::Shape(format!("zero-sized field {field_shape:?}")));
        }
        let mut counts = [0; 3];
        let mut padding = [0; 3];
        for a in 0..3 {
            counts[a] = field_shape[a].div_ceil(block_shape[a]);
            padding[a] = counts[a] * block_shape[a] - field_shape[a];
        }
        Ok(Self {
            member_id,
            field_shape,
            block_shape,
            padding,
            counts,
        })
    }

    pub fn block_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Block origins in lexicographic `(t0, y0, x0)` order.
    pub fn origins(&self) -> impl Iterator<Item = BlockOrigin> + '_ {
        let [ct, cy, cx] = self.counts;
        let [bd, bh, bw] = self.block_shape;
        (0..ct).flat_map(move |i| {
            (0..cy).flat_map(move |j| {
                (0..cx).map(move |k| BlockOrigin {
                    member_id: self.member_id,
                    t0: i * bd,
                    y0: j * bh,
                    x0: k * bw,
                })
            })
        })
    }

    /// Extracts the tile at `origin`, replicating edge samples past the field.
    pub fn extract(&self, field: &TensorField, origin: BlockOrigin) -> Block3D {
        let [bd, bh, bw] = self.block_shape;
        let [nt, ny, nx] = field.shape;
        let mut values = Vec::with_capacity(bd * bh * bw);
        for dt in 0..bd {
            let t = (origin.t0 + dt).min(nt - 1);
            for dy in 0..bh {
                let y = (origin.y0 + dy).min(ny - 1);
                let row = field.index(t, y, 0);
                for dx in 0..bw {
                    let x = (origin.x0 + dx).min(nx - 1);
                    values.push(field.values[row + x]);
                }
            }
        }
        Block3D {
            origin,
            shape: self.block_shape,
            values,
        }
    }

    /// Number of samples of the block at `origin` that lie inside the field.
    pub fn interior_shape(&self, origin: BlockOrigin) -> [usize; 3] {
        let starts = [origin.t0, origin.y0, origin.x0];
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = self.block_shape[a].min(self.field_shape[a] - starts[a]);
        }
        out
    }
}

/// Tiles `field` into blocks of `block_shape` in lexicographic origin order.
pub fn partition(field: &TensorField, block_shape: [usize; 3]) -> Result<(Vec<Block3D>, BlockGrid)> {
    let grid = BlockGrid::new(field.member_id, field.shape, block_shape)?;
    let blocks = grid.origins().map(|o| grid.extract(field, o)).collect();
    Ok((blocks, grid))
}

/// Inverse of [`partition`]. Blocks are placed by origin, so their order is irrelevant.
pub fn reassemble(blocks: &[Block3D], grid: &BlockGrid) -> Result<TensorField> {
    let by_origin: HashMap<BlockOrigin, &Block3D> = blocks.iter().map(|b| (b.origin, b)).collect();
    let [nt, ny, nx] = grid.field_shape;
    let [bd, bh, bw] = grid.block_shape;
    let mut values = vec![0.0; nt * ny * nx];
    for origin in grid.origins() {
        let block = by_origin
            .get(&origin)
            .ok_or(Error::MissingBlock(origin.as_array()))?;
        if block.shape != grid.block_shape || block.values.len() != bd * bh * bw {
            return Err(Error::Shape(format!(
                "block at {:?} has shape {:?}, grid expects {:?}",
                origin.as_array(),
                block.shape,
                grid.block_shape
            )));
        }
        let [it, iy, ix] = grid.interior_shape(origin);
        for dt in 0..it {
            for dy in 0..iy {
                let src = (dt * bh + dy) * bw;
                let dst = ((origin.t0 + dt) * ny + origin.y0 + dy) * nx + origin.x0;
                values[dst..dst + ix].copy_from_slice(&block.values[src..src + ix]);
            }
        }
    }
    if blocks.len() != grid.block_count() {
        let extra = blocks
            .iter()
            .find(|b| !grid.origins().any(|o| o == b.origin))
            .map(|b| b.origin.as_array())
            .unwrap_or_default();
        return Err(Error::Shape(format!(
            "expected {} blocks, got {} (unexpected origin {extra:?})",
            grid.block_count(),
            blocks.len()
        )));
    }
    TensorField::new(grid.member_id, grid.field_shape, values)
}

/// Per-member affine range used to map samples onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::DegenerateRange { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn of(field: &TensorField) -> Result<Self> {
        let (min, max) = field.value_range();
        Self::new(min, max)
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    #[inline]
    pub fn normalize_value(&self, v: f64) -> f64 {
        2.0 * (v - self.min) / (self.max - self.min) - 1.0
    }

    #[inline]
    pub fn denormalize_value(&self, v: f64) -> f64 {
        (v + 1.0) * 0.5 * (self.max - self.min) + self.min
    }
}

pub fn normalize(field: &TensorField, stats: &NormStats) -> Result<TensorField> {
    let stats = NormStats::new(stats.min, stats.max)?;
    field.with_values(field.values.iter().map(|&v| stats.normalize_value(v)).collect())
}

pub fn denormalize(field: &TensorField, stats: &NormStats) -> Result<TensorField> {
    let stats = NormStats::new(stats.min, stats.max)?;
    field.with_values(field.values.iter().map(|&v| stats.denormalize_value(v)).collect())
}
