//! Volumetric data model: spacing, 3D grids, 2D planes and the slicing between them.
//!
//! Axis order is always (depth, height, width) = (axial index, row, column).
//! Axial slices are (height, width) planes indexed by depth; sagittal slices are
//! (depth, height) planes indexed by width.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Default probability cut-off when turning a probability map into labels.
pub const DEFAULT_PROB_THRESHOLD: f32 = 0.5;

/// Physical voxel size in millimetres along (depth, height, width).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spacing {
    pub d: f32,
    pub h: f32,
    pub w: f32,
}

impl Spacing {
    /// The normalized spacing every case is resampled to before segmentation.
    pub const NORMALIZED: Spacing = Spacing {
        d: 3.0,
        h: 0.7816,
        w: 0.7816,
    };

    pub fn new(d: f32, h: f32, w: f32) -> Result<Self> {
        let ok = |v: f32| v.is_finite() && v > 0.0;
        if ok(d) && ok(h) && ok(w) {
            Ok(Spacing { d, h, w })
        } else {
            Err(Error::InvalidSpacing { d, h, w })
        }
    }

    /// Volume of a single voxel in millilitres.
    pub fn voxel_ml(&self) -> f64 {
        self.d as f64 * self.h as f64 * self.w as f64 / 1000.0
    }
}

/// Physical volume of `n_voxels` voxels in millilitres.
pub fn voxel_volume_ml(spacing: Spacing, n_voxels: usize) -> f64 {
    n_voxels as f64 * spacing.d as f64 * spacing.h as f64 * spacing.w as f64 / 1000.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims3 {
    pub depth: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dims3 {
    pub const fn new(depth: usize, rows: usize, cols: usize) -> Self {
        Dims3 { depth, rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.depth * self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, d: usize, r: usize, c: usize) -> usize {
        (d * self.rows + r) * self.cols + c
    }

    pub const fn as_array(&self) -> [usize; 3] {
        [self.depth, self.rows, self.cols]
    }

    /// Geometric centre in voxel coordinates, rounded down.
    pub const fn center(&self) -> [usize; 3] {
        [self.depth / 2, self.rows / 2, self.cols / 2]
    }
}

/// A per-voxel value type with its own validity rule.
pub trait Voxel: Copy + Default + PartialEq + core::fmt::Debug + Send + Sync + 'static {
    fn is_valid(self) -> bool;
}

impl Voxel for f32 {
    fn is_valid(self) -> bool {
        self.is_finite()
    }
}

/// Mask labels: only 0 and 1 are accepted.
impl Voxel for u8 {
    fn is_valid(self) -> bool {
        self <= 1
    }
}

/// Component ids: any value.
impl Voxel for u32 {
    fn is_valid(self) -> bool {
        true
    }
}

/// A 3D grid of voxels with physical spacing, stored depth → height → width.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dims: Dims3,
    spacing: Spacing,
    data: Vec<T>,
}

/// CT-like intensity volume.
pub type Volume = Grid<f32>;
/// Binary segmentation, 1 = foreground.
pub type Mask = Grid<u8>;

impl<T: Voxel> Grid<T> {
    pub fn new(dims: Dims3, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::mismatch(
                "grid dims",
                "all positive",
                dims.as_array(),
            ));
        }
        Spacing::new(spacing.d, spacing.h, spacing.w)?;
        if data.len() != dims.len() {
            return Err(Error::mismatch("grid data length", dims.len(), data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::InvalidData(format!(
                "voxel {pos} holds {:?}, which is not a valid {}",
                data[pos],
                core::any::type_name::<T>()
            )));
        }
        Ok(Grid {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: Dims3, spacing: Spacing, value: T) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }

    /// Caller guarantees length and voxel validity.
    pub(crate) fn from_parts(dims: Dims3, spacing: Spacing, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        debug_assert!(data.iter().all(|v| v.is_valid()));
        Grid {
            dims,
            spacing,
            data,
        }
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, d: usize, r: usize, c: usize) -> T {
        self.data[self.dims.index(d, r, c)]
    }

    pub fn same_geometry<U>(&self, other: &Grid<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    /// Returns the grid with each voxel mapped through `f`.
    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Result<Grid<U>> {
        Grid::new(
            self.dims,
            self.spacing,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

impl Grid<f32> {
    /// Labels 1 where the value is at least `threshold`.
    pub fn binarize(&self, threshold: f32) -> Mask {
        Grid::from_parts(
            self.dims,
            self.spacing,
            self.data
                .iter()
                .map(|&p| u8::from(p >= threshold))
                .collect(),
        )
    }
}

impl Grid<u8> {
    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn empty_like<U>(like: &Grid<U>) -> Mask {
        Grid::from_parts(like.dims, like.spacing, vec![0; like.dims.len()])
    }

    pub fn to_volume(&self) -> Volume {
        Grid::from_parts(
            self.dims,
            self.spacing,
            self.data.iter().map(|&v| v as f32).collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Plane {
    Axial,
    Sagittal,
}

impl Plane {
    /// In-plane dims (rows, cols) of a slice taken from a grid of `dims`.
    pub fn slice_dims(self, dims: Dims3) -> (usize, usize) {
        match self {
            Plane::Axial => (dims.rows, dims.cols),
            Plane::Sagittal => (dims.depth, dims.rows),
        }
    }

    /// Number of slices along the orthogonal axis.
    pub fn slice_count(self, dims: Dims3) -> usize {
        match self {
            Plane::Axial => dims.depth,
            Plane::Sagittal => dims.cols,
        }
    }

    pub fn pixel_spacing(self, spacing: Spacing) -> (f32, f32) {
        match self {
            Plane::Axial => (spacing.h, spacing.w),
            Plane::Sagittal => (spacing.d, spacing.h),
        }
    }

    /// Maps (slice index, row, col) back to a (depth, row, col) voxel index.
    #[inline]
    pub fn voxel(self, index: usize, row: usize, col: usize) -> (usize, usize, usize) {
        match self {
            Plane::Axial => (index, row, col),
            Plane::Sagittal => (row, col, index),
        }
    }
}

/// A 2D plane extracted from a grid (or produced by a model for one).
#[derive(Clone, Debug, PartialEq)]
pub struct Slice<T> {
    rows: usize,
    cols: usize,
    pixel_spacing: (f32, f32),
    plane: Plane,
    index: usize,
    data: Vec<T>,
}

/// Intensity slice.
pub type Image = Slice<f32>;
/// Probability map; values in [0, 1].
pub type ProbMap = Slice<f32>;
pub type LabelSlice = Slice<u8>;

impl<T: Voxel> Slice<T> {
    pub fn new(
        (rows, cols): (usize, usize),
        pixel_spacing: (f32, f32),
        plane: Plane,
        index: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::mismatch("slice dims", "positive", (rows, cols)));
        }
        if data.len() != rows * cols {
            return Err(Error::mismatch(
                "slice data length",
                rows * cols,
                data.len(),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::InvalidData(format!(
                "pixel {pos} holds {:?}",
                data[pos]
            )));
        }
        Ok(Slice {
            rows,
            cols,
            pixel_spacing,
            plane,
            index,
            data,
        })
    }

    pub(crate) fn from_parts(
        dims: (usize, usize),
        pixel_spacing: (f32, f32),
        plane: Plane,
        index: usize,
        data: Vec<T>,
    ) -> Self {
        debug_assert_eq!(data.len(), dims.0 * dims.1);
        Slice {
            rows: dims.0,
            cols: dims.1,
            pixel_spacing,
            plane,
            index,
            data,
        }
    }

    /// Same geometry and metadata, new pixel values.
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<Slice<U>> {
        Slice::new(
            self.dims(),
            self.pixel_spacing,
            self.plane,
            self.index,
            data,
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_spacing(&self) -> (f32, f32) {
        self.pixel_spacing
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

impl Slice<f32> {
    pub fn binarize(&self, threshold: f32) -> LabelSlice {
        Slice::from_parts(
            self.dims(),
            self.pixel_spacing,
            self.plane,
            self.index,
            self.data
                .iter()
                .map(|&p| u8::from(p >= threshold))
                .collect(),
        )
    }

    /// Checks the probability-map invariant: every value in [0, 1].
    pub fn check_probabilities(&self) -> Result<()> {
        match self.data.iter().position(|p| !(0.0..=1.0).contains(p)) {
            None => Ok(()),
            Some(pos) => Err(Error::InvalidData(format!(
                "probability {} at pixel {pos} is outside [0, 1]",
                self.data[pos]
            ))),
        }
    }
}

impl Slice<u8> {
    pub fn to_image(&self) -> Image {
        Slice::from_parts(
            self.dims(),
            self.pixel_spacing,
            self.plane,
            self.index,
            self.data.iter().map(|&v| v as f32).collect(),
        )
    }
}

/// Splits a grid into its ordered axial or sagittal slices.
pub fn extract_slices<T: Voxel>(grid: &Grid<T>, plane: Plane) -> Vec<Slice<T>> {
    let dims = grid.dims;
    let (rows, cols) = plane.slice_dims(dims);
    let spacing = plane.pixel_spacing(grid.spacing);
    (0..plane.slice_count(dims))
        .map(|k| {
            let data = match plane {
                Plane::Axial => {
                    let start = dims.index(k, 0, 0);
                    grid.data[start..start + rows * cols].to_vec()
                }
                Plane::Sagittal => {
                    let mut out = Vec::with_capacity(rows * cols);
                    for d in 0..dims.depth {
                        for r in 0..dims.rows {
                            out.push(grid.data[dims.index(d, r, k)]);
                        }
                    }
                    out
                }
            };
            Slice::from_parts((rows, cols), spacing, plane, k, data)
        })
        .collect()
}

/// Stacks slices (in list order) back into a grid. No thresholding happens here.
pub fn compose_slices<T: Voxel>(
    slices: &[Slice<T>],
    plane: Plane,
    dims: Dims3,
    spacing: Spacing,
) -> Result<Grid<T>> {
    let expected = plane.slice_count(dims);
    if slices.len() != expected {
        return Err(Error::mismatch(
            "slice count for target geometry",
            (expected, plane, dims.as_array()),
            slices.len(),
        ));
    }
    let want = plane.slice_dims(dims);
    if let Some((k, s)) = slices.iter().enumerate().find(|(_, s)| s.dims() != want) {
        return Err(Error::mismatch(
            "slice dims",
            want,
            format!("{:?} at slice {k}", s.dims()),
        ));
    }
    let mut data = vec![T::default(); dims.len()];
    for (k, s) in slices.iter().enumerate() {
        match plane {
            Plane::Axial => {
                let start = dims.index(k, 0, 0);
                data[start..start + s.data.len()].copy_from_slice(&s.data);
            }
            Plane::Sagittal => {
                for d in 0..dims.depth {
                    for r in 0..dims.rows {
                        data[dims.index(d, r, k)] = s.data[d * dims.rows + r];
                    }
                }
            }
        }
    }
    Grid::new(dims, spacing, data)
}
