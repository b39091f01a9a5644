//! Spatial transforms and their inverses: voxel resampling, fixed-image-size slice
//! resizing, and fixed-pixel-size patch cropping.
//!
//! Conventions:
//! - Volume resampling is origin aligned: voxel `i` sits at `i * spacing` and the
//!   sampling grid is clamped at the far edge. Output dims are
//!   `round_half_up(n * source / target)`, at least 1.
//! - Slice resizing is pixel-centre aligned, so a resize to the slice's own dims is
//!   the identity and constants stay constant.
//! - Intensities and probabilities interpolate linearly; labels use nearest neighbour.
//! - A patch window of `n` pixels starts `n / 2` before its centre, so the leading side
//!   takes the smaller half when the split is uneven. Windows running past the source
//!   are zero padded rather than shifted.

use alloc::vec;
use alloc::vec::Vec;

use crate::volume::{Dims3, Grid, Plane, Slice, Spacing, Voxel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    Nearest,
}

/// Voxel types that know how they are interpolated.
pub trait Interpolate: Voxel {
    const MODE: Interpolation;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Interpolate for f32 {
    const MODE: Interpolation = Interpolation::Linear;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Interpolate for u8 {
    const MODE: Interpolation = Interpolation::Nearest;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as u8
    }
}

/// One interpolation tap along an axis: lower index, upper index, weight of upper.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(n_out: usize, n_src: usize, coord: impl Fn(usize) -> f64, mode: Interpolation) -> Vec<Tap> {
    let max = (n_src - 1) as f64;
    (0..n_out)
        .map(|i| {
            let x = coord(i).clamp(0.0, max);
            match mode {
                Interpolation::Linear => {
                    let lo = num_traits::Float::floor(x) as usize;
                    let hi = (lo + 1).min(n_src - 1);
                    Tap {
                        lo,
                        hi,
                        frac: x - lo as f64,
                    }
                }
                Interpolation::Nearest => {
                    let idx = (num_traits::Float::floor(x + 0.5) as usize).min(n_src - 1);
                    Tap {
                        lo: idx,
                        hi: idx,
                        frac: 0.0,
                    }
                }
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a * (1.0 - t) + b * t
}

fn round_half_up(x: f64) -> usize {
    num_traits::Float::floor(x + 0.5) as usize
}

/// Output grid dims when resampling from `from` to `to` spacing.
pub fn resampled_dims(dims: Dims3, from: Spacing, to: Spacing) -> Result<Dims3> {
    let to = Spacing::new(to.d, to.h, to.w)?;
    if dims.is_empty() {
        return Err(Error::mismatch(
            "resample source dims",
            "all positive",
            dims.as_array(),
        ));
    }
    let axis = |n: usize, s: f32, t: f32| round_half_up(n as f64 * s as f64 / t as f64).max(1);
    Ok(Dims3::new(
        axis(dims.depth, from.d, to.d),
        axis(dims.rows, from.h, to.h),
        axis(dims.cols, from.w, to.w),
    ))
}

/// Resamples a grid to a new spacing; the interpolation follows the voxel type.
pub fn resample<T: Interpolate>(grid: &Grid<T>, target: Spacing) -> Result<Grid<T>> {
    resample_with(grid, target, T::MODE)
}

/// Resamples an intensity volume with an explicit interpolation mode.
pub fn resample_volume(vol: &Grid<f32>, target: Spacing, mode: Interpolation) -> Result<Grid<f32>> {
    resample_with(vol, target, mode)
}

fn resample_with<T: Interpolate>(
    grid: &Grid<T>,
    target: Spacing,
    mode: Interpolation,
) -> Result<Grid<T>> {
    let dims = resampled_dims(grid.dims(), grid.spacing(), target)?;
    Ok(resample_onto(grid, dims, target, mode))
}

/// Resamples onto an explicit output grid. Used to return predictions to a case's
/// native geometry, where rounding the dims again could be off by one.
pub fn resample_to_grid<T: Interpolate>(
    grid: &Grid<T>,
    dims: Dims3,
    spacing: Spacing,
) -> Result<Grid<T>> {
    let spacing = Spacing::new(spacing.d, spacing.h, spacing.w)?;
    if dims.is_empty() {
        return Err(Error::mismatch(
            "resample target dims",
            "all positive",
            dims.as_array(),
        ));
    }
    Ok(resample_onto(grid, dims, spacing, T::MODE))
}

fn resample_onto<T: Interpolate>(
    grid: &Grid<T>,
    dims: Dims3,
    target: Spacing,
    mode: Interpolation,
) -> Grid<T> {
    let src = grid.dims();
    let s = grid.spacing();
    if dims == src && s == target {
        return grid.clone();
    }
    let ratio = |t: f32, s: f32| t as f64 / s as f64;
    let (rd, rh, rw) = (
        ratio(target.d, s.d),
        ratio(target.h, s.h),
        ratio(target.w, s.w),
    );
    let td = taps(dims.depth, src.depth, |i| i as f64 * rd, mode);
    let th = taps(dims.rows, src.rows, |i| i as f64 * rh, mode);
    let tw = taps(dims.cols, src.cols, |i| i as f64 * rw, mode);
    let data = grid.data();
    let at = |d: usize, r: usize, c: usize| data[src.index(d, r, c)].to_f64();

    let mut out = Vec::with_capacity(dims.len());
    for zd in &td {
        for zh in &th {
            for zw in &tw {
                let v = match mode {
                    Interpolation::Nearest => at(zd.lo, zh.lo, zw.lo),
                    Interpolation::Linear => {
                        let plane = |d: usize| {
                            lerp(
                                lerp(at(d, zh.lo, zw.lo), at(d, zh.lo, zw.hi), zw.frac),
                                lerp(at(d, zh.hi, zw.lo), at(d, zh.hi, zw.hi), zw.frac),
                                zh.frac,
                            )
                        };
                        lerp(plane(zd.lo), plane(zd.hi), zd.frac)
                    }
                };
                out.push(T::from_f64(v));
            }
        }
    }
    Grid::from_parts(dims, target, out)
}

/// Bookkeeping for a slice resize so the prediction can be mapped back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResizeRecord {
    pub original_dims: (usize, usize),
    pub target_dims: (usize, usize),
    pub original_pixel_spacing: (f32, f32),
}

fn resize_plane<T: Interpolate>(
    src: &[T],
    (rows, cols): (usize, usize),
    (out_rows, out_cols): (usize, usize),
) -> Vec<T> {
    let centre = |n_out: usize, n_src: usize| {
        let scale = n_src as f64 / n_out as f64;
        move |i: usize| (i as f64 + 0.5) * scale - 0.5
    };
    let tr = taps(out_rows, rows, centre(out_rows, rows), T::MODE);
    let tc = taps(out_cols, cols, centre(out_cols, cols), T::MODE);
    let at = |r: usize, c: usize| src[r * cols + c].to_f64();
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for zr in &tr {
        for zc in &tc {
            let v = match T::MODE {
                Interpolation::Nearest => at(zr.lo, zc.lo),
                Interpolation::Linear => lerp(
                    lerp(at(zr.lo, zc.lo), at(zr.lo, zc.hi), zc.frac),
                    lerp(at(zr.hi, zc.lo), at(zr.hi, zc.hi), zc.frac),
                    zr.frac,
                ),
            };
            out.push(T::from_f64(v));
        }
    }
    out
}

/// Resizes a slice to a fixed image size; pixel spacing scales by the dim ratio.
pub fn resize_slice<T: Interpolate>(
    s: &Slice<T>,
    target: (usize, usize),
) -> Result<(Slice<T>, ResizeRecord)> {
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::mismatch("resize target dims", "positive", target));
    }
    let (sr, sc) = s.pixel_spacing();
    let spacing = (
        (sr as f64 * s.rows() as f64 / target.0 as f64) as f32,
        (sc as f64 * s.cols() as f64 / target.1 as f64) as f32,
    );
    let data = resize_plane(s.data(), s.dims(), target);
    let record = ResizeRecord {
        original_dims: s.dims(),
        target_dims: target,
        original_pixel_spacing: s.pixel_spacing(),
    };
    Ok((
        Slice::from_parts(target, spacing, s.plane(), s.index(), data),
        record,
    ))
}

/// Inverse of [`resize_slice`].
pub fn unresize<T: Interpolate>(p: &Slice<T>, rec: &ResizeRecord) -> Result<Slice<T>> {
    if p.dims() != rec.target_dims {
        return Err(Error::mismatch(
            "unresize input dims",
            rec.target_dims,
            p.dims(),
        ));
    }
    let data = resize_plane(p.data(), p.dims(), rec.original_dims);
    Ok(Slice::from_parts(
        rec.original_dims,
        rec.original_pixel_spacing,
        p.plane(),
        p.index(),
        data,
    ))
}

/// Zero padding applied on each edge when a crop window left the source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pad {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRecord {
    pub plane: Plane,
    pub center: (usize, usize),
    pub patch_dims: (usize, usize),
    pub source_dims: (usize, usize),
    /// Source coordinate of the patch's top-left pixel; negative when padded.
    pub origin: (isize, isize),
    pub pad: Pad,
}

impl CropRecord {
    /// Window extent (start, end) along rows and cols, intersected with the source.
    pub fn source_window(&self) -> ((usize, usize), (usize, usize)) {
        let clip = |o: isize, n: usize, len: usize| {
            let start = o.max(0) as usize;
            let end = (o + n as isize).clamp(0, len as isize) as usize;
            (start.min(end), end)
        };
        (
            clip(self.origin.0, self.patch_dims.0, self.source_dims.0),
            clip(self.origin.1, self.patch_dims.1, self.source_dims.1),
        )
    }
}

fn window_origin(center: usize, n: usize) -> isize {
    center as isize - (n / 2) as isize
}

/// Fixed-pixel-size crop of `patch_dims` around `center` with zero padding.
pub fn crop_patch<T: Voxel>(
    s: &Slice<T>,
    center: (usize, usize),
    patch_dims: (usize, usize),
) -> Result<(Slice<T>, CropRecord)> {
    let (rows, cols) = s.dims();
    if center.0 >= rows || center.1 >= cols {
        return Err(Error::mismatch(
            "crop centre",
            format_args_dims(s.dims()),
            center,
        ));
    }
    if patch_dims.0 == 0 || patch_dims.1 == 0 {
        return Err(Error::mismatch("patch dims", "positive", patch_dims));
    }
    let origin = (
        window_origin(center.0, patch_dims.0),
        window_origin(center.1, patch_dims.1),
    );
    let over = |o: isize, n: usize, len: usize| {
        let before = (-o).max(0) as usize;
        let after = (o + n as isize - len as isize).max(0) as usize;
        (before.min(n), after.min(n))
    };
    let (top, bottom) = over(origin.0, patch_dims.0, rows);
    let (left, right) = over(origin.1, patch_dims.1, cols);
    let record = CropRecord {
        plane: s.plane(),
        center,
        patch_dims,
        source_dims: (rows, cols),
        origin,
        pad: Pad {
            top,
            bottom,
            left,
            right,
        },
    };

    let mut data = vec![T::default(); patch_dims.0 * patch_dims.1];
    let ((r0, r1), (c0, c1)) = record.source_window();
    for r in r0..r1 {
        let pr = (r as isize - origin.0) as usize;
        let pc = (c0 as isize - origin.1) as usize;
        let dst = pr * patch_dims.1 + pc;
        data[dst..dst + (c1 - c0)].copy_from_slice(&s.data()[r * cols + c0..r * cols + c1]);
    }
    Ok((
        Slice::from_parts(patch_dims, s.pixel_spacing(), s.plane(), s.index(), data),
        record,
    ))
}

fn format_args_dims(dims: (usize, usize)) -> alloc::string::String {
    alloc::format!("inside {dims:?}")
}

/// Pastes a patch back at its source coordinates; everything else is zero.
pub fn uncrop_patch<T: Voxel>(p: &Slice<T>, rec: &CropRecord) -> Result<Slice<T>> {
    if p.dims() != rec.patch_dims {
        return Err(Error::mismatch(
            "uncrop input dims",
            rec.patch_dims,
            p.dims(),
        ));
    }
    let (rows, cols) = rec.source_dims;
    let mut data = vec![T::default(); rows * cols];
    let ((r0, r1), (c0, c1)) = rec.source_window();
    for r in r0..r1 {
        let pr = (r as isize - rec.origin.0) as usize;
        let pc = (c0 as isize - rec.origin.1) as usize;
        let src = pr * rec.patch_dims.1 + pc;
        data[r * cols + c0..r * cols + c1].copy_from_slice(&p.data()[src..src + (c1 - c0)]);
    }
    Ok(Slice::from_parts(
        rec.source_dims,
        p.pixel_spacing(),
        p.plane(),
        p.index(),
        data,
    ))
}
