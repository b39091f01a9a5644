//! The cascade: training-pair preparation for the three models and the test-time
//! flow (coarse prediction, guidance selection with optional sagittal
//! correction, per-kidney fine prediction).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::components::{
    classify, component_stats, foreground_centroid, label_components, AbnormalityVerdict,
    Connectivity, LabelMap, Normality, DEFAULT_TH_VN,
};
use crate::geometry::{
    crop_patch, resample, resample_to_grid, resize_slice, uncrop_patch, unresize,
};
use crate::nn::{SegmentationModel, UNetSpec};
use crate::volume::{
    compose_slices, extract_slices, Grid, Image, LabelSlice, Mask, Plane, ProbMap, Spacing, Volume,
    DEFAULT_PROB_THRESHOLD,
};
use crate::{Error, Result};

/// Extra axial slices predicted above and below each kidney's extent.
pub const FINE_SLICE_MARGIN: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub normalized_spacing: Spacing,
    /// Coarse image size (rows, cols) every axial slice is resized to.
    pub coarse_dims: (usize, usize),
    /// Fine axial patch size (rows, cols) at the normalized pixel size.
    pub fine_dims: (usize, usize),
    /// Sagittal patch size (depth, rows) at the normalized pixel size.
    pub abnormal_dims: (usize, usize),
    pub th_vn: usize,
    pub prob_threshold: f32,
    pub connectivity: Connectivity,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            normalized_spacing: Spacing::NORMALIZED,
            coarse_dims: (128, 128),
            fine_dims: (160, 160),
            abnormal_dims: (64, 256),
            th_vn: DEFAULT_TH_VN,
            prob_threshold: DEFAULT_PROB_THRESHOLD,
            connectivity: Connectivity::TwentySix,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let s = self.normalized_spacing;
        Spacing::new(s.d, s.h, s.w)?;
        for (what, (r, c)) in [
            ("coarse dims", self.coarse_dims),
            ("fine dims", self.fine_dims),
            ("abnormal dims", self.abnormal_dims),
        ] {
            if r == 0 || c == 0 {
                return Err(Error::mismatch(what, "positive", (r, c)));
            }
        }
        if !(self.prob_threshold > 0.0 && self.prob_threshold <= 1.0) {
            return Err(Error::InvalidData(format!(
                "probability threshold {} is outside (0, 1]",
                self.prob_threshold
            )));
        }
        Ok(())
    }

    /// Checks that every stage's image size suits a network of `spec`.
    pub fn check_spec(&self, spec: &UNetSpec) -> Result<()> {
        self.validate()?;
        for (stage, (r, c)) in [
            ("coarse", self.coarse_dims),
            ("fine", self.fine_dims),
            ("abnormal", self.abnormal_dims),
        ] {
            spec.check_input(r, c).map_err(|e| e.in_stage(stage))?;
        }
        Ok(())
    }
}

/// The three per-slice models of the cascade.
#[derive(Clone, Copy)]
pub struct StageModels<'a> {
    pub coarse: &'a dyn SegmentationModel,
    pub abnormal: &'a dyn SegmentationModel,
    pub fine: &'a dyn SegmentationModel,
}

/// Wall-clock source for stage timings.
pub trait Clock {
    fn now_secs(&self) -> f64;
}

/// Reports zero for everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_secs(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Clone, Copy, Debug)]
pub struct StdClock(std::time::Instant);

#[cfg(feature = "std")]
impl StdClock {
    pub fn new() -> Self {
        StdClock(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(feature = "std")]
impl Clock for StdClock {
    fn now_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub coarse: f64,
    pub guidance: f64,
    pub fine: f64,
}

/// Conditions worth reporting that do not stop a case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseFlag {
    /// The coarse mask was empty and the correction model found nothing either.
    DetectionFailure,
    /// The guidance mask held no component large enough to crop around.
    EmptyGuidance,
}

impl core::fmt::Display for CaseFlag {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            CaseFlag::DetectionFailure => "detection-failure",
            CaseFlag::EmptyGuidance => "empty-guidance",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Guidance {
    pub mask: Mask,
    pub verdict: AbnormalityVerdict,
    /// Whether the sagittal correction model produced `mask`.
    pub corrected: bool,
    pub flags: Vec<CaseFlag>,
}

#[derive(Clone, Debug)]
pub struct FinePrediction {
    pub mask: Mask,
    /// Components of the guidance mask that received fine patches.
    pub kidneys: usize,
    pub flags: Vec<CaseFlag>,
}

/// Outcome of one test case. All masks are in the input volume's geometry.
#[derive(Clone, Debug)]
pub struct CaseResult {
    pub coarse_mask: Mask,
    pub verdict: AbnormalityVerdict,
    pub guidance: Mask,
    pub corrected: bool,
    pub fine_mask: Mask,
    pub timings: StageTimings,
    pub flags: Vec<CaseFlag>,
}

/// Training pairs plus the cases that contributed none.
#[derive(Clone, Debug, Default)]
pub struct PreparedSet {
    pub pairs: Vec<(Image, LabelSlice)>,
    /// (case index, reason).
    pub skipped: Vec<(usize, String)>,
}

/// A kidney-sized component: projected axial centre and axial slice extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KidneyWindow {
    pub id: u32,
    pub center: (usize, usize),
    /// Inclusive first and last axial slice holding the component.
    pub slices: (usize, usize),
}

fn round_index(x: f64, len: usize) -> usize {
    let r = num_traits::Float::floor(x + 0.5);
    if r <= 0.0 {
        0
    } else {
        (r as usize).min(len - 1)
    }
}

/// Windows for every component with at least `min_voxels` voxels, largest first.
pub fn kidney_windows(lm: &LabelMap, min_voxels: usize) -> Vec<KidneyWindow> {
    let dims = lm.dims();
    let mut extent = vec![(usize::MAX, 0usize); lm.count() + 1];
    for (i, &l) in lm.labels().iter().enumerate() {
        if l != 0 {
            let d = i / (dims.rows * dims.cols);
            let e = &mut extent[l as usize];
            e.0 = e.0.min(d);
            e.1 = e.1.max(d);
        }
    }
    component_stats(lm)
        .into_iter()
        .filter(|s| s.voxel_count >= min_voxels.max(1))
        .map(|s| KidneyWindow {
            id: s.id,
            center: (
                round_index(s.centroid[1], dims.rows),
                round_index(s.centroid[2], dims.cols),
            ),
            slices: extent[s.id as usize],
        })
        .collect()
}

fn check_normalized<T: crate::volume::Voxel>(grid: &Grid<T>, cfg: &PipelineConfig) -> Result<()> {
    if grid.spacing() != cfg.normalized_spacing {
        return Err(Error::mismatch(
            "volume spacing",
            cfg.normalized_spacing,
            grid.spacing(),
        ));
    }
    Ok(())
}

fn check_case(vol: &Volume, label: &Mask, cfg: &PipelineConfig) -> Result<()> {
    if !vol.same_geometry(label) {
        return Err(Error::mismatch(
            "label geometry",
            (vol.dims().as_array(), vol.spacing()),
            (label.dims().as_array(), label.spacing()),
        ));
    }
    check_normalized(vol, cfg)
}

/// Resamples an (image, label) case to the normalized spacing.
pub fn normalize_case(vol: &Volume, label: &Mask, cfg: &PipelineConfig) -> Result<(Volume, Mask)> {
    if !vol.same_geometry(label) {
        return Err(Error::mismatch(
            "label geometry",
            (vol.dims().as_array(), vol.spacing()),
            (label.dims().as_array(), label.spacing()),
        ));
    }
    Ok((
        resample(vol, cfg.normalized_spacing)?,
        resample(label, cfg.normalized_spacing)?,
    ))
}

fn prepare_each(
    cases: &[(Volume, Mask)],
    cfg: &PipelineConfig,
    mut per_case: impl FnMut(&Volume, &Mask, &mut Vec<(Image, LabelSlice)>) -> Result<()>,
) -> Result<PreparedSet> {
    cfg.validate()?;
    let mut set = PreparedSet::default();
    for (k, (vol, label)) in cases.iter().enumerate() {
        let mut pairs = Vec::new();
        match check_case(vol, label, cfg).and_then(|_| per_case(vol, label, &mut pairs)) {
            Ok(()) => set.pairs.append(&mut pairs),
            Err(e) => set.skipped.push((k, format!("{e}"))),
        }
    }
    Ok(set)
}

/// Every axial slice resized to the coarse image size, background-only slices
/// included.
pub fn prepare_coarse_set(cases: &[(Volume, Mask)], cfg: &PipelineConfig) -> Result<PreparedSet> {
    prepare_each(cases, cfg, |vol, label, out| {
        let images = extract_slices(vol, Plane::Axial);
        let labels = extract_slices(label, Plane::Axial);
        for (x, y) in images.iter().zip(&labels) {
            out.push((
                resize_slice(x, cfg.coarse_dims)?.0,
                resize_slice(y, cfg.coarse_dims)?.0,
            ));
        }
        Ok(())
    })
}

/// Fine-size axial patches around each ground-truth component, over that
/// component's slice range.
pub fn prepare_fine_set(cases: &[(Volume, Mask)], cfg: &PipelineConfig) -> Result<PreparedSet> {
    prepare_each(cases, cfg, |vol, label, out| {
        let windows = kidney_windows(&label_components(label, cfg.connectivity), 1);
        if windows.is_empty() {
            return Err(Error::Empty("no foreground components"));
        }
        let images = extract_slices(vol, Plane::Axial);
        let labels = extract_slices(label, Plane::Axial);
        for w in &windows {
            for k in w.slices.0..=w.slices.1 {
                out.push((
                    crop_patch(&images[k], w.center, cfg.fine_dims)?.0,
                    crop_patch(&labels[k], w.center, cfg.fine_dims)?.0,
                ));
            }
        }
        Ok(())
    })
}

fn sagittal_center(mask: &Mask) -> (usize, usize) {
    let dims = mask.dims();
    match foreground_centroid(mask) {
        Some(c) => (round_index(c[0], dims.depth), round_index(c[1], dims.rows)),
        None => {
            let [d, r, _] = dims.center();
            (d, r)
        }
    }
}

/// Sagittal patches of the abnormal size around the global foreground centroid,
/// one per sagittal slice.
pub fn prepare_abnormal_set(cases: &[(Volume, Mask)], cfg: &PipelineConfig) -> Result<PreparedSet> {
    prepare_each(cases, cfg, |vol, label, out| {
        if label.count_foreground() == 0 {
            return Err(Error::Empty("no foreground components"));
        }
        let center = sagittal_center(label);
        let images = extract_slices(vol, Plane::Sagittal);
        let labels = extract_slices(label, Plane::Sagittal);
        for (x, y) in images.iter().zip(&labels) {
            out.push((
                crop_patch(x, center, cfg.abnormal_dims)?.0,
                crop_patch(y, center, cfg.abnormal_dims)?.0,
            ));
        }
        Ok(())
    })
}

fn predict_checked(model: &dyn SegmentationModel, image: &Image) -> Result<ProbMap> {
    let p = model.predict(image)?;
    if p.dims() != image.dims() {
        return Err(Error::mismatch("model output dims", image.dims(), p.dims()));
    }
    p.check_probabilities()?;
    Ok(p)
}

/// Order-preserving map that may run in parallel.
fn map_ordered<I, O, F>(items: &[I], f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> Result<O> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Coarse mask: resize each axial slice, predict, resize back, threshold.
pub fn predict_coarse(
    vol: &Volume,
    models: &StageModels<'_>,
    cfg: &PipelineConfig,
) -> Result<Mask> {
    check_normalized(vol, cfg)?;
    let slices = extract_slices(vol, Plane::Axial);
    let probs = map_ordered(&slices, |s| {
        let (x, rec) = resize_slice(s, cfg.coarse_dims)?;
        unresize(&predict_checked(models.coarse, &x)?, &rec)
    })?;
    let prob = compose_slices(&probs, Plane::Axial, vol.dims(), vol.spacing())?;
    Ok(prob.binarize(cfg.prob_threshold))
}

/// Guidance mask: the coarse mask itself when it shows exactly two kidneys,
/// otherwise the sagittal correction model's output.
pub fn build_guidance(
    vol: &Volume,
    s_c: &Mask,
    models: &StageModels<'_>,
    cfg: &PipelineConfig,
) -> Result<Guidance> {
    check_normalized(vol, cfg)?;
    if !vol.same_geometry(s_c) {
        return Err(Error::mismatch(
            "coarse mask geometry",
            vol.dims().as_array(),
            s_c.dims().as_array(),
        ));
    }
    let verdict = classify(
        &component_stats(&label_components(s_c, cfg.connectivity)),
        cfg.th_vn,
    );
    if verdict.verdict == Normality::Normal {
        return Ok(Guidance {
            mask: s_c.clone(),
            verdict,
            corrected: false,
            flags: Vec::new(),
        });
    }

    let center = sagittal_center(s_c);
    let slices = extract_slices(vol, Plane::Sagittal);
    let probs = map_ordered(&slices, |s| {
        let (x, rec) = crop_patch(s, center, cfg.abnormal_dims)?;
        uncrop_patch(&predict_checked(models.abnormal, &x)?, &rec)
    })?;
    let mask = compose_slices(&probs, Plane::Sagittal, vol.dims(), vol.spacing())?
        .binarize(cfg.prob_threshold);
    let mut flags = Vec::new();
    if s_c.count_foreground() == 0 && mask.count_foreground() == 0 {
        flags.push(CaseFlag::DetectionFailure);
    }
    Ok(Guidance {
        mask,
        verdict,
        corrected: true,
        flags,
    })
}

/// Fine mask: per kidney of the guidance mask, fixed axial patches at the
/// kidney's projected centroid over its slice range plus a margin; the
/// thresholded patches are pasted back and merged by union.
pub fn predict_fine(
    vol: &Volume,
    m: &Mask,
    models: &StageModels<'_>,
    cfg: &PipelineConfig,
) -> Result<FinePrediction> {
    check_normalized(vol, cfg)?;
    if !vol.same_geometry(m) {
        return Err(Error::mismatch(
            "guidance geometry",
            vol.dims().as_array(),
            m.dims().as_array(),
        ));
    }
    let dims = vol.dims();
    let windows = kidney_windows(&label_components(m, cfg.connectivity), cfg.th_vn);
    let mut out = Mask::empty_like(vol);
    if windows.is_empty() {
        return Ok(FinePrediction {
            mask: out,
            kidneys: 0,
            flags: vec![CaseFlag::EmptyGuidance],
        });
    }

    let jobs: Vec<(usize, (usize, usize))> = windows
        .iter()
        .flat_map(|w| {
            let lo = w.slices.0.saturating_sub(FINE_SLICE_MARGIN);
            let hi = (w.slices.1 + FINE_SLICE_MARGIN).min(dims.depth - 1);
            (lo..=hi).map(move |k| (k, w.center))
        })
        .collect();
    let plane = dims.rows * dims.cols;
    let data = vol.data();
    let spacing = Plane::Axial.pixel_spacing(vol.spacing());
    let patches = map_ordered(&jobs, |&(k, center)| {
        let s = Image::new(
            (dims.rows, dims.cols),
            spacing,
            Plane::Axial,
            k,
            data[k * plane..(k + 1) * plane].to_vec(),
        )?;
        let (x, rec) = crop_patch(&s, center, cfg.fine_dims)?;
        let p = predict_checked(models.fine, &x)?;
        uncrop_patch(&p.binarize(cfg.prob_threshold), &rec)
    })?;

    let mut merged = out.into_data();
    for p in &patches {
        let base = p.index() * plane;
        for (o, &v) in merged[base..base + plane].iter_mut().zip(p.data()) {
            *o |= v;
        }
    }
    out = Grid::new(dims, vol.spacing(), merged)?;
    Ok(FinePrediction {
        mask: out,
        kidneys: windows.len(),
        flags: Vec::new(),
    })
}

/// The full test-time flow on a volume of any spacing; stage timings come from
/// the system clock when `std` is enabled.
pub fn run_case(
    vol: &Volume,
    models: &StageModels<'_>,
    cfg: &PipelineConfig,
) -> Result<CaseResult> {
    #[cfg(feature = "std")]
    let clock = StdClock::new();
    #[cfg(not(feature = "std"))]
    let clock = NoClock;
    run_case_with_clock(vol, models, cfg, &clock)
}

pub fn run_case_with_clock(
    vol: &Volume,
    models: &StageModels<'_>,
    cfg: &PipelineConfig,
    clock: &dyn Clock,
) -> Result<CaseResult> {
    cfg.validate()?;
    let native_dims = vol.dims();
    let native_spacing = vol.spacing();
    let back = |m: &Mask| resample_to_grid(m, native_dims, native_spacing);

    let t0 = clock.now_secs();
    let x = resample(vol, cfg.normalized_spacing).map_err(|e| e.in_stage("resample"))?;
    let s_c = predict_coarse(&x, models, cfg).map_err(|e| e.in_stage("coarse"))?;
    let t1 = clock.now_secs();
    let guidance = build_guidance(&x, &s_c, models, cfg).map_err(|e| e.in_stage("guidance"))?;
    let t2 = clock.now_secs();
    let fine = predict_fine(&x, &guidance.mask, models, cfg).map_err(|e| e.in_stage("fine"))?;
    let t3 = clock.now_secs();

    let mut flags = guidance.flags.clone();
    flags.extend(fine.flags.iter().copied());
    Ok(CaseResult {
        coarse_mask: back(&s_c).map_err(|e| e.in_stage("resample"))?,
        verdict: guidance.verdict,
        guidance: back(&guidance.mask).map_err(|e| e.in_stage("resample"))?,
        corrected: guidance.corrected,
        fine_mask: back(&fine.mask).map_err(|e| e.in_stage("resample"))?,
        timings: StageTimings {
            coarse: t1 - t0,
            guidance: t2 - t1,
            fine: t3 - t2,
        },
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::threshold_model;
    use crate::volume::Dims3;

    fn cfg() -> PipelineConfig {
        PipelineConfig {
            coarse_dims: (16, 16),
            fine_dims: (8, 8),
            abnormal_dims: (8, 16),
            th_vn: 20,
            ..PipelineConfig::default()
        }
    }

    /// Two 3×4×4 boxes of intensity 1 in a 10×16×24 volume.
    fn two_boxes() -> (Volume, Mask) {
        let dims = Dims3::new(10, 16, 24);
        let mut m = vec![0u8; dims.len()];
        for d in 3..6 {
            for r in 6..10 {
                for c in (4..8).chain(16..20) {
                    m[dims.index(d, r, c)] = 1;
                }
            }
        }
        let mask = Mask::new(dims, Spacing::NORMALIZED, m).unwrap();
        (mask.to_volume(), mask)
    }

    fn oracle() -> crate::nn::ThresholdModel {
        threshold_model(0.5)
    }

    #[test]
    fn default_config_matches_reference_sizes() {
        let c = PipelineConfig::default();
        assert_eq!(
            (c.coarse_dims, c.fine_dims, c.abnormal_dims),
            ((128, 128), (160, 160), (64, 256))
        );
        assert_eq!((c.th_vn, c.prob_threshold), (10_000, 0.5));
        c.check_spec(&UNetSpec::new(8, 3)).unwrap();
        assert!(PipelineConfig {
            fine_dims: (20, 20),
            ..c
        }
        .check_spec(&UNetSpec::new(8, 3))
        .is_err());
    }

    #[test]
    fn coarse_set_one_pair_per_slice() {
        let (v, m) = two_boxes();
        let set = prepare_coarse_set(&[(v, m)], &cfg()).unwrap();
        assert_eq!(set.pairs.len(), 10);
        assert!(set
            .pairs
            .iter()
            .all(|(x, y)| x.dims() == (16, 16) && y.dims() == (16, 16)));
        assert!(set
            .pairs
            .iter()
            .all(|(_, y)| y.data().iter().all(|&v| v <= 1)));
    }

    #[test]
    fn mismatched_case_is_skipped() {
        let (v, m) = two_boxes();
        let other = Mask::empty_like(
            &Volume::filled(Dims3::new(2, 2, 2), Spacing::NORMALIZED, 0.0).unwrap(),
        );
        let set = prepare_coarse_set(&[(v.clone(), other), (v, m)], &cfg()).unwrap();
        assert_eq!(set.pairs.len(), 10);
        assert_eq!(set.skipped.len(), 1);
        assert_eq!(set.skipped[0].0, 0);
    }

    #[test]
    fn fine_set_streams_per_kidney() {
        let (v, m) = two_boxes();
        let set = prepare_fine_set(&[(v.clone(), m)], &cfg()).unwrap();
        assert_eq!(set.pairs.len(), 6);
        // Centroid rows 6..10 → 7.5 → 8; cols 4..8 → 5.5 → 6.
        let (_, y) = &set.pairs[0];
        let fg: usize = y.data().iter().map(|&v| v as usize).sum();
        assert_eq!(fg, 16);
        let empty = Mask::empty_like(&v);
        let set = prepare_fine_set(&[(v, empty)], &cfg()).unwrap();
        assert!(set.pairs.is_empty());
        assert_eq!(set.skipped.len(), 1);
    }

    #[test]
    fn abnormal_set_one_patch_per_sagittal_slice() {
        let (v, m) = two_boxes();
        let set = prepare_abnormal_set(&[(v, m)], &cfg()).unwrap();
        assert_eq!(set.pairs.len(), 24);
        assert!(set
            .pairs
            .iter()
            .all(|(x, _)| x.dims() == (8, 16) && x.plane() == Plane::Sagittal));
    }

    #[test]
    fn normal_case_passes_coarse_through() {
        let (v, m) = two_boxes();
        let t = oracle();
        let models = StageModels {
            coarse: &t,
            abnormal: &t,
            fine: &t,
        };
        let r = run_case(&v, &models, &cfg()).unwrap();
        assert_eq!(r.verdict.verdict, Normality::Normal);
        assert!(!r.corrected);
        assert_eq!(r.guidance, r.coarse_mask);
        assert_eq!(r.fine_mask, m);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn empty_volume_is_flagged() {
        let v = Volume::filled(Dims3::new(4, 16, 16), Spacing::NORMALIZED, 0.0).unwrap();
        let t = oracle();
        let models = StageModels {
            coarse: &t,
            abnormal: &t,
            fine: &t,
        };
        let r = run_case(&v, &models, &cfg()).unwrap();
        assert_eq!(r.verdict.verdict, Normality::Abnormal);
        assert_eq!(r.fine_mask.count_foreground(), 0);
        assert_eq!(
            r.flags,
            vec![CaseFlag::DetectionFailure, CaseFlag::EmptyGuidance]
        );
    }

    #[test]
    fn stage_errors_are_tagged() {
        struct Wrong;
        impl SegmentationModel for Wrong {
            fn predict(&self, image: &Image) -> Result<ProbMap> {
                image.with_data(vec![2.0; image.data().len()])
            }
        }
        let (v, _) = two_boxes();
        let w = Wrong;
        let models = StageModels {
            coarse: &w,
            abnormal: &w,
            fine: &w,
        };
        match run_case(&v, &models, &cfg()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "coarse"),
            other => panic!("expected a coarse stage error, got {other:?}"),
        }
    }

    #[test]
    fn fine_output_stays_inside_windows() {
        let (v, _) = two_boxes();
        let ones = threshold_model(-1.0);
        let t = oracle();
        let models = StageModels {
            coarse: &t,
            abnormal: &t,
            fine: &ones,
        };
        let m = predict_coarse(&v, &models, &cfg()).unwrap();
        let f = predict_fine(&v, &m, &models, &cfg()).unwrap();
        assert_eq!(f.kidneys, 2);
        // Two 8×8 windows over slices 1..=7.
        assert_eq!(f.mask.count_foreground(), 2 * 64 * 7);
    }
}
