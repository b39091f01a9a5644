//! Flat TOML run configuration. Absent keys take the reference defaults and
//! unknown keys are rejected.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use c2f_core::components::Connectivity;
use c2f_core::nn::{Hyper, UNetSpec};
use c2f_core::pipeline::PipelineConfig;
use c2f_core::volume::Spacing;
use serde::{Deserialize, Serialize};

use crate::nifti::DEFAULT_DEPTH_AXIS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// (depth, rows, cols) in mm.
    pub normalized_spacing: [f32; 3],
    pub coarse_dims: [usize; 2],
    pub fine_dims: [usize; 2],
    /// (depth, rows) of the sagittal patches.
    pub abnormal_dims: [usize; 2],
    pub th_vn: usize,
    pub prob_threshold: f32,
    /// 6 or 26.
    pub connectivity: u32,

    pub base_channels: usize,
    pub depth: usize,

    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Pairs drawn per epoch; every pair when absent.
    pub samples_per_epoch: Option<usize>,

    /// Stored NIfTI axis (0 = i, 1 = j, 2 = k) read as depth.
    pub nifti_depth_axis: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let spec = UNetSpec::default();
        let h = Hyper::default();
        let s = p.normalized_spacing;
        RunConfig {
            normalized_spacing: [s.d, s.h, s.w],
            coarse_dims: p.coarse_dims.into(),
            fine_dims: p.fine_dims.into(),
            abnormal_dims: p.abnormal_dims.into(),
            th_vn: p.th_vn,
            prob_threshold: p.prob_threshold,
            connectivity: p.connectivity.count(),
            base_channels: spec.base_channels,
            depth: spec.depth,
            lr: h.lr,
            momentum: h.momentum,
            epochs: h.epochs,
            batch_size: h.batch_size,
            seed: h.seed,
            samples_per_epoch: h.samples_per_epoch,
            nifti_depth_axis: DEFAULT_DEPTH_AXIS,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let pipeline = self.pipeline()?;
        pipeline.check_spec(&self.unet())?;
        if self.batch_size == 0 {
            bail!("batch_size must be positive");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            bail!("lr must be a non-negative number");
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            bail!("momentum must lie in [0, 1)");
        }
        if self.samples_per_epoch == Some(0) {
            bail!("samples_per_epoch must be positive");
        }
        if self.nifti_depth_axis > 2 {
            bail!("nifti_depth_axis must be 0, 1 or 2");
        }
        Ok(())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let [d, h, w] = self.normalized_spacing;
        let connectivity = Connectivity::from_count(self.connectivity)
            .with_context(|| format!("connectivity must be 6 or 26, got {}", self.connectivity))?;
        let cfg = PipelineConfig {
            normalized_spacing: Spacing::new(d, h, w)?,
            coarse_dims: self.coarse_dims.into(),
            fine_dims: self.fine_dims.into(),
            abnormal_dims: self.abnormal_dims.into(),
            th_vn: self.th_vn,
            prob_threshold: self.prob_threshold,
            connectivity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn unet(&self) -> UNetSpec {
        UNetSpec::new(self.base_channels, self.depth)
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            lr: self.lr,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            samples_per_epoch: self.samples_per_epoch,
        }
    }
}
