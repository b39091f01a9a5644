use super::train::image_tensor;
use super::unet::{forward, ModelWeights, UNetSpec};
use crate::volume::{Image, ProbMap};
use crate::Result;

/// A per-slice segmentation function: image in, foreground probabilities out,
/// same dims. Implementations must be deterministic.
pub trait SegmentationModel: Sync {
    fn predict(&self, image: &Image) -> Result<ProbMap>;
}

impl<M: SegmentationModel + ?Sized> SegmentationModel for &M {
    fn predict(&self, image: &Image) -> Result<ProbMap> {
        (**self).predict(image)
    }
}

/// Analytic stand-in: 1 where intensity ≥ `level`, else 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdModel {
    pub level: f32,
}

pub fn threshold_model(level: f32) -> ThresholdModel {
    ThresholdModel { level }
}

impl SegmentationModel for ThresholdModel {
    fn predict(&self, image: &Image) -> Result<ProbMap> {
        image.with_data(
            image
                .data()
                .iter()
                .map(|&v| if v >= self.level { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// Trained U-Net weights behind the model interface.
#[derive(Clone, Debug)]
pub struct UNetModel {
    spec: UNetSpec,
    weights: ModelWeights<f32>,
}

impl UNetModel {
    pub fn new(spec: UNetSpec, weights: ModelWeights<f32>) -> Result<Self> {
        weights.validate(&spec)?;
        Ok(UNetModel { spec, weights })
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    pub fn weights(&self) -> &ModelWeights<f32> {
        &self.weights
    }
}

impl SegmentationModel for UNetModel {
    fn predict(&self, image: &Image) -> Result<ProbMap> {
        let out = forward(&self.spec, &self.weights, &image_tensor(image))?.into_output();
        image.with_data(
            out.into_data()
                .into_iter()
                .map(|p| p.clamp(0.0, 1.0))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Plane, Slice};

    #[test]
    fn threshold_model_levels() {
        let s = Slice::new((1, 2), (1.0, 1.0), Plane::Axial, 0, alloc::vec![0.2, 0.9]).unwrap();
        assert_eq!(
            threshold_model(0.5).predict(&s).unwrap().data(),
            &[0.0, 1.0]
        );
        assert_eq!(
            threshold_model(-1.0).predict(&s).unwrap().data(),
            &[1.0, 1.0]
        );
    }

    #[test]
    fn unet_model_keeps_geometry() {
        let spec = UNetSpec::new(2, 2);
        let m = UNetModel::new(spec, ModelWeights::init(&spec, 1)).unwrap();
        let s = Slice::new(
            (8, 12),
            (0.5, 0.5),
            Plane::Sagittal,
            4,
            alloc::vec![0.1; 96],
        )
        .unwrap();
        let p = m.predict(&s).unwrap();
        assert_eq!(
            (p.dims(), p.plane(), p.index()),
            ((8, 12), Plane::Sagittal, 4)
        );
        p.check_probabilities().unwrap();
        assert!(UNetModel::new(UNetSpec::new(4, 2), ModelWeights::init(&spec, 1)).is_err());
    }
}
