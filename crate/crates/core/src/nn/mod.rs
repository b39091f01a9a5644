//! The segmentation network: tensors, layer kernels, a 2D U-Net with explicit
//! backward pass, the soft Dice loss, and SGD training.

pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;
pub mod train;
pub mod unet;

pub use loss::{dice_loss, dice_loss_grad, DICE_EPSILON};
pub use model::{threshold_model, SegmentationModel, ThresholdModel, UNetModel};
pub use tensor::{Scalar, Tensor};
pub use train::{fit, sample_gradient, FitOutcome, Hyper};
pub use unet::{backward, forward, ForwardCache, ModelWeights, Param, UNetSpec};
