pub mod crossing;
pub mod error;
pub mod ffm;
pub mod fft;
pub mod image;
pub mod metrics;
pub mod phantom;
pub mod purify;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use image::{BinaryMask, ImageGrid};
pub use tensor::{ComplexField, Tensor};
