pub mod attack;
pub mod codec;
pub mod desk;
pub mod error;
pub mod models;
pub mod nn;
pub mod occlusion;
pub mod par;
pub mod perturb;
pub mod saliency;
pub mod store;
pub mod toydata;

pub use error::{Error, Result};
