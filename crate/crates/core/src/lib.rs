pub mod error;
pub mod kernels;
pub mod poibin;
pub mod priors;
pub mod simulate;
pub mod infer_crm;
pub mod infer_dpp;
pub mod fit;
pub mod cli;

pub use error::{Error, Result};
