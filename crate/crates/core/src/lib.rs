//! Subband SVM front-end for noise-robust phoneme classification.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod filterbank;
pub mod fusion;
pub mod harness;
pub mod kernels;
pub mod mfcc_frontend;
pub mod multiclass;
pub mod signal;
pub mod svm;

pub use error::{Error, Result};
