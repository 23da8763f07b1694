//! Desk-scale laboratory for specific emitter identification (SEI).
//!
//! The pipeline synthesizes IEEE 802.11a preambles from a fleet of virtual
//! emitters, impairs them with per-emitter RF fingerprints, injects
//! band-limited noise at controlled SNR, decimates to lower sampling rates,
//! and restores the high rate either with classical interpolation (linear,
//! cubic spline) or with a conditional-GAN generator. A CNN classifier then
//! measures identification accuracy per method, rate, and SNR.
//!
//! Everything is deterministic given the experiment seed: datasets, training
//! trajectories, and evaluation reports reproduce byte-for-byte.

pub mod cgan;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod filter;
pub mod impairment;
pub mod nn;
pub mod noise;
pub mod pipeline;
pub mod preamble;
pub mod resample;
pub mod seed;
pub mod signal;
pub mod spectro;
pub mod tensorize;

pub use dataset::{DatasetManifest, PreambleRecord};
pub use impairment::EmitterProfile;
pub use signal::ComplexSequence;
pub use tensorize::PreambleTensor;
