//! Graph-biased self-attention for next-POI recommendation: check-in
//! ingestion, trajectory and global graphs, node2vec pretraining, a small
//! reverse-mode autodiff engine, contrastive augmentation, training and
//! ranking evaluation.

pub mod config;
pub mod error;
pub mod eval;
pub mod graphs;
pub mod gsan;
pub mod ingest;
pub mod numerics;
pub mod pretrain;
pub mod rng;
pub mod ssl;
pub mod train;

pub use error::{Error, Result};
