//! Trace-driven edge-caching benchmark.
//!
//! The crate covers the full pipeline: request-log ingestion (real MovieLens
//! traces or synthetic M-Zipf workloads over a generated FAP/UAV/UE layout),
//! the four-step popularity-labeling pipeline, a from-scratch vision
//! transformer that predicts the next interval's Top-K popular contents from
//! GAF-encoded request histories, and a cache simulator that scores
//! FIFO/LRU/LFU, a hindsight-optimal bound and the learned predictor by
//! cache-hit ratio.

pub mod cachesim;
pub mod error;
pub mod pipeline;
pub mod topology;
pub mod trace;
pub mod vit;

pub use error::{Error, Result};
