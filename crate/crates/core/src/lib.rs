//! Sandbox mining and taint differencing over a small app IR.
//!
//! The pipeline mirrors a malware-identification study: exploration
//! strategies run a benign app version to mine a sandbox of sensitive APIs,
//! an optional static reachability pass widens it, and the repackaged version
//! is flagged when it calls anything outside. A taint engine offers a second
//! detector based on new source-to-sink flows. [`bench`] runs the full matrix
//! and computes the summary statistics.

pub mod bench;
pub mod catalog;
pub mod cli;
pub mod explore;
pub mod ir;
pub mod sandbox;
pub mod static_analysis;
pub mod synth;
pub mod taint;
