//! File formats and run orchestration around `dagcd-core`.
//!
//! The core crate is pure in-memory math; everything that touches the
//! filesystem — dataset/intervention CSVs, edge lists, DOT export, path
//! summaries, traces, manifests — plus the fit/bench drivers behind the CLI
//! lives here.

pub mod io;
pub mod run;
