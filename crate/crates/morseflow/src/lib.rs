//! morseflow: computational Morse theory on implicitly defined manifolds.
//!
//! The pipeline runs geometry -> critical points -> connecting orbits ->
//! chain complexes -> algebraic checks:
//!
//! * [`expr`] — expression parsing, evaluation, exact differentiation
//! * [`geometry`] — implicit manifolds, projectors, retraction
//! * [`critical`] — critical points, indices, eigenframes
//! * [`flow`] — projected gradient flow, connecting orbits, moduli samples
//! * [`complex`] — Morse complex, Smith normal form homology, duality
//! * [`loop_homology`] — mod-2 Pontryagin rings, extended complex
//! * [`stems`] — stable stems and Im(J) smoothability obstructions
//! * [`config`] / [`pipeline`] / [`report`] — orchestration and JSON I/O
//!
//! See the crate examples for one runnable program per capability, and the
//! `morseflow` binary for the `run` / `check` / `tables` commands.

pub mod complex;
pub mod config;
pub mod critical;
pub mod expr;
pub mod flow;
pub mod geometry;
pub mod loop_homology;
pub mod pipeline;
pub mod report;
pub mod stems;

pub use config::RunConfig;
pub use pipeline::{run_pipeline, PipelineError};
pub use report::Report;




