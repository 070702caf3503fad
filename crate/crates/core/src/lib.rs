//! Thematic analysis of interview transcripts with a language model, and
//! user personas written from the resulting themes.
//!
//! The stages, in order: [`corpus`] chunks transcripts, [`coding`] extracts
//! and reduces codes, [`theming`] groups codes into themes, [`review`] tests
//! theme consistency and applies the analyst's decision, [`persona`] writes
//! personas from selected themes and [`trace`] links them back to their
//! codes. [`pipeline`] runs the stages over a [`store`] run directory, and
//! every model call goes through [`llm::Gateway`].

pub mod coding;
pub mod config;
pub mod corpus;
pub mod error;
pub mod llm;
pub mod persona;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod review;
pub mod store;
pub mod synthetic;
pub mod text;
pub mod theming;
pub mod trace;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
    #[doc = include_str!("../../../book/src/chunking.md")]
    mod chunking {}
    #[doc = include_str!("../../../book/src/coding.md")]
    mod coding {}
    #[doc = include_str!("../../../book/src/themes.md")]
    mod themes {}
    #[doc = include_str!("../../../book/src/personas.md")]
    mod personas {}
    #[doc = include_str!("../../../book/src/tracing.md")]
    mod tracing {}
    #[doc = include_str!("../../../book/src/runs.md")]
    mod runs {}
}
