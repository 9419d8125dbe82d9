//! Decision trees whose split features are prompt → language-model calls.
//!
//! Each feature is one prompt: render it with an input, query the LM, and turn the output
//! into a bit with a verbalizer. A tree over such features classifies an input with at most
//! `depth` LM calls. This crate covers the whole pipeline: prompt sampling ([`promptgen`]), LM
//! backends ([`lm`]), cached featurization ([`features`], [`store`]), CART induction ([`tree`]),
//! the ensemble baselines and gradient boosting ([`ensemble`]), and the experiment harness
//! ([`harness`]).

pub mod columns;
pub mod data;
pub mod ensemble;
pub mod features;
pub mod harness;
pub mod lm;
pub mod model;
pub mod promptgen;
pub mod provider;
pub mod store;
pub mod tree;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/prompts.md")]
    mod prompts {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/knn.md")]
    mod knn {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/calls.md")]
    mod calls {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
