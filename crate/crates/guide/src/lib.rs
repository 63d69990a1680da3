//! The book's code listings, compiled and run as doc-tests.
//!
//! mdbook cannot resolve workspace dependencies when testing, so each chapter
//! is included here as the docs of an empty module and `cargo test --doc`
//! runs its listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/imaging.md")]
pub mod imaging {}
#[doc = include_str!("../../../book/src/registration.md")]
pub mod registration {}
#[doc = include_str!("../../../book/src/morphing.md")]
pub mod morphing {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/kinematics.md")]
pub mod kinematics {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
