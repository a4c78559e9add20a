//! The book chapters, compiled so their listings run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/system-model.md")]
pub mod system_model {}

#[doc = include_str!("../../../book/src/matching.md")]
pub mod matching {}

#[doc = include_str!("../../../book/src/power.md")]
pub mod power {}

#[doc = include_str!("../../../book/src/joint.md")]
pub mod joint {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
