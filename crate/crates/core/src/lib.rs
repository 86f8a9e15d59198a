//! Search-log sanitization with exact privacy auditing.
//!
//! A [`log_model::SearchLog`] holds per-user ordered query/click records.
//! [`mechanisms`] turns it into a release, [`privacy`] certifies a
//! mechanism by enumerating its output distribution on tiny logs,
//! [`utility`] scores a release against the original and [`optimizer`]
//! picks the sanitizer's parameters.

pub mod ingest;
pub mod log_model;
pub mod mechanisms;
pub mod optimizer;
pub mod privacy;
pub mod rng;
pub mod utility;

// Book chapters run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/log-model.md")]
    mod log_model {}
    #[doc = include_str!("../../../book/src/auditing.md")]
    mod auditing {}
    #[doc = include_str!("../../../book/src/mechanisms.md")]
    mod mechanisms {}
    #[doc = include_str!("../../../book/src/sanitizer.md")]
    mod sanitizer {}
    #[doc = include_str!("../../../book/src/utility.md")]
    mod utility {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/token-hashing.md")]
    mod token_hashing {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
