//! Acceptance checks for `koopman-prune`. The library only re-exports the
//! independent oracles shared with the core crate's integration tests; the
//! checks themselves live in `tests/acceptance.rs`.

#[path = "../../core/tests/common/mod.rs"]
pub mod oracles;
