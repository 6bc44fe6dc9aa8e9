//! Acceptance checks for `adahedge`; see `tests/acceptance.rs`.
