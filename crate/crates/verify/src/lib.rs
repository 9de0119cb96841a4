//! Hosts the acceptance suite in `tests/acceptance.rs`; the package has no
//! library code of its own.
