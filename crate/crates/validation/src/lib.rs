//! Acceptance checks for the lgdcap toolkit live in `tests/acceptance.rs`.
