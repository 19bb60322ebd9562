//! Holds the workspace acceptance suite in `tests/acceptance.rs`. Kept in its
//! own package so it runs after every other test binary.
