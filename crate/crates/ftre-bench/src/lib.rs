//! Shared helpers for the ftre benchmark suite.
