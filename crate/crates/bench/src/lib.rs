//! Benchmark-only crate; see `benches/stepping.rs`.
