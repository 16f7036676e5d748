//! Criterion benchmarks for `negotrack-core`; see `benches/core.rs`.
