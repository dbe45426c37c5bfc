//! Criterion benchmarks for `fishbridge-core`; see `benches/fishbridge.rs`.
