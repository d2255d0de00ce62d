//! Criterion benchmarks for `gsd-core`; see `benches/`.
