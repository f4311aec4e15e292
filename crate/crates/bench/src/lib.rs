//! Criterion benchmarks for `bag-core` live under `benches/`.
