//! Criterion benchmarks for `magsob-core` live under `benches/`.
