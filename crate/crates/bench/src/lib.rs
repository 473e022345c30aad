//! Criterion benchmarks for the modkalm workspace; see `benches/`.
