//! Criterion benchmarks for kernel synthesis and simulation; see `benches/`.
