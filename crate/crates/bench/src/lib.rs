//! Criterion benchmarks for `xsu-core`; see `benches/`.
