//! Criterion benchmarks for `tcn-core`; see `benches/`.
