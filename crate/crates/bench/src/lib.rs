//! Criterion benchmarks for `hts-core`; see `benches/`.
