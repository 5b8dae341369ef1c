//! Criterion benchmarks for the h2market solvers; see `benches/solvers.rs`.
