//! Benchmark-only crate; the benchmarks live in `benches/hot_paths.rs`.
