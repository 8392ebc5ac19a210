//! Benchmarks for the specsep kernels live under `benches/`.
