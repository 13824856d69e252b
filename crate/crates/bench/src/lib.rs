//! Benchmark harness for the solver kernels; see `benches/`.
