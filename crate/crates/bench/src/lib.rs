//! Benchmarks for the stopping solvers live under `benches/`.
