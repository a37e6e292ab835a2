//! Criterion benchmarks for the `slcone` kernels live in `benches/`.
