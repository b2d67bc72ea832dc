//! Criterion benchmarks of the sampler, score, KDE, and training kernels; see `benches/`.
