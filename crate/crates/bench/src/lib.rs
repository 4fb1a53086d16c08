//! Benchmarks live in `benches/`; run them with `cargo bench -p pilotwave-bench`.
