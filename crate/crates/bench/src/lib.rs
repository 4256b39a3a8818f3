//! Criterion benchmarks for token issuance, one-time bitmaps and guarded
//! call chains. Run with `cargo bench -p smacs-bench`.
