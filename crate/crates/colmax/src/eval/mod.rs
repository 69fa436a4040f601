//! Retrieval evaluation: NDCG@k, synthetic benchmark generation, and the
//! dimension/precision ablation sweep.

pub mod ablation;
pub mod ndcg;
pub mod synth;

pub use ablation::{
    ablation_csv, ablation_markdown, ndcg_pct, run_ablation, AblationRow, ABLATION_CSV_HEADER,
};
pub use ndcg::{
    dcg_at_k, ndcg_at_k, qrels_from_trec, qrels_to_trec, read_qrels_trec, read_run_trec,
    run_from_trec, run_to_trec, write_qrels_trec, write_run_trec, NdcgReport, Qrels,
};
pub use synth::{
    generate_benchmark, planted_positives, BenchConfig, Benchmark, TokenCountDist,
    DEFAULT_BENCH_SEED,
};
