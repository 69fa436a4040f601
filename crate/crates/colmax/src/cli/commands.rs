//! Subcommand bodies. Each resolves its knobs, logs the resolved config,
//! reads inputs, and writes new output files without touching the inputs.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use super::io::{read_candidate_scores, read_multivectors};
use super::{
    AblateArgs, BuildIndexArgs, Ctx, EstimateStorageArgs, EvaluateArgs, GenBenchArgs, MergeArgs,
    MineNegativesArgs, OutputFormat, ProjectArgs, QuantizeArgs, Resolver, SampleClustersArgs,
    SearchArgs, SearchMode,
};
use crate::curation::{
    assign_ids, cluster_uniform_sample, gap_select_and_cluster, mine_hard_negatives,
    reduce_for_clustering, write_assignments_csv, write_triplets_jsonl, CLUSTERING_DIM,
    DEFAULT_MAX_ITERS, DEFAULT_NEGATIVE_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::eval::ablation::sample_tokens;
use crate::eval::{
    ablation_csv, ablation_markdown, generate_benchmark, ndcg_at_k, read_qrels_trec, read_run_trec,
    run_ablation, write_qrels_trec, write_run_trec, BenchConfig, TokenCountDist,
};
use crate::maxsim::{pooled_search, retrieve_then_rerank, search, SearchResult};
use crate::model::Precision;
use crate::model::SimilarityKind;
use crate::store::{apply_projection, estimate_storage, fit_projection, Index};
use crate::training::{merge_models, MergeSpec, ParamSet};

fn emit(ctx: &Ctx, text: &[String], json: serde_json::Value) {
    match ctx.format {
        OutputFormat::Text => {
            for line in text {
                println!("{line}");
            }
        }
        OutputFormat::Json => {
            println!(
                "{}",
                serde_json::to_string(&json).expect("serializable value")
            );
        }
    }
}

/// Outputs must be new files, never an input path.
fn check_output_distinct(out: &Path, inputs: &[&Path]) -> Result<()> {
    for input in inputs {
        let same = if out == *input {
            true
        } else {
            match (fs::canonicalize(out), fs::canonicalize(input)) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            }
        };
        if same {
            return Err(Error::InvalidInput(format!(
                "output {} would overwrite an input",
                out.display()
            )));
        }
    }
    Ok(())
}

pub fn build_index(args: BuildIndexArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    let precision = r.resolve("precision", args.precision, Precision::Fp32)?;
    let normalize = r.resolve_flag("normalize", args.normalize)?;
    r.note("input", args.input.display());
    r.note("out", args.out.display());
    r.flush(name);
    check_output_distinct(&args.out, &[&args.input])?;
    let docs = read_multivectors(&args.input)?;
    let n = docs.len();
    let index = Index::build_to_path(docs, precision, normalize, &args.out)?;
    emit(
        ctx,
        &[format!(
            "indexed {n} docs dim {} precision {precision} -> {}",
            index.dim(),
            args.out.display()
        )],
        json!({
            "docs": n,
            "dim": index.dim(),
            "precision": precision,
            "out": args.out.display().to_string(),
        }),
    );
    Ok(())
}

pub fn search_cmd(args: SearchArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    let k = r.resolve("k", args.k, 10usize)?;
    let mode = r.resolve("mode", args.mode, SearchMode::Maxsim)?;
    let first_stage_k = r.resolve("first-stage-k", args.first_stage_k, 50usize)?;
    let sim = r.resolve("sim", args.sim, SimilarityKind::Dot)?;
    let tag = r.resolve("tag", args.tag, "colmax".to_string())?;
    r.note("index", args.index.display());
    r.note("queries", args.queries.display());
    r.note("out", args.out.display());
    r.flush(name);
    check_output_distinct(&args.out, &[&args.index, &args.queries])?;
    let index = Index::read(&args.index)?;
    let queries = read_multivectors(&args.queries)?;
    let run: Vec<SearchResult> = queries
        .iter()
        .map(|q| match mode {
            SearchMode::Maxsim => search(q, &index, k, sim),
            SearchMode::Pooled => pooled_search(q, &index, k),
            SearchMode::Rerank => retrieve_then_rerank(q, &index, first_stage_k, k, sim),
        })
        .collect::<Result<_>>()?;
    write_run_trec(&args.out, &run, &tag)?;
    emit(
        ctx,
        &[format!(
            "searched {} queries k {k} mode {mode} -> {}",
            run.len(),
            args.out.display()
        )],
        json!({
            "queries": run.len(),
            "k": k,
            "mode": mode.to_string(),
            "out": args.out.display().to_string(),
        }),
    );
    Ok(())
}

pub fn evaluate(args: EvaluateArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    let k = r.resolve("k", args.k, 10usize)?;
    r.note("run", args.run.display());
    r.note("qrels", args.qrels.display());
    r.flush(name);
    let run = read_run_trec(&args.run)?;
    let qrels = read_qrels_trec(&args.qrels)?;
    let report = ndcg_at_k(&run, &qrels, k)?;
    emit(
        ctx,
        &[
            format!("NDCG@{k} = {:.4}", report.mean),
            format!(
                "evaluated {} queries, skipped {}",
                report.evaluated, report.skipped
            ),
        ],
        json!({
            "k": k,
            "ndcg": report.mean,
            "evaluated": report.evaluated,
            "skipped": report.skipped,
            "per_query": report.per_query,
        }),
    );
    Ok(())
}

pub fn estimate_storage_cmd(
    args: EstimateStorageArgs,
    r: &mut Resolver,
    ctx: &Ctx,
    name: &str,
) -> Result<()> {
    let precision = r.resolve("precision", args.precision, Precision::Fp32)?;
    r.note("docs", args.docs);
    r.note("avg-tokens", args.avg_tokens);
    r.note("dim", args.dim);
    r.flush(name);
    let estimate = estimate_storage(args.docs, args.avg_tokens, args.dim, precision)?;
    emit(
        ctx,
        &[format!("{} GiB", estimate.gib_display())],
        serde_json::to_value(&estimate).expect("serializable estimate"),
    );
    Ok(())
}

pub fn mine_negatives(
    args: MineNegativesArgs,
    r: &mut Resolver,
    ctx: &Ctx,
    name: &str,
) -> Result<()> {
    let k = r.resolve("k", args.k, 8usize)?;
    let threshold = r.resolve("threshold", args.threshold, DEFAULT_NEGATIVE_THRESHOLD)?;
    r.note("scores", args.scores.display());
    r.note("out", args.out.display());
    r.flush(name);
    check_output_distinct(&args.out, &[&args.scores])?;
    let rows = read_candidate_scores(&args.scores)?;
    let triplets = rows
        .iter()
        .map(|row| {
            mine_hard_negatives(
                &row.query_id,
                &row.positive_id,
                &row.candidates,
                k,
                threshold,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    write_triplets_jsonl(&args.out, &triplets)?;
    let negatives: usize = triplets.iter().map(|t| t.negative_ids.len()).sum();
    emit(
        ctx,
        &[format!(
            "mined {} triplets ({negatives} negatives) threshold {threshold} -> {}",
            triplets.len(),
            args.out.display()
        )],
        json!({
            "triplets": triplets.len(),
            "negatives": negatives,
            "k": k,
            "threshold": threshold,
            "out": args.out.display().to_string(),
        }),
    );
    Ok(())
}

pub fn sample_clusters(
    args: SampleClustersArgs,
    r: &mut Resolver,
    ctx: &Ctx,
    name: &str,
) -> Result<()> {
    let per_cluster = r.resolve("per-cluster", args.per_cluster, 5usize)?;
    let k_max = r.resolve("k-max", args.k_max, 8usize)?;
    let refs = r.resolve("refs", args.refs, 10usize)?;
    let target_dim = r.resolve("target-dim", args.target_dim, CLUSTERING_DIM)?;
    let max_iters = r.resolve("max-iters", args.max_iters, DEFAULT_MAX_ITERS)?;
    r.note("index", args.index.display());
    r.note("out", args.out.display());
    r.flush(name);
    check_output_distinct(&args.out, &[&args.index])?;
    let index = Index::read(&args.index)?;
    let mut pooled = index.pooled_vectors();
    pooled.sort_by(|a, b| a.0.cmp(&b.0));
    let ids: Vec<String> = pooled.iter().map(|(id, _)| id.clone()).collect();
    let vectors: Vec<crate::model::Vector> = pooled.into_iter().map(|(_, v)| v).collect();

    let mut text = Vec::new();
    let points = if index.dim() > target_dim {
        let (reduced, _projection) = reduce_for_clustering(&vectors, target_dim)?;
        text.push(format!(
            "projected pooled embeddings from {} to {target_dim} dims for clustering",
            index.dim()
        ));
        reduced
    } else {
        text.push(format!(
            "pooled embeddings already at {} dims, clustering directly",
            index.dim()
        ));
        vectors
    };
    let (curve, result) = gap_select_and_cluster(&points, k_max, refs, ctx.seed, max_iters)?;
    let assignments = assign_ids(&ids, &result.assignments);
    write_assignments_csv(&args.out, &assignments)?;
    text.push(format!(
        "clustered {} docs into k={} clusters -> {}",
        ids.len(),
        curve.chosen_k,
        args.out.display()
    ));

    let sample = cluster_uniform_sample(&assignments, per_cluster, ctx.seed);
    if let Some(sample_out) = &args.sample_out {
        let mut body = sample.join("\n");
        body.push('\n');
        fs::write(sample_out, body).map_err(|e| Error::io(sample_out, e))?;
        text.push(format!(
            "sampled {} docs -> {}",
            sample.len(),
            sample_out.display()
        ));
    }
    if let Some(curve_out) = &args.curve_out {
        let mut body = String::from("k,within_dispersion,gap,sd\n");
        for (i, &k) in curve.k_values.iter().enumerate() {
            body.push_str(&format!(
                "{k},{},{},{}\n",
                curve.within_dispersion[i], curve.gap[i], curve.sd[i]
            ));
        }
        fs::write(curve_out, body).map_err(|e| Error::io(curve_out, e))?;
        text.push(format!("wrote dispersion curve -> {}", curve_out.display()));
    }
    emit(
        ctx,
        &text,
        json!({
            "docs": ids.len(),
            "chosen_k": curve.chosen_k,
            "k_values": curve.k_values,
            "gap": curve.gap,
            "sd": curve.sd,
            "sampled": sample.len(),
            "out": args.out.display().to_string(),
        }),
    );
    Ok(())
}

pub fn quantize(args: QuantizeArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    r.note("precision", args.precision);
    r.note("index", args.index.display());
    r.note("out", args.out.display());
    r.flush(name);
    check_output_distinct(&args.out, &[&args.index])?;
    let index = Index::read(&args.index)?;
    let source = index.precision();
    let requantized = index.requantize(args.precision)?;
    requantized.write(&args.out)?;
    emit(
        ctx,
        &[format!(
            "requantized {} docs from {source} to {} -> {}",
            requantized.doc_count(),
            args.precision,
            args.out.display()
        )],
        json!({
            "docs": requantized.doc_count(),
            "from": source,
            "to": args.precision,
            "out": args.out.display().to_string(),
        }),
    );
    Ok(())
}

pub fn project(args: ProjectArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    let sample_cap = r.resolve("sample-cap", args.sample_cap, 20_000usize)?;
    let renormalize = !r.resolve_flag("no-renormalize", args.no_renormalize)?;
    r.note("target-dim", args.target_dim);
    r.note("index", args.index.display());
    r.note("out", args.out.display());
    r.flush(name);
    check_output_distinct(&args.out, &[&args.index])?;
    let index = Index::read(&args.index)?;
    let docs = index.to_multivectors();
    let sample = sample_tokens(&docs, sample_cap, ctx.seed);
    let projection = fit_projection(&sample, args.target_dim)?;
    let projected: Vec<_> = docs
        .par_iter()
        .map(|d| apply_projection(d, &projection, renormalize))
        .collect::<Result<_>>()?;
    Index::build_to_path(projected, index.precision(), false, &args.out)?;
    emit(
        ctx,
        &[format!(
            "projected {} docs from {} to {} dims -> {}",
            docs.len(),
            index.dim(),
            args.target_dim,
            args.out.display()
        )],
        json!({
            "docs": docs.len(),
            "from_dim": index.dim(),
            "to_dim": args.target_dim,
            "out": args.out.display().to_string(),
        }),
    );
    Ok(())
}

pub fn merge(args: MergeArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    for input in &args.inputs {
        r.note("input", input.display());
    }
    if let Some(weights) = &args.weights {
        r.note(
            "weights",
            weights
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    r.note("out", args.out.display());
    r.flush(name);
    let input_refs: Vec<&Path> = args.inputs.iter().map(|p| p.as_path()).collect();
    check_output_distinct(&args.out, &input_refs)?;
    let members = args
        .inputs
        .iter()
        .map(ParamSet::read)
        .collect::<Result<Vec<_>>>()?;
    let spec = MergeSpec::new(members, args.weights.clone())?;
    let merged = merge_models(&spec)?;
    merged.write(&args.out)?;
    emit(
        ctx,
        &[format!(
            "merged {} parameter sets ({} tensors) -> {}",
            args.inputs.len(),
            merged.len(),
            args.out.display()
        )],
        json!({
            "inputs": args.inputs.len(),
            "tensors": merged.len(),
            "out": args.out.display().to_string(),
        }),
    );
    Ok(())
}

pub fn gen_bench(args: GenBenchArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    let defaults = BenchConfig::default();
    let docs = r.resolve("docs", args.docs, defaults.n_docs)?;
    let queries = r.resolve("queries", args.queries, defaults.n_queries)?;
    let dim = r.resolve("dim", args.dim, defaults.dim)?;
    let clusters = r.resolve("clusters", args.clusters, defaults.n_clusters)?;
    let latent_dim = r.resolve("latent-dim", args.latent_dim, defaults.latent_dim)?;
    let cluster_vocab = r.resolve("cluster-vocab", args.cluster_vocab, defaults.cluster_vocab)?;
    let shared_vocab = r.resolve("shared-vocab", args.shared_vocab, defaults.shared_vocab)?;
    let unique_tokens = r.resolve(
        "unique-tokens",
        args.unique_tokens,
        defaults.unique_tokens_per_doc,
    )?;
    let doc_tokens_min = r.resolve(
        "doc-tokens-min",
        args.doc_tokens_min,
        defaults.doc_tokens.min(),
    )?;
    let doc_tokens_max = r.resolve(
        "doc-tokens-max",
        args.doc_tokens_max,
        defaults.doc_tokens.max(),
    )?;
    let query_tokens = r.resolve("query-tokens", args.query_tokens, defaults.query_tokens)?;
    let noise = r.resolve("noise", args.noise, defaults.query_noise)?;
    let doc_jitter = r.resolve("doc-jitter", args.doc_jitter, defaults.doc_jitter)?;
    let grade = r.resolve("grade", args.grade, defaults.positive_grade)?;
    let precision = r.resolve("precision", args.precision, Precision::Fp32)?;
    r.note("out-dir", args.out_dir.display());
    r.flush(name);

    let cfg = BenchConfig {
        seed: ctx.seed,
        n_docs: docs,
        n_queries: queries,
        dim,
        n_clusters: clusters,
        latent_dim,
        cluster_vocab,
        shared_vocab,
        unique_tokens_per_doc: unique_tokens,
        doc_tokens: if doc_tokens_min == doc_tokens_max {
            TokenCountDist::Fixed(doc_tokens_min)
        } else {
            TokenCountDist::Uniform {
                lo: doc_tokens_min,
                hi: doc_tokens_max,
            }
        },
        query_tokens,
        query_noise: noise,
        doc_jitter,
        positive_grade: grade,
    };
    let bench = generate_benchmark(&cfg)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let corpus_path = args.out_dir.join("corpus.cmx");
    let queries_path = args.out_dir.join("queries.cmx");
    let qrels_path = args.out_dir.join("qrels.txt");
    Index::build_to_path(bench.docs, precision, false, &corpus_path)?;
    // Queries stay full precision; quantization applies to stored docs only.
    Index::build_to_path(bench.queries, Precision::Fp32, false, &queries_path)?;
    write_qrels_trec(&qrels_path, &bench.qrels)?;
    emit(
        ctx,
        &[format!(
            "generated {docs} docs, {queries} queries -> {}",
            args.out_dir.display()
        )],
        json!({
            "docs": docs,
            "queries": queries,
            "dim": dim,
            "seed": ctx.seed,
            "corpus": corpus_path.display().to_string(),
            "queries_file": queries_path.display().to_string(),
            "qrels": qrels_path.display().to_string(),
        }),
    );
    Ok(())
}

pub fn ablate(args: AblateArgs, r: &mut Resolver, ctx: &Ctx, name: &str) -> Result<()> {
    let k = r.resolve("k", args.k, 10usize)?;
    r.note(
        "dims",
        args.dims
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    r.note(
        "precisions",
        args.precisions
            .iter()
            .map(Precision::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    r.note("corpus", args.corpus.display());
    r.note("queries", args.queries.display());
    r.note("qrels", args.qrels.display());
    r.note("out", args.out.display());
    r.flush(name);
    check_output_distinct(&args.out, &[&args.corpus, &args.queries, &args.qrels])?;
    let corpus = read_multivectors(&args.corpus)?;
    let queries = read_multivectors(&args.queries)?;
    let qrels = read_qrels_trec(&args.qrels)?;
    let rows = run_ablation(
        &corpus,
        &queries,
        &qrels,
        &args.dims,
        &args.precisions,
        k,
        ctx.seed,
    )?;
    let csv = ablation_csv(&rows);
    fs::write(&args.out, &csv).map_err(|e| Error::io(&args.out, e))?;
    if let Some(md_out) = &args.markdown_out {
        fs::write(md_out, ablation_markdown(&rows)).map_err(|e| Error::io(md_out, e))?;
    }
    let mut text: Vec<String> = csv.lines().map(str::to_string).collect();
    text.push(format!(
        "wrote {} rows -> {}",
        rows.len(),
        args.out.display()
    ));
    emit(
        ctx,
        &text,
        serde_json::to_value(&rows).expect("serializable rows"),
    );
    Ok(())
}
