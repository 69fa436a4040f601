//! Spawns the real binary and checks exit codes, stdout contracts, stderr
//! error lines, and that inputs are never mutated.

use std::path::Path;
use std::process::{Command, Output};

use colmax::curation::read_triplets_jsonl;
use colmax::model::Precision;
use colmax::store::Index;
use colmax::training::{ParamSet, Tensor};

fn colmax() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_colmax"));
    cmd.env_remove("COLMAX_SEED");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn colmax");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_text(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Small deterministic benchmark where every query is an exact copy of a
/// suffix-free subset of its positive document's tokens.
fn gen_zero_noise(dir: &Path, seed: u64) {
    run_ok(
        colmax()
            .arg("gen-bench")
            .args(["--out-dir", dir.to_str().unwrap()])
            .args(["--docs", "200", "--queries", "25"])
            .args(["--dim", "32", "--latent-dim", "8", "--clusters", "5"])
            .args([
                "--cluster-vocab",
                "40",
                "--shared-vocab",
                "80",
                "--unique-tokens",
                "3",
            ])
            .args(["--doc-tokens-min", "8", "--doc-tokens-max", "12"])
            .args(["--query-tokens", "12", "--noise", "0"])
            .args(["--seed", &seed.to_string()]),
    );
}

#[test]
fn estimate_storage_prints_golden_line() {
    let out = run_ok(
        colmax()
            .arg("estimate-storage")
            .args(["--docs", "1000000", "--avg-tokens", "773"])
            .args(["--dim", "4096", "--precision", "fp16"]),
    );
    assert_eq!(stdout_text(&out).trim(), "5897.5 GiB");
    let err = stderr_text(&out);
    assert!(
        err.contains("config: command=estimate-storage"),
        "stderr: {err}"
    );
    assert!(err.contains("config: precision=fp16"), "stderr: {err}");

    let out = run_ok(
        colmax()
            .arg("estimate-storage")
            .args(["--docs", "1000000", "--avg-tokens", "773"])
            .args(["--dim", "4096", "--precision", "fp16", "--format", "json"]),
    );
    let parsed: serde_json::Value = serde_json::from_str(stdout_text(&out).trim()).unwrap();
    assert_eq!(parsed["floats_per_image"], serde_json::json!(3_166_208u64));
    assert_eq!(parsed["precision"], "fp16");
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = colmax()
        .arg("estimate-storage")
        .args(["--docs", "10", "--avg-tokens", "5", "--dim", "8", "--bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = colmax().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = colmax().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn data_error_exits_one_with_code_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out = colmax()
        .arg("evaluate")
        .args(["--run", missing.to_str().unwrap()])
        .args(["--qrels", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_text(&out);
    let error_line = err
        .lines()
        .find(|l| l.starts_with("error: "))
        .unwrap_or_else(|| {
            panic!("no error line in stderr: {err}");
        });
    assert!(
        error_line.starts_with("error: IoFailure: "),
        "got: {error_line}"
    );
}

#[test]
fn gen_bench_is_deterministic_per_seed() {
    let root = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        root.path().join("a"),
        root.path().join("b"),
        root.path().join("c"),
    );
    gen_zero_noise(&a, 7);
    gen_zero_noise(&b, 7);
    gen_zero_noise(&c, 8);
    for name in ["corpus.cmx", "queries.cmx", "qrels.txt"] {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs across identical runs");
    }
    assert_ne!(
        std::fs::read(a.join("corpus.cmx")).unwrap(),
        std::fs::read(c.join("corpus.cmx")).unwrap(),
        "different seeds produced identical corpora"
    );
}

#[test]
fn zero_noise_pipeline_reports_perfect_ndcg() {
    let dir = tempfile::tempdir().unwrap();
    gen_zero_noise(dir.path(), 7);
    let corpus = dir.path().join("corpus.cmx");
    let rebuilt = dir.path().join("rebuilt.cmx");
    let run = dir.path().join("run.txt");

    let before = std::fs::read(&corpus).unwrap();
    run_ok(
        colmax()
            .arg("build-index")
            .args(["--input", corpus.to_str().unwrap()])
            .args(["--out", rebuilt.to_str().unwrap()]),
    );
    run_ok(
        colmax()
            .arg("search")
            .args(["--index", rebuilt.to_str().unwrap()])
            .args([
                "--queries",
                dir.path().join("queries.cmx").to_str().unwrap(),
            ])
            .args(["--out", run.to_str().unwrap(), "--k", "10"]),
    );
    let out = run_ok(
        colmax()
            .arg("evaluate")
            .args(["--run", run.to_str().unwrap()])
            .args(["--qrels", dir.path().join("qrels.txt").to_str().unwrap()])
            .args(["--k", "10"]),
    );
    let text = stdout_text(&out);
    assert!(text.contains("NDCG@10 = 1.0000"), "stdout: {text}");
    assert_eq!(
        before,
        std::fs::read(&corpus).unwrap(),
        "search mutated its input"
    );

    let run_text = std::fs::read_to_string(&run).unwrap();
    let first = run_text.lines().next().unwrap();
    let fields: Vec<&str> = first.split_whitespace().collect();
    assert_eq!(fields.len(), 6, "TREC run line: {first}");
    assert_eq!(fields[1], "Q0");
    assert_eq!(fields[3], "1");
    assert_eq!(fields[5], "colmax");
}

#[test]
fn env_seed_matches_explicit_flag() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    gen_zero_noise(&a, 9);
    run_ok(
        colmax()
            .env("COLMAX_SEED", "9")
            .arg("gen-bench")
            .args(["--out-dir", b.to_str().unwrap()])
            .args(["--docs", "200", "--queries", "25"])
            .args(["--dim", "32", "--latent-dim", "8", "--clusters", "5"])
            .args([
                "--cluster-vocab",
                "40",
                "--shared-vocab",
                "80",
                "--unique-tokens",
                "3",
            ])
            .args(["--doc-tokens-min", "8", "--doc-tokens-max", "12"])
            .args(["--query-tokens", "12", "--noise", "0"]),
    );
    assert_eq!(
        std::fs::read(a.join("corpus.cmx")).unwrap(),
        std::fs::read(b.join("corpus.cmx")).unwrap(),
        "COLMAX_SEED env and --seed disagree"
    );
}

#[test]
fn config_file_supplies_defaults_cli_overrides() {
    let dir = tempfile::tempdir().unwrap();
    gen_zero_noise(dir.path(), 11);
    let cfg = dir.path().join("colmax.conf");
    std::fs::write(&cfg, "# search defaults\nk=3\n").unwrap();
    let run = dir.path().join("run.txt");

    let out = run_ok(
        colmax()
            .arg("search")
            .args(["--config", cfg.to_str().unwrap()])
            .args(["--index", dir.path().join("corpus.cmx").to_str().unwrap()])
            .args([
                "--queries",
                dir.path().join("queries.cmx").to_str().unwrap(),
            ])
            .args(["--out", run.to_str().unwrap()]),
    );
    assert!(stderr_text(&out).contains("config: k=3"));
    let text = std::fs::read_to_string(&run).unwrap();
    let first_query_hits = text.lines().filter(|l| l.starts_with("q")).take(3).count();
    assert_eq!(first_query_hits, 3);
    let max_rank = text
        .lines()
        .map(|l| l.split_whitespace().nth(3).unwrap().parse::<u32>().unwrap())
        .max()
        .unwrap();
    assert_eq!(max_rank, 3, "config k=3 not applied");

    let out = run_ok(
        colmax()
            .arg("search")
            .args(["--config", cfg.to_str().unwrap()])
            .args(["--index", dir.path().join("corpus.cmx").to_str().unwrap()])
            .args([
                "--queries",
                dir.path().join("queries.cmx").to_str().unwrap(),
            ])
            .args(["--out", run.to_str().unwrap(), "--k", "2"]),
    );
    assert!(stderr_text(&out).contains("config: k=2"));
    let text = std::fs::read_to_string(&run).unwrap();
    let max_rank = text
        .lines()
        .map(|l| l.split_whitespace().nth(3).unwrap().parse::<u32>().unwrap())
        .max()
        .unwrap();
    assert_eq!(max_rank, 2, "--k must override the config file");
}

#[test]
fn build_index_reads_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    std::fs::write(
        &docs,
        concat!(
            "{\"id\":\"alpha\",\"tokens\":[[1.0,0.0],[0.5,0.5]]}\n",
            "{\"id\":\"beta\",\"tokens\":[[0.0,1.0]]}\n",
        ),
    )
    .unwrap();
    let index_path = dir.path().join("docs.cmx");
    let out = run_ok(
        colmax()
            .arg("build-index")
            .args(["--input", docs.to_str().unwrap()])
            .args(["--out", index_path.to_str().unwrap()])
            .args(["--precision", "int8"]),
    );
    assert!(
        stdout_text(&out).contains("indexed 2 docs"),
        "{}",
        stdout_text(&out)
    );
    let index = Index::read(&index_path).unwrap();
    assert_eq!(index.doc_count(), 2);
    assert_eq!(index.precision(), Precision::Int8);

    let queries = dir.path().join("queries.jsonl");
    std::fs::write(&queries, "{\"id\":\"q1\",\"tokens\":[[1.0,0.0]]}\n").unwrap();
    let run = dir.path().join("run.txt");
    run_ok(
        colmax()
            .arg("search")
            .args(["--index", index_path.to_str().unwrap()])
            .args(["--queries", queries.to_str().unwrap()])
            .args(["--out", run.to_str().unwrap(), "--k", "2", "--tag", "smoke"]),
    );
    let text = std::fs::read_to_string(&run).unwrap();
    let first: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(first[0], "q1");
    assert_eq!(first[2], "alpha");
    assert_eq!(first[5], "smoke");
}

#[test]
fn quantize_and_project_rewrite_the_index() {
    let dir = tempfile::tempdir().unwrap();
    gen_zero_noise(dir.path(), 13);
    let corpus = dir.path().join("corpus.cmx");

    let binary = dir.path().join("binary.cmx");
    run_ok(
        colmax()
            .arg("quantize")
            .args(["--index", corpus.to_str().unwrap()])
            .args(["--precision", "binary"])
            .args(["--out", binary.to_str().unwrap()]),
    );
    let index = Index::read(&binary).unwrap();
    assert_eq!(index.precision(), Precision::Binary);
    assert_eq!(index.doc_count(), 200);

    let projected = dir.path().join("projected.cmx");
    run_ok(
        colmax()
            .arg("project")
            .args(["--index", corpus.to_str().unwrap()])
            .args(["--target-dim", "8"])
            .args(["--out", projected.to_str().unwrap()]),
    );
    let index = Index::read(&projected).unwrap();
    assert_eq!(index.dim(), 8);
    assert_eq!(index.doc_count(), 200);
}

#[test]
fn sample_clusters_writes_assignments_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    gen_zero_noise(dir.path(), 17);
    let assign = dir.path().join("assignments.csv");
    let sample = dir.path().join("sample.txt");
    let curve = dir.path().join("curve.csv");
    run_ok(
        colmax()
            .arg("sample-clusters")
            .args(["--index", dir.path().join("corpus.cmx").to_str().unwrap()])
            .args(["--out", assign.to_str().unwrap()])
            .args(["--sample-out", sample.to_str().unwrap()])
            .args(["--curve-out", curve.to_str().unwrap()])
            .args(["--k-max", "6", "--per-cluster", "4"]),
    );

    let text = std::fs::read_to_string(&assign).unwrap();
    assert!(text.starts_with("doc_id,cluster\n"));
    assert_eq!(text.lines().count(), 201, "one line per doc plus header");

    let curve_text = std::fs::read_to_string(&curve).unwrap();
    assert!(curve_text.starts_with("k,within_dispersion,gap,sd\n"));

    let index = Index::read(dir.path().join("corpus.cmx")).unwrap();
    for line in std::fs::read_to_string(&sample).unwrap().lines() {
        assert!(
            index.doc_index(line).is_some(),
            "sampled unknown id `{line}`"
        );
    }
}

#[test]
fn mine_negatives_respects_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.jsonl");
    std::fs::write(
        &scores,
        concat!(
            "{\"query_id\":\"q1\",\"positive_id\":\"p\",\"candidates\":{\"p\":0.8,\"a\":0.9,\"b\":0.75,\"c\":0.7,\"d\":0.5}}\n",
            "{\"query_id\":\"q2\",\"positive_id\":\"p\",\"candidates\":{\"p\":1.0,\"a\":0.99,\"b\":0.1}}\n",
        ),
    )
    .unwrap();
    let out_path = dir.path().join("triplets.jsonl");
    run_ok(
        colmax()
            .arg("mine-negatives")
            .args(["--scores", scores.to_str().unwrap()])
            .args(["--out", out_path.to_str().unwrap()])
            .args(["--k", "2"]),
    );
    let triplets = read_triplets_jsonl(&out_path).unwrap();
    assert_eq!(triplets.len(), 2);
    assert_eq!(triplets[0].negative_ids, vec!["b", "c"]);
    assert_eq!(triplets[1].negative_ids, vec!["b"]);
}

#[test]
fn merge_cli_honors_one_hot_weights() {
    let dir = tempfile::tempdir().unwrap();
    let make = |seed: u64| {
        let mut set = ParamSet::new();
        let data: Vec<f64> = (0..6).map(|i| (seed * 100 + i) as f64 * 0.125).collect();
        set.insert("w", Tensor::new(vec![2, 3], data).unwrap())
            .unwrap();
        set
    };
    let (a, b) = (make(1), make(2));
    let a_path = dir.path().join("a.params");
    let b_path = dir.path().join("b.params");
    a.write(&a_path).unwrap();
    b.write(&b_path).unwrap();

    let merged_path = dir.path().join("merged.params");
    run_ok(
        colmax()
            .arg("merge")
            .args([
                "--inputs",
                a_path.to_str().unwrap(),
                b_path.to_str().unwrap(),
            ])
            .args(["--weights", "1,0"])
            .args(["--out", merged_path.to_str().unwrap()]),
    );
    assert_eq!(ParamSet::read(&merged_path).unwrap(), a);
}

#[test]
fn ablate_emits_exact_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    gen_zero_noise(dir.path(), 19);
    let csv_path = dir.path().join("ablation.csv");
    let md_path = dir.path().join("ablation.md");
    run_ok(
        colmax()
            .arg("ablate")
            .args(["--corpus", dir.path().join("corpus.cmx").to_str().unwrap()])
            .args([
                "--queries",
                dir.path().join("queries.cmx").to_str().unwrap(),
            ])
            .args(["--qrels", dir.path().join("qrels.txt").to_str().unwrap()])
            .args(["--dims", "32,16"])
            .args(["--precisions", "fp32,int8"])
            .args(["--out", csv_path.to_str().unwrap()])
            .args(["--markdown-out", md_path.to_str().unwrap()]),
    );

    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "label,dim,precision,storage_gib,storage_pct,ndcg,ndcg_pct"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("32d-fp32,32,fp32,"));
    assert!(rows[0].ends_with(",100.00"), "baseline row: {}", rows[0]);
    assert!(std::fs::read_to_string(&md_path).unwrap().starts_with("| "));
}
