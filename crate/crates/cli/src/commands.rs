use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fewl::config::RunConfig;
use fewl::curate::{icl_pool, icl_prompts, judge_prompts, sft_split, ScoreColumn};
use fewl::digest::sha256_hex;
use fewl::pipeline::{AcquireOptions, Providers, ReferenceBank};
use fewl::providers::{CacheStore, ConcurrencyLimit, HttpTransport, ProviderClient, ProviderConfig, Transport};
use fewl::ranking::{compare_labeled, rank_models, ranking_markdown, score_dataset, ScoreTable};
use fewl::similarity::{Embedder, HttpEmbedder};
use fewl::theorylab::{bound_suite, tightness_suite, verify_data_processing, GAP_TOL, MAX_CHAIN_SIZE};
use fewl::DivergenceKind;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{CacheAction, Cli, Command, CurateArgs, CurateKind, GlobalArgs, TheoryArgs, TheoryKind};
use crate::error::CliError;
use crate::manifest::{unix_now, RunManifest};

pub enum Outcome {
    Clean,
    Partial,
}

/// Contents of `scores.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoresFile {
    pub manifest_digest: String,
    pub table: ScoreTable,
}

const BOUND_PAIRS: usize = 50;
const BOUND_WITNESSES: usize = 100;
const TIGHTNESS_PAIRS: usize = 50;

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Score { dataset, out } => score(g, &dataset, &out),
        Command::Rank { dirs, out } => rank(&dirs, out.as_deref()),
        Command::Compare { dir, out } => compare(&dir, out.as_deref()),
        Command::Curate(args) => curate(g, &args),
        Command::Theory(args) => theory(g, &args),
        Command::Cache { action } => cache(g, action),
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let path = g.config.as_ref().ok_or_else(|| CliError::Usage("--config is required for this command".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(mode) = g.mode {
        config.override_mode(mode);
    }
    if let Some(dir) = &g.cache_dir {
        config.run.cache_dir = Some(dir.clone());
    }
    if let Some(n) = g.max_concurrency {
        config.run.max_concurrency = n;
    }
    if let Some(seed) = g.seed {
        config.run.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn build_embedder(config: &RunConfig, transport: &Arc<dyn Transport>, cache: &Option<Arc<CacheStore>>) -> Result<HttpEmbedder, CliError> {
    HttpEmbedder::new(config.embedding.clone(), Some(transport.clone()), cache.clone()).map_err(|e| CliError::Provider(e.to_string()))
}

fn open_cache(config: &RunConfig) -> Result<Option<Arc<CacheStore>>, CliError> {
    Ok(match &config.run.cache_dir {
        Some(dir) => Some(Arc::new(CacheStore::open(dir)?)),
        None => None,
    })
}

fn build_providers(config: &RunConfig) -> Result<Providers, CliError> {
    let transport: Arc<dyn Transport> = Arc::new(HttpTransport);
    let cache = open_cache(config)?;
    let limit = Arc::new(ConcurrencyLimit::new(config.run.max_concurrency));
    let client = |c: &ProviderConfig| {
        ProviderClient::new(c.clone(), transport.clone(), cache.clone(), limit.clone()).map_err(|e| CliError::Provider(e.to_string()))
    };
    Ok(Providers {
        embedder: Arc::new(build_embedder(config, &transport, &cache)?),
        generator: client(&config.generator)?,
        references: config.references.iter().map(client).collect::<Result<_, _>>()?,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn stdout(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

fn read_scores(dir: &Path) -> Result<ScoresFile, CliError> {
    let path = dir.join("scores.json");
    let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path, source })
}

/// Identities leave out the mode, so a replay of recorded calls shares the
/// manifest digest of the run that recorded them.
fn provider_identity(c: &ProviderConfig) -> String {
    format!("{}:{}", c.id, c.model)
}

fn score(g: &GlobalArgs, dataset_path: &Path, out: &Path) -> Result<Outcome, CliError> {
    let started = unix_now();
    let config = load_config(g)?;
    let bytes = std::fs::read(dataset_path).map_err(CliError::io(dataset_path))?;
    let dataset = fewl::dataset::load_jsonl(dataset_path)?;
    let providers = build_providers(&config)?;
    let options = AcquireOptions { max_concurrency: config.run.max_concurrency, seed: config.run.seed };
    let bank = ReferenceBank::acquire(&dataset, &providers, &config.scoring, options)?;
    let table = score_dataset(&dataset, &bank, &config.scoring);

    let e = &config.embedding;
    let embedding = format!("embedding:{}:dim={}:seed={}", e.model.as_deref().unwrap_or("mock-trigram"), e.dim, e.seed);
    let mut identities = vec![embedding, provider_identity(&config.generator)];
    identities.extend(config.references.iter().map(provider_identity));
    let manifest = RunManifest {
        command: "score".into(),
        config_digest: config.scoring.digest(),
        dataset_digest: sha256_hex(&bytes),
        providers: identities,
        seed: config.run.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    let digest = manifest.digest();
    write_atomic(&out.join("scores.csv"), table.to_csv(Some(&digest)).as_bytes())?;
    let partial = !table.skips.is_empty();
    for s in &table.skips {
        eprintln!("{}", json!({"skip": s}));
    }
    for q in &dataset.questions {
        if let Some(w) = bank.parse_warning(&q.id) {
            eprintln!("{}", json!({"warning": "short_contrastive", "question_id": q.id, "expected": w.expected, "got": w.got}));
        }
    }
    let empty_penalty: BTreeSet<&str> =
        table.rows.iter().filter(|r| r.score.empty_penalty_warning).map(|r| r.question_id.as_str()).collect();
    for qid in empty_penalty {
        eprintln!("{}", json!({"warning": "no_neighbors", "question_id": qid}));
    }
    write_json(&out.join("scores.json"), &ScoresFile { manifest_digest: digest, table })?;
    write_json(&out.join("manifest.json"), &manifest.stamped(started))?;
    Ok(if partial { Outcome::Partial } else { Outcome::Clean })
}

fn rank(dirs: &[PathBuf], out: Option<&Path>) -> Result<Outcome, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Usage("rank needs at least two score directories".into()));
    }
    let mut tables = BTreeMap::new();
    for dir in dirs {
        let name = dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| dir.display().to_string());
        if tables.insert(name.clone(), read_scores(dir)?.table).is_some() {
            return Err(CliError::Usage(format!("two score directories are both named {name:?}")));
        }
    }
    let ranks = rank_models(&tables)?;
    let markdown = ranking_markdown(&ranks);
    match out {
        Some(dir) => {
            write_atomic(&dir.join("ranking.md"), markdown.as_bytes())?;
            write_json(&dir.join("ranking.json"), &ranks)?;
        }
        None => stdout(&markdown),
    }
    Ok(Outcome::Clean)
}

fn compare(dir: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let scores = read_scores(dir)?;
    let report = compare_labeled(&scores.table)?;
    let markdown = report.to_markdown();
    match out {
        Some(o) => {
            write_atomic(&o.join("comparison.md"), markdown.as_bytes())?;
            write_json(&o.join("comparison.json"), &json!({"manifest_digest": scores.manifest_digest, "report": report}))?;
        }
        None => stdout(&markdown),
    }
    Ok(Outcome::Clean)
}

fn curate(g: &GlobalArgs, args: &CurateArgs) -> Result<Outcome, CliError> {
    let dataset = fewl::dataset::load_jsonl(&args.dataset)?;
    let fewl_scores = read_scores(&args.fewl_scores)?;
    let baseline_scores = read_scores(&args.baseline_scores)?;
    let fewl = ScoreColumn::new(&fewl_scores.table, "fewl");
    let baseline = ScoreColumn::new(&baseline_scores.table, &args.baseline_column);
    let pool = icl_pool(&dataset, fewl, baseline)?;
    let out = &args.out;
    match args.kind {
        CurateKind::Icl => {
            let config = load_config(g)?;
            let transport: Arc<dyn Transport> = Arc::new(HttpTransport);
            let embedder = build_embedder(&config, &transport, &open_cache(&config)?)?;
            let embeddings = dataset
                .questions
                .iter()
                .map(|q| embedder.embed(&q.text).map(|e| (q.id.clone(), e)))
                .collect::<Result<BTreeMap<_, _>, _>>()
                .map_err(|e| CliError::Provider(e.to_string()))?;
            let prompts = icl_prompts(&dataset, &pool, &embeddings, args.examples)?;
            write_json(&out.join("icl_pool.json"), &json!({"size": pool.len(), "candidates": pool}))?;
            write_atomic(&out.join("icl_prompts.jsonl"), jsonl(&prompts).as_bytes())?;
        }
        CurateKind::Sft => {
            let split = sft_split(&dataset, fewl, args.train_fraction, g.seed.unwrap_or(1))?;
            write_atomic(&out.join("sft_train.jsonl"), split.train_jsonl().as_bytes())?;
            write_atomic(&out.join("sft_test.jsonl"), split.test_jsonl().as_bytes())?;
        }
    }
    if args.emit_judge_prompts {
        write_atomic(&out.join("judge_prompts.jsonl"), jsonl(&judge_prompts(&dataset, &pool)?).as_bytes())?;
    }
    Ok(Outcome::Clean)
}

fn theory(g: &GlobalArgs, args: &TheoryArgs) -> Result<Outcome, CliError> {
    let [a, b, c] = args.sizes[..] else {
        return Err(CliError::Usage("--sizes takes exactly three values".into()));
    };
    if [a, b, c].iter().any(|&m| !(2..=MAX_CHAIN_SIZE).contains(&m)) {
        return Err(CliError::Usage(format!("--sizes values must lie in 2..={MAX_CHAIN_SIZE}, got {a},{b},{c}")));
    }
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let seed = g.seed.unwrap_or(1);
    let kinds: Vec<DivergenceKind> = match args.kind {
        TheoryKind::Tv => vec![DivergenceKind::Tv],
        TheoryKind::Js => vec![DivergenceKind::Js],
        TheoryKind::Kl => vec![DivergenceKind::Kl],
        TheoryKind::All => DivergenceKind::ALL.to_vec(),
    };
    let reports = kinds.iter().map(|&k| verify_data_processing(args.trials, (a, b, c), k, seed)).collect::<Result<Vec<_>, _>>()?;
    let bounds = bound_suite(BOUND_PAIRS, BOUND_WITNESSES, seed)?;
    let tightness = tightness_suite(TIGHTNESS_PAIRS, seed)?;
    let passed = reports.iter().all(|r| r.fraction_satisfied == 1.0 && r.min_gap >= -GAP_TOL)
        && bounds.violations == 0
        && tightness.max_error <= GAP_TOL;
    let report = json!({"data_processing": reports, "bounds": bounds, "tightness": tightness, "passed": passed});
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => stdout(&(serde_json::to_string_pretty(&report).expect("serializable") + "\n")),
    }
    if passed {
        Ok(Outcome::Clean)
    } else {
        Err(CliError::ChecksFailed)
    }
}

fn cache(g: &GlobalArgs, action: CacheAction) -> Result<Outcome, CliError> {
    let dir = match (&g.cache_dir, &g.config) {
        (Some(d), _) => d.clone(),
        (None, Some(_)) => load_config(g)?.run.cache_dir.ok_or_else(|| CliError::Usage("no cache directory configured".into()))?,
        (None, None) => return Err(CliError::Usage("pass --cache-dir or a --config with run.cache_dir".into())),
    };
    let report = match action {
        CacheAction::Stats => {
            let stats = if dir.is_dir() { CacheStore::open_read_only(&dir)?.stats()? } else { Default::default() };
            json!({"dir": dir, "entries": stats.entries, "bytes": stats.bytes})
        }
        CacheAction::Clear => json!({"dir": dir, "removed": CacheStore::open(&dir)?.clear()?}),
    };
    stdout(&format!("{report}\n"));
    Ok(Outcome::Clean)
}
