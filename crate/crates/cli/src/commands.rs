//! Command implementations. Every command returns a process exit code with a
//! stable contract: 0 success, 1 error, 2 budget exhausted, 3 incomplete
//! grading. `Err` from these functions maps to exit 1 in `main`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use chipbench_core::agent::{run_task, trajectory_jsonl, TaskRunSummary};
use chipbench_core::eval::{
    collect_evidence, evaluate_task, review_bundle, JudgeConfig, TaskEvaluation,
};
use chipbench_core::kb::{CorpusName, Document, Scope};
use chipbench_core::scoring::{
    aggregate_suite, format_task_percent, render_report, score_task, ReportFormat, RunStatus,
    TaskScore,
};
use chipbench_core::task::{load_suite, load_task, Difficulty, TaskSpec};

use crate::config::RunConfig;
use crate::manifest::{ManifestEntry, RunManifest};
use crate::matrix::load_matrix;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_BUDGET: u8 = 2;
pub const EXIT_INCOMPLETE: u8 = 3;

/// One graded result on disk: enough context to rebuild suite reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model: String,
    pub difficulty: Difficulty,
    pub score: TaskScore,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn status_exit(status: RunStatus) -> u8 {
    match status {
        RunStatus::Completed => EXIT_OK,
        RunStatus::BudgetExhausted => EXIT_BUDGET,
        RunStatus::Error => EXIT_ERROR,
    }
}

/// `run <task-dir>`: provision a workspace and drive the agent loop.
pub fn cmd_run(task_dir: &Path, config: &RunConfig, out_dir: &Path) -> Result<u8> {
    let task = load_task(task_dir)?;
    let run_dir = out_dir.join(&task.id);
    let workspace = run_dir.join("workspace");
    std::fs::create_dir_all(&workspace)?;
    let sandbox = config.sandbox(&workspace)?;
    let backend = config.backend(&config.agent)?;
    let agent_config = config.agent_config(&task.limits)?;
    let (state, summary) = run_task(&task, &agent_config, &sandbox, backend.as_ref())?;
    std::fs::write(run_dir.join("trajectory.jsonl"), trajectory_jsonl(&state))?;
    write_json(&run_dir.join("summary.json"), &summary)?;
    println!(
        "task {}: {:?} after {} step(s), cost ${}",
        task.id, summary.status, summary.steps, summary.cost_usd
    );
    if summary.status == RunStatus::Error {
        eprintln!("run ended in error; see trajectory for the failing step");
    }
    Ok(status_exit(summary.status))
}

fn grade(
    task: &TaskSpec,
    workspace: &Path,
    config: &RunConfig,
) -> Result<(TaskEvaluation, JudgeConfig)> {
    let backend = config.backend(&config.judge)?;
    let judge_config = JudgeConfig::new(RunConfig::profile(&config.judge));
    let evaluation = evaluate_task(task, workspace, backend.as_ref(), &judge_config)?;
    Ok((evaluation, judge_config))
}

fn run_accounting(workspace: &Path) -> (u64, rust_decimal::Decimal, RunStatus) {
    let summary_path = workspace.parent().map(|p| p.join("summary.json"));
    if let Some(path) = summary_path {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(summary) = serde_json::from_str::<TaskRunSummary>(&text) {
                return (summary.steps, summary.cost_usd, summary.status);
            }
        }
    }
    (0, rust_decimal::Decimal::ZERO, RunStatus::Completed)
}

/// `eval <task-dir> --workspace <dir>`: grade a finished workspace.
pub fn cmd_eval(
    task_dir: &Path,
    workspace: &Path,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<u8> {
    let task = load_task(task_dir)?;
    let (evaluation, judge_config) = grade(&task, workspace, config)?;
    std::fs::create_dir_all(out_dir)?;

    let evidence = collect_evidence(workspace, &judge_config)?;
    let packet = review_bundle(&task, Some(&evidence), &evaluation);
    std::fs::write(out_dir.join(format!("{}.review.md", task.id)), packet)?;

    let ungraded = evaluation.ungraded();
    if !ungraded.is_empty() {
        eprintln!("grading incomplete; ungraded milestones:");
        for (id, reason) in &ungraded {
            eprintln!("  {id}: {reason}");
        }
        write_json(
            &out_dir.join(format!("{}.incomplete.json", task.id)),
            &ungraded
                .iter()
                .map(|(id, reason)| (id.to_string(), reason.to_string()))
                .collect::<Vec<_>>(),
        )?;
        return Ok(EXIT_INCOMPLETE);
    }

    let results = evaluation.completed_results().expect("no ungraded left");
    let (steps, cost, status) = run_accounting(workspace);
    let score = score_task(&task, results, steps, cost, status)?;
    println!("{}", format_task_percent(score.final_percent));
    let record = ScoreRecord {
        model: config.agent.model_id.clone(),
        difficulty: task.difficulty,
        score,
    };
    write_json(&out_dir.join(format!("{}.score.json", task.id)), &record)?;
    Ok(EXIT_OK)
}

fn write_suite_reports(
    scores: &BTreeMap<String, BTreeMap<String, TaskScore>>,
    difficulties: &BTreeMap<String, Difficulty>,
    out_dir: &Path,
) -> Result<String> {
    let report = aggregate_suite(scores, difficulties)?;
    std::fs::create_dir_all(out_dir)?;
    let table = render_report(&report, ReportFormat::Table);
    std::fs::write(out_dir.join("suite_report.txt"), &table)?;
    std::fs::write(
        out_dir.join("suite_report.csv"),
        render_report(&report, ReportFormat::Csv),
    )?;
    std::fs::write(
        out_dir.join("suite_report.json"),
        render_report(&report, ReportFormat::Json),
    )?;
    Ok(table)
}

/// `suite <suite-dir>`: run and grade every (task, model) pair, or inject a
/// pre-graded score matrix and just aggregate.
pub fn cmd_suite(
    suite_dir: &Path,
    models: &[String],
    scores_csv: Option<&Path>,
    force: bool,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<u8> {
    if let Some(csv) = scores_csv {
        let matrix = load_matrix(csv)?;
        let table = write_suite_reports(&matrix.scores, &matrix.difficulties, out_dir)?;
        print!("{table}");
        return Ok(EXIT_OK);
    }

    let tasks = load_suite(suite_dir)?;
    if tasks.is_empty() {
        bail!("suite {} contains no tasks", suite_dir.display());
    }
    let models: Vec<String> = if models.is_empty() {
        vec![config.agent.model_id.clone()]
    } else {
        models.to_vec()
    };

    let mut manifest = match RunManifest::load(out_dir)? {
        Some(m) if m.config_hash == config.config_hash => m,
        Some(_) if force => RunManifest {
            config_hash: config.config_hash.clone(),
            entries: BTreeMap::new(),
        },
        Some(_) => bail!(
            "existing manifest in {} was produced by a different config; \
             pass --force to discard it and re-run",
            out_dir.display()
        ),
        None => RunManifest {
            config_hash: config.config_hash.clone(),
            entries: BTreeMap::new(),
        },
    };

    // pending (model, task) pairs, skipping completed ones
    let pending: Vec<(String, TaskSpec)> = models
        .iter()
        .flat_map(|m| tasks.iter().map(move |t| (m.clone(), t.clone())))
        .filter(|(m, t)| {
            manifest
                .entries
                .get(&RunManifest::key(m, &t.id))
                .map_or(true, |e| !e.is_done())
        })
        .collect();

    let results: Mutex<Vec<(String, String, ManifestEntry)>> = Mutex::new(Vec::new());
    let queue: Mutex<std::collections::VecDeque<(String, TaskSpec)>> =
        Mutex::new(pending.into_iter().collect());
    let worker = || -> Result<()> {
        loop {
            let next = queue.lock().expect("queue lock").pop_front();
            let Some((model, task)) = next else {
                return Ok(());
            };
            let entry = run_and_grade_pair(&model, &task, config, out_dir)?;
            results
                .lock()
                .expect("results lock")
                .push((model, task.id.clone(), entry));
        }
    };
    if config.parallelism <= 1 {
        worker()?;
    } else {
        std::thread::scope(|scope| -> Result<()> {
            let handles: Vec<_> = (0..config.parallelism).map(|_| scope.spawn(worker)).collect();
            for handle in handles {
                handle.join().expect("suite worker panicked")?;
            }
            Ok(())
        })?;
    }

    for (model, task_id, entry) in results.into_inner().expect("results lock") {
        manifest.entries.insert(RunManifest::key(&model, &task_id), entry);
    }
    manifest.save(out_dir)?;

    // aggregate whatever is fully graded
    let mut scores: BTreeMap<String, BTreeMap<String, TaskScore>> = BTreeMap::new();
    let mut difficulties = BTreeMap::new();
    let mut failed_pairs = Vec::new();
    for model in &models {
        for task in &tasks {
            let key = RunManifest::key(model, &task.id);
            let entry = manifest.entries.get(&key);
            let score_path = entry.and_then(|e| e.score.as_ref());
            match score_path {
                Some(rel) => {
                    let text = std::fs::read_to_string(out_dir.join(rel))?;
                    let record: ScoreRecord = serde_json::from_str(&text)?;
                    difficulties.insert(task.id.clone(), record.difficulty);
                    scores
                        .entry(model.clone())
                        .or_default()
                        .insert(task.id.clone(), record.score);
                }
                None => failed_pairs.push(key),
            }
        }
    }
    if failed_pairs.is_empty() {
        let table = write_suite_reports(&scores, &difficulties, out_dir)?;
        print!("{table}");
        Ok(EXIT_OK)
    } else {
        eprintln!("pairs without a final score: {}", failed_pairs.join(", "));
        Ok(EXIT_ERROR)
    }
}

fn run_and_grade_pair(
    model: &str,
    task: &TaskSpec,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<ManifestEntry> {
    let pair_dir = out_dir.join("runs").join(model).join(&task.id);
    let workspace = pair_dir.join("workspace");
    std::fs::create_dir_all(&workspace)?;
    let sandbox = config.sandbox(&workspace)?;
    let backend = config.backend(&config.agent)?;
    let agent_config = config.agent_config(&task.limits)?;
    let (state, summary) = run_task(task, &agent_config, &sandbox, backend.as_ref())?;
    let trajectory_path = pair_dir.join("trajectory.jsonl");
    std::fs::write(&trajectory_path, trajectory_jsonl(&state))?;
    write_json(&pair_dir.join("summary.json"), &summary)?;

    let (evaluation, judge_config) = grade(task, &workspace, config)?;
    let evidence = collect_evidence(&workspace, &judge_config)?;
    std::fs::write(
        pair_dir.join("review.md"),
        review_bundle(task, Some(&evidence), &evaluation),
    )?;

    let rel = |p: &Path| p.strip_prefix(out_dir).unwrap_or(p).to_path_buf();
    let mut entry = ManifestEntry {
        status: match summary.status {
            RunStatus::Completed => "completed".into(),
            RunStatus::BudgetExhausted => "budget_exhausted".into(),
            RunStatus::Error => "error".into(),
        },
        workspace: rel(&workspace),
        trajectory: rel(&trajectory_path),
        score: None,
    };
    match evaluation.completed_results() {
        Some(results) => {
            let score = score_task(task, results, summary.steps, summary.cost_usd, summary.status)?;
            let record = ScoreRecord {
                model: model.to_string(),
                difficulty: task.difficulty,
                score,
            };
            let score_path = pair_dir.join("score.json");
            write_json(&score_path, &record)?;
            entry.score = Some(rel(&score_path));
        }
        None => {
            entry.status = "incomplete_grading".into();
        }
    }
    Ok(entry)
}

pub fn parse_corpus(name: &str) -> CorpusName {
    match name {
        "errors" => CorpusName::Errors,
        "ips" => CorpusName::Ips,
        "docs" => CorpusName::Docs,
        other => CorpusName::Custom(other.to_string()),
    }
}

fn store_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config
        .kb
        .store_dir
        .as_ref()
        .context("kb.store_dir is not set in the config")?;
    Ok(config.resolve(dir))
}

/// `kb ingest --corpus <name> <docs-dir>`: chunk and index text/markdown
/// documents. A `<name>.meta.json` sidecar next to a document supplies its
/// metadata map.
pub fn cmd_kb_ingest(corpus: &str, docs_dir: &Path, config: &RunConfig) -> Result<u8> {
    let dir = store_dir(config)?;
    let embedder = config.embedder();
    let mut store = if dir.join("meta.json").is_file() {
        chipbench_core::kb::load_store(&dir, embedder)?
    } else {
        config.new_store()
    };

    let mut documents = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(docs_dir)
        .with_context(|| format!("reading docs dir {}", docs_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("txt") | Some("md")
            )
        })
        .collect();
    entries.sort();
    for path in entries {
        let body = std::fs::read_to_string(&path)?;
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let title = body
            .lines()
            .find(|l| !l.trim().is_empty())
            .unwrap_or(&doc_id)
            .trim_start_matches('#')
            .trim()
            .to_string();
        let sidecar = path.with_extension("meta.json");
        let metadata: BTreeMap<String, String> = if sidecar.is_file() {
            serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
                .with_context(|| format!("parsing sidecar {}", sidecar.display()))?
        } else {
            BTreeMap::new()
        };
        documents.push(Document {
            doc_id,
            title,
            body,
            metadata,
        });
    }
    if documents.is_empty() {
        bail!("no .txt or .md documents found in {}", docs_dir.display());
    }

    let before = store.all_chunks().len();
    let report = store.ingest(parse_corpus(corpus), &documents)?;
    let after = store.all_chunks().len();
    chipbench_core::kb::persist_store(&store, &dir)?;
    println!(
        "ingested {} doc(s), {} new chunk(s) ({} total in store)",
        report.docs,
        after.saturating_sub(before),
        after
    );
    for (doc, reason) in &report.skipped {
        eprintln!("skipped {doc}: {reason}");
    }
    Ok(EXIT_OK)
}

/// `kb search --corpus <name> <query>`: print ranked hits with scores.
pub fn cmd_kb_search(corpus: &str, query: &str, k: usize, config: &RunConfig) -> Result<u8> {
    let dir = store_dir(config)?;
    let store = chipbench_core::kb::load_store(&dir, config.embedder())?;
    let scope = if corpus == "all" {
        Scope::All
    } else {
        Scope::Corpus(parse_corpus(corpus))
    };
    let hits = store.search(&scope, query, k)?;
    if hits.is_empty() {
        println!("no results");
        return Ok(EXIT_OK);
    }
    for hit in hits {
        let excerpt: String = hit.chunk.text.chars().take(120).collect();
        println!(
            "{:>2}. {:.6}  {}  {}",
            hit.rank,
            hit.score,
            hit.chunk.chunk_id,
            excerpt.replace('\n', " ")
        );
    }
    Ok(EXIT_OK)
}

/// `report <scores-dir>`: re-render suite reports from score records on disk.
pub fn cmd_report(dir: &Path, format: ReportFormat) -> Result<u8> {
    let mut scores: BTreeMap<String, BTreeMap<String, TaskScore>> = BTreeMap::new();
    let mut difficulties = BTreeMap::new();
    for entry in walkdir_sorted(dir)? {
        if entry.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&entry)?;
        let Ok(record) = serde_json::from_str::<ScoreRecord>(&text) else {
            continue; // not a score record (e.g. manifest.json, summary.json)
        };
        difficulties.insert(record.score.task_id.clone(), record.difficulty);
        scores
            .entry(record.model.clone())
            .or_default()
            .insert(record.score.task_id.clone(), record.score);
    }
    if scores.is_empty() {
        bail!("no score records found under {}", dir.display());
    }
    let report = aggregate_suite(&scores, &difficulties)?;
    print!("{}", render_report(&report, format));
    Ok(EXIT_OK)
}

fn walkdir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", dir.display()))?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}
