use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use toolrl_core::data::{evaluate, gen_calculator, gen_fact_lookup, load_dataset, program_for, write_dataset};
use toolrl_core::optim::train::{read_metrics_csv, write_metrics_csv};
use toolrl_core::optim::{Checkpoint, ToyTask, Trainer};
use toolrl_core::reward::conformance::{parse_vectors, run_vectors};
use toolrl_core::rollout::{derive_seed, run_rollout, Origin, PolicyBackend, Script, ScriptedPolicy, TrajectoryExport};
use toolrl_core::tools::interpreter::INTERPRETER_URL_ENV;
use toolrl_core::tools::{
    cache_load, CacheStore, FileStore, FixtureSearch, Gateway, HttpInterpreter, HttpSearchBackend, MemoryStore,
    SearchClient,
};
use toolrl_core::{reward, QAItem, QuestionType};

use crate::config::{PolicyKind, RunConfig};
use crate::{CliError, GenTask};

const TOOL_COLOR: &str = "\x1b[36m";
const RESET: &str = "\x1b[0m";

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

pub fn gen_data(n: usize, seed: u64, out: &Path, task: GenTask) -> Result<(), CliError> {
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let items = match task {
        GenTask::Calculator => gen_calculator(n, seed),
        GenTask::FactLookup => gen_fact_lookup(n, seed).items,
    };
    let file = File::create(out).map_err(|e| usage(format!("cannot write {}: {e}", out.display())))?;
    let mut w = BufWriter::new(file);
    write_dataset(&items, &mut w).and_then(|()| w.flush()).map_err(failed)?;
    println!("wrote {} items to {}", items.len(), out.display());
    Ok(())
}

/// Items and tools for `rollout` and `eval`.
fn workspace(cfg: &RunConfig, force_mock: bool) -> Result<(Vec<QAItem>, Gateway), CliError> {
    let (items, fixtures) = match &cfg.data.dataset {
        Some(path) => (load_dataset(path).map_err(usage)?, FixtureSearch::new()),
        None => match cfg.train.task {
            ToyTask::Calculator => (gen_calculator(cfg.train.n_items, cfg.train.seed), FixtureSearch::new()),
            ToyTask::FactLookup => {
                let set = gen_fact_lookup(cfg.train.n_items, cfg.train.seed);
                (set.items, set.search)
            }
        },
    };
    let tools = &cfg.tools;
    if tools.mock || force_mock {
        return Ok((items, Gateway::mock(fixtures).with_timeout_ms(tools.timeout_ms)));
    }
    let mut gateway = Gateway::new().with_timeout_ms(tools.timeout_ms);
    if let Some(endpoint) = &tools.search_endpoint {
        let store: Arc<dyn CacheStore> = match &tools.cache_path {
            Some(path) => Arc::new(FileStore::open(path).map_err(usage)?),
            None => Arc::new(MemoryStore::new()),
        };
        let backend = HttpSearchBackend::from_env(endpoint.clone(), Duration::from_millis(tools.timeout_ms));
        gateway = gateway.with_search(SearchClient::new(Box::new(backend), store));
    }
    if let Some(url) = tools.interpreter_url.clone().or_else(|| std::env::var(INTERPRETER_URL_ENV).ok()) {
        gateway = gateway.with_code(HttpInterpreter::new(url));
    }
    Ok((items, gateway))
}

/// Searches for fact items, runs the generated program for calculator items,
/// then states the ground truth.
fn reference_policy() -> ScriptedPolicy {
    ScriptedPolicy::new(|item, _, _| {
        let call = match (program_for(&item.question), item.qtype) {
            (Some(program), _) => vec!["<code>".to_string(), program, "</code>".to_string()],
            (None, QuestionType::Fact) => vec!["<search>".to_string(), item.question.clone(), "</search>".to_string()],
            (None, _) => vec![],
        };
        let answer = ["<answer>".to_string(), item.answer.clone(), "</answer>".to_string()];
        Script::once(call.into_iter().chain(answer))
    })
}

fn build_policy(
    cfg: &RunConfig,
    kind: PolicyKind,
    checkpoint: Option<&Path>,
) -> Result<Box<dyn PolicyBackend>, CliError> {
    match kind {
        PolicyKind::Reference => Ok(Box::new(reference_policy())),
        PolicyKind::Toy => {
            let mut trainer = Trainer::<f64>::new(cfg.train.clone()).map_err(usage)?;
            if let Some(path) = checkpoint {
                let ck = Checkpoint::load(path).map_err(usage)?;
                trainer.restore(&ck).map_err(usage)?;
            }
            Ok(Box::new(trainer.policy().clone()))
        }
    }
}

pub struct RolloutArgs {
    pub config: Option<PathBuf>,
    pub item_id: String,
    pub mock_tools: bool,
    pub color: bool,
    pub export: Option<PathBuf>,
    pub policy: Option<PolicyKind>,
    pub seed: Option<u64>,
}

pub fn rollout(args: RolloutArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let (items, gateway) = workspace(&cfg, args.mock_tools)?;
    let item = items
        .iter()
        .find(|i| i.id == args.item_id)
        .ok_or_else(|| usage(format!("no item with id `{}`", args.item_id)))?;
    let policy = build_policy(&cfg, args.policy.unwrap_or(cfg.eval.policy), cfg.eval.checkpoint.as_deref())?;
    let seed = derive_seed(args.seed.unwrap_or(cfg.train.seed), &item.id, 0);
    let t = run_rollout(item, policy.as_ref(), &gateway, &cfg.train.limits(), seed, 0).map_err(failed)?;
    let reward = reward::score(&t, item, cfg.train.budget().map_err(usage)?);

    let mut out = String::new();
    let mut i = 0;
    while i < t.records.len() {
        let origin = t.records[i].origin;
        let run: String = t.records[i..].iter().take_while(|r| r.origin == origin).map(|r| r.text.as_str()).collect();
        i += t.records[i..].iter().take_while(|r| r.origin == origin).count();
        match (origin, args.color) {
            (Origin::Model, _) => out.push_str(&run),
            (Origin::Tool, true) => out.push_str(&format!("{TOOL_COLOR}{run}{RESET}")),
            (Origin::Tool, false) => out.push_str(&format!("[tool]{run}[/tool]")),
        }
    }
    println!("item: {}", item.id);
    println!("question: {}", item.question);
    println!("{out}");
    println!("terminal: {}", t.terminal.as_str());
    println!("tool calls: {}", t.tool_calls.len());
    println!("model tokens: {}", t.model_token_count());
    println!("reward: total={} acc={} length={}", reward.total, reward.r_acc, reward.r_length);

    if let Some(path) = args.export {
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(usage)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &TrajectoryExport::new(&t, Some(reward))).map_err(failed)?;
        w.write_all(b"\n").and_then(|()| w.flush()).map_err(failed)?;
    }
    Ok(())
}

pub fn train(
    config: Option<PathBuf>,
    steps: Option<usize>,
    out_dir: Option<PathBuf>,
    resume: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(config.as_deref())?;
    if let Some(steps) = steps {
        cfg.train.steps = steps;
    }
    let dir = out_dir.unwrap_or(cfg.output.dir.clone());
    fs::create_dir_all(&dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    let csv_path = dir.join("metrics.csv");
    let mut trainer = Trainer::<f64>::new(cfg.train.clone()).map_err(usage)?;
    // Rows from before the checkpoint are kept when resuming into the same directory.
    let mut rows = Vec::new();
    if let Some(path) = resume {
        let ck = Checkpoint::load(&path).map_err(usage)?;
        trainer.restore(&ck).map_err(usage)?;
        if csv_path.exists() {
            let old = File::open(&csv_path).map_err(usage)?;
            rows = read_metrics_csv(old).map_err(|e| usage(format!("{}: {e}", csv_path.display())))?;
            rows.retain(|m| m.step < ck.step);
        }
    }
    let remaining = cfg.train.steps.saturating_sub(trainer.steps_done());
    let every = cfg.output.checkpoint_every;
    let history = trainer
        .run(remaining, |t, m| {
            let done = m.step + 1;
            if every > 0 && done % every == 0 {
                t.checkpoint().save(dir.join(format!("checkpoint-{done:05}.json")))?;
            }
            Ok(())
        })
        .map_err(failed)?;
    rows.extend_from_slice(&history);
    let csv = File::create(&csv_path).map_err(usage)?;
    write_metrics_csv(&rows, BufWriter::new(csv)).map_err(failed)?;
    trainer.checkpoint().save(dir.join("checkpoint.json")).map_err(failed)?;
    match history.last() {
        Some(m) => println!(
            "trained {} steps: reward {:.4} entropy {:.4} length {:.2}",
            history.len(),
            m.reward,
            m.entropy,
            m.length
        ),
        None => println!("no steps to run"),
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

pub fn eval(
    config: Option<PathBuf>,
    policy: Option<PolicyKind>,
    checkpoint: Option<PathBuf>,
    mock_tools: bool,
    json: bool,
) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(config.as_deref())?;
    let (items, gateway) = workspace(&cfg, mock_tools)?;
    let checkpoint = checkpoint.or(cfg.eval.checkpoint.clone());
    let policy = build_policy(&cfg, policy.unwrap_or(cfg.eval.policy), checkpoint.as_deref())?;
    let report = evaluate(policy.as_ref(), &gateway, &items, &cfg.train.limits(), cfg.train.seed);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(failed)?);
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

pub fn score(vectors: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(vectors).map_err(|e| usage(format!("cannot read {}: {e}", vectors.display())))?;
    let parsed = parse_vectors(&text).map_err(usage)?;
    if parsed.is_empty() {
        eprintln!("warning: {} contains no vectors", vectors.display());
        return Ok(());
    }
    let report = run_vectors(&parsed).map_err(usage)?;
    for m in &report.mismatches {
        println!("mismatch: {}: expected {}, got {}", m.label, m.expected, m.actual);
    }
    println!("{} of {} vectors passed", report.total - report.mismatches.len(), report.total);
    if report.passed() {
        Ok(())
    } else {
        Err(failed(format!("{} conformance mismatches", report.mismatches.len())))
    }
}

fn open_store(path: &Path) -> Result<FileStore, CliError> {
    FileStore::open(path).map_err(|e| usage(format!("cannot open cache {}: {e}", path.display())))
}

pub fn cache_inspect(path: &Path) -> Result<(), CliError> {
    let store = open_store(path)?;
    let entries = store.entries().map_err(failed)?;
    println!("entries: {}", entries.len());
    let mut stdout = io::stdout().lock();
    for e in entries {
        writeln!(stdout, "{}\t{}", e.created_at, e.normalized_query).map_err(failed)?;
    }
    Ok(())
}

pub fn cache_clear(path: &Path) -> Result<(), CliError> {
    open_store(path)?.clear().map_err(failed)?;
    println!("cleared {}", path.display());
    Ok(())
}

pub fn cache_import(path: &Path, file: &Path) -> Result<(), CliError> {
    let store = open_store(path)?;
    let n = cache_load(&store, file).map_err(usage)?;
    println!("imported {n} entries");
    Ok(())
}
