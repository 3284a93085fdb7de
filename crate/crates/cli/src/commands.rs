use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use regrepair_core::adapter::{self, BugStore, StoredBug, TestSelection};
use regrepair_core::changes::{
    aggregate_operators, compute_diff, load_annotations as load_operator_annotations, minimize,
    patch_stats, per_bug_csv, summary_csv, ChangeSet, OperatorDistribution, StatsRow,
};
use regrepair_core::coverage::CoverageMap;
use regrepair_core::funnel::{run_funnel, FunnelOptions, FunnelReport, StoreRunner};
use regrepair_core::gateway::{ChatClient, HttpClient, MockClient};
use regrepair_core::metrics::{
    load_annotations, render_report, report_json, summarize, CorrectnessAnnotation, ReportFormat,
    RepairSummary,
};
use regrepair_core::model::{BugCategory, CompileStatus, SnapshotRole, TestId, TestOutcome};
use regrepair_core::repair::{repair_from_store, trace_file_name, RepairOutput, RepairTrace};
use rust_decimal::Decimal;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::{Command, FormatArg, RepairArgs, ReportArgs};

pub fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Info { bug_id, store } => info(&store.store, &bug_id),
        Command::Env { store } => env(&store.store),
        Command::Checkout {
            bug_id,
            role,
            dest,
            store,
        } => checkout(&store.store, &bug_id, role.into(), &dest),
        Command::Compile { workspace } => compile(&workspace),
        Command::Test {
            workspace,
            tests,
            timeout,
        } => test(&workspace, tests, secs(timeout)?),
        Command::Validate {
            store,
            cutoff,
            out,
            timeout,
            parallelism,
        } => validate(&store.store, &cutoff, &out, secs(timeout)?, parallelism),
        Command::ExtractChanges { bug_id, store, out } => {
            extract_changes(&store.store, &bug_id, out.as_deref())
        }
        Command::Repair(args) => repair(args),
        Command::Stats {
            store,
            annotations,
            funnel_report,
            out,
        } => stats(&store.store, annotations.as_deref(), funnel_report.as_deref(), &out),
        Command::Report(args) => report(args),
    }
}

fn secs(s: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(s).map_err(|_| anyhow!("invalid timeout {s}"))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn info(store: &Path, bug_id: &str) -> Result<ExitCode> {
    let bug = BugStore::open(store)?.load(bug_id)?;
    let m = &bug.manifest;
    println!("bug_id: {}", m.bug_id);
    println!("project: {}", m.project_id);
    println!("inducing_commit: {}", m.commits.inducing);
    println!("fixing_commit: {}", m.commits.fixing);
    match m.commits.fixing_date {
        Some(d) => println!("fixing_date: {d}"),
        None => println!("fixing_date: unknown"),
    }
    println!("witness_tests:");
    for t in &m.witness_tests {
        println!("  - {t}");
    }
    let f = &bug.instance.buggy_function;
    println!(
        "buggy_function: {} {} lines {}-{}",
        f.file_path, f.signature, f.line_span.start, f.line_span.end
    );
    let first = m.inducing_message.lines().next().unwrap_or("");
    if !first.is_empty() {
        println!("inducing_message: {first}");
    }
    let snapshots: Vec<&str> = SnapshotRole::ALL
        .iter()
        .filter(|r| bug.snapshot_dir(**r).is_dir())
        .map(|r| r.dir_name())
        .collect();
    println!("snapshots: {}", snapshots.join(", "));
    Ok(ExitCode::SUCCESS)
}

fn env(store: &Path) -> Result<ExitCode> {
    let defaults = ExperimentConfig::with_store(store.to_path_buf());
    println!("regrepair {}", env!("CARGO_PKG_VERSION"));
    println!("store: {}", store.display());
    match BugStore::open(store).and_then(|s| s.bug_ids()) {
        Ok(ids) => println!("bugs: {}", ids.len()),
        Err(e) => println!("bugs: unavailable ({e})"),
    }
    println!("model: {}", defaults.model.model_name);
    let key = &defaults.model.api_key_env;
    let present = std::env::var_os(key).is_some_and(|v| !v.is_empty());
    println!("api key ({key}): {}", if present { "set" } else { "not set" });
    println!(
        "sampling_size: {}, max_conversation_length: {}, test_timeout: {}s",
        defaults.sampling_size, defaults.max_conversation_length, defaults.test_timeout
    );
    Ok(ExitCode::SUCCESS)
}

fn checkout(store: &Path, bug_id: &str, role: SnapshotRole, dest: &Path) -> Result<ExitCode> {
    let bug = BugStore::open(store)?.load(bug_id)?;
    let ws = adapter::checkout(&bug, role, dest)?;
    println!("checked out {} {} into {}", ws.bug_id, role.dir_name(), ws.root.display());
    Ok(ExitCode::SUCCESS)
}

fn compile(workspace: &Path) -> Result<ExitCode> {
    let ws = adapter::open_workspace(workspace)?;
    match adapter::compile(&ws)? {
        CompileStatus::Ok => {
            println!("OK");
            Ok(ExitCode::SUCCESS)
        }
        CompileStatus::CompileFail { message } => {
            println!("COMPILE-FAIL");
            println!("{message}");
            Ok(ExitCode::from(1))
        }
    }
}

fn outcome_line(id: &TestId, o: &TestOutcome) -> String {
    match o {
        TestOutcome::Pass | TestOutcome::Timeout => format!("{} {id}", o.label()),
        TestOutcome::FunctionalFail { error_type, message } => {
            format!("{} {id}: {error_type}: {message}", o.label())
        }
        TestOutcome::CompileFail { message } | TestOutcome::Crash { message } => {
            format!("{} {id}: {message}", o.label())
        }
    }
}

fn test(workspace: &Path, tests: Vec<String>, timeout: Duration) -> Result<ExitCode> {
    let ws = adapter::open_workspace(workspace)?;
    let selection = if tests.is_empty() {
        TestSelection::All
    } else {
        TestSelection::only(tests)
    };
    let results = adapter::run_tests(&ws, &selection, timeout)?;
    for (id, o) in &results {
        println!("{}", outcome_line(id, o));
    }
    let all_pass = results.values().all(TestOutcome::is_pass);
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn validate(
    store: &Path,
    cutoff: &str,
    out: &Path,
    timeout: Duration,
    parallelism: usize,
) -> Result<ExitCode> {
    let cutoff = adapter::parse_commit_date(cutoff).map_err(|e| anyhow!(e))?;
    let store = BugStore::open(store)?;
    let candidates: Vec<_> = store
        .load_all()?
        .into_iter()
        .map(|b| b.instance)
        .collect();
    let runner = StoreRunner::new(store);
    let report = run_funnel(
        &candidates,
        cutoff,
        &runner,
        FunnelOptions {
            timeout,
            parallelism: parallelism.max(1),
        },
    );
    write(out, pretty(&report)?)?;
    print_funnel(&report);
    Ok(ExitCode::SUCCESS)
}

fn print_funnel(r: &FunnelReport) {
    println!("candidates: {}", r.input);
    println!("rejected (date): {}", r.rejected_date);
    println!("rejected (executability): {}", r.rejected_executability);
    println!("rejected (validity): {}", r.rejected_validity);
    println!("rejected (utility): {}", r.rejected_utility);
    println!("confirmed: {}", r.confirmed);
    println!(
        "counts: {}/{}/{}/{}/{}/{}",
        r.input,
        r.rejected_date,
        r.rejected_executability,
        r.rejected_validity,
        r.rejected_utility,
        r.confirmed
    );
    let s = r.survivors();
    println!("survivors: {} -> {} -> {} -> {} -> {}", s[0], s[1], s[2], s[3], s[4]);
}

fn coverage_of(bug: &StoredBug, role: SnapshotRole) -> Result<CoverageMap> {
    let dir = tempfile::tempdir()?;
    let ws = adapter::checkout(bug, role, &dir.path().join("ws"))?;
    Ok(adapter::collect_coverage(&ws, &bug.instance.witness_tests)?)
}

fn change_report(bug: &StoredBug, old: SnapshotRole, new: SnapshotRole) -> Result<serde_json::Value> {
    let changes = compute_diff(
        &adapter::snapshot_tree(bug, old)?,
        &adapter::snapshot_tree(bug, new)?,
    );
    for path in &changes.skipped_binary {
        log::warn!("{}: skipped binary file {path}", bug.instance.bug_id);
    }
    let minimized = match (coverage_of(bug, old), coverage_of(bug, new)) {
        (Ok(oc), Ok(nc)) => Some(minimize(&changes, &oc, &nc)),
        (Err(e), _) | (_, Err(e)) => {
            log::warn!("{}: no coverage, change set left unminimized: {e:#}", bug.instance.bug_id);
            None
        }
    };
    Ok(json!({
        "from": old,
        "to": new,
        "stats": patch_stats(&changes, None),
        "changes": changes,
        "minimized": minimized,
    }))
}

fn extract_changes(store: &Path, bug_id: &str, out: Option<&Path>) -> Result<ExitCode> {
    let bug = BugStore::open(store)?.load(bug_id)?;
    let doc = json!({
        "bug_id": bug.instance.bug_id,
        "inducing": change_report(&bug, SnapshotRole::PreInducing, SnapshotRole::Inducing)?,
        "fixing": change_report(&bug, SnapshotRole::PreFixing, SnapshotRole::Fixing)?,
    });
    let text = pretty(&doc)?;
    match out {
        Some(p) => write(p, text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn developer_patch(bug: &StoredBug) -> Result<ChangeSet> {
    Ok(compute_diff(
        &adapter::snapshot_tree(bug, SnapshotRole::PreFixing)?,
        &adapter::snapshot_tree(bug, SnapshotRole::Fixing)?,
    ))
}

fn operators_csv(dist: &OperatorDistribution) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["operator".to_string(), "patches".to_string()];
    header.extend(BugCategory::ALL.iter().map(|c| c.as_str().to_string()));
    w.write_record(&header)?;
    for (label, count) in &dist.overall {
        let mut row = vec![label.clone(), count.to_string()];
        row.extend(BugCategory::ALL.iter().map(|c| dist.count_in(*c, label).to_string()));
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn stats(
    store: &Path,
    annotations: Option<&Path>,
    funnel_report: Option<&Path>,
    out: &Path,
) -> Result<ExitCode> {
    let store = BugStore::open(store)?;
    let mut ids = store.bug_ids()?;
    if let Some(p) = funnel_report {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let report: FunnelReport = serde_json::from_str(&text)?;
        let confirmed = report.confirmed_ids();
        ids.retain(|id| confirmed.contains(&id.as_str()));
    }
    let ops = match annotations {
        Some(p) => load_operator_annotations(p)?,
        None => Vec::new(),
    };
    let methods: BTreeMap<&str, Option<u32>> = ops
        .iter()
        .map(|a| (a.bug_id.as_str(), a.methods_modified))
        .collect();
    let mut rows = Vec::new();
    for id in &ids {
        let bug = store.load(id)?;
        let cs = developer_patch(&bug)?;
        let m = methods.get(id.as_str()).copied().flatten();
        rows.push(StatsRow {
            bug_id: id.clone(),
            stats: patch_stats(&cs, m),
        });
    }
    write(&out.join("per_bug.csv"), per_bug_csv(&rows)?)?;
    let summary = summary_csv(&rows)?;
    write(&out.join("summary.csv"), &summary)?;
    print!("{summary}");
    if annotations.is_some() {
        let dist = aggregate_operators(&ops)?;
        write(&out.join("operators.json"), pretty(&dist)?)?;
        write(&out.join("operators.csv"), operators_csv(&dist)?)?;
        for (label, count) in dist.ranking() {
            println!("{label}: {count}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_correctness(path: Option<&Path>) -> Result<Vec<CorrectnessAnnotation>> {
    Ok(match path {
        Some(p) => load_annotations(p)?,
        None => Vec::new(),
    })
}

fn write_output(out: &Path, o: &RepairOutput) -> Result<()> {
    write(&out.join(trace_file_name(&o.trace.bug_id)), pretty(&o.trace)?)?;
    write(&out.join(&o.trace.message_log), o.message_log())?;
    for (rel, diff) in &o.patches {
        write(&out.join(rel), diff)?;
    }
    Ok(())
}

fn summary_doc(summary: &RepairSummary, traces: &[RepairTrace]) -> serde_json::Value {
    let mut doc = report_json(std::slice::from_ref(summary));
    let input: u64 = traces.iter().map(|t| t.input_tokens).sum();
    let output: u64 = traces.iter().map(|t| t.output_tokens).sum();
    let bugs: Vec<_> = traces
        .iter()
        .map(|t| {
            json!({
                "bug_id": t.bug_id,
                "final": t.final_outcome,
                "calls": t.calls.len(),
                "total_cost": t.total_cost.normalize().to_string(),
            })
        })
        .collect();
    doc["input_tokens"] = input.into();
    doc["output_tokens"] = output.into();
    doc["total_cost"] = summary.total_cost.normalize().to_string().into();
    doc["bugs"] = bugs.into();
    doc
}

fn repair(args: RepairArgs) -> Result<ExitCode> {
    let mut cfg = match (&args.config, &args.store) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(s)) => ExperimentConfig::with_store(s.clone()),
        (None, None) => bail!("either --config or --store is required"),
    };
    if let (Some(_), Some(s)) = (&args.config, &args.store) {
        cfg.bug_store_path = s.clone();
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s.into();
    }
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if !args.bugs.is_empty() {
        cfg.bug_filter = Some(args.bugs.clone());
    }
    cfg.validate()?;

    let store = BugStore::open(&cfg.bug_store_path)?;
    let ids = match &cfg.bug_filter {
        Some(f) => f.clone(),
        None => store.bug_ids()?,
    };
    let bugs = ids
        .iter()
        .map(|id| store.load(id))
        .collect::<Result<Vec<_>, _>>()?;
    let annotations = load_correctness(args.annotations.as_deref())?;

    let client: Box<dyn ChatClient> = match &args.mock {
        Some(p) => Box::new(MockClient::from_file(p)?),
        None => Box::new(HttpClient::from_env(&cfg.model)?),
    };
    let rc = cfg.repair_config();
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<RepairTrace>>> = bugs.iter().map(|_| Mutex::new(None)).collect();
    let write_err: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    let workers = cfg.parallelism.clamp(1, bugs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(bug) = bugs.get(i) else { break };
                let output = repair_from_store(bug, client.as_ref(), &rc);
                log::info!("{}: {:?}", bug.instance.bug_id, output.trace.final_outcome);
                if output.trace.is_fatal() {
                    stop.store(true, Ordering::SeqCst);
                }
                if let Err(e) = write_output(&args.out, &output) {
                    stop.store(true, Ordering::SeqCst);
                    write_err.lock().expect("error slot").get_or_insert(e);
                }
                *slots[i].lock().expect("slot") = Some(output.trace);
            });
        }
    });
    if let Some(e) = write_err.into_inner().expect("error slot") {
        return Err(e);
    }
    let traces: Vec<RepairTrace> = slots
        .into_iter()
        .filter_map(|m| m.into_inner().expect("slot"))
        .collect();

    let dataset = (bugs.len() as u64).max(1);
    let summary = summarize(&cfg.label(), &traces, &annotations, dataset)?;
    write(&args.out.join("summary.json"), pretty(&summary_doc(&summary, &traces))?)?;
    write(
        &args.out.join("summary.csv"),
        render_report(std::slice::from_ref(&summary), ReportFormat::Csv)?,
    )?;
    println!(
        "{}: {} bugs, plausible {} ({}), correct {} ({}), precision {}, cost {}",
        summary.method_label,
        traces.len(),
        summary.plausible,
        summary.pr_display(),
        summary.correct,
        summary.cr_display(),
        summary.precision_display(),
        summary.total_cost.normalize()
    );
    if let Some(t) = traces.iter().find(|t| t.is_fatal()) {
        eprintln!("error: fatal gateway failure on {}; run stopped", t.bug_id);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn read_traces(dir: &Path) -> Result<Vec<RepairTrace>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace-") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn parse_counts(spec: &str, dataset: u64) -> Result<RepairSummary> {
    let (label, counts) = spec
        .rsplit_once('=')
        .ok_or_else(|| anyhow!("expected LABEL=PLAUSIBLE/CORRECT, got `{spec}`"))?;
    let (p, c) = counts
        .split_once('/')
        .ok_or_else(|| anyhow!("expected PLAUSIBLE/CORRECT, got `{counts}`"))?;
    let (p, c): (u64, u64) = (p.trim().parse()?, c.trim().parse()?);
    if c > p {
        bail!("{label}: correct ({c}) exceeds plausible ({p})");
    }
    Ok(RepairSummary::new(label, p, c, dataset))
}

/// `<dir>/annotations.json` holds the correctness judgements of that run.
fn run_summary(spec: &str, dataset: Option<u64>) -> Result<(RepairSummary, Decimal)> {
    let (label, dir) = match spec.split_once('=') {
        Some((l, d)) => (l.to_string(), PathBuf::from(d)),
        None => {
            let d = PathBuf::from(spec);
            let l = d
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (l, d)
        }
    };
    let traces = read_traces(&dir)?;
    let ann_path = dir.join("annotations.json");
    let annotations = load_correctness(ann_path.is_file().then_some(ann_path.as_path()))?;
    let n = dataset.unwrap_or(traces.len() as u64);
    let s = summarize(&label, &traces, &annotations, n)?;
    let cost = traces.iter().map(|t| t.total_cost).sum();
    Ok((s, cost))
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let mut summaries = Vec::new();
    for spec in &args.runs {
        summaries.push(run_summary(spec, args.dataset_size)?.0);
    }
    for spec in &args.counts {
        let n = args
            .dataset_size
            .ok_or_else(|| anyhow!("--counts needs --dataset-size"))?;
        summaries.push(parse_counts(spec, n)?);
    }
    if summaries.is_empty() {
        bail!("nothing to report: give run directories or --counts");
    }
    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    print!("{}", render_report(&summaries, format)?);
    if let Some(out) = &args.out {
        write(&out.join("summary.csv"), render_report(&summaries, ReportFormat::Csv)?)?;
        write(&out.join("summary.json"), pretty(&report_json(&summaries))?)?;
    }
    Ok(ExitCode::SUCCESS)
}
