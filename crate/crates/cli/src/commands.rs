//! One function per subcommand. Each returns the failure it should exit with.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::json;

use policyforge::cache::{format_outcomes, outcome_mask, parse_blocks, Block, CacheState};
use policyforge::learn::{learn, LearnConfig, LearnError};
use policyforge::mbl::{
    parse, run_batch, BackendConfig, CacheBackend, MblExpr, NoisyBackend, QueryStore,
    SimulatedBackend, Voting,
};
use policyforge::oracle::Polca;
use policyforge::policy::{
    build_policy, equivalent, format_word, from_json, to_dot, to_json, Equivalence, Policy,
};
use policyforge::synth::{
    check_explanation, parse_program, program_from_json, program_to_json, program_to_policy,
    synthesize as run_synthesis, SynthError, SynthStatus, TemplateProgram,
};

use crate::config::RunConfig;
use crate::{Failure, Outcome as CmdOutcome};

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// The zoo policy named by the configuration.
pub fn reference_policy(cfg: &RunConfig) -> CmdOutcome<Policy> {
    let kind = cfg.kind()?;
    build_policy(kind, cfg.assoc).map_err(|e| Failure::usage(anyhow!("{e}")))
}

pub fn load_automaton(path: &Path) -> CmdOutcome<Policy> {
    let text = read(path)?;
    from_json(&text).map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))
}

/// Reads a program in text form, or JSON when the file starts with `{`.
pub fn load_program(path: &Path) -> CmdOutcome<TemplateProgram> {
    let text = read(path)?;
    let parsed = if text.trim_start().starts_with('{') {
        program_from_json(&text)
    } else {
        parse_program(&text)
    };
    parsed.map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))
}

fn backend_config(cfg: &RunConfig) -> anyhow::Result<BackendConfig> {
    Ok(BackendConfig {
        assoc: cfg.assoc,
        alphabet: Block::alphabet(cfg.alphabet_size()),
        reset: cfg.reset_spec()?,
        repetitions: cfg.repetitions,
    })
}

/// The simulated cache, noisy when `noise > 0`.
fn simulated(cfg: &RunConfig, bcfg: &BackendConfig) -> CmdOutcome<Box<dyn CacheBackend>> {
    let kind = cfg.kind()?;
    let policy = Arc::new(reference_policy(cfg)?);
    let sim = SimulatedBackend::from_config(kind.name(), policy, bcfg)
        .map_err(|e| Failure::usage(anyhow!("{e}")))?;
    Ok(if cfg.noise > 0.0 {
        Box::new(NoisyBackend::new(sim, cfg.noise, cfg.seed))
    } else {
        Box::new(sim)
    })
}

/// Where the query memo lives: the environment variable wins over the
/// configured directory.
pub fn cache_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(crate::config::CACHE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.cache_dir.clone(),
    }
}

/// Parses a batch: one expression per line, `#` starts a comment. All
/// errors are collected with their line numbers.
pub fn parse_batch(text: &str) -> Result<Vec<(usize, MblExpr)>, Vec<String>> {
    let mut exprs = Vec::new();
    let mut errors = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match parse(line) {
            Ok(e) => exprs.push((k + 1, e)),
            Err(e) => errors.push(format!("line {}: {e}", k + 1)),
        }
    }
    if errors.is_empty() {
        Ok(exprs)
    } else {
        Err(errors)
    }
}

#[derive(Serialize)]
struct QueryResult {
    query: String,
    outcomes: String,
    mask: String,
}

pub fn query(cfg: &RunConfig, file: Option<&Path>) -> CmdOutcome {
    let started = Instant::now();
    let bcfg = backend_config(cfg)?;
    let mut backend = simulated(cfg, &bcfg)?;
    let store_dir = cache_dir(cfg);
    let store = QueryStore::open(&store_dir)
        .map_err(|e| Failure::usage(anyhow!("memo store {}: {e}", store_dir.display())))?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut results = Vec::new();
    let mut backend_queries = 0;
    let mut cached = 0;
    let mut answer = |exprs: &[MblExpr], out: &mut dyn Write| -> CmdOutcome {
        let report = run_batch(
            exprs,
            &bcfg.alphabet,
            &mut *backend,
            &store,
            cfg.repetitions,
        )
        .map_err(|e| Failure::inconsistent(anyhow!("{e}")))?;
        backend_queries += report.backend_queries;
        for row in report.rows {
            cached += usize::from(row.cached);
            let outcomes = format_outcomes(&row.outcomes);
            let mask = outcome_mask(&row.outcomes);
            writeln!(out, "{} → {outcomes} ({mask})", row.query).map_err(anyhow::Error::from)?;
            results.push(QueryResult {
                query: row.query,
                outcomes,
                mask,
            });
        }
        Ok(())
    };
    let mut failed = 0;
    match file {
        Some(path) => {
            let text = read(path)?;
            let exprs = parse_batch(&text).map_err(|errors| {
                Failure::usage(anyhow!("{}: {}", path.display(), errors.join("; ")))
            })?;
            let exprs: Vec<MblExpr> = exprs.into_iter().map(|(_, e)| e).collect();
            answer(&exprs, &mut out)?;
        }
        None => {
            for (k, line) in io::stdin().lock().lines().enumerate() {
                let line = line.map_err(anyhow::Error::from)?;
                let text = line.split('#').next().unwrap_or("").trim();
                if text.is_empty() {
                    continue;
                }
                match parse(text) {
                    Ok(expr) => answer(&[expr], &mut out)?,
                    Err(e) => {
                        failed += 1;
                        eprintln!("line {}: {e}", k + 1);
                    }
                }
            }
        }
    }
    let dir = cfg.run_dir()?;
    write_json(&dir, "config.json", cfg)?;
    write_json(&dir, "results.json", &results)?;
    let report = json!({
        "queries": results.len(),
        "cached": cached,
        "backend_queries": backend_queries,
        "memo_store": store.path().map(|p| p.display().to_string()),
        "parse_errors": failed,
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&dir, "report.json", &report)?;
    eprintln!(
        "{} queries, {backend_queries} backend runs; wrote {}",
        results.len(),
        dir.display()
    );
    if failed > 0 {
        return Err(Failure::usage(anyhow!("{failed} lines failed to parse")));
    }
    Ok(())
}

fn learn_failure(e: LearnError) -> Failure {
    match e {
        LearnError::Budget(_) => Failure::budget(e),
        _ => Failure::inconsistent(e),
    }
}

pub fn learn_cmd(cfg: &RunConfig) -> CmdOutcome {
    let bcfg = backend_config(cfg)?;
    let reference = reference_policy(cfg)?;
    let mut backend = simulated(cfg, &bcfg)?;
    if cfg.repetitions > 1 {
        backend = Box::new(
            Voting::new(backend, cfg.repetitions).map_err(|e| Failure::usage(anyhow!("{e}")))?,
        );
    }
    let mut polca = Polca::with_alphabet(backend, bcfg.initial_content(), bcfg.alphabet.clone());
    let defaults = LearnConfig::default();
    let lcfg = LearnConfig {
        k: cfg.k,
        max_queries: cfg.budget.unwrap_or(defaults.max_queries),
        timeout: cfg.timeout().or(defaults.timeout),
    };
    let hyp = learn(&mut polca, &lcfg).map_err(learn_failure)?;
    let matches = equivalent(&hyp.policy, &reference)
        .map(|e| e.is_equivalent())
        .unwrap_or(false);
    let dir = cfg.run_dir()?;
    write_json(&dir, "config.json", cfg)?;
    write_file(&dir, "policy.json", &to_json(&hyp.policy))?;
    write_file(&dir, "policy.dot", &to_dot(&hyp.policy))?;
    let report = json!({
        "policy": cfg.policy,
        "learn": hyp.report,
        "matches_reference": matches,
    });
    write_json(&dir, "report.json", &report)?;
    println!(
        "learned {} states in {} rounds ({} output queries, {} backend runs); matches {}-{}: {matches}",
        hyp.report.states,
        hyp.report.rounds,
        hyp.report.stats.output_queries,
        hyp.report.backend_probes,
        cfg.policy,
        cfg.assoc,
    );
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn synth_failure(e: SynthError) -> Failure {
    match e {
        SynthError::Internal(_) => Failure::inconsistent(e),
        _ => Failure::usage(e),
    }
}

pub fn synthesize(cfg: &RunConfig, automaton: Option<&Path>) -> CmdOutcome {
    let target = match automaton {
        Some(path) => load_automaton(path)?,
        None => reference_policy(cfg)?,
    };
    let scfg = cfg.synth_config()?;
    let result = run_synthesis(&target, &scfg).map_err(synth_failure)?;
    let dir = cfg.run_dir()?;
    write_json(&dir, "config.json", cfg)?;
    let report = json!({
        "target": automaton.map(|p| p.display().to_string()).unwrap_or_else(|| format!("{}-{}", cfg.policy, cfg.assoc)),
        "search": scfg,
        "status": result.status,
        "stats": result.stats,
    });
    write_json(&dir, "report.json", &report)?;
    let stats = &result.stats;
    match (result.status, result.program) {
        (SynthStatus::Found, Some(prog)) => {
            write_file(&dir, "program.txt", &prog.to_string())?;
            write_file(&dir, "program.json", &program_to_json(&prog))?;
            print!("{prog}");
            eprintln!(
                "found after {} nodes in {:.1}s; wrote {}",
                stats.nodes,
                stats.wall_seconds,
                dir.display()
            );
            Ok(())
        }
        (SynthStatus::Found, None) => Err(Failure::inconsistent(anyhow!(
            "search reported a program but returned none"
        ))),
        (SynthStatus::Exhausted, _) => {
            println!(
                "exhausted: no {} program with max_age {} and depth {} explains the target ({} roots, {} nodes, {:.1}s)",
                cfg.template, cfg.max_age, cfg.expr_depth, stats.roots, stats.nodes, stats.wall_seconds
            );
            eprintln!("wrote {}", dir.display());
            Ok(())
        }
        (SynthStatus::BudgetExceeded, _) => Err(Failure::budget(anyhow!(
            "budget exceeded after {} nodes, {}/{} roots searched, {:.1}s; partial stats in {}",
            stats.nodes,
            stats.roots_searched,
            stats.roots,
            stats.wall_seconds,
            dir.display()
        ))),
    }
}

pub fn check(cfg: &RunConfig, program: &Path, automaton: Option<&Path>) -> CmdOutcome {
    let prog = load_program(program)?;
    let target = match automaton {
        Some(path) => load_automaton(path)?,
        None => reference_policy(cfg)?,
    };
    match check_explanation(&prog, &target).map_err(|e| Failure::usage(anyhow!("{e}")))? {
        Equivalence::Equivalent => {
            println!("Equivalent");
            Ok(())
        }
        Equivalence::Counterexample(word) => {
            let ours = program_to_policy(&prog).map_err(|e| Failure::usage(anyhow!("{e}")))?;
            let show = |p: &Policy| {
                p.run(&word)
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            println!("Counterexample: {}", format_word(&word));
            println!("  program: {}", show(&ours));
            println!("  target:  {}", show(&target));
            Err(Failure::inconsistent(anyhow!(
                "program and automaton differ on {}",
                format_word(&word)
            )))
        }
    }
}

/// Runs a block sequence through the configured policy, or through the
/// automaton in `automaton`, starting from the first `assoc` blocks.
pub fn simulate(cfg: &RunConfig, automaton: Option<&Path>, blocks: &[String]) -> CmdOutcome {
    let policy = match automaton {
        Some(path) => load_automaton(path)?,
        None => reference_policy(cfg)?,
    };
    let blocks = parse_blocks(&blocks.join(" ")).map_err(|e| Failure::usage(anyhow!("{e}")))?;
    let bcfg = BackendConfig {
        assoc: policy.assoc(),
        alphabet: Block::alphabet(policy.assoc() + 1),
        ..backend_config(cfg)?
    };
    let mut state = CacheState::initial(&policy, bcfg.initial_content())
        .map_err(|e| Failure::usage(anyhow!("{e}")))?;
    println!("start {}", state.content);
    for b in blocks {
        let before = state.content.clone();
        let outcome = state.access_mut(&policy, b);
        let evicted =
            (0..before.assoc()).find(|&i| before.blocks()[i] != state.content.blocks()[i]);
        match evicted {
            Some(line) => println!(
                "{b} {outcome} evict line {line} ({}) {}",
                before.blocks()[line],
                state.content
            ),
            None => println!("{b} {outcome} {}", state.content),
        }
    }
    Ok(())
}

/// DOT for an automaton file, a program file, or the configured zoo policy.
pub fn export_dot(cfg: &RunConfig, file: Option<&Path>) -> CmdOutcome {
    let policy = match file {
        None => reference_policy(cfg)?,
        Some(path) => {
            let text = read(path)?;
            match from_json(&text) {
                Ok(p) => p,
                Err(_) => {
                    let prog = load_program(path)?;
                    program_to_policy(&prog).map_err(|e| Failure::usage(anyhow!("{e}")))?
                }
            }
        }
    };
    print!("{}", to_dot(&policy));
    Ok(())
}
