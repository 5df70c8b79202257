//! Command-line front end: corpus generation, trap selection, monitoring,
//! emulated attacks, single experiments, grids, and reports.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors
//! (clap's default).

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};

use trapkit::config::Config;
use trapkit::emulator::{
    builtin_profiles, generate_corpus, load_manifest, restore_corpus, run_attack, save_manifest,
    AttackProfile, CorpusSpec,
};
use trapkit::error::{Error, Result};
use trapkit::harness::{run_experiment, run_grid, ComparisonReport, ExperimentResult, GridConfig};
use trapkit::monitor::{
    append_audit_log, measure_monitor_memory, watch, DryRunAction, KillAction, ProcessKillAction,
    WatchMode,
};
use trapkit::traps::{
    load_traps, persist_traps, rename_traps, restore_traps, select_traps, SelectionMethod,
};

#[derive(Parser)]
#[command(name = "trapkit", about = "Decoy-based ransomware early detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus under an empty root.
    GenCorpus {
        #[arg(long)]
        root: PathBuf,
        /// Where to write the manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// small | reference | endpoint-small | endpoint-large
        #[arg(long, default_value = "reference")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Select trap files and write the trap list.
    Select {
        /// TOML config with roots and clustering parameters.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured method.
        #[arg(long)]
        method: Option<String>,
        /// Where to write the trap list JSON.
        #[arg(long)]
        out: PathBuf,
        /// Also rename traps on disk with the configured suffix.
        #[arg(long)]
        rename: bool,
    },
    /// Watch a trap list; prints READY once all watches are armed.
    Monitor {
        #[arg(long)]
        traps: PathBuf,
        /// JSON-lines audit log for alert reports.
        #[arg(long)]
        audit_log: Option<PathBuf>,
        /// Process IDs to SIGTERM on the first alert.
        #[arg(long)]
        kill_pid: Vec<u32>,
        /// Keep reporting after the first alert instead of exiting.
        #[arg(long)]
        continuous: bool,
        /// Stop after this many seconds (default: run until killed).
        #[arg(long)]
        duration: Option<f64>,
        /// Print resident memory once armed.
        #[arg(long)]
        report_memory: bool,
    },
    /// Run an emulated attack against a marked corpus root.
    Attack {
        #[arg(long)]
        root: PathBuf,
        /// Family name; see --list.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional config for emulator profile overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// List built-in family profiles and exit.
        #[arg(long)]
        list: bool,
    },
    /// One selection + attack experiment; prints the result as JSON.
    Run {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Resumable method x profile x seed sweep.
    Grid {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines results file (appended; resume skips finished cells).
        #[arg(long)]
        results: PathBuf,
        /// Comma-separated methods (default: all five).
        #[arg(long)]
        methods: Option<String>,
        /// Comma-separated family names (default: all built-ins).
        #[arg(long)]
        profiles: Option<String>,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0")]
        seeds: String,
        /// small | reference | endpoint-small | endpoint-large
        #[arg(long, default_value = "reference")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        corpus_seed: u64,
    },
    /// Aggregate grid results into a comparison report.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// csv | markdown
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Restore a corpus (and any renamed traps) from its manifest.
    Restore {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Trap list whose renames should be undone first (optional; a
        /// full corpus restore already recreates original names).
        #[arg(long)]
        traps: Option<PathBuf>,
    },
}

fn preset_spec(preset: &str, seed: u64) -> Result<CorpusSpec> {
    match preset {
        "small" => Ok(CorpusSpec::small(seed)),
        "reference" => Ok(CorpusSpec::reference(seed)),
        "endpoint-small" | "ep1" => Ok(CorpusSpec::endpoint_small(seed)),
        "endpoint-large" | "ep2" => Ok(CorpusSpec::endpoint_large(seed)),
        other => Err(Error::invalid("preset", format!("unknown preset {other}"))),
    }
}

fn parse_methods(spec: Option<&str>) -> Result<Vec<SelectionMethod>> {
    match spec {
        None => Ok(SelectionMethod::ALL.to_vec()),
        Some(s) => s
            .split(',')
            .map(|m| SelectionMethod::from_str(m.trim()))
            .collect(),
    }
}

/// Built-in profiles with any config-file overrides applied.
fn resolve_profiles(config: Option<&Config>) -> Result<Vec<AttackProfile>> {
    let mut profiles = builtin_profiles();
    if let Some(config) = config {
        config.emulator.apply(&mut profiles)?;
    }
    Ok(profiles)
}

fn find_profile(profiles: &[AttackProfile], name: &str) -> Result<AttackProfile> {
    profiles
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| Error::invalid("profile", format!("unknown family {name}")))
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid("seeds", format!("not an integer: {s}")))
        })
        .collect()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus {
            root,
            manifest,
            preset,
            seed,
        } => {
            let spec = preset_spec(&preset, seed)?;
            let m = generate_corpus(&spec, &root)?;
            save_manifest(&m, &manifest)?;
            println!(
                "generated {} files in {} directories under {}",
                m.total_files(),
                spec.directories,
                root.display()
            );
            Ok(())
        }
        Command::Select {
            config,
            method,
            out,
            rename,
        } => {
            let config = Config::load(&config)?;
            let method = match method {
                Some(m) => SelectionMethod::from_str(&m)?,
                None => config.selection_method()?,
            };
            let mut warnings = Vec::new();
            let mut list = select_traps(
                &config.scan_config(),
                method,
                &config.selection_options(),
                &mut warnings,
            )?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if rename {
                list = rename_traps(&list, &config.suffix)?;
            }
            persist_traps(&list, &out)?;
            println!(
                "{} traps across {} directories ({:.3}% of {} files), method {}",
                list.entries.len(),
                list.eligible_directories,
                list.trap_percentage(),
                list.total_files,
                list.method
            );
            Ok(())
        }
        Command::Monitor {
            traps,
            audit_log,
            kill_pid,
            continuous,
            duration,
            report_memory,
        } => {
            let list = load_traps(&traps)?;
            let action: Box<dyn KillAction> = if kill_pid.is_empty() {
                Box::new(DryRunAction)
            } else {
                Box::new(ProcessKillAction { pids: kill_pid })
            };
            let mode = if continuous {
                WatchMode::Continuous
            } else {
                WatchMode::FirstHit
            };
            let handle = watch(&list, action, mode, || {
                println!("READY");
                use std::io::Write;
                let _ = std::io::stdout().flush();
            })?;
            if report_memory {
                println!("memory_mb={:.2}", measure_monitor_memory()?);
                use std::io::Write;
                let _ = std::io::stdout().flush();
            }
            let started = Instant::now();
            loop {
                if let Some(report) = handle.next_report(Duration::from_millis(100)) {
                    if let Some(path) = &audit_log {
                        append_audit_log(path, &report)?;
                    }
                    println!(
                        "{}",
                        serde_json::to_string(&report).map_err(|e| Error::Other(e.to_string()))?
                    );
                    if mode == WatchMode::FirstHit {
                        return Ok(());
                    }
                }
                if let Some(limit) = duration {
                    if started.elapsed().as_secs_f64() >= limit {
                        return Ok(());
                    }
                }
                if !handle.is_running() && mode == WatchMode::FirstHit {
                    // Drain any report raced in between recv and the check.
                    for report in handle.try_reports() {
                        if let Some(path) = &audit_log {
                            append_audit_log(path, &report)?;
                        }
                        println!(
                            "{}",
                            serde_json::to_string(&report)
                                .map_err(|e| Error::Other(e.to_string()))?
                        );
                    }
                    return Ok(());
                }
            }
        }
        Command::Attack {
            root,
            profile,
            seed,
            config,
            list,
        } => {
            let config = config.map(|p| Config::load(&p)).transpose()?;
            let profiles = resolve_profiles(config.as_ref())?;
            if list {
                for p in &profiles {
                    println!(
                        "{:<14} category {}  threads {:>2}  order {:?}  extension {}",
                        p.name,
                        p.category(),
                        p.threads,
                        p.order,
                        p.extension
                    );
                }
                return Ok(());
            }
            let name = profile.ok_or_else(|| Error::invalid("profile", "required"))?;
            let profile = find_profile(&profiles, &name)?;
            let log = run_attack(&profile, &root, Arc::new(AtomicBool::new(false)), seed)?;
            println!(
                "{} encrypted {} files in {:.2}s ({:?})",
                log.profile,
                log.files_encrypted(),
                log.end_at.0 - log.start_at.0,
                log.stop_cause
            );
            Ok(())
        }
        Command::Run {
            root,
            manifest,
            config,
            method,
            profile,
            seed,
        } => {
            let config = Config::load(&config)?;
            let method = match method {
                Some(m) => SelectionMethod::from_str(&m)?,
                None => config.selection_method()?,
            };
            let profile = find_profile(&resolve_profiles(Some(&config))?, &profile)?;
            let manifest = load_manifest(&manifest)?;
            let mut options = config.selection_options();
            options.seed = seed;
            let mut warnings = Vec::new();
            let scan = trapkit::features::ScanConfig {
                roots: vec![root.clone()],
                exclusions: config.exclusions.clone(),
                min_files: config.min_files,
            };
            let list = select_traps(&scan, method, &options, &mut warnings)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let result = run_experiment(&root, &manifest, &list, &profile, seed, &config.suffix)?;
            println!(
                "{}",
                serde_json::to_string(&result).map_err(|e| Error::Other(e.to_string()))?
            );
            Ok(())
        }
        Command::Grid {
            root,
            config,
            results,
            methods,
            profiles,
            seeds,
            preset,
            corpus_seed,
        } => {
            let config = Config::load(&config)?;
            let all = resolve_profiles(Some(&config))?;
            let profiles = match profiles {
                None => all,
                Some(spec) => spec
                    .split(',')
                    .map(|name| find_profile(&all, name.trim()))
                    .collect::<Result<Vec<_>>>()?,
            };
            let grid = GridConfig {
                root,
                corpus: preset_spec(&preset, corpus_seed)?,
                methods: parse_methods(methods.as_deref())?,
                profiles,
                seeds: parse_seeds(&seeds)?,
                suffix: config.suffix.clone(),
                results_path: results,
                selection: config.selection_options(),
            };
            let mut warnings = Vec::new();
            let all = run_grid(&grid, &mut warnings)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("{} cells complete", all.len());
            Ok(())
        }
        Command::Report { results, format } => {
            let text = std::fs::read_to_string(&results).map_err(|source| Error::Io {
                path: results.clone(),
                source,
            })?;
            let mut parsed = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let result: ExperimentResult =
                    serde_json::from_str(line).map_err(|e| Error::Parse {
                        path: results.clone(),
                        context: "results line".to_string(),
                        reason: e.to_string(),
                    })?;
                parsed.push(result);
            }
            let report = ComparisonReport::from_results(&parsed);
            match format.as_str() {
                "csv" => print!("{}", report.to_csv()),
                "markdown" => print!("{}", report.to_markdown()),
                other => return Err(Error::invalid("format", format!("unknown format {other}"))),
            }
            Ok(())
        }
        Command::Restore {
            root,
            manifest,
            traps,
        } => {
            if let Some(traps) = traps {
                let list = load_traps(&traps)?;
                if let Err(err) = restore_traps(&list) {
                    eprintln!("warning: trap rename rollback incomplete: {err}");
                }
            }
            let manifest = load_manifest(&manifest)?;
            restore_corpus(&manifest, &root)?;
            println!("restored {} files under {}", manifest.total_files(), root.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
