use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use slipstream_sim::check::{check_all, check_named, PropertyReport, PROPERTY_NAMES};
use slipstream_sim::report::{check_determinism, report, sweep};
use slipstream_sim::{bundled, selftest, RunTrace, Scenario};

/// Deterministic simulator and property checker for the Slipstream protocol.
#[derive(Parser)]
#[command(name = "slipstream", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario, check every applicable property and print the report.
    Run {
        /// Scenario JSON file or bundled scenario name.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report JSON here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a recorded trace.
    Check {
        trace: PathBuf,
        /// Comma-separated property names; default is every property that applies.
        #[arg(long, value_delimiter = ',')]
        properties: Vec<String>,
    },
    /// Run a seed range in parallel and write an aggregate report.
    Sweep {
        scenario: String,
        /// `A..B` (B exclusive) or `A..=B`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every bundled scenario at its default seed, the determinism check and the checker self-tests.
    Demo,
    /// Write the bundled scenarios as JSON files.
    ExportScenarios { dir: PathBuf },
    /// Write the corrupted-trace corpus used by the checker self-tests.
    Corpus { dir: PathBuf },
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return Ok(Scenario::from_json(&text)?);
    }
    bundled::get(arg).with_context(|| format!("{arg} is neither a file nor a bundled scenario ({})", bundled::NAMES.join(", ")))
}

fn parse_seeds(s: &str) -> Result<Range<u64>> {
    let (a, b, inclusive) = match s.split_once("..=") {
        Some((a, b)) => (a, b, true),
        None => match s.split_once("..") {
            Some((a, b)) => (a, b, false),
            None => bail!("seed range must look like A..B or A..=B, got {s}"),
        },
    };
    let a: u64 = a.trim().parse().with_context(|| format!("bad seed {a}"))?;
    let b: u64 = b.trim().parse().with_context(|| format!("bad seed {b}"))?;
    let end = if inclusive { b + 1 } else { b };
    if end <= a {
        bail!("empty seed range {s}");
    }
    Ok(a..end)
}

fn emit(value: &serde_json::Value, to: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match to {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        // a closed pipe is the reader's choice, not an error
        None => {
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}

fn summarize(props: &[PropertyReport]) {
    for p in props {
        let status = if p.pass { "pass" } else { "FAIL" };
        eprintln!("  {status} {:<24} checked {:>7}", p.name, p.checked);
        if let Some(v) = &p.first_violation {
            eprintln!("       round {} {:?}: {}", v.round, v.nodes, v.detail);
        }
    }
}

fn exit(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            println!("{}", json!({ "pass": false, "error": format!("{e:#}") }));
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run { scenario, seed, trace, report: out } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(s) = seed {
                sc = sc.with_seed(s);
            }
            let t = slipstream_sim::run(&sc)?;
            if let Some(p) = &trace {
                fs::write(p, t.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
            }
            let r = report(&t);
            eprintln!("{} seed {}: {}", r.scenario, r.seed, if r.pass { "pass" } else { "FAIL" });
            summarize(&r.properties);
            emit(&serde_json::to_value(&r)?, out.as_deref())?;
            Ok(exit(r.pass))
        }
        Cmd::Check { trace, properties } => {
            let text = fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let t = RunTrace::from_jsonl(&text)?;
            let props = if properties.is_empty() {
                check_all(&t)
            } else {
                properties
                    .iter()
                    .map(|n| {
                        check_named(&t, n)
                            .with_context(|| format!("unknown property {n}; known: {}", PROPERTY_NAMES.join(", ")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let pass = props.iter().all(|p| p.pass);
            summarize(&props);
            let sc = &t.header.scenario;
            emit(&json!({ "scenario": sc.name, "seed": sc.seed, "trace_hash": t.hash(), "pass": pass, "properties": props }), None)?;
            Ok(exit(pass))
        }
        Cmd::Sweep { scenario, seeds, report: out } => {
            let sc = load_scenario(&scenario)?;
            let range = parse_seeds(&seeds)?;
            let r = sweep(&sc, range);
            eprintln!("{} seeds {}..{}: {} runs, {}", r.scenario, r.seeds.0, r.seeds.1, r.runs, if r.pass { "pass" } else { "FAIL" });
            for (name, p) in &r.properties {
                eprintln!("  {:<24} {:>4}/{} failed {:?}", name, p.failed, p.runs, p.failing_seeds);
            }
            if let Some(s) = &r.sync {
                eprintln!("  s_same-GST mean {:.3} se {:.3} bound {} -> {}", s.mean, s.std_err, s.bound, if s.pass { "ok" } else { "FAIL" });
            }
            let pass = r.pass && r.sync.as_ref().is_none_or(|s| s.pass);
            emit(&serde_json::to_value(&r)?, out.as_deref())?;
            Ok(exit(pass))
        }
        Cmd::Demo => {
            let mut rows = Vec::new();
            let mut pass = true;
            for (name, sc) in bundled::all() {
                let t = slipstream_sim::run(&sc)?;
                let r = report(&t);
                let det = check_determinism(&sc)?;
                let failed: Vec<&str> = r.properties.iter().filter(|p| !p.pass).map(|p| p.name.as_str()).collect();
                eprintln!("{name:<28} {:<4} determinism {:<4} {}", if r.pass { "pass" } else { "FAIL" }, if det.pass { "ok" } else { "FAIL" }, failed.join(","));
                pass &= r.pass && det.pass;
                rows.push(json!({ "scenario": name, "pass": r.pass, "deterministic": det.pass, "trace_hash": r.trace_hash, "properties": r.properties }));
            }
            let st = selftest::run_self_tests()?;
            for s in &st {
                eprintln!("self-test {:<24} {}", s.property, if s.ok() { "flagged" } else { "NOT FLAGGED" });
                pass &= s.ok();
            }
            emit(&json!({ "pass": pass, "scenarios": rows, "self_tests": st }), None)?;
            Ok(exit(pass))
        }
        Cmd::ExportScenarios { dir } => {
            fs::create_dir_all(&dir)?;
            for (name, sc) in bundled::all() {
                let p = dir.join(format!("{name}.json"));
                fs::write(&p, sc.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
                eprintln!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Corpus { dir } => {
            fs::create_dir_all(&dir)?;
            let mut index = Vec::new();
            for (fx, _) in selftest::fixtures()? {
                let file = format!("{}.jsonl", fx.property);
                fs::write(dir.join(&file), fx.trace.to_jsonl())?;
                index.push(json!({ "file": file, "property": fx.property, "scenario": fx.scenario, "mutation": fx.mutation }));
            }
            emit(&json!(index), Some(&dir.join("index.json")))?;
            eprintln!("wrote {} corrupted traces to {}", index.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..201").unwrap(), 1..201);
        assert_eq!(parse_seeds("3..=5").unwrap(), 3..6);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
