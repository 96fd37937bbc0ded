//! Runs every acceptance criterion and prints one line per criterion.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;

use slipstream_sim::bundled;
use slipstream_sim::report::{check_determinism, sweep, SweepReport};
use slipstream_sim::selftest::run_self_tests;

fn seeds_for(name: &str) -> u64 {
    match name {
        "ss-basic" | "ss-adversarial-sleep" => 100,
        "elss-partition" | "elss-digest-split" => 200,
        _ => 50,
    }
}

/// `(pass, detail)` for one property over the given sweeps.
fn property(sweeps: &BTreeMap<&str, SweepReport>, names: &[&str], prop: &str) -> (bool, String) {
    let mut runs = 0;
    let mut fails = Vec::new();
    for name in names {
        let s = &sweeps[name];
        if !s.errors.is_empty() {
            fails.push(format!("{name}: {}", s.errors[0]));
        }
        match s.properties.get(prop) {
            Some(p) => {
                runs += p.runs;
                if p.failed > 0 {
                    let v = p.first_violation.as_ref().map(|v| v.detail.clone()).unwrap_or_default();
                    fails.push(format!("{name}: {} runs failed, seeds {:?}: {v}", p.failed, p.failing_seeds));
                }
            }
            None => fails.push(format!("{name}: {prop} not checked")),
        }
    }
    if fails.is_empty() {
        (true, format!("{prop} held in {runs} runs"))
    } else {
        (false, fails.join("; "))
    }
}

fn all_of(parts: Vec<(bool, String)>) -> (bool, String) {
    (parts.iter().all(|p| p.0), parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join(", "))
}

fn main() -> ExitCode {
    let started = std::time::Instant::now();
    let sweeps: BTreeMap<&str, SweepReport> =
        bundled::all().into_iter().map(|(name, sc)| (name, sweep(&sc, 1..1 + seeds_for(name)))).collect();
    let ss = ["ss-basic", "ss-adversarial-sleep"];
    let elss = ["elss-partition", "elss-digest-split"];
    let not_ss: Vec<&str> = bundled::NAMES.iter().copied().filter(|n| !n.starts_with("ss-")).collect();
    let mut results: Vec<(u32, &str, (bool, String))> = Vec::new();

    results.push((
        1,
        "slot-sleepy safety and liveness",
        all_of(vec![property(&sweeps, &ss, "order-own-safety"), property(&sweeps, &ss, "order-own-liveness")]),
    ));
    results.push((2, "same start, same end after GST", property(&sweeps, &bundled::NAMES, "same-sc")));
    results.push((3, "final-order safety under ELSS", property(&sweeps, &elss, "order-final-safety")));

    let sync = sweeps["elss-partition"].sync.clone().expect("ELSS sweep has sync stats");
    results.push((
        4,
        "sync bound",
        (
            sync.pass,
            format!(
                "elss-partition {} seeds: mean s_same-GST {:.3} (se {:.3}) vs bound {}; reference Geo+Geo mean {}; worst CDF gap {:.2} sigma; unsettled {}",
                sync.samples, sync.mean, sync.std_err, sync.bound, sync.reference_mean, sync.worst_cdf_gap_sigmas, sync.unsettled
            ),
        ),
    ));
    results.push((5, "final-order latency", property(&sweeps, &not_ss, "order-final-liveness")));
    results.push((
        6,
        "payments",
        all_of(vec![
            property(&sweeps, &["payments-fast"], "fast-path-latency"),
            property(&sweeps, &["payments-doublespend-lock"], "ledger-safety"),
            property(&sweeps, &["payments-doublespend-lock"], "ledger-consistency"),
            property(&sweeps, &["payments-doublespend-lock"], "double-spend-unlock"),
        ]),
    ));
    results.push((7, "valid DAG", property(&sweeps, &bundled::NAMES, "valid-dag")));

    let tally = common::oracle::run(1000, 0);
    let oracle_detail = if tally.ok() {
        format!("{} DAGs, {} blocks, {} comparisons", tally.dags, tally.blocks, tally.checks.values().sum::<usize>())
    } else {
        tally.mismatches.join("; ")
    };
    results.push((8, "oracle equivalence", (tally.ok() && tally.dags >= 1000, oracle_detail)));

    let det: Vec<(bool, String)> = bundled::all()
        .into_iter()
        .map(|(name, sc)| match check_determinism(&sc) {
            Ok(r) => (r.pass, name.to_string()),
            Err(e) => (false, format!("{name}: {e}")),
        })
        .collect();
    let det_pass = det.iter().all(|d| d.0);
    let det_detail = if det_pass {
        format!("{} scenarios hash identically across two runs", det.len())
    } else {
        det.into_iter().filter(|d| !d.0).map(|d| d.1).collect::<Vec<_>>().join(", ")
    };
    results.push((9, "determinism", (det_pass, det_detail)));

    let selftest = match run_self_tests() {
        Ok(rs) => {
            let bad: Vec<String> = rs.iter().filter(|r| !r.ok()).map(|r| r.property.clone()).collect();
            if bad.is_empty() {
                (true, format!("{} checkers flagged their fixtures", rs.len()))
            } else {
                (false, format!("not flagged: {}", bad.join(", ")))
            }
        }
        Err(e) => (false, e.to_string()),
    };
    results.push((10, "checker self-tests", selftest));

    let mut ok = true;
    for (k, name, (pass, detail)) in &results {
        ok &= *pass;
        println!("criterion {k:>2} {}: {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} in {:.1}s", if ok { "all criteria pass" } else { "FAILED" }, started.elapsed().as_secs_f64());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
