//! Per-run and per-sweep reports.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slipstream_core::ledger::ConfirmPath;
use slipstream_core::node::NodeEvent;
use slipstream_core::tx::TxId;

use crate::check::{check_all, PropertyReport, Replay, Reproducer, ViolationReport};
use crate::scenario::Model;
use crate::stats::{sync_stats, SyncStats};
use crate::trace::{RunTrace, SimEvent};
use crate::{Scenario, SimError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rounds: u64,
    pub blocks_created: usize,
    pub bytes_sent: usize,
    pub bytes_per_node_round_mean: f64,
    pub bytes_per_node_round_max: usize,
    pub finalized_slots_max: i64,
    pub s_same: Option<u64>,
    pub txs_released: usize,
    /// Per client transaction, earliest rounds over correct nodes.
    #[serde(default)]
    pub txs: Vec<TxTiming>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxTiming {
    pub tx: TxId,
    pub kind: String,
    pub released: u64,
    pub included: Option<u64>,
    pub fast: Option<u64>,
    pub consensus: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub trace_hash: String,
    pub pass: bool,
    pub properties: Vec<PropertyReport>,
    pub metrics: RunMetrics,
}

pub fn metrics(trace: &RunTrace) -> RunMetrics {
    let mut m = RunMetrics::default();
    let mut per: BTreeMap<(u64, u32), usize> = BTreeMap::new();
    for r in &trace.records {
        m.rounds = m.rounds.max(r.round);
        match &r.event {
            crate::trace::TraceEvent::Sim(SimEvent::Sent { bytes, .. }) => {
                m.bytes_sent += bytes;
                *per.entry((r.round, r.node.map_or(u32::MAX, |n| n.0))).or_default() += bytes;
            }
            crate::trace::TraceEvent::Sim(SimEvent::TxRelease { tx, kind, .. }) => {
                m.txs_released += 1;
                m.txs.push(TxTiming { tx: *tx, kind: kind.clone(), released: r.round, included: None, fast: None, consensus: None });
            }
            crate::trace::TraceEvent::Sim(SimEvent::RunEnd { s_final, .. }) => {
                m.finalized_slots_max = m.finalized_slots_max.max(*s_final)
            }
            crate::trace::TraceEvent::Node(NodeEvent::BlockCreated { .. }) => m.blocks_created += 1,
            _ => {}
        }
    }
    if m.rounds > 0 {
        m.bytes_per_node_round_mean = m.bytes_sent as f64 / (m.rounds as f64 * trace.n() as f64);
    }
    m.bytes_per_node_round_max = per.values().copied().max().unwrap_or(0);
    let earliest = |slot: &mut Option<u64>, g: u64| *slot = Some(slot.map_or(g, |x| x.min(g)));
    let index: BTreeMap<TxId, usize> = m.txs.iter().enumerate().map(|(k, t)| (t.tx, k)).collect();
    for (rec, _, e) in trace.node_events() {
        let hit = |tx: &TxId| index.get(tx).copied();
        match e {
            NodeEvent::BlockCreated { txs, .. } => {
                for tx in txs {
                    if let Some(k) = hit(tx) {
                        earliest(&mut m.txs[k].included, rec.round);
                    }
                }
            }
            NodeEvent::Confirm { tx, path } => {
                if let Some(k) = hit(tx) {
                    let t = &mut m.txs[k];
                    match path {
                        ConfirmPath::Fast => earliest(&mut t.fast, rec.round),
                        ConfirmPath::Consensus1 | ConfirmPath::Consensus2 => earliest(&mut t.consensus, rec.round),
                        ConfirmPath::Genesis => {}
                    }
                }
            }
            _ => {}
        }
    }
    if !matches!(trace.header.scenario.model, Model::SlotSleepy) {
        m.s_same = Replay::new(trace).s_same();
    }
    m
}

pub fn report(trace: &RunTrace) -> RunReport {
    let properties = check_all(trace);
    let sc = &trace.header.scenario;
    RunReport {
        scenario: sc.name.clone(),
        seed: sc.seed,
        trace_hash: trace.hash(),
        pass: properties.iter().all(|p| p.pass),
        properties,
        metrics: metrics(trace),
    }
}

/// Runs `sc` twice and compares trace hashes.
pub fn check_determinism(sc: &Scenario) -> Result<PropertyReport, SimError> {
    let (a, b) = (crate::run(sc)?.hash(), crate::run(sc)?.hash());
    let pass = a == b;
    Ok(PropertyReport {
        name: "determinism".into(),
        pass,
        checked: 1,
        violations: usize::from(!pass),
        first_violation: (!pass).then(|| ViolationReport {
            round: 0,
            time: slipstream_core::Timestamp::new(1, 1),
            nodes: Vec::new(),
            detail: format!("trace hashes differ: {a} vs {b}"),
            reproducer: Reproducer { scenario: sc.name.clone(), seed: sc.seed, round: 0 },
        }),
        metrics: BTreeMap::new(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertySummary {
    pub runs: usize,
    pub failed: usize,
    /// Up to ten failing seeds.
    pub failing_seeds: Vec<u64>,
    pub first_violation: Option<ViolationReport>,
    /// Mean of each metric over runs that reported it.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub seeds: (u64, u64),
    pub runs: usize,
    pub pass: bool,
    pub properties: BTreeMap<String, PropertySummary>,
    /// `s_same − GST` statistics, for models with a GST.
    pub sync: Option<SyncStats>,
    pub bytes_per_node_round_mean: f64,
    pub bytes_per_node_round_max: usize,
    pub errors: Vec<String>,
}

/// Runs every seed in `seeds` in parallel and aggregates the reports.
pub fn sweep(sc: &Scenario, seeds: Range<u64>) -> SweepReport {
    let results: Vec<(u64, Result<RunReport, SimError>)> =
        seeds.clone().into_par_iter().map(|s| (s, crate::run(&sc.with_seed(s)).map(|t| report(&t)))).collect();
    let mut out = SweepReport {
        scenario: sc.name.clone(),
        seeds: (seeds.start, seeds.end),
        runs: results.len(),
        pass: true,
        properties: BTreeMap::new(),
        sync: None,
        bytes_per_node_round_mean: 0.0,
        bytes_per_node_round_max: 0,
        errors: Vec::new(),
    };
    let mut sums: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    let mut sync = Vec::new();
    let mut ok = 0usize;
    for (seed, res) in results {
        let rep = match res {
            Ok(r) => r,
            Err(e) => {
                out.pass = false;
                out.errors.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        ok += 1;
        out.pass &= rep.pass;
        out.bytes_per_node_round_mean += rep.metrics.bytes_per_node_round_mean;
        out.bytes_per_node_round_max = out.bytes_per_node_round_max.max(rep.metrics.bytes_per_node_round_max);
        if !matches!(sc.model, Model::SlotSleepy) {
            sync.push(rep.metrics.s_same.map(|s| s - sc.gst_slot()));
        }
        for p in rep.properties {
            let e = out.properties.entry(p.name.clone()).or_default();
            e.runs += 1;
            if !p.pass {
                e.failed += 1;
                if e.failing_seeds.len() < 10 {
                    e.failing_seeds.push(seed);
                }
                if e.first_violation.is_none() {
                    e.first_violation = p.first_violation;
                }
            }
            let acc = sums.entry(p.name).or_default();
            for (k, v) in p.metrics {
                let a = acc.entry(k).or_default();
                a.0 += v;
                a.1 += 1;
            }
        }
    }
    for (name, acc) in sums {
        let e = out.properties.get_mut(&name).expect("seen");
        e.metrics = acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect();
    }
    if ok > 0 {
        out.bytes_per_node_round_mean /= ok as f64;
    }
    if matches!(sc.model, Model::Elss { .. }) {
        out.sync = Some(sync_stats(&sync, sc.n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn same_seed_same_hash_and_seeds_differ() {
        let sc = bundled::get("payments-doublespend-lock").unwrap();
        assert!(check_determinism(&sc).unwrap().pass);
        let a = crate::run(&sc).unwrap().hash();
        let b = crate::run(&sc.with_seed(2)).unwrap().hash();
        assert_ne!(a, b);
    }

    #[test]
    fn report_and_sweep() {
        let sc = bundled::get("payments-fast").unwrap();
        let t = crate::run(&sc).unwrap();
        let r = report(&t);
        assert!(r.pass, "{r:#?}");
        assert!(r.metrics.bytes_per_node_round_mean > 0.0);
        assert!(r.metrics.blocks_created > 0);
        assert_eq!(r.metrics.txs.len(), r.metrics.txs_released);
        for t in r.metrics.txs.iter().filter(|t| t.fast.is_some()) {
            assert!(t.released <= t.included.unwrap() && t.included.unwrap() < t.fast.unwrap());
        }
        let s = sweep(&sc, 1..5);
        assert_eq!(s.runs, 4);
        assert!(s.pass);
        assert!(s.sync.is_none());
        assert_eq!(s.properties["ledger-safety"].runs, 4);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<SweepReport>(&json).unwrap(), s);
    }
}
