//! Run trace: a header line followed by one JSON event per line.

use serde::{Deserialize, Serialize};
use slipstream_core::crypto::{self, Authenticator};
use slipstream_core::node::NodeEvent;
use slipstream_core::tx::{AccountId, TxId, UtxoId};
use slipstream_core::{NodeId, SlotDigest, Timestamp};

use crate::scenario::Scenario;
use crate::SimError;

pub const TRACE_FORMAT: &str = "slipstream-trace/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub scenario: Scenario,
    pub hash: String,
    pub signature: String,
    pub prng: String,
    /// Global round of the GST receive phase.
    pub gst_round: u64,
    pub gst_note: String,
    pub byzantine: Vec<NodeId>,
    /// Pre-GST groups with fast links.
    pub partition: Vec<Vec<u32>>,
    pub genesis_tx: TxId,
    pub genesis_outputs: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "payload")]
pub enum SimEvent {
    SlotStart {
        awake: Vec<NodeId>,
        /// Leader reported to each node, indexed by node.
        leaders: Vec<Option<NodeId>>,
    },
    /// One node's send phase.
    Sent {
        messages: usize,
        blocks: usize,
        bytes: usize,
    },
    TxRelease {
        tx: TxId,
        client: usize,
        kind: String,
        inputs: Vec<UtxoId>,
        outputs: u32,
        to: Vec<NodeId>,
        /// Shared by the two halves of a double spend.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pair: Option<u32>,
    },
    Malicious {
        action: String,
    },
    RunEnd {
        /// Confirmed transactions in confirmation order.
        txs: Vec<TxId>,
        balances: Vec<(AccountId, u64)>,
        utxos: usize,
        chain_tip: SlotDigest,
        s_final: i64,
        i_elss: bool,
        eqset: Vec<NodeId>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceEvent {
    Node(NodeEvent),
    Sim(SimEvent),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Rounds since genesis.
    pub round: u64,
    pub time: Timestamp,
    pub node: Option<NodeId>,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl TraceHeader {
    pub fn new(sc: &Scenario, gst_round: u64, partition: Vec<Vec<u32>>, genesis_tx: TxId, auth: &dyn Authenticator) -> Self {
        TraceHeader {
            format: TRACE_FORMAT.into(),
            scenario: sc.clone(),
            hash: crypto::HASH_NAME.into(),
            signature: auth.scheme().into(),
            prng: crate::net::PRNG_NAME.into(),
            gst_round,
            gst_note: "GST aligned to round 1 of the gst slot".into(),
            byzantine: sc.byzantine().into_iter().map(NodeId).collect(),
            partition,
            genesis_tx,
            genesis_outputs: sc.genesis.accounts * sc.genesis.outputs_per_account,
        }
    }
}

impl RunTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serialises");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<RunTrace, SimError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| SimError::Trace("empty trace".into()))?;
        let header: TraceHeader =
            serde_json::from_str(first).map_err(|e| SimError::Trace(format!("line 1: {e}")))?;
        if header.format != TRACE_FORMAT {
            return Err(SimError::Trace(format!("unknown trace format {}", header.format)));
        }
        let records = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| SimError::Trace(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<TraceRecord>, _>>()?;
        Ok(RunTrace { header, records })
    }

    /// SHA-256 over the JSONL text.
    pub fn hash(&self) -> String {
        crypto::hash(self.to_jsonl().as_bytes()).to_hex()
    }

    pub fn is_correct(&self, node: NodeId) -> bool {
        !self.header.byzantine.contains(&node)
    }

    pub fn n(&self) -> u32 {
        self.header.scenario.n
    }

    pub fn f(&self) -> u32 {
        self.header.scenario.f
    }

    pub fn correct_nodes(&self) -> Vec<NodeId> {
        (0..self.n()).map(NodeId).filter(|&i| self.is_correct(i)).collect()
    }

    /// Node events of correct nodes, with their round.
    pub fn node_events(&self) -> impl Iterator<Item = (&TraceRecord, NodeId, &NodeEvent)> {
        self.records.iter().filter_map(move |r| match (&r.event, r.node) {
            (TraceEvent::Node(e), Some(n)) if self.is_correct(n) => Some((r, n, e)),
            _ => None,
        })
    }

    pub fn sim_events(&self) -> impl Iterator<Item = (&TraceRecord, &SimEvent)> {
        self.records.iter().filter_map(|r| match &r.event {
            TraceEvent::Sim(e) => Some((r, e)),
            _ => None,
        })
    }
}
