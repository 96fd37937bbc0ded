//! Round-by-round driver: routes bundles, wakes nodes, releases client transactions.

use std::collections::HashSet;
use std::sync::Arc;

use slipstream_core::crypto::SimAuthenticator;
use slipstream_core::dag::{BlockIdx, BlockStore};
use slipstream_core::node::{NodeConfig, NodeEvent, NodeState};
use slipstream_core::{Block, NodeId, SlotDigest, Timestamp};

use crate::adversary::ByzantineNode;
use crate::net::{LeaderOracle, Network, SleepSchedule};
use crate::scenario::Scenario;
use crate::trace::{RunTrace, SimEvent, TraceEvent, TraceHeader, TraceRecord};
use crate::workload::{genesis_tx, Client};
use crate::SimError;

pub enum Actor {
    Correct(Box<NodeState>),
    Byzantine(Box<ByzantineNode>),
}

impl Actor {
    /// The protocol state (the first core for a Byzantine node).
    pub fn state(&self) -> &NodeState {
        match self {
            Actor::Correct(s) => s,
            Actor::Byzantine(b) => b.core(),
        }
    }
}

pub struct Engine {
    sc: Scenario,
    store: BlockStore,
    actors: Vec<Actor>,
    net: Network,
    leader: LeaderOracle,
    sleep: SleepSchedule,
    clients: Vec<Client>,
    accounts: Arc<SimAuthenticator>,
    header: TraceHeader,
    records: Vec<TraceRecord>,
    seen: HashSet<SlotDigest>,
    last: Option<Timestamp>,
}

impl Engine {
    pub fn new(sc: &Scenario) -> Result<Self, SimError> {
        sc.validate()?;
        let sleep = SleepSchedule::build(sc)?;
        let auth = Arc::new(SimAuthenticator::new("node", sc.seed, sc.n));
        let accounts = Arc::new(SimAuthenticator::new("account", sc.seed, sc.genesis.accounts));
        let gtx = genesis_tx(&sc.genesis);
        let store = BlockStore::new(Block::genesis(sc.f, vec![gtx.clone()]), sc.f, auth.clone());
        let actors = (0..sc.n)
            .map(|i| {
                let cfg = NodeConfig { id: NodeId(i), n: sc.n, f: sc.f, tx_cap: sc.tx_cap, audit: sc.audit };
                match sc.adversary.iter().find(|b| b.node == i) {
                    Some(b) => Actor::Byzantine(Box::new(ByzantineNode::new(cfg, b.strategy.clone(), &store, accounts.clone()))),
                    None => Actor::Correct(Box::new(NodeState::new(cfg, &store, accounts.clone()))),
                }
            })
            .collect();
        let clients =
            sc.workload.iter().enumerate().map(|(k, c)| Client::new(k as u32, c.clone(), &sc.genesis, &gtx, sc.f)).collect();
        let net = Network::new(sc);
        let header = TraceHeader::new(sc, net.gst_round(), net.groups().to_vec(), gtx.id(), auth.as_ref());
        Ok(Engine {
            sc: sc.clone(),
            store,
            actors,
            net,
            leader: LeaderOracle::new(sc),
            sleep,
            clients,
            accounts,
            header,
            records: Vec::new(),
            seen: HashSet::new(),
            last: None,
        })
    }

    pub fn store(&self) -> &BlockStore {
        &self.store
    }

    pub fn actor(&self, node: NodeId) -> &Actor {
        &self.actors[node.index()]
    }

    fn record(&mut self, now: Timestamp, node: Option<NodeId>, event: TraceEvent) {
        self.records.push(TraceRecord { round: now.global_round(self.sc.f), time: now, node, event });
    }

    fn record_node_events(&mut self, now: Timestamp, node: NodeId, events: Vec<NodeEvent>) {
        for e in events {
            if let NodeEvent::DigestRegistered { digest, .. } = &e {
                if !self.seen.insert(*digest) {
                    continue;
                }
            }
            self.record(now, Some(node), TraceEvent::Node(e));
        }
    }

    pub fn run_round(&mut self, now: Timestamp) -> Result<(), SimError> {
        let f = self.sc.f;
        let g = now.global_round(f);
        if now.round == 1 {
            let awake = self.sleep.awake(now.slot);
            let leaders = (0..self.sc.n).map(|i| self.leader.view(now.slot, NodeId(i))).collect();
            self.record(now, None, TraceEvent::Sim(SimEvent::SlotStart { awake, leaders }));
        }
        self.release(now)?;
        for i in 0..self.sc.n {
            let id = NodeId(i);
            if !self.sleep.is_awake(now.slot, id) {
                continue;
            }
            let inbox = self.net.take(id, g);
            let leader = self.leader.view(now.slot, id);
            let (sends, events, actions) = match &mut self.actors[i as usize] {
                Actor::Correct(s) => {
                    let blocks: Vec<BlockIdx> = inbox.iter().flat_map(|m| m.blocks.iter().copied()).collect();
                    let out = s.step(&mut self.store, now, &blocks, leader)?;
                    (out.sends, out.events, Vec::new())
                }
                Actor::Byzantine(b) => {
                    let out = b.step(&mut self.store, now, &inbox, leader)?;
                    (out.sends, out.events, out.actions)
                }
            };
            for action in actions {
                self.record(now, Some(id), TraceEvent::Sim(SimEvent::Malicious { action }));
            }
            self.record_node_events(now, id, events);
            let (mut messages, mut blocks, mut bytes) = (0, 0, 0);
            for (to, bundle) in sends {
                if bundle.is_empty() {
                    continue;
                }
                messages += 1;
                blocks += bundle.len();
                bytes += bundle.iter().map(|&b| self.store.entry(b).bytes).sum::<usize>();
                self.net.send(id, to, g, bundle);
            }
            if messages > 0 {
                self.record(now, Some(id), TraceEvent::Sim(SimEvent::Sent { messages, blocks, bytes }));
            }
        }
        self.last = Some(now);
        Ok(())
    }

    /// Hands client transactions due before `now` to the chosen mempools.
    fn release(&mut self, now: Timestamp) -> Result<(), SimError> {
        let mut releases = Vec::new();
        for (k, c) in self.clients.iter_mut().enumerate() {
            let actors = &self.actors;
            let ledger_of = |n: NodeId| match actors.get(n.index()) {
                Some(Actor::Correct(s)) => Some(s.ledger()),
                _ => None,
            };
            for r in c.poll(now, ledger_of, self.accounts.as_ref())? {
                releases.push((k, r));
            }
        }
        for (client, r) in releases {
            for &to in &r.to {
                match &mut self.actors[to.index()] {
                    Actor::Correct(s) => s.mempool_mut().push(r.tx.clone()),
                    Actor::Byzantine(b) => {
                        for core in b.cores_mut() {
                            core.mempool_mut().push(r.tx.clone());
                        }
                    }
                }
            }
            let ev = SimEvent::TxRelease {
                tx: r.tx.id(),
                client,
                kind: r.kind.into(),
                inputs: r.tx.inputs.clone(),
                outputs: r.tx.outputs.len() as u32,
                to: r.to,
                pair: r.pair,
            };
            self.record(now, None, TraceEvent::Sim(ev));
        }
        Ok(())
    }

    pub fn run_all(&mut self) -> Result<(), SimError> {
        let f = self.sc.f;
        let mut t = Timestamp::new(1, 1);
        while t.slot <= self.sc.horizon_slots {
            self.run_round(t)?;
            t = t.next(f);
        }
        Ok(())
    }

    pub fn finish(mut self) -> RunTrace {
        let end = self.last.unwrap_or(Timestamp::new(1, 1));
        for i in 0..self.sc.n {
            let s = self.actors[i as usize].state();
            let snap = s.ledger().snapshot();
            let ev = SimEvent::RunEnd {
                txs: snap.txs,
                balances: snap.balances.into_iter().collect(),
                utxos: snap.utxos,
                chain_tip: s.chain().last(),
                s_final: s.finality().s_final,
                i_elss: s.i_elss(),
                eqset: s.eqset().nodes().collect(),
            };
            self.record(end, Some(NodeId(i)), TraceEvent::Sim(ev));
        }
        RunTrace { header: self.header, records: self.records }
    }
}

/// Runs `sc` for its whole horizon.
pub fn run(sc: &Scenario) -> Result<RunTrace, SimError> {
    let mut e = Engine::new(sc)?;
    e.run_all()?;
    Ok(e.finish())
}
