//! Byzantine node strategies.

use std::sync::Arc;

use slipstream_core::commitment::{compute_slot_digest, DigestRegistry};
use slipstream_core::crypto::Authenticator;
use slipstream_core::dag::{BlockIdx, BlockStore, Validator, GENESIS_IDX};
use slipstream_core::node::{NodeConfig, NodeEvent, NodeState};
use slipstream_core::{Block, NodeId, Result, Timestamp};

use crate::net::Message;
use crate::scenario::Strategy;

#[derive(Debug, Default)]
pub struct ByzOutput {
    pub sends: Vec<(NodeId, Vec<BlockIdx>)>,
    pub events: Vec<NodeEvent>,
    /// Deviations from the protocol taken this round.
    pub actions: Vec<String>,
}

/// A faulty node: one or two honest cores plus a strategy that rewrites their output.
pub struct ByzantineNode {
    id: NodeId,
    n: u32,
    strategy: Strategy,
    cores: Vec<NodeState>,
    forge: (Validator, DigestRegistry),
    crashed: bool,
}

impl ByzantineNode {
    pub fn new(cfg: NodeConfig, strategy: Strategy, store: &BlockStore, accounts: Arc<dyn Authenticator>) -> Self {
        let copies = if matches!(strategy, Strategy::DigestSplit { .. }) { 2 } else { 1 };
        let cores = (0..copies).map(|_| NodeState::new(cfg.clone(), store, accounts.clone())).collect();
        ByzantineNode {
            id: cfg.id,
            n: cfg.n,
            strategy,
            cores,
            forge: (Validator::new(), DigestRegistry::new()),
            crashed: false,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn cores_mut(&mut self) -> &mut [NodeState] {
        &mut self.cores
    }

    pub fn core(&self) -> &NodeState {
        &self.cores[0]
    }

    pub fn step(&mut self, store: &mut BlockStore, now: Timestamp, inbox: &[Message], leader: Option<NodeId>) -> Result<ByzOutput> {
        let mut out = ByzOutput::default();
        match self.strategy.clone() {
            Strategy::Crash { at_slot } if now.slot >= at_slot => {
                if !self.crashed {
                    self.crashed = true;
                    out.actions.push(format!("crash at {now}"));
                }
            }
            Strategy::Crash { .. } => self.honest(store, now, inbox, leader, &mut out)?,
            Strategy::Withhold { to } => {
                self.honest(store, now, inbox, leader, &mut out)?;
                let before = out.sends.iter().filter(|(_, b)| !b.is_empty()).count();
                out.sends.retain(|(r, _)| to.contains(&r.0));
                let after = out.sends.iter().filter(|(_, b)| !b.is_empty()).count();
                if after < before {
                    out.actions.push(format!("withheld from {} recipients", before - after));
                }
            }
            Strategy::SelectiveSend { drop_to, from_slot, until_slot } => {
                self.honest(store, now, inbox, leader, &mut out)?;
                if (from_slot..=until_slot).contains(&now.slot) {
                    let dropped: Vec<u32> =
                        out.sends.iter().filter(|(r, b)| drop_to.contains(&r.0) && !b.is_empty()).map(|(r, _)| r.0).collect();
                    out.sends.retain(|(r, _)| !drop_to.contains(&r.0));
                    if !dropped.is_empty() {
                        out.actions.push(format!("dropped messages to {dropped:?}"));
                    }
                }
            }
            Strategy::Equivocate { from_slot, rounds } => {
                let prev = self.cores[0].b_own().unwrap_or(GENESIS_IDX);
                self.honest(store, now, inbox, leader, &mut out)?;
                if now.slot >= from_slot && (rounds.is_empty() || rounds.contains(&now.round)) {
                    self.equivocate(store, now, prev, &mut out)?;
                }
            }
            Strategy::DigestSplit { camps } => self.split(store, now, inbox, leader, &camps, &mut out)?,
        }
        Ok(out)
    }

    fn honest(&mut self, store: &mut BlockStore, now: Timestamp, inbox: &[Message], leader: Option<NodeId>, out: &mut ByzOutput) -> Result<()> {
        let blocks: Vec<BlockIdx> = inbox.iter().flat_map(|m| m.blocks.iter().copied()).collect();
        let step = self.cores[0].step(store, now, &blocks, leader)?;
        out.sends = step.sends;
        out.events = step.events;
        Ok(())
    }

    /// Sends a second block at `now`, referencing only `prev`, to half of the other nodes.
    fn equivocate(&mut self, store: &mut BlockStore, now: Timestamp, prev: BlockIdx, out: &mut ByzOutput) -> Result<()> {
        let f = store.f();
        let Some(honest) = self.cores[0].b_own() else { return Ok(()) };
        let pd = store.block(prev).digest;
        let digest = if now.is_last_round(f) {
            let (val, reg) = &mut self.forge;
            let cone = store.cone(prev).expect("own block resolved").clone();
            match val.check_cone(store, reg, prev) {
                Ok(()) => compute_slot_digest(reg, store, pd, &cone, now.slot as i64 - 1).unwrap_or(pd),
                Err(_) => pd,
            }
        } else {
            pd
        };
        let twin = Block::unsigned(vec![store.id(prev)], digest, Vec::new(), Vec::new(), now, self.id).signed(store.authenticator())?;
        let tw = store.insert(twin);
        if tw == honest {
            return Ok(());
        }
        let others: Vec<NodeId> = (0..self.n).map(NodeId).filter(|&x| x != self.id).collect();
        let half = others.len() / 2;
        let second: Vec<NodeId> = others[half..].to_vec();
        for (r, blocks) in out.sends.iter_mut() {
            if second.contains(r) {
                blocks.retain(|&b| b != honest);
                blocks.push(tw);
            }
        }
        out.actions.push(format!("equivocated at {now}: {} to {:?}, {} to {:?}", store.id(honest), &others[..half], store.id(tw), second));
        Ok(())
    }

    /// One core per camp; each only hears from and talks to its own camp.
    fn split(
        &mut self,
        store: &mut BlockStore,
        now: Timestamp,
        inbox: &[Message],
        leader: Option<NodeId>,
        camps: &[Vec<u32>; 2],
        out: &mut ByzOutput,
    ) -> Result<()> {
        let camp_of = |x: NodeId| camps.iter().position(|c| c.contains(&x.0));
        let mut digests = Vec::new();
        for (k, core) in self.cores.iter_mut().enumerate() {
            let blocks: Vec<BlockIdx> = inbox
                .iter()
                .filter(|m| camp_of(m.from).is_none_or(|c| c == k))
                .flat_map(|m| m.blocks.iter().copied())
                .collect();
            let step = core.step(store, now, &blocks, leader)?;
            if let Some(b) = step.block {
                digests.push(store.block(b).digest);
            }
            for (r, bl) in step.sends {
                if camp_of(r).map_or(k == 0, |c| c == k) {
                    out.sends.push((r, bl));
                }
            }
            out.events.extend(step.events);
        }
        if digests.len() == 2 && digests[0] != digests[1] {
            out.actions.push(format!("camp digests {} / {}", digests[0], digests[1]));
        }
        Ok(())
    }
}
