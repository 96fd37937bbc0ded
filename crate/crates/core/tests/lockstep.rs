use std::sync::Arc;

use slipstream_core::crypto::SimAuthenticator;
use slipstream_core::dag::{BlockIdx, BlockStore};
use slipstream_core::node::{NodeConfig, NodeEvent, NodeState};
use slipstream_core::tx::{AccountId, TxOutput, UtxoTx};
use slipstream_core::{Block, NodeId, Timestamp};

struct Net {
    store: BlockStore,
    nodes: Vec<NodeState>,
    inboxes: Vec<Vec<BlockIdx>>,
    events: Vec<(Timestamp, NodeId, NodeEvent)>,
}

impl Net {
    fn new(n: u32, f: u32) -> Self {
        let auth = Arc::new(SimAuthenticator::new("node", 1, n));
        let accounts = Arc::new(SimAuthenticator::new("account", 1, 4));
        let genesis = UtxoTx::genesis((0..4).map(|a| TxOutput { value: 100, owner: AccountId(a) }).collect());
        let store = BlockStore::new(Block::genesis(f, vec![genesis]), f, auth);
        let nodes = (0..n)
            .map(|i| NodeState::new(NodeConfig { id: NodeId(i), n, f, tx_cap: 8, audit: true }, &store, accounts.clone()))
            .collect();
        Net { store, nodes, inboxes: vec![Vec::new(); n as usize], events: Vec::new() }
    }

    fn round(&mut self, t: Timestamp) {
        let mut next = vec![Vec::new(); self.nodes.len()];
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let inbox = std::mem::take(&mut self.inboxes[i]);
            let out = node.step(&mut self.store, t, &inbox, Some(NodeId(0))).unwrap();
            for (to, blocks) in out.sends {
                next[to.index()].extend(blocks);
            }
            for e in out.events {
                self.events.push((t, NodeId(i as u32), e));
            }
        }
        self.inboxes = next;
    }
}

#[test]
fn honest_lockstep_finalizes_and_agrees() {
    let (n, f) = (4, 1);
    let mut net = Net::new(n, f);
    let mut t = Timestamp::new(1, 1);
    for _ in 0..(10 * (f + 2)) {
        net.round(t);
        t = t.next(f);
    }
    for (_, node, e) in &net.events {
        assert!(
            !matches!(e, NodeEvent::AuditFailure { .. } | NodeEvent::DagReject { .. } | NodeEvent::LedgerViolation { .. }),
            "{node}: {e:?}"
        );
    }
    let chains: Vec<_> = net.nodes.iter().map(|x| x.chain().clone()).collect();
    assert!(chains.iter().all(|c| c == &chains[0]));
    assert_eq!(chains[0].last_slot(), 9);
    // σ_8 final at ⟨10,3⟩ would need slot 10 round 3; σ_7 is final by slot 9
    for node in &net.nodes {
        assert!(node.finality().s_final >= 7, "s_final {}", node.finality().s_final);
    }
    let o0 = net.nodes[0].order_final().unwrap();
    for node in &net.nodes {
        assert_eq!(node.order_final().unwrap(), o0);
    }
}
