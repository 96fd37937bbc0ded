use std::sync::Arc;

use proptest::prelude::*;
use slipstream_core::crypto::SimAuthenticator;
use slipstream_core::dag::{BlockIdx, BlockSet, BlockStore, GENESIS_IDX};
use slipstream_core::ledger::{ConfirmPath, FastPath, Mempool, TxOracle, UtxoLedger};
use slipstream_core::tx::{AccountId, TxOutput, UtxoId, UtxoTx};
use slipstream_core::{Block, BlockId, NodeId, SlotDigest, Timestamp};

fn genesis(accounts: u32) -> UtxoTx {
    UtxoTx::genesis((0..accounts).map(|a| TxOutput { value: 10, owner: AccountId(a) }).collect())
}

fn pay(auth: &SimAuthenticator, input: UtxoId, by: u32, to: &[(u32, u64)]) -> UtxoTx {
    let outs = to.iter().map(|&(a, v)| TxOutput { value: v, owner: AccountId(a) }).collect();
    UtxoTx::signed(vec![input], outs, AccountId(by), auth).unwrap()
}

#[test]
fn ledger_rejects_double_spends_and_missing_inputs() {
    let auth = SimAuthenticator::new("account", 1, 4);
    let g = genesis(4);
    let mut l = UtxoLedger::new(std::slice::from_ref(&g));
    assert_eq!(l.snapshot().balances.values().sum::<u64>(), 40);
    let a = pay(&auth, g.output_id(0), 0, &[(1, 10)]);
    let b = pay(&auth, g.output_id(0), 0, &[(2, 10)]);
    let child = pay(&auth, a.output_id(0), 1, &[(3, 4), (1, 6)]);
    assert!(!l.try_add(Arc::new(child.clone()), ConfirmPath::Consensus2), "input not confirmed");
    assert!(l.try_add(Arc::new(a.clone()), ConfirmPath::Fast));
    assert!(!l.try_add(Arc::new(a.clone()), ConfirmPath::Fast), "idempotent");
    assert!(l.conflicts(&b.id(), &b));
    assert!(!l.try_add(Arc::new(b.clone()), ConfirmPath::Consensus1));
    assert!(l.try_add(Arc::new(child.clone()), ConfirmPath::Consensus2));
    assert!(!l.is_unspent(&a.output_id(0)));
    assert!(l.is_unspent(&child.output_id(0)));
    let snap = l.snapshot();
    assert_eq!(snap.balances[&AccountId(3)], 14);
    assert_eq!(snap.balances[&AccountId(1)], 16);
    assert_eq!(snap.balances.get(&AccountId(0)), None);
    assert_eq!(snap.balances.values().sum::<u64>(), 40);
    let paths: Vec<ConfirmPath> = l.history().iter().map(|x| x.1).collect();
    assert_eq!(paths, [ConfirmPath::Genesis, ConfirmPath::Fast, ConfirmPath::Consensus2]);
    l.check_invariants().unwrap();
}

#[test]
fn unconditional_add_breaks_invariants_only_on_conflict() {
    let auth = SimAuthenticator::new("account", 1, 4);
    let g = genesis(2);
    let mut l = UtxoLedger::new(std::slice::from_ref(&g));
    let a = pay(&auth, g.output_id(0), 0, &[(1, 10)]);
    let b = pay(&auth, g.output_id(0), 0, &[(0, 10)]);
    l.add(Arc::new(a), ConfirmPath::Fast);
    l.check_invariants().unwrap();
    l.add(Arc::new(b), ConfirmPath::Fast);
    assert!(l.check_invariants().unwrap_err().contains("double spend"));
}

struct Fx {
    store: BlockStore,
    auth: Arc<SimAuthenticator>,
    accounts: Arc<SimAuthenticator>,
    g: UtxoTx,
}

impl Fx {
    fn new() -> Fx {
        let auth = Arc::new(SimAuthenticator::new("node", 2, 4));
        let g = genesis(4);
        Fx {
            store: BlockStore::new(Block::genesis(1, vec![g.clone()]), 1, auth.clone()),
            auth,
            accounts: Arc::new(SimAuthenticator::new("account", 2, 4)),
            g,
        }
    }

    fn add(&mut self, refs: &[BlockIdx], t: (u64, u32), node: u32, txs: Vec<UtxoTx>) -> BlockIdx {
        let ids: Vec<BlockId> = refs.iter().map(|&r| self.store.id(r)).collect();
        let b = Block::unsigned(ids, SlotDigest::ROOT, txs, vec![], Timestamp::new(t.0, t.1), NodeId(node))
            .signed(&*self.auth)
            .unwrap();
        self.store.insert(b)
    }

    fn cone_union(&self, tops: &[BlockIdx]) -> BlockSet {
        let mut s = BlockSet::new();
        for &t in tops {
            s.union_with(self.store.cone(t).unwrap());
        }
        s
    }
}

#[test]
fn three_approvals_in_three_certificates_confirm_fast() {
    let mut fx = Fx::new();
    let tx = pay(&fx.accounts, fx.g.output_id(0), 0, &[(1, 10)]);
    let b = fx.add(&[GENESIS_IDX], (1, 1), 0, vec![tx.clone()]);
    let r2: Vec<_> = (0..3).map(|n| fx.add(&[b], (1, 2), n, vec![])).collect();
    let certs: Vec<_> = (0..3).map(|n| fx.add(&r2, (1, 3), n, vec![])).collect();
    let mut o = TxOracle::new(&fx.store, fx.accounts.clone());
    let id = tx.id();
    assert!(o.is_ready(&fx.store, &id, b));
    assert!(o.approves(&fx.store, r2[0], &id, b));
    assert!(o.is_certificate(&fx.store, certs[0], &id, b));
    assert!(!o.is_certificate(&fx.store, r2[0], &id, b), "a single approval is no quorum");
    let two = fx.cone_union(&certs[..2]);
    assert!(!o.is_fast_confirmed(&fx.store, &id, &two));
    let all = fx.cone_union(&certs);
    assert!(o.is_fast_confirmed(&fx.store, &id, &all));

    let mut ledger = UtxoLedger::new(std::slice::from_ref(&fx.g));
    let mut fp = FastPath::new();
    let fresh: Vec<BlockIdx> = all.iter().collect();
    fp.observe(&fx.store, &fresh);
    assert_eq!(fp.pending_len(), 1);
    assert_eq!(fp.confirm(&fx.store, &mut o, &mut ledger, &all), vec![id]);
    assert_eq!(fp.pending_len(), 0);
    assert!(ledger.contains(&id));
}

#[test]
fn visible_double_spend_blocks_approval() {
    let mut fx = Fx::new();
    let a = pay(&fx.accounts, fx.g.output_id(0), 0, &[(1, 10)]);
    let b = pay(&fx.accounts, fx.g.output_id(0), 0, &[(2, 10)]);
    let ba = fx.add(&[GENESIS_IDX], (1, 1), 0, vec![a.clone()]);
    let bb = fx.add(&[GENESIS_IDX], (1, 1), 1, vec![b.clone()]);
    let r2: Vec<_> = (0..4).map(|n| fx.add(&[ba, bb], (1, 2), n, vec![])).collect();
    let certs: Vec<_> = (0..4).map(|n| fx.add(&r2, (1, 3), n, vec![])).collect();
    let mut o = TxOracle::new(&fx.store, fx.accounts.clone());
    assert!(o.is_ready(&fx.store, &a.id(), ba));
    assert!(!o.approves(&fx.store, r2[0], &a.id(), ba));
    let all = fx.cone_union(&certs);
    assert!(!o.is_fast_confirmed(&fx.store, &a.id(), &all));
    assert!(!o.is_fast_confirmed(&fx.store, &b.id(), &all));
}

#[test]
fn badly_signed_tx_is_never_ready() {
    let mut fx = Fx::new();
    let forged = pay(&fx.accounts, fx.g.output_id(0), 3, &[(3, 10)]);
    let b = fx.add(&[GENESIS_IDX], (1, 1), 0, vec![forged.clone()]);
    let mut o = TxOracle::new(&fx.store, fx.accounts.clone());
    assert!(!o.is_well_formed(&fx.store, &forged.id()));
    assert!(!o.is_ready(&fx.store, &forged.id(), b));
}

#[test]
fn mempool_caps_and_skips_included() {
    let mut fx = Fx::new();
    let txs: Vec<UtxoTx> = (0..4).map(|a| pay(&fx.accounts, fx.g.output_id(a), a, &[(a, 10)])).collect();
    let b = fx.add(&[GENESIS_IDX], (1, 1), 0, vec![txs[0].clone()]);
    let mut m = Mempool::new(2);
    for t in &txs {
        m.push(t.clone());
    }
    m.push(txs[1].clone());
    let dag = fx.cone_union(&[b]);
    let first = m.take_payload(&fx.store, &dag);
    assert_eq!(first, vec![txs[1].clone(), txs[2].clone()]);
    assert_eq!(m.take_payload(&fx.store, &dag), vec![txs[3].clone()]);
    assert!(m.is_empty());
}

proptest! {
    /// Any sequence of value-conserving spends keeps the ledger free of
    /// double spends and conserves total value.
    #[test]
    fn try_add_preserves_invariants(choices in prop::collection::vec((0usize..64, 0u32..4, 1u64..10), 1..60)) {
        let auth = SimAuthenticator::new("account", 5, 4);
        let g = genesis(4);
        let mut l = UtxoLedger::new(std::slice::from_ref(&g));
        // every output ever created, confirmed or not
        let mut outputs: Vec<(UtxoId, TxOutput)> =
            g.outputs.iter().enumerate().map(|(i, o)| (g.output_id(i as u32), *o)).collect();
        for (pick, to, cut) in choices {
            let (input, o) = outputs[pick % outputs.len()];
            let split = cut.min(o.value);
            let mut to_list = vec![(to, split)];
            if o.value > split {
                to_list.push((o.owner.0, o.value - split));
            }
            let tx = pay(&auth, input, o.owner.0, &to_list);
            let had_inputs = l.has_inputs(&tx);
            let conflict = l.conflicts(&tx.id(), &tx);
            let fresh = !l.contains(&tx.id());
            let added = l.try_add(Arc::new(tx.clone()), ConfirmPath::Consensus2);
            prop_assert_eq!(added, had_inputs && !conflict && fresh);
            for (k, out) in tx.outputs.iter().enumerate() {
                outputs.push((tx.output_id(k as u32), *out));
            }
            prop_assert!(l.check_invariants().is_ok());
            prop_assert_eq!(l.snapshot().balances.values().sum::<u64>(), 40);
        }
    }

    #[test]
    fn global_rounds_are_consecutive(f in 1u32..5, slot in 1u64..500, round in 1u32..7) {
        let round = (round - 1) % (f + 2) + 1;
        let t = Timestamp::new(slot, round);
        let g = t.global_round(f);
        prop_assert_eq!(Timestamp::from_global_round(g, f), t);
        prop_assert_eq!(t.next(f).global_round(f), g + 1);
        prop_assert!(t.next(f) > t);
    }
}
