//! Payment clients: cautious spenders and double spenders.

use std::collections::BTreeSet;

use slipstream_core::crypto::Authenticator;
use slipstream_core::ledger::UtxoLedger;
use slipstream_core::tx::{AccountId, TxOutput, UtxoId, UtxoTx};
use slipstream_core::{NodeId, Result, Timestamp};

use crate::scenario::{ClientSpec, GenesisSpec};

/// A transaction handed to the mempools of `to` before a round.
#[derive(Clone, Debug)]
pub struct Release {
    pub tx: UtxoTx,
    pub to: Vec<NodeId>,
    pub kind: &'static str,
    pub pair: Option<u32>,
}

/// The genesis transaction: `outputs_per_account` outputs of `value` per account.
pub fn genesis_tx(g: &GenesisSpec) -> UtxoTx {
    let outputs = (0..g.accounts)
        .flat_map(|a| (0..g.outputs_per_account).map(move |_| TxOutput { value: g.value, owner: AccountId(a) }))
        .collect();
    UtxoTx::genesis(outputs)
}

fn genesis_outputs(g: &GenesisSpec, gtx: &UtxoTx, account: u32) -> Vec<(UtxoId, u64)> {
    (0..g.outputs_per_account).map(|j| (gtx.output_id(account * g.outputs_per_account + j), g.value)).collect()
}

pub struct Client {
    spec: ClientSpec,
    accounts: u32,
    f: u32,
    index: u32,
    /// Outputs the client owns or expects to own, oldest first.
    owned: Vec<(UtxoId, u64)>,
    spent: BTreeSet<UtxoId>,
}

impl Client {
    pub fn new(index: u32, spec: ClientSpec, g: &GenesisSpec, gtx: &UtxoTx, f: u32) -> Self {
        let account = match &spec {
            ClientSpec::Cautious { account, .. }
            | ClientSpec::DoubleSpender { account, .. }
            | ClientSpec::SplitBroadcast { account, .. } => *account,
        };
        Client { owned: genesis_outputs(g, gtx, account), spec, accounts: g.accounts, f, index, spent: BTreeSet::new() }
    }

    /// Releases due before round `now`. `ledger_of` exposes correct nodes' ledgers.
    pub fn poll<'a>(
        &mut self,
        now: Timestamp,
        ledger_of: impl Fn(NodeId) -> Option<&'a UtxoLedger>,
        auth: &dyn Authenticator,
    ) -> Result<Vec<Release>> {
        let g = now.global_round(self.f);
        match self.spec.clone() {
            ClientSpec::Cautious { account, tracked, every, start_slot, stop_slot } => {
                if !(start_slot..=stop_slot).contains(&now.slot) || g % every as u64 != 0 {
                    return Ok(Vec::new());
                }
                let Some(ledger) = ledger_of(NodeId(tracked)) else { return Ok(Vec::new()) };
                let Some(&(input, value)) =
                    self.owned.iter().find(|(u, _)| !self.spent.contains(u) && ledger.is_unspent(u))
                else {
                    return Ok(Vec::new());
                };
                let payee = AccountId((account + 1) % self.accounts);
                let me = AccountId(account);
                let outputs = if value > 1 {
                    vec![TxOutput { value: 1, owner: payee }, TxOutput { value: value - 1, owner: me }]
                } else {
                    vec![TxOutput { value, owner: payee }]
                };
                let tx = UtxoTx::signed(vec![input], outputs, me, auth)?;
                self.spent.insert(input);
                self.owned.retain(|(u, _)| *u != input);
                if value > 1 {
                    self.owned.push((tx.output_id(1), value - 1));
                }
                Ok(vec![Release { tx, to: vec![NodeId(tracked)], kind: "cautious", pair: None }])
            }
            ClientSpec::DoubleSpender { account, slot, round, first_to, second_to } => {
                if now != Timestamp::new(slot, round) {
                    return Ok(Vec::new());
                }
                let (a, b) = self.conflicting(account, auth)?;
                Ok(vec![
                    Release { tx: a, to: ids(&first_to), kind: "double-spend", pair: Some(self.index) },
                    Release { tx: b, to: ids(&second_to), kind: "double-spend", pair: Some(self.index) },
                ])
            }
            ClientSpec::SplitBroadcast { account, slot, round, wide_to, narrow_to, delay } => {
                let start = Timestamp::new(slot, round).global_round(self.f);
                let mut out = Vec::new();
                if g == start || g == start + delay as u64 {
                    let (a, b) = self.conflicting(account, auth)?;
                    if g == start {
                        out.push(Release { tx: a, to: ids(&wide_to), kind: "split-wide", pair: Some(self.index) });
                    }
                    if g == start + delay as u64 {
                        out.push(Release { tx: b, to: ids(&narrow_to), kind: "split-narrow", pair: Some(self.index) });
                    }
                }
                Ok(out)
            }
        }
    }

    /// Two transactions paying the client's last genesis output to different accounts.
    fn conflicting(&self, account: u32, auth: &dyn Authenticator) -> Result<(UtxoTx, UtxoTx)> {
        let (input, value) = *self.owned.last().expect("genesis outputs");
        let me = AccountId(account);
        let pay = |to: u32| UtxoTx::signed(vec![input], vec![TxOutput { value, owner: AccountId(to % self.accounts) }], me, auth);
        Ok((pay(account + 1)?, pay(account + 2)?))
    }
}

fn ids(v: &[u32]) -> Vec<NodeId> {
    v.iter().copied().map(NodeId).collect()
}
