//! Random small DAGs and brute-force reference implementations of the DAG,
//! commitment and transaction-certificate predicates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slipstream_core::commitment::{concat_order, is_digest_certificate};
use slipstream_core::crypto::{self, SimAuthenticator};
use slipstream_core::dag::{reach_number, BlockStore, DagStore};
use slipstream_core::ledger::TxOracle;
use slipstream_core::tx::{AccountId, TxId, TxOutput, UtxoId, UtxoTx};
use slipstream_core::{Block, BlockId, NodeId, SlotDigest, Timestamp};

pub const MAX_BLOCKS: usize = 50;

/// A generated DAG, kept in plain vectors next to the store under test.
pub struct RandomDag {
    pub f: u32,
    pub store: BlockStore,
    pub accounts: Arc<SimAuthenticator>,
    /// Per block: reference list, as store indices.
    pub refs: Vec<Vec<usize>>,
    pub time: Vec<Timestamp>,
    pub node: Vec<NodeId>,
    pub digest: Vec<SlotDigest>,
    pub txs: Vec<Vec<TxId>>,
    pub pool: Vec<PoolTx>,
}

pub struct PoolTx {
    pub tx: UtxoTx,
    pub id: TxId,
    pub well_formed: bool,
}

fn pool(gtx: &UtxoTx, accounts: &SimAuthenticator) -> Vec<PoolTx> {
    let out = |to: u32| vec![TxOutput { value: 10, owner: AccountId(to) }];
    let g = |i: u32| gtx.output_id(i);
    let sign = |inputs: Vec<UtxoId>, to: u32, by: u32| UtxoTx::signed(inputs, out(to), AccountId(by), accounts).unwrap();
    let a = sign(vec![g(0)], 1, 0);
    let b = sign(vec![g(0)], 2, 0);
    let c = sign(vec![g(1)], 2, 1);
    let d = sign(vec![c.output_id(0)], 3, 2);
    // signed by the wrong owner
    let bad = sign(vec![g(2)], 0, 3);
    [(a, true), (b, true), (c, true), (d, true), (bad, false)]
        .into_iter()
        .map(|(tx, well_formed)| PoolTx { id: tx.id(), tx, well_formed })
        .collect()
}

impl RandomDag {
    pub fn generate(seed: u64) -> RandomDag {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rng.random_range(1..=2u32);
        let n = 3 * f + 1;
        let auth = Arc::new(SimAuthenticator::new("node", seed, n));
        let accounts = Arc::new(SimAuthenticator::new("account", seed, 4));
        let gtx = UtxoTx::genesis((0..4).map(|a| TxOutput { value: 10, owner: AccountId(a) }).collect());
        let pool = pool(&gtx, &accounts);
        let mut store = BlockStore::new(Block::genesis(f, vec![gtx.clone()]), f, auth.clone());
        let mut dag = RandomDag {
            f,
            store: BlockStore::new(Block::genesis(f, vec![]), f, auth.clone()),
            accounts,
            refs: vec![Vec::new()],
            time: vec![Timestamp::genesis(f)],
            node: vec![NodeId::GENESIS],
            digest: vec![SlotDigest::ROOT],
            txs: vec![vec![gtx.id()]],
            pool: Vec::new(),
        };
        let target = rng.random_range(1..MAX_BLOCKS);
        let p_ref = rng.random_range(0.15..0.7);
        let p_tick = rng.random_range(0.15..0.5);
        let p_tx = rng.random_range(0.0..0.4);
        let mut t = Timestamp::new(1, 1);
        for _ in 0..target {
            if rng.random_bool(p_tick) {
                t = t.next(f);
            }
            let older: Vec<usize> = (0..dag.time.len()).filter(|&i| dag.time[i] < t).collect();
            let mut refs: Vec<usize> = older.iter().copied().filter(|_| rng.random_bool(p_ref)).collect();
            if refs.is_empty() {
                refs.push(*older.choose(&mut rng).expect("genesis is older"));
            }
            let node = NodeId(rng.random_range(0..n));
            let digest = if t.slot < 2 || rng.random_bool(0.1) {
                SlotDigest::ROOT
            } else {
                let k: u8 = if rng.random_bool(0.8) { 0 } else { 1 };
                SlotDigest { slot: t.slot as i64 - 2, value: crypto::hash(&[t.slot as u8, k]) }
            };
            let txs: Vec<UtxoTx> = pool.iter().filter(|_| rng.random_bool(p_tx)).map(|p| p.tx.clone()).collect();
            let ids: Vec<BlockId> = refs.iter().map(|&r| store.id(r)).collect();
            let blk = Block::unsigned(ids, digest, txs.clone(), vec![], t, node).signed(&*auth).unwrap();
            let before = store.len();
            let idx = store.insert(blk);
            if idx < before {
                continue;
            }
            assert_eq!(idx, dag.time.len());
            dag.refs.push(refs);
            dag.time.push(t);
            dag.node.push(node);
            dag.digest.push(digest);
            dag.txs.push(txs.iter().map(|x| x.id()).collect());
        }
        dag.store = store;
        dag.pool = pool;
        dag
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    fn slot(&self, b: usize) -> u64 {
        self.time[b].slot
    }
}

/// Reflexive-transitive closure by repeated relaxation over a boolean matrix.
pub fn closure(refs: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let k = refs.len();
    let mut m = vec![vec![false; k]; k];
    for (i, rs) in refs.iter().enumerate() {
        m[i][i] = true;
        for &r in rs {
            m[i][r] = true;
        }
    }
    for via in 0..k {
        for i in 0..k {
            if m[i][via] {
                for j in 0..k {
                    if m[via][j] {
                        m[i][j] = true;
                    }
                }
            }
        }
    }
    m
}

/// Kahn's algorithm, taking the smallest (time, node, id) available block by linear scan.
pub fn kahn_order(dag: &RandomDag, reach: &[Vec<bool>], set: &[usize]) -> Vec<usize> {
    let key = |b: usize| (dag.time[b], dag.node[b], dag.store.id(b));
    let mut left: Vec<usize> = set.to_vec();
    let mut out = Vec::new();
    while !left.is_empty() {
        let avail: Vec<usize> =
            left.iter().copied().filter(|&b| !left.iter().any(|&a| a != b && reach[b][a])).collect();
        let pick = *avail.iter().min_by_key(|&&b| key(b)).expect("acyclic");
        out.push(pick);
        left.retain(|&x| x != pick);
    }
    out
}

struct TxRef<'a> {
    dag: &'a RandomDag,
    reach: &'a [Vec<bool>],
    q: usize,
    memo: HashMap<(TxId, usize, usize), bool>,
}

impl<'a> TxRef<'a> {
    fn info(&self, id: &TxId) -> Option<&'a PoolTx> {
        self.dag.pool.iter().find(|p| p.id == *id)
    }

    fn ready(&mut self, id: &TxId, b: usize) -> bool {
        let Some(p) = self.info(id) else { return false };
        if !self.dag.txs[b].contains(id) || !p.well_formed {
            return false;
        }
        let genesis = self.dag.txs[0][0];
        let parents: BTreeSet<TxId> = p.tx.inputs.iter().map(|i| i.tx).collect();
        let cone: Vec<usize> = (0..self.dag.len()).filter(|&x| self.reach[b][x]).collect();
        parents.into_iter().all(|pt| pt == genesis || self.fast(&pt, &cone))
    }

    fn conflicts_in(&self, id: &TxId, e: usize) -> bool {
        let Some(p) = self.info(id) else { return false };
        (0..self.dag.len()).filter(|&x| self.reach[e][x]).any(|x| {
            self.dag.txs[x].iter().any(|o| {
                o != id && self.info(o).is_some_and(|q| q.tx.inputs.iter().any(|i| p.tx.inputs.contains(i)))
            })
        })
    }

    fn approves(&mut self, e: usize, id: &TxId, b: usize) -> bool {
        self.reach[e][b] && self.ready(id, b) && !self.conflicts_in(id, e)
    }

    fn certificate(&mut self, c: usize, id: &TxId, b: usize) -> bool {
        if let Some(&v) = self.memo.get(&(*id, b, c)) {
            return v;
        }
        let (bs, cs) = (self.dag.slot(b), self.dag.slot(c));
        let mut v = (cs == bs || cs == bs + 1) && self.ready(id, b);
        if v {
            let mut authors = BTreeSet::new();
            for e in 0..self.dag.len() {
                let es = self.dag.slot(e);
                if self.reach[c][e] && es >= bs && es <= cs && self.approves(e, id, b) {
                    authors.insert(self.dag.node[e]);
                }
            }
            v = authors.len() >= self.q;
        }
        self.memo.insert((*id, b, c), v);
        v
    }

    fn fast(&mut self, id: &TxId, within: &[usize]) -> bool {
        let holders: Vec<usize> = within.iter().copied().filter(|&b| self.dag.txs[b].contains(id)).collect();
        holders.into_iter().any(|b| {
            let dag = self.dag;
            let authors: BTreeSet<NodeId> =
                within.iter().copied().filter(|&c| self.certificate(c, id, b)).map(|c| dag.node[c]).collect();
            authors.len() >= self.q
        })
    }
}

#[derive(Debug, Default)]
pub struct Tally {
    pub dags: usize,
    pub blocks: usize,
    pub checks: BTreeMap<&'static str, usize>,
    /// Checks where the predicate held, to show the generator exercises both outcomes.
    pub positives: BTreeMap<&'static str, usize>,
    pub mismatches: Vec<String>,
}

impl Tally {
    fn see(&mut self, what: &'static str, positive: bool) {
        *self.checks.entry(what).or_default() += 1;
        if positive {
            *self.positives.entry(what).or_default() += 1;
        }
    }

    fn expect<T: PartialEq + std::fmt::Debug>(&mut self, seed: u64, what: &'static str, got: T, want: T, ctx: String) {
        if got != want && self.mismatches.len() < 20 {
            self.mismatches.push(format!("seed {seed} {what} {ctx}: got {got:?}, oracle {want:?}"));
        }
    }

    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub const PREDICATES: [&str; 7] = ["reachability", "reach-number", "tips", "concat-order", "dc", "tc", "fast-confirmed"];

/// Compares the store under test with the oracles on one random DAG.
pub fn check_dag(seed: u64, tally: &mut Tally) {
    let dag = RandomDag::generate(seed);
    let k = dag.len();
    let reach = closure(&dag.refs);
    tally.dags += 1;
    tally.blocks += k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);

    for b in 0..k {
        for c in 0..k {
            let got = dag.store.is_reachable(b, c).unwrap();
            tally.see("reachability", reach[b][c]);
            tally.expect(seed, "reachability", got, reach[b][c], format!("{b}->{c}"));
            let cone = dag.store.cone(b).unwrap().contains(c);
            tally.expect(seed, "reachability", cone, reach[b][c], format!("cone({b}) ∋ {c}"));

            let want: BTreeSet<NodeId> = (0..k)
                .filter(|&e| dag.slot(e) == dag.slot(b) && reach[b][e] && reach[e][c])
                .map(|e| dag.node[e])
                .collect();
            tally.see("reach-number", !want.is_empty());
            tally.expect(seed, "reach-number", reach_number(&dag.store, c, b), want.len(), format!("({c},{b})"));
        }
    }

    // tips of the union of a few random cones
    let mut store_dag = DagStore::new();
    let tops: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.2)).collect();
    for &t in &tops {
        store_dag.add_cone(&dag.store, t).unwrap();
    }
    let members: Vec<usize> = (0..k).filter(|&x| x == 0 || tops.iter().any(|&t| reach[t][x])).collect();
    let want: BTreeSet<usize> =
        members.iter().copied().filter(|&x| !members.iter().any(|&y| dag.refs[y].contains(&x))).collect();
    let got: BTreeSet<usize> = store_dag.tips().collect();
    tally.see("tips", want.len() > 1);
    tally.expect(seed, "tips", got, want, format!("tops {tops:?}"));

    // concat order of a cone minus an older cone, presented shuffled
    let hi = rng.random_range(0..k);
    let lo = rng.random_range(0..k);
    let mut set: Vec<usize> = (0..k).filter(|&x| reach[hi][x] && !reach[lo][x]).collect();
    set.shuffle(&mut rng);
    let got = concat_order(&dag.store, &set);
    let want = kahn_order(&dag, &reach, &set);
    let topo = got.iter().enumerate().all(|(i, &a)| got[i + 1..].iter().all(|&b| !reach[a][b]));
    tally.see("concat-order", set.len() > 1);
    tally.expect(seed, "concat-order", topo, true, "topological".into());
    tally.expect(seed, "concat-order", got, want, format!("set of {}", set.len()));

    let q = (2 * dag.f + 1) as usize;
    for a in 0..k {
        let s = dag.slot(a);
        let mut support: BTreeMap<SlotDigest, BTreeSet<NodeId>> = BTreeMap::new();
        for e in 0..k {
            if s >= 2 && dag.slot(e) == s && reach[a][e] && dag.digest[e].slot == s as i64 - 2 {
                support.entry(dag.digest[e]).or_default().insert(dag.node[e]);
            }
        }
        let want = support.into_iter().find(|(_, w)| w.len() >= q).map(|(d, _)| d);
        tally.see("dc", want.is_some());
        tally.expect(seed, "dc", is_digest_certificate(&dag.store, a), want, format!("block {a}"));
    }

    let mut txo = TxOracle::new(&dag.store, dag.accounts.clone());
    let mut oracle = TxRef { dag: &dag, reach: &reach, q, memo: HashMap::new() };
    for b in 1..k {
        for id in dag.txs[b].clone() {
            for c in 0..k {
                let want = oracle.certificate(c, &id, b);
                tally.see("tc", want);
                tally.expect(seed, "tc", txo.is_certificate(&dag.store, c, &id, b), want, format!("c={c} b={b}"));
            }
        }
    }
    for p in &dag.pool {
        for top in 0..k {
            let cone: Vec<usize> = (0..k).filter(|&x| reach[top][x]).collect();
            let want = oracle.fast(&p.id, &cone);
            let within = dag.store.cone(top).unwrap().clone();
            tally.see("fast-confirmed", want);
            tally.expect(seed, "fast-confirmed", txo.is_fast_confirmed(&dag.store, &p.id, &within), want, format!("cone({top})"));
        }
    }
}

pub fn run(count: u64, first_seed: u64) -> Tally {
    let mut t = Tally::default();
    for s in first_seed..first_seed + count {
        check_dag(s, &mut t);
    }
    t
}
