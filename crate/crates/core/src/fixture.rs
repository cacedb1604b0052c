//! Seeded synthetic chain data with known ground truth.
//!
//! Three days (2024-03-12 to 2024-03-14) on four chains. Each chain carries
//! retail traffic through a router and an aggregator plus non-DEX calls, and
//! some number of planted cyclic-arbitrage bots that trade, probe pools
//! without trading, and revert. Base also has a high-gas contract that mostly
//! makes single swaps but occasionally closes a profitable cycle; Arbitrum
//! routes a few profitable cycles through its router and aggregator.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ChainInputs, Config, Thresholds};
use crate::ingest::{
    self, CallType, ContractBytecode, LabelKind, LabelSet, OhlcBar, SwapEvent, SwapIndex, TraceCall, TraceIndex,
    TransactionRecord, TxStatus,
};
use crate::types::{Address, Chain, TxHash};

pub const DEFAULT_SEED: u64 = 20240313;

pub fn fixture_days() -> Vec<NaiveDate> {
    (12..=14).map(|d| NaiveDate::from_ymd_opt(2024, 3, d).expect("valid date")).collect()
}

const SEL_SWAP: [u8; 4] = [0x02, 0x2c, 0x0d, 0x9f];
const SEL_RESERVES: [u8; 4] = [0x09, 0x02, 0xf1, 0xac];
const SEL_TRANSFER: [u8; 4] = [0xa9, 0x05, 0x9c, 0xbb];

/// Bot transaction counts by label, as planted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub trade: u64,
    pub interaction_success: u64,
    pub interaction_revert: u64,
    pub residual: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalldataTruth {
    pub txs: u64,
    pub unique: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTruth {
    pub bots: BTreeSet<Address>,
    /// Labeled routers and aggregators that carry profitable cycles.
    pub router_decoys: BTreeSet<Address>,
    pub single_swap_decoy: Option<Address>,
    pub bot_outcomes: OutcomeCounts,
    pub calldata: BTreeMap<Address, CalldataTruth>,
    /// Bots deployed with byte-identical code.
    pub clone_group: BTreeSet<Address>,
    pub total_gas: u128,
    pub tx_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub chains: BTreeMap<Chain, ChainTruth>,
}

#[derive(Debug, Clone)]
pub struct ChainFixture {
    pub chain: Chain,
    pub txs: Vec<TransactionRecord>,
    pub swaps: SwapIndex,
    pub traces: TraceIndex,
    pub labels: LabelSet,
    pub bytecode: Vec<ContractBytecode>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub chains: Vec<ChainFixture>,
    pub ohlc: Vec<OhlcBar>,
    pub truth: GroundTruth,
}

struct ChainParams {
    chain: Chain,
    bots: usize,
    block_secs: i64,
    gas_price: u64,
    first_block: u64,
}

fn params() -> [ChainParams; 4] {
    [
        ChainParams { chain: Chain::Ethereum, bots: 1, block_secs: 12, gas_price: 30_000_000_000, first_block: 19_420_000 },
        ChainParams { chain: Chain::Arbitrum, bots: 1, block_secs: 1, gas_price: 10_000_000, first_block: 189_600_000 },
        ChainParams { chain: Chain::Base, bots: 2, block_secs: 2, gas_price: 5_000_000, first_block: 11_800_000 },
        ChainParams { chain: Chain::Optimism, bots: 1, block_secs: 2, gas_price: 300_000, first_block: 117_400_000 },
    ]
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    p: &'a ChainParams,
    t0: i64,
    txs: Vec<TransactionRecord>,
    swaps: SwapIndex,
    traces: TraceIndex,
    tokens: Vec<Address>,
    pools: Vec<Address>,
}

struct Plan<'a> {
    to: Address,
    from: Address,
    ts: i64,
    gas: u64,
    calldata: Vec<u8>,
    status: TxStatus,
    /// Token path as (sold, bought) hops; empty for swap-less txs.
    hops: Vec<(Address, Address)>,
    profit: bool,
    /// Extra calls after the top-level call.
    calls: &'a [(CallType, Address, [u8; 4])],
}

impl Builder<'_> {
    fn addr(&mut self) -> Address {
        Address(self.rng.gen())
    }

    fn price(&mut self) -> BigUint {
        let f = self.rng.gen_range(80u64..=200);
        BigUint::from(self.p.gas_price) * f / 100u32
    }

    fn push(&mut self, plan: Plan<'_>) -> TxHash {
        let hash = TxHash(self.rng.gen());
        let tx = TransactionRecord {
            hash,
            from_addr: plan.from,
            to_addr: Some(plan.to),
            block_number: self.p.first_block + ((plan.ts - self.t0) / self.p.block_secs) as u64,
            timestamp: plan.ts,
            gas_used: plan.gas,
            gas_price: self.price(),
            calldata: plan.calldata.clone(),
            status: plan.status,
            chain: self.p.chain,
        };
        self.txs.push(tx);

        let mut calls = vec![TraceCall {
            tx_hash: hash,
            call_type: CallType::Call,
            callee: Some(plan.to),
            selector: plan.calldata.iter().take(4).copied().collect(),
            depth_order: 0,
        }];
        for (ct, callee, sel) in plan.calls {
            calls.push(TraceCall {
                tx_hash: hash,
                call_type: *ct,
                callee: Some(*callee),
                selector: sel.to_vec(),
                depth_order: calls.len() as u64,
            });
        }

        if !plan.hops.is_empty() {
            let mut events = Vec::new();
            let mut idx = self.rng.gen_range(0u64..20);
            let start: u64 = self.rng.gen_range(1_000_000_000_000_000..5_000_000_000_000_000_000);
            let mut amount = BigUint::from(start);
            for (i, (sold, bought)) in plan.hops.iter().enumerate() {
                let last = i + 1 == plan.hops.len();
                let out = if last && plan.profit {
                    let gain = self.rng.gen_range(1..=start / 200 + 1);
                    BigUint::from(start + gain)
                } else {
                    BigUint::from(self.rng.gen_range(1_000_000u64..10_000_000_000_000))
                };
                events.push(SwapEvent {
                    tx_hash: hash,
                    token_sold: *sold,
                    token_bought: *bought,
                    amount_sold: amount.clone(),
                    amount_bought: out.clone(),
                    evt_index: idx,
                });
                let pool = *self.pools.choose(self.rng).expect("pools");
                calls.push(TraceCall {
                    tx_hash: hash,
                    call_type: CallType::Call,
                    callee: Some(pool),
                    selector: SEL_SWAP.to_vec(),
                    depth_order: calls.len() as u64,
                });
                amount = out;
                idx += self.rng.gen_range(1u64..4);
            }
            self.swaps.insert(hash, events);
        }
        self.traces.insert(hash, calls);
        hash
    }

    fn cycle(&mut self) -> Vec<(Address, Address)> {
        let mut t = self.tokens.clone();
        t.shuffle(self.rng);
        if self.rng.gen_bool(0.5) {
            vec![(t[0], t[1]), (t[1], t[0])]
        } else {
            vec![(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
        }
    }

    fn pair(&mut self) -> (Address, Address) {
        let mut t = self.tokens.clone();
        t.shuffle(self.rng);
        (t[0], t[1])
    }
}

fn random_code(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = rng.gen_range(200..600);
    let mut code = vec![0x60, 0x80, 0x60, 0x40, 0x52];
    code.extend((0..len).map(|_| rng.gen::<u8>()));
    code
}

fn payload(rng: &mut ChaCha8Rng, selector: [u8; 4], words: usize) -> Vec<u8> {
    let mut v = selector.to_vec();
    v.extend((0..words * 32).map(|_| rng.gen::<u8>()));
    v
}

fn build_chain(rng: &mut ChaCha8Rng, p: &ChainParams) -> (ChainFixture, ChainTruth) {
    let days = fixture_days();
    let t0 = days[0].and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
    let mut b = Builder {
        rng,
        p,
        t0,
        txs: Vec::new(),
        swaps: SwapIndex::new(),
        traces: TraceIndex::new(),
        tokens: Vec::new(),
        pools: Vec::new(),
    };
    b.tokens = (0..4).map(|_| b.addr()).collect();
    b.pools = (0..4).map(|_| b.addr()).collect();
    let router = b.addr();
    let aggregator = b.addr();
    let vault = b.addr();
    let retail: Vec<Address> = (0..40).map(|_| b.addr()).collect();

    let mut labels = LabelSet::default();
    labels.insert(router, LabelKind::Router, "swap router");
    labels.insert(aggregator, LabelKind::Aggregator, "aggregator");
    for pool in &b.pools {
        labels.insert(*pool, LabelKind::Pool, "");
    }

    let mut truth = ChainTruth::default();
    let mut bytecode = vec![
        ContractBytecode { address: router, code: random_code(b.rng) },
        ContractBytecode { address: aggregator, code: random_code(b.rng) },
        ContractBytecode { address: vault, code: random_code(b.rng) },
    ];

    let clone_code = random_code(b.rng);
    for i in 0..p.bots {
        let bot = b.addr();
        truth.bots.insert(bot);
        let code = if p.bots > 1 {
            truth.clone_group.insert(bot);
            clone_code.clone()
        } else {
            random_code(b.rng)
        };
        bytecode.push(ContractBytecode { address: bot, code });
        let operators: Vec<Address> = (0..b.rng.gen_range(1..=2)).map(|_| b.addr()).collect();
        let k = b.rng.gen_range(3..=6);
        let payloads: Vec<Vec<u8>> = (0..k)
            .map(|j| {
                let sel = [0x00, 0x00, i as u8, j as u8];
                let words = b.rng.gen_range(1..=4);
                payload(b.rng, sel, words)
            })
            .collect();
        let mut n = 0usize;
        for day in &days {
            let mut ts = day.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() + b.rng.gen_range(0..3600);
            let trades = b.rng.gen_range(3..=8);
            let probes = b.rng.gen_range(10..=30);
            let reverts = b.rng.gen_range(5..=20);
            let residual = b.rng.gen_range(0..=2);
            let mut kinds: Vec<u8> = [(0u8, trades), (1, probes), (2, reverts), (3, residual)]
                .iter()
                .flat_map(|(kind, c)| std::iter::repeat_n(*kind, *c))
                .collect();
            kinds.shuffle(b.rng);
            for kind in kinds {
                ts += b.rng.gen_range(1..=20);
                let from = *operators.choose(b.rng).expect("operators");
                let calldata = payloads[n % k].clone();
                n += 1;
                let pool = *b.pools.choose(b.rng).expect("pools");
                let probe = [(CallType::StaticCall, pool, SEL_RESERVES)];
                match kind {
                    0 => {
                        let hops = b.cycle();
                        let gas = b.rng.gen_range(150_000..300_000);
                        b.push(Plan { to: bot, from, ts, gas, calldata, status: TxStatus::Success, hops, profit: true, calls: &probe });
                        truth.bot_outcomes.trade += 1;
                    }
                    1 | 2 => {
                        let status = if kind == 1 { TxStatus::Success } else { TxStatus::Revert };
                        let gas = b.rng.gen_range(25_000..80_000);
                        b.push(Plan { to: bot, from, ts, gas, calldata, status, hops: vec![], profit: false, calls: &probe });
                        if kind == 1 {
                            truth.bot_outcomes.interaction_success += 1;
                        } else {
                            truth.bot_outcomes.interaction_revert += 1;
                        }
                    }
                    _ => {
                        let token = b.tokens[0];
                        let calls = [(CallType::Call, token, SEL_TRANSFER)];
                        b.push(Plan { to: bot, from, ts, gas: 30_000, calldata, status: TxStatus::Success, hops: vec![], profit: false, calls: &calls });
                        truth.bot_outcomes.residual += 1;
                    }
                }
            }
        }
        truth.calldata.insert(bot, CalldataTruth { txs: n as u64, unique: k as u64 });
    }

    if p.chain == Chain::Base {
        // Mostly single swaps, occasionally a profitable cycle, heavy gas.
        let decoy = b.addr();
        let from = b.addr();
        truth.single_swap_decoy = Some(decoy);
        bytecode.push(ContractBytecode { address: decoy, code: random_code(b.rng) });
        for day in &days {
            let mut ts = day.and_hms_opt(6, 0, 0).expect("time").and_utc().timestamp();
            for j in 0..12 {
                ts += b.rng.gen_range(60..600);
                let (hops, profit) = if j % 4 == 3 { (b.cycle(), true) } else { (vec![b.pair()], false) };
                let calldata = payload(b.rng, [0x12, 0x34, 0x56, 0x78], 2);
                let gas = b.rng.gen_range(900_000..1_200_000);
                b.push(Plan { to: decoy, from, ts, gas, calldata, status: TxStatus::Success, hops, profit, calls: &[] });
            }
        }
    }

    if p.chain == Chain::Arbitrum {
        truth.router_decoys = [router, aggregator].into();
    }

    for day in &days {
        let start = day.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
        let at = |rng: &mut ChaCha8Rng| start + rng.gen_range(0..86_400);
        let counts = [
            b.rng.gen_range(15..=25),
            b.rng.gen_range(5..=10),
            b.rng.gen_range(3..=6),
            b.rng.gen_range(6..=12),
            b.rng.gen_range(1..=3),
        ];
        for (kind, c) in counts.into_iter().enumerate() {
            for _ in 0..c {
                let ts = at(b.rng);
                let from = *retail.choose(b.rng).expect("retail");
                let calldata = payload(b.rng, [0xaa, 0xbb, kind as u8, 0x01], 3);
                let pool = *b.pools.choose(b.rng).expect("pools");
                match kind {
                    0 => {
                        let hops = vec![b.pair()];
                        let gas = b.rng.gen_range(100_000..140_000);
                        b.push(Plan { to: router, from, ts, gas, calldata, status: TxStatus::Success, hops, profit: false, calls: &[] });
                    }
                    1 => {
                        let (x, y) = b.pair();
                        let z = *b.tokens.iter().find(|t| **t != x && **t != y).expect("third token");
                        let gas = b.rng.gen_range(160_000..220_000);
                        let hops = vec![(x, y), (y, z)];
                        b.push(Plan { to: aggregator, from, ts, gas, calldata, status: TxStatus::Success, hops, profit: false, calls: &[] });
                    }
                    2 => {
                        let probe = [(CallType::StaticCall, pool, SEL_RESERVES)];
                        b.push(Plan { to: vault, from, ts, gas: 60_000, calldata, status: TxStatus::Success, hops: vec![], profit: false, calls: &probe });
                    }
                    3 => {
                        let token = *b.tokens.choose(b.rng).expect("tokens");
                        b.push(Plan { to: token, from, ts, gas: 45_000, calldata, status: TxStatus::Success, hops: vec![], profit: false, calls: &[] });
                    }
                    _ => {
                        let call = [(CallType::Call, pool, SEL_SWAP)];
                        b.push(Plan { to: router, from, ts, gas: 35_000, calldata, status: TxStatus::Revert, hops: vec![], profit: false, calls: &call });
                    }
                }
            }
        }
        if p.chain == Chain::Arbitrum {
            for to in [router, aggregator] {
                for _ in 0..2 {
                    let ts = at(b.rng);
                    let from = *retail.choose(b.rng).expect("retail");
                    let hops = b.cycle();
                    let calldata = payload(b.rng, [0xcc, 0xdd, 0x00, 0x01], 4);
                    b.push(Plan { to, from, ts, gas: 250_000, calldata, status: TxStatus::Success, hops, profit: true, calls: &[] });
                }
            }
        }
    }

    let mut txs = b.txs;
    txs.sort_by_key(|t| (t.timestamp, t.hash));
    for tx in &mut txs {
        tx.block_number = p.first_block + ((tx.timestamp - t0) / p.block_secs) as u64;
    }
    truth.total_gas = txs.iter().map(|t| t.gas_used as u128).sum();
    truth.tx_count = txs.len() as u64;
    bytecode.sort_by_key(|c| c.address);
    let fixture = ChainFixture { chain: p.chain, txs, swaps: b.swaps, traces: b.traces, labels, bytecode };
    (fixture, truth)
}

/// Builds the whole fixture from a seed.
pub fn generate(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chains = Vec::new();
    let mut truth = GroundTruth::default();
    for p in params() {
        let (c, t) = build_chain(&mut rng, &p);
        truth.chains.insert(p.chain, t);
        chains.push(c);
    }
    let mut close: f64 = round2(3900.0 + rng.gen_range(-50.0..50.0));
    let ohlc = fixture_days()
        .into_iter()
        .map(|date| {
            let open = close;
            close = round2(open * (1.0 + rng.gen_range(-0.04..0.04)));
            let high = (open.max(close) * (1.0 + rng.gen_range(0.0..0.02)) * 100.0).ceil() / 100.0;
            let low = (open.min(close) * (1.0 - rng.gen_range(0.0..0.02)) * 100.0).floor() / 100.0;
            OhlcBar { date, open, high, low, close }
        })
        .collect();
    Fixture { chains, ohlc, truth }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// `n` contracts sharing one deployed code, e.g. for clone-cluster checks.
pub fn clone_family(seed: u64, n: usize) -> Vec<ContractBytecode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let code = random_code(&mut rng);
    (0..n).map(|_| ContractBytecode { address: Address(rng.gen()), code: code.clone() }).collect()
}

/// `n` unrelated random contracts.
pub fn random_contracts(seed: u64, n: usize) -> Vec<ContractBytecode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| ContractBytecode { address: Address(rng.gen()), code: random_code(&mut rng) }).collect()
}

pub const TRUTH_FILE: &str = "truth.json";
pub const CONFIG_FILE: &str = "config.toml";

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new)
}

impl Fixture {
    /// Config matching the layout written by [`Fixture::write`], with paths
    /// relative to the fixture directory.
    pub fn config(&self) -> Config {
        Config {
            output_dir: PathBuf::from("out"),
            workers: 0,
            event_date: NaiveDate::from_ymd_opt(2024, 3, 13).expect("valid date"),
            ohlc: Some(PathBuf::from("ohlc.csv")),
            thresholds: Thresholds::default(),
            chains: self
                .chains
                .iter()
                .map(|c| {
                    let d = PathBuf::from(c.chain.as_str());
                    ChainInputs {
                        id: c.chain,
                        transactions: d.join("transactions.jsonl"),
                        swaps: d.join("swaps.jsonl"),
                        traces: d.join("traces.jsonl"),
                        labels: d.join("labels.csv"),
                        bytecode: Some(d.join("bytecode.jsonl")),
                        ohlc: None,
                    }
                })
                .collect(),
        }
    }

    /// Writes inputs, `config.toml` and `truth.json` under `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        for c in &self.chains {
            let d = dir.join(c.chain.as_str());
            let mut w = create(&d.join("transactions.jsonl"))?;
            ingest::write_transactions(&mut w, &c.txs)?;
            w.flush()?;
            let mut w = create(&d.join("swaps.jsonl"))?;
            ingest::write_swaps(&mut w, &c.swaps)?;
            w.flush()?;
            let mut w = create(&d.join("traces.jsonl"))?;
            ingest::write_traces(&mut w, &c.traces)?;
            w.flush()?;
            let mut w = create(&d.join("labels.csv"))?;
            ingest::write_labels(&mut w, &c.labels)?;
            w.flush()?;
            let mut w = create(&d.join("bytecode.jsonl"))?;
            ingest::write_bytecode(&mut w, &c.bytecode)?;
            w.flush()?;
        }
        let mut w = create(&dir.join("ohlc.csv"))?;
        ingest::write_ohlc(&mut w, &self.ohlc)?;
        w.flush()?;
        fs::write(dir.join(CONFIG_FILE), self.config().to_toml())?;
        let mut w = create(&dir.join(TRUTH_FILE))?;
        serde_json::to_writer_pretty(&mut w, &self.truth)?;
        writeln!(w)?;
        w.flush()
    }
}

pub fn read_truth(path: &Path) -> io::Result<GroundTruth> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = generate(7);
        let b = generate(7);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.chains[0].txs, b.chains[0].txs);
        assert_ne!(generate(8).truth, a.truth);
    }

    #[test]
    fn planted_counts() {
        let f = generate(DEFAULT_SEED);
        let bots: usize = f.truth.chains.values().map(|t| t.bots.len()).sum();
        assert_eq!(bots, 5);
        let decoys: usize = f.truth.chains.values().map(|t| t.router_decoys.len()).sum();
        assert_eq!(decoys, 2);
        assert_eq!(f.truth.chains.values().filter(|t| t.single_swap_decoy.is_some()).count(), 1);
        for c in &f.chains {
            assert!(c.txs.windows(2).all(|w| w[0].block_number <= w[1].block_number));
            for bar in &f.ohlc {
                bar.validate().unwrap();
            }
            let days: BTreeSet<_> = c.txs.iter().map(|t| t.date()).collect();
            assert_eq!(days.len(), 3);
        }
    }
}
