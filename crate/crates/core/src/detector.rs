//! Cyclic-arbitrage candidate detection from swap logs.
//!
//! Every transaction with at least one swap is reduced to a token path and a
//! per-token balance delta, then passed through three filters in order:
//! router/aggregator exclusion on the first callee, path cyclicity, and
//! profitability (no token lost, at least one token gained). The first
//! callees of the survivors form the candidate set.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use num_bigint::{BigInt, BigUint};
use num_traits::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{LabelSet, SwapEvent, SwapIndex, TransactionRecord};
use crate::types::{Address, TxHash};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("trade is empty")]
    EmptyTrade,
    #[error("evt_index {0} appears twice in one trade")]
    DuplicateIndex(u64),
}

/// Ordered token path `<sold_1, bought_1, ..., sold_k, bought_k>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenPath(Vec<Address>);

impl TokenPath {
    /// Returns `None` unless the length is even and at least 2.
    pub fn new(tokens: Vec<Address>) -> Option<Self> {
        (tokens.len() >= 2 && tokens.len().is_multiple_of(2)).then_some(Self(tokens))
    }

    pub fn tokens(&self) -> &[Address] {
        &self.0
    }

    /// Number of swaps the path was built from.
    pub fn hops(&self) -> usize {
        self.0.len() / 2
    }
}

/// Net per-token balance change of the initiator, in raw base units. Tokens
/// that net to zero keep their entry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BalanceDelta(pub BTreeMap<Address, BigInt>);

impl BalanceDelta {
    pub fn get(&self, token: &Address) -> Option<&BigInt> {
        self.0.get(token)
    }
}

/// Per-token slack for the profitability test: a delta `d` counts as
/// non-negative when `d >= -epsilon`. Zero everywhere by default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DustTolerance {
    pub default: BigUint,
    pub per_token: BTreeMap<Address, BigUint>,
}

impl DustTolerance {
    pub fn uniform(epsilon: BigUint) -> Self {
        Self { default: epsilon, per_token: BTreeMap::new() }
    }

    fn for_token(&self, token: &Address) -> &BigUint {
        self.per_token.get(token).unwrap_or(&self.default)
    }
}

pub fn extract_features(trade: &[SwapEvent]) -> Result<(TokenPath, BalanceDelta), DetectError> {
    if trade.is_empty() {
        return Err(DetectError::EmptyTrade);
    }
    let mut ordered: Vec<&SwapEvent> = trade.iter().collect();
    ordered.sort_by_key(|s| s.evt_index);
    if let Some(w) = ordered.windows(2).find(|w| w[0].evt_index == w[1].evt_index) {
        return Err(DetectError::DuplicateIndex(w[0].evt_index));
    }

    let mut path = Vec::with_capacity(ordered.len() * 2);
    let mut delta: BTreeMap<Address, BigInt> = BTreeMap::new();
    for s in ordered {
        path.push(s.token_sold);
        path.push(s.token_bought);
        *delta.entry(s.token_bought).or_default() += BigInt::from(s.amount_bought.clone());
        *delta.entry(s.token_sold).or_default() -= BigInt::from(s.amount_sold.clone());
    }
    Ok((TokenPath(path), BalanceDelta(delta)))
}

/// First token sold equals last token bought, and every bought token is the
/// next swap's sold token.
pub fn is_cyclic(path: &TokenPath) -> bool {
    let t = path.tokens();
    let closes = t.first() == t.last();
    let continuous = t[1..t.len() - 1].chunks_exact(2).all(|pair| pair[0] == pair[1]);
    // A single swap cannot close: token_sold != token_bought.
    closes && continuous && path.hops() >= 1
}

pub fn is_profitable(delta: &BalanceDelta) -> bool {
    is_profitable_with(delta, &DustTolerance::default())
}

pub fn is_profitable_with(delta: &BalanceDelta, dust: &DustTolerance) -> bool {
    let mut gained = false;
    for (token, d) in &delta.0 {
        if d.is_positive() {
            gained = true;
        } else if d.is_negative() && d.magnitude() > dust.for_token(token) {
            return false;
        }
    }
    gained
}

/// Drops every transaction whose first callee is a labeled router or
/// aggregator.
pub fn filter_router_aggregator<'a, I>(txs: I, labels: &LabelSet) -> Vec<&'a TransactionRecord>
where
    I: IntoIterator<Item = &'a TransactionRecord>,
{
    txs.into_iter()
        .filter(|tx| tx.to_addr.is_none_or(|to| !labels.is_router_or_aggregator(&to)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    pub dust: DustTolerance,
    /// Evidence entries kept per contract. Detection is unaffected.
    pub evidence_cap: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { dust: DustTolerance::default(), evidence_cap: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    pub tx_hash: TxHash,
    pub block_number: u64,
    pub path: TokenPath,
    pub delta: BalanceDelta,
}

/// Transaction counts after each stage: trading txs, then each filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterCounts {
    pub trading: usize,
    pub after_router_filter: usize,
    pub after_cyclic_filter: usize,
    pub after_profit_filter: usize,
}

impl FilterCounts {
    fn merge(self, o: Self) -> Self {
        Self {
            trading: self.trading + o.trading,
            after_router_filter: self.after_router_filter + o.after_router_filter,
            after_cyclic_filter: self.after_cyclic_filter + o.after_cyclic_filter,
            after_profit_filter: self.after_profit_filter + o.after_profit_filter,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    pub contracts: BTreeSet<Address>,
    /// Up to `evidence_cap` entries per contract, earliest (block, hash) first.
    pub evidence: BTreeMap<Address, Vec<Evidence>>,
    /// Total surviving transactions per contract, before the cap.
    pub evidence_count: BTreeMap<Address, usize>,
    pub first_seen_block: BTreeMap<Address, u64>,
    pub counts: FilterCounts,
}

#[derive(Default)]
struct Partial {
    hits: BTreeMap<Address, (usize, Vec<Evidence>)>,
    counts: FilterCounts,
}

impl Partial {
    fn push(&mut self, contract: Address, ev: Evidence, cap: usize) {
        let slot = self.hits.entry(contract).or_default();
        slot.0 += 1;
        slot.1.push(ev);
        if slot.1.len() > cap * 2 {
            trim(&mut slot.1, cap);
        }
    }

    fn merge(mut self, other: Partial, cap: usize) -> Partial {
        for (addr, (n, evs)) in other.hits {
            let slot = self.hits.entry(addr).or_default();
            slot.0 += n;
            slot.1.extend(evs);
            trim(&mut slot.1, cap);
        }
        self.counts = self.counts.merge(other.counts);
        self
    }
}

fn trim(evs: &mut Vec<Evidence>, cap: usize) {
    evs.sort_by_key(|e| (e.block_number, e.tx_hash));
    evs.truncate(cap);
}

/// Applies the three filters in order and collects surviving first callees.
/// Transactions without a swap group, and contract creations, never qualify.
pub fn detect_candidates(
    txs: &[TransactionRecord],
    swaps: &SwapIndex,
    labels: &LabelSet,
    config: &DetectorConfig,
) -> CandidateSet {
    let cap = config.evidence_cap.max(1);
    let partial = txs
        .par_iter()
        .fold(Partial::default, |mut acc, tx| {
            let Some(trade) = swaps.get(&tx.hash).filter(|t| !t.is_empty()) else {
                return acc;
            };
            acc.counts.trading += 1;
            let Some(to) = tx.to_addr else { return acc };
            if labels.is_router_or_aggregator(&to) {
                return acc;
            }
            acc.counts.after_router_filter += 1;
            let Ok((path, delta)) = extract_features(trade) else {
                return acc;
            };
            if !is_cyclic(&path) {
                return acc;
            }
            acc.counts.after_cyclic_filter += 1;
            if !is_profitable_with(&delta, &config.dust) {
                return acc;
            }
            acc.counts.after_profit_filter += 1;
            acc.push(to, Evidence { tx_hash: tx.hash, block_number: tx.block_number, path, delta }, cap);
            acc
        })
        .reduce(Partial::default, |a, b| a.merge(b, cap));

    let mut out = CandidateSet { counts: partial.counts, ..Default::default() };
    for (addr, (n, mut evs)) in partial.hits {
        trim(&mut evs, cap);
        out.contracts.insert(addr);
        out.evidence_count.insert(addr, n);
        if let Some(first) = evs.first() {
            out.first_seen_block.insert(addr, first.block_number);
        }
        out.evidence.insert(addr, evs);
    }
    out
}

/// Row of `candidates.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub address: Address,
    pub evidence_count: usize,
    pub first_seen_block: u64,
    pub sample_tx_hashes: Vec<TxHash>,
}

/// Sample hashes listed per contract in `candidates.json`.
pub const SAMPLE_HASHES: usize = 5;

impl CandidateSet {
    pub fn summaries(&self) -> Vec<CandidateSummary> {
        self.contracts
            .iter()
            .map(|a| CandidateSummary {
                address: *a,
                evidence_count: self.evidence_count.get(a).copied().unwrap_or(0),
                first_seen_block: self.first_seen_block.get(a).copied().unwrap_or(0),
                sample_tx_hashes: self.evidence[a].iter().take(SAMPLE_HASHES).map(|e| e.tx_hash).collect(),
            })
            .collect()
    }
}

pub fn write_candidates<W: Write>(mut w: W, candidates: &CandidateSet) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, &candidates.summaries())?;
    writeln!(w)
}

pub fn read_candidates<R: io::Read>(r: R) -> serde_json::Result<Vec<CandidateSummary>> {
    serde_json::from_reader(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u8) -> Address {
        let mut b = [0u8; 20];
        b[19] = n;
        Address(b)
    }

    fn swap(sold: u8, bought: u8, a_sold: u64, a_bought: u64, idx: u64) -> SwapEvent {
        SwapEvent {
            tx_hash: TxHash::default(),
            token_sold: addr(sold),
            token_bought: addr(bought),
            amount_sold: a_sold.into(),
            amount_bought: a_bought.into(),
            evt_index: idx,
        }
    }

    fn delta(entries: &[(u8, i64)]) -> BalanceDelta {
        BalanceDelta(entries.iter().map(|(t, d)| (addr(*t), BigInt::from(*d))).collect())
    }

    const A: u8 = 1;
    const B: u8 = 2;
    const C: u8 = 3;

    #[test]
    fn two_swap_round_trip_features() {
        let (path, d) = extract_features(&[swap(A, B, 10, 20, 2), swap(B, A, 20, 11, 7)]).unwrap();
        assert_eq!(path.tokens(), &[addr(A), addr(B), addr(B), addr(A)]);
        assert_eq!(d, delta(&[(A, 1), (B, 0)]));
    }

    #[test]
    fn single_swap_features() {
        let (path, d) = extract_features(&[swap(A, B, 5, 9, 0)]).unwrap();
        assert_eq!(path.tokens(), &[addr(A), addr(B)]);
        assert_eq!(d, delta(&[(A, -5), (B, 9)]));
        assert!(!is_cyclic(&path));
    }

    #[test]
    fn input_order_is_irrelevant() {
        let sorted = extract_features(&[swap(A, B, 10, 20, 2), swap(B, C, 20, 30, 4), swap(C, A, 30, 12, 9)]);
        let shuffled = extract_features(&[swap(C, A, 30, 12, 9), swap(A, B, 10, 20, 2), swap(B, C, 20, 30, 4)]);
        assert_eq!(sorted, shuffled);
    }

    #[test]
    fn empty_and_duplicate_trades_error() {
        assert_eq!(extract_features(&[]), Err(DetectError::EmptyTrade));
        assert_eq!(
            extract_features(&[swap(A, B, 1, 1, 3), swap(B, A, 1, 1, 3)]),
            Err(DetectError::DuplicateIndex(3))
        );
    }

    #[test]
    fn cyclicity() {
        let p = |t: &[u8]| TokenPath::new(t.iter().map(|x| addr(*x)).collect()).unwrap();
        assert!(is_cyclic(&p(&[A, B, B, A])));
        assert!(!is_cyclic(&p(&[A, B, C, A])));
        assert!(!is_cyclic(&p(&[A, B, B, C])));
        assert!(is_cyclic(&p(&[A, B, B, C, C, A])));
        assert!(TokenPath::new(vec![addr(A)]).is_none());
        assert!(TokenPath::new(vec![]).is_none());
    }

    #[test]
    fn profitability() {
        assert!(is_profitable(&delta(&[(A, 1), (B, 0)])));
        assert!(!is_profitable(&delta(&[(A, 1), (B, -1)])));
        assert!(!is_profitable(&delta(&[(A, 0), (B, 0)])));
        assert!(!is_profitable(&BalanceDelta::default()));
    }

    #[test]
    fn dust_tolerance_absorbs_small_losses() {
        let d = delta(&[(A, 5), (B, -2)]);
        assert!(!is_profitable(&d));
        assert!(is_profitable_with(&d, &DustTolerance::uniform(2u32.into())));
        assert!(!is_profitable_with(&d, &DustTolerance::uniform(1u32.into())));
        let mut per = DustTolerance::default();
        per.per_token.insert(addr(B), 3u32.into());
        assert!(is_profitable_with(&d, &per));
    }
}
