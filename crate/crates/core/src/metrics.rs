//! Daily measurements over classified transactions.
//!
//! Aggregation is map-reduce shaped: [`DailyAccumulator`] collects exact
//! integer sums and gas-price histograms per (chain, day, label triple), and
//! partial accumulators merge commutatively. Medians are taken only after
//! the merge, so partitioning never changes a result.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use chrono::NaiveDate;
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::classifier::{ClassifiedTx, Involvement, Outcome, Purpose};
use crate::ingest::{LabelSet, SwapIndex, TransactionRecord, TxStatus};
use crate::rank::{percentile_histogram, percentile_sorted};
use crate::types::{Address, Chain, TxHash};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("classified transaction {0} not found among loaded transactions")]
    UnknownTx(TxHash),
    #[error("event day {0} missing from series")]
    EventDayMissing(NaiveDate),
    #[error("event day {0} has value zero")]
    EventDayZero(NaiveDate),
    #[error("no bot transactions touching a DEX")]
    EmptyScope,
    #[error("contract {0} has no trading transactions")]
    NoTradingTxs(Address),
}

pub type Triple = (Purpose, Involvement, Outcome);

/// The ten label triples that can occur; a trade never reverts.
pub fn reachable_triples() -> Vec<Triple> {
    let mut out = Vec::with_capacity(10);
    for p in Purpose::ALL {
        for i in Involvement::ALL {
            for o in Outcome::ALL {
                if !(i == Involvement::Trade && o == Outcome::Revert) {
                    out.push((p, i, o));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Triple(Purpose, Involvement, Outcome),
    Pair(Purpose, Involvement),
    Purpose(Purpose),
    Total,
}

impl Category {
    /// Report order: triples, purpose-involvement pairs, purposes, total.
    pub fn all() -> Vec<Category> {
        let mut v: Vec<Category> = reachable_triples().into_iter().map(|(p, i, o)| Category::Triple(p, i, o)).collect();
        for p in Purpose::ALL {
            for i in Involvement::ALL {
                v.push(Category::Pair(p, i));
            }
        }
        v.extend(Purpose::ALL.map(Category::Purpose));
        v.push(Category::Total);
        v
    }

    pub fn contains(&self, t: &Triple) -> bool {
        match *self {
            Category::Triple(p, i, o) => (p, i, o) == *t,
            Category::Pair(p, i) => (p, i) == (t.0, t.1),
            Category::Purpose(p) => p == t.0,
            Category::Total => true,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Category::Triple(p, i, o) => format!("{p}-{i}-{o}"),
            Category::Pair(p, i) => format!("{p}-{i}"),
            Category::Purpose(p) => p.to_string(),
            Category::Total => "total".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryStats {
    pub gas_used: u128,
    pub tx_count: u64,
    /// Sum of `gas_used * gas_price`, wei.
    pub fees_paid: BigUint,
    pub gas_price_sum: BigUint,
    /// Gas price (wei) to number of transactions paying it.
    pub gas_prices: BTreeMap<BigUint, u64>,
}

impl CategoryStats {
    pub fn add(&mut self, tx: &TransactionRecord) {
        self.gas_used += tx.gas_used as u128;
        self.tx_count += 1;
        self.fees_paid += tx.fee();
        self.gas_price_sum += &tx.gas_price;
        *self.gas_prices.entry(tx.gas_price.clone()).or_default() += 1;
    }

    pub fn merge(&mut self, other: &CategoryStats) {
        self.gas_used += other.gas_used;
        self.tx_count += other.tx_count;
        self.fees_paid += &other.fees_paid;
        self.gas_price_sum += &other.gas_price_sum;
        for (p, c) in &other.gas_prices {
            *self.gas_prices.entry(p.clone()).or_default() += c;
        }
    }

    /// Nearest-rank median over transactions.
    pub fn median_gas_price(&self) -> Option<BigUint> {
        percentile_histogram(&self.gas_prices, 50).cloned()
    }

    /// Per-transaction mean, floored to whole wei.
    pub fn mean_gas_price(&self) -> Option<BigUint> {
        (self.tx_count > 0).then(|| &self.gas_price_sum / self.tx_count)
    }

    /// Fees over gas: the gas-weighted average price, floored to whole wei.
    pub fn fee_per_gas(&self) -> Option<BigUint> {
        (self.gas_used > 0).then(|| &self.fees_paid / self.gas_used)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyAggregate {
    pub date: NaiveDate,
    pub chain: Chain,
    /// Every reachable triple is present, possibly with zero counts.
    pub triples: BTreeMap<Triple, CategoryStats>,
}

impl DailyAggregate {
    pub fn category(&self, cat: Category) -> CategoryStats {
        let mut s = CategoryStats::default();
        for (t, stats) in &self.triples {
            if cat.contains(t) {
                s.merge(stats);
            }
        }
        s
    }

    pub fn total(&self) -> CategoryStats {
        self.category(Category::Total)
    }

    pub fn gas_share(&self, cat: Category) -> f64 {
        ratio_u128(self.category(cat).gas_used, self.total().gas_used)
    }

    pub fn fee_share(&self, cat: Category) -> f64 {
        ratio_big(&self.category(cat).fees_paid, &self.total().fees_paid)
    }
}

fn ratio_u128(num: u128, den: u128) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn ratio_big(num: &BigUint, den: &BigUint) -> f64 {
    if den.is_zero() {
        return 0.0;
    }
    // Scale to keep 18 significant digits before converting.
    let scale = BigUint::from(10u64).pow(18);
    let scaled = num * &scale / den;
    scaled.to_f64().unwrap_or(f64::NAN) / 1e18
}

/// Mergeable partial aggregate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DailyAccumulator {
    days: BTreeMap<(Chain, NaiveDate), BTreeMap<Triple, CategoryStats>>,
}

impl DailyAccumulator {
    pub fn add(&mut self, tx: &TransactionRecord, c: &ClassifiedTx) {
        self.days.entry((tx.chain, tx.date())).or_default().entry(c.triple()).or_default().add(tx);
    }

    pub fn merge(mut self, other: DailyAccumulator) -> DailyAccumulator {
        for (key, triples) in other.days {
            let day = self.days.entry(key).or_default();
            for (t, s) in triples {
                day.entry(t).or_default().merge(&s);
            }
        }
        self
    }

    pub fn finish(self) -> Vec<DailyAggregate> {
        self.days
            .into_iter()
            .map(|((chain, date), mut triples)| {
                for t in reachable_triples() {
                    triples.entry(t).or_default();
                }
                DailyAggregate { date, chain, triples }
            })
            .collect()
    }
}

/// Pairs each classified transaction with its record.
pub fn join<'a>(
    classified: &'a [ClassifiedTx],
    txs: &'a [TransactionRecord],
) -> Result<Vec<(&'a TransactionRecord, &'a ClassifiedTx)>, MetricsError> {
    let by_hash: HashMap<TxHash, &TransactionRecord> = txs.iter().map(|t| (t.hash, t)).collect();
    classified
        .iter()
        .map(|c| by_hash.get(&c.hash).map(|t| (*t, c)).ok_or(MetricsError::UnknownTx(c.hash)))
        .collect()
}

/// One aggregate per (chain, UTC day), ordered by chain then date. Reverted
/// transactions count at their recorded gas.
pub fn aggregate_daily(
    classified: &[ClassifiedTx],
    txs: &[TransactionRecord],
) -> Result<Vec<DailyAggregate>, MetricsError> {
    let pairs = join(classified, txs)?;
    let acc = pairs
        .par_iter()
        .fold(DailyAccumulator::default, |mut acc, (tx, c)| {
            acc.add(tx, c);
            acc
        })
        .reduce(DailyAccumulator::default, DailyAccumulator::merge);
    Ok(acc.finish())
}

/// Divides every value by the value on `event`.
pub fn normalize_to_event(
    series: &[(NaiveDate, f64)],
    event: NaiveDate,
) -> Result<Vec<(NaiveDate, f64)>, MetricsError> {
    let base = series
        .iter()
        .find(|(d, _)| *d == event)
        .map(|(_, v)| *v)
        .ok_or(MetricsError::EventDayMissing(event))?;
    if base == 0.0 {
        return Err(MetricsError::EventDayZero(event));
    }
    Ok(series.iter().map(|(d, v)| (*d, v / base)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDistribution {
    pub trade: u64,
    pub interaction_success: u64,
    pub revert: u64,
}

impl OutcomeDistribution {
    pub fn total(&self) -> u64 {
        self.trade + self.interaction_success + self.revert
    }

    /// `(trade, interaction-success, revert)` fractions.
    pub fn fractions(&self) -> (f64, f64, f64) {
        let n = self.total() as f64;
        (self.trade as f64 / n, self.interaction_success as f64 / n, self.revert as f64 / n)
    }
}

/// Outcome mix of bot transactions that trade or touch a pool.
pub fn outcome_distribution(classified: &[ClassifiedTx]) -> Result<OutcomeDistribution, MetricsError> {
    let mut d = OutcomeDistribution { trade: 0, interaction_success: 0, revert: 0 };
    for c in classified.iter().filter(|c| c.purpose == Purpose::CyclicArb) {
        match (c.involvement, c.outcome) {
            (Involvement::Trade, _) => d.trade += 1,
            (Involvement::Interaction, Outcome::Success) => d.interaction_success += 1,
            (Involvement::Interaction, Outcome::Revert) => d.revert += 1,
            (Involvement::Residual, _) => {}
        }
    }
    if d.total() == 0 {
        return Err(MetricsError::EmptyScope);
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BotStats {
    pub contract: Address,
    pub swaps: u64,
    pub txs_with_trades: u64,
    pub non_reverted_txs: u64,
    pub reverted_txs: u64,
    pub txs_per_unique_calldata: f64,
    /// Hex characters of the payload without `0x`.
    pub median_calldata_length: usize,
    pub gas_used: u128,
    pub cumulative_gas_pct: f64,
}

/// Per-bot activity table ranked by gas (ties by address). Bots with no
/// transactions in `txs` are omitted.
pub fn bot_stats_table(bots: &BTreeSet<Address>, txs: &[TransactionRecord], swaps: &SwapIndex) -> Vec<BotStats> {
    let mut per_bot: BTreeMap<Address, Vec<&TransactionRecord>> = BTreeMap::new();
    for tx in txs {
        if let Some(to) = tx.to_addr.filter(|a| bots.contains(a)) {
            per_bot.entry(to).or_default().push(tx);
        }
    }
    let mut rows: Vec<BotStats> = per_bot
        .into_iter()
        .map(|(contract, list)| {
            let swap_counts: Vec<usize> = list.iter().map(|t| swaps.get(&t.hash).map_or(0, Vec::len)).collect();
            let unique: BTreeSet<&[u8]> = list.iter().map(|t| t.calldata.as_slice()).collect();
            let mut lengths: Vec<usize> = list.iter().map(|t| t.calldata.len() * 2).collect();
            lengths.sort_unstable();
            BotStats {
                contract,
                swaps: swap_counts.iter().sum::<usize>() as u64,
                txs_with_trades: swap_counts.iter().filter(|n| **n > 0).count() as u64,
                non_reverted_txs: list.iter().filter(|t| t.status == TxStatus::Success).count() as u64,
                reverted_txs: list.iter().filter(|t| t.status == TxStatus::Revert).count() as u64,
                txs_per_unique_calldata: list.len() as f64 / unique.len() as f64,
                median_calldata_length: *percentile_sorted(&lengths, 50).expect("bot has txs"),
                gas_used: list.iter().map(|t| t.gas_used as u128).sum(),
                cumulative_gas_pct: 0.0,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.gas_used.cmp(&a.gas_used).then(a.contract.cmp(&b.contract)));
    let total: u128 = rows.iter().map(|r| r.gas_used).sum();
    let mut running = 0u128;
    for r in &mut rows {
        running += r.gas_used;
        r.cumulative_gas_pct = 100.0 * ratio_u128(running, total);
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevertShare {
    pub date: NaiveDate,
    pub chain: Chain,
    pub cyclic_arb_reverts: u64,
    pub other_reverts: u64,
}

impl RevertShare {
    pub fn total(&self) -> u64 {
        self.cyclic_arb_reverts + self.other_reverts
    }

    /// True when the day had no reverts; both shares are then 0.
    pub fn no_reverts(&self) -> bool {
        self.total() == 0
    }

    /// `(cyclicArb, other)` shares of the day's reverted transactions.
    pub fn shares(&self) -> (f64, f64) {
        let n = self.total();
        if n == 0 {
            return (0.0, 0.0);
        }
        (self.cyclic_arb_reverts as f64 / n as f64, self.other_reverts as f64 / n as f64)
    }
}

pub fn revert_share(
    classified: &[ClassifiedTx],
    txs: &[TransactionRecord],
) -> Result<Vec<RevertShare>, MetricsError> {
    let mut days: BTreeMap<(Chain, NaiveDate), (u64, u64)> = BTreeMap::new();
    for (tx, c) in join(classified, txs)? {
        let slot = days.entry((tx.chain, tx.date())).or_default();
        if c.outcome == Outcome::Revert {
            match c.purpose {
                Purpose::CyclicArb => slot.0 += 1,
                Purpose::Other => slot.1 += 1,
            }
        }
    }
    Ok(days
        .into_iter()
        .map(|((chain, date), (bot, other))| RevertShare { date, chain, cyclic_arb_reverts: bot, other_reverts: other })
        .collect())
}

/// Fraction of the contract's trading transactions that carry exactly one
/// swap.
pub fn single_swap_dominance(
    contract: &Address,
    txs: &[TransactionRecord],
    swaps: &SwapIndex,
) -> Result<f64, MetricsError> {
    let counts: Vec<usize> = txs
        .iter()
        .filter(|t| t.to_addr.as_ref() == Some(contract))
        .filter_map(|t| swaps.get(&t.hash).map(Vec::len))
        .filter(|n| *n > 0)
        .collect();
    if counts.is_empty() {
        return Err(MetricsError::NoTradingTxs(*contract));
    }
    Ok(counts.iter().filter(|n| **n == 1).count() as f64 / counts.len() as f64)
}

/// Share of single-swap trades at or above which a contract reads as plain
/// DEX usage rather than cyclic arbitrage.
pub const SINGLE_SWAP_CORROBORATION: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSwapRow {
    pub contract: Address,
    pub category_gas: u128,
    pub category_gas_share: f64,
    /// `None` when the contract never trades.
    pub single_swap_fraction: Option<f64>,
}

/// Checks the non-bot contracts that together consume the top half of
/// other-interaction gas: for each, the share of its trading transactions
/// that contain exactly one swap.
pub fn single_swap_screen(
    classified: &[ClassifiedTx],
    txs: &[TransactionRecord],
    swaps: &SwapIndex,
) -> Result<Vec<SingleSwapRow>, MetricsError> {
    let mut gas: BTreeMap<Address, u128> = BTreeMap::new();
    for (tx, c) in join(classified, txs)? {
        if c.purpose == Purpose::Other && c.involvement == Involvement::Interaction {
            if let Some(to) = tx.to_addr {
                *gas.entry(to).or_default() += tx.gas_used as u128;
            }
        }
    }
    let total: u128 = gas.values().sum();
    let mut ranked: Vec<(Address, u128)> = gas.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut rows = Vec::new();
    let mut running = 0u128;
    for (contract, g) in ranked {
        if total == 0 || running * 2 >= total {
            break;
        }
        running += g;
        rows.push(SingleSwapRow {
            contract,
            category_gas: g,
            category_gas_share: ratio_u128(g, total),
            single_swap_fraction: single_swap_dominance(&contract, txs, swaps).ok(),
        });
    }
    Ok(rows)
}

/// Per-day inputs for the regression frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyCounts {
    pub chain: Chain,
    pub date: NaiveDate,
    pub cyclic_arb_txs: u64,
    pub cyclic_arb_trades: u64,
    /// Other-trade transactions.
    pub retail_trades: u64,
    /// Retail trades whose first callee is a labeled aggregator.
    pub retail_aggregator_trades: u64,
}

pub fn daily_counts(
    classified: &[ClassifiedTx],
    txs: &[TransactionRecord],
    labels: &LabelSet,
) -> Result<Vec<DailyCounts>, MetricsError> {
    let mut days: BTreeMap<(Chain, NaiveDate), DailyCounts> = BTreeMap::new();
    for (tx, c) in join(classified, txs)? {
        let d = days.entry((tx.chain, tx.date())).or_insert(DailyCounts {
            chain: tx.chain,
            date: tx.date(),
            cyclic_arb_txs: 0,
            cyclic_arb_trades: 0,
            retail_trades: 0,
            retail_aggregator_trades: 0,
        });
        let trade = c.involvement == Involvement::Trade;
        match c.purpose {
            Purpose::CyclicArb => {
                d.cyclic_arb_txs += 1;
                d.cyclic_arb_trades += trade as u64;
            }
            Purpose::Other if trade => {
                d.retail_trades += 1;
                if tx.to_addr.is_some_and(|a| labels.aggregators.contains(&a)) {
                    d.retail_aggregator_trades += 1;
                }
            }
            Purpose::Other => {}
        }
    }
    Ok(days.into_values().collect())
}

// ---------------------------------------------------------------------------
// report writers

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_daily_gas<W: Write>(w: W, days: &[DailyAggregate]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "date",
        "chain",
        "category",
        "gas_used",
        "tx_count",
        "fees_paid_wei",
        "median_gas_price_wei",
        "mean_gas_price_wei",
    ])?;
    for d in days {
        for cat in Category::all() {
            let s = d.category(cat);
            wtr.write_record([
                d.date.to_string(),
                d.chain.to_string(),
                cat.name(),
                s.gas_used.to_string(),
                s.tx_count.to_string(),
                s.fees_paid.to_string(),
                opt(s.median_gas_price()),
                opt(s.mean_gas_price()),
            ])?;
        }
    }
    wtr.flush()
}

pub fn write_daily_shares<W: Write>(w: W, days: &[DailyAggregate]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "chain", "category", "gas_share", "fee_share"])?;
    for d in days {
        for cat in Category::all() {
            wtr.write_record([
                d.date.to_string(),
                d.chain.to_string(),
                cat.name(),
                d.gas_share(cat).to_string(),
                d.fee_share(cat).to_string(),
            ])?;
        }
    }
    wtr.flush()
}

/// Whole-window gas and fee shares per chain and purpose.
pub fn write_period_shares<W: Write>(w: W, days: &[DailyAggregate]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["chain", "category", "gas_used", "fees_paid_wei", "gas_share", "fee_share"])?;
    let mut per_chain: BTreeMap<Chain, BTreeMap<Category, CategoryStats>> = BTreeMap::new();
    for d in days {
        let slot = per_chain.entry(d.chain).or_default();
        for cat in [Category::Purpose(Purpose::CyclicArb), Category::Purpose(Purpose::Other), Category::Total] {
            slot.entry(cat).or_default().merge(&d.category(cat));
        }
    }
    for (chain, cats) in per_chain {
        let total = &cats[&Category::Total];
        for (cat, s) in &cats {
            wtr.write_record([
                chain.to_string(),
                cat.name(),
                s.gas_used.to_string(),
                s.fees_paid.to_string(),
                ratio_u128(s.gas_used, total.gas_used).to_string(),
                ratio_big(&s.fees_paid, &total.fees_paid).to_string(),
            ])?;
        }
    }
    wtr.flush()
}

pub const GROWTH_SERIES: [Category; 3] =
    [Category::Purpose(Purpose::CyclicArb), Category::Purpose(Purpose::Other), Category::Total];

/// `(date, chain, series, gas, normalized)`.
pub type GrowthRow = (NaiveDate, Chain, Category, u128, f64);

/// Daily gas per growth series, normalized to the event day, per chain.
/// Chains whose data does not include a non-zero event day are skipped and
/// returned as errors alongside the rows.
pub fn normalized_growth(
    days: &[DailyAggregate],
    event: NaiveDate,
) -> (Vec<GrowthRow>, Vec<(Chain, Category, MetricsError)>) {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let chains: BTreeSet<Chain> = days.iter().map(|d| d.chain).collect();
    for chain in chains {
        let chain_days: Vec<&DailyAggregate> = days.iter().filter(|d| d.chain == chain).collect();
        for cat in GROWTH_SERIES {
            let raw: Vec<(NaiveDate, u128)> = chain_days.iter().map(|d| (d.date, d.category(cat).gas_used)).collect();
            let series: Vec<(NaiveDate, f64)> = raw.iter().map(|(d, g)| (*d, *g as f64)).collect();
            match normalize_to_event(&series, event) {
                Ok(norm) => {
                    for ((date, gas), (_, n)) in raw.iter().zip(norm) {
                        rows.push((*date, chain, cat, *gas, n));
                    }
                }
                Err(e) => skipped.push((chain, cat, e)),
            }
        }
    }
    (rows, skipped)
}

pub fn write_normalized_growth<W: Write>(
    w: W,
    rows: &[(NaiveDate, Chain, Category, u128, f64)],
) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "chain", "series", "gas_used", "normalized"])?;
    for (date, chain, cat, gas, n) in rows {
        wtr.write_record([date.to_string(), chain.to_string(), cat.name(), gas.to_string(), n.to_string()])?;
    }
    wtr.flush()
}

pub fn write_gas_price_stats<W: Write>(w: W, days: &[DailyAggregate]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "date",
        "chain",
        "purpose",
        "tx_count",
        "median_gas_price_wei",
        "mean_gas_price_wei",
        "fee_per_gas_wei",
    ])?;
    for d in days {
        for p in Purpose::ALL {
            let s = d.category(Category::Purpose(p));
            wtr.write_record([
                d.date.to_string(),
                d.chain.to_string(),
                p.to_string(),
                s.tx_count.to_string(),
                opt(s.median_gas_price()),
                opt(s.mean_gas_price()),
                opt(s.fee_per_gas()),
            ])?;
        }
    }
    wtr.flush()
}

pub fn write_outcome_distribution<W: Write>(w: W, rows: &[(Chain, OutcomeDistribution)]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "chain",
        "trade",
        "interaction_success",
        "revert",
        "total",
        "trade_frac",
        "interaction_success_frac",
        "revert_frac",
    ])?;
    for (chain, d) in rows {
        let (a, b, c) = d.fractions();
        wtr.write_record([
            chain.to_string(),
            d.trade.to_string(),
            d.interaction_success.to_string(),
            d.revert.to_string(),
            d.total().to_string(),
            a.to_string(),
            b.to_string(),
            c.to_string(),
        ])?;
    }
    wtr.flush()
}

pub fn write_bot_stats<W: Write>(w: W, chain: Chain, rows: &[BotStats]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "chain",
        "rank",
        "address",
        "swaps",
        "txs_with_trades",
        "non_reverted_txs",
        "reverted_txs",
        "txs_per_unique_calldata",
        "median_calldata_length",
        "gas_used",
        "cumulative_gas_pct",
    ])?;
    for (i, r) in rows.iter().enumerate() {
        wtr.write_record([
            chain.to_string(),
            (i + 1).to_string(),
            r.contract.to_string(),
            r.swaps.to_string(),
            r.txs_with_trades.to_string(),
            r.non_reverted_txs.to_string(),
            r.reverted_txs.to_string(),
            format!("{:.2}", r.txs_per_unique_calldata),
            r.median_calldata_length.to_string(),
            r.gas_used.to_string(),
            format!("{:.2}", r.cumulative_gas_pct),
        ])?;
    }
    wtr.flush()
}

pub fn write_revert_share<W: Write>(w: W, rows: &[RevertShare]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "date",
        "chain",
        "reverted_txs",
        "cyclic_arb_reverts",
        "other_reverts",
        "cyclic_arb_share",
        "other_share",
        "no_reverts",
    ])?;
    for r in rows {
        let (a, b) = r.shares();
        wtr.write_record([
            r.date.to_string(),
            r.chain.to_string(),
            r.total().to_string(),
            r.cyclic_arb_reverts.to_string(),
            r.other_reverts.to_string(),
            a.to_string(),
            b.to_string(),
            r.no_reverts().to_string(),
        ])?;
    }
    wtr.flush()
}

pub fn write_single_swap_screen<W: Write>(w: W, rows: &[SingleSwapRow]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "address",
        "other_interaction_gas",
        "other_interaction_gas_share",
        "single_swap_fraction",
        "corroborates_non_cyclic",
    ])?;
    for r in rows {
        wtr.write_record([
            r.contract.to_string(),
            r.category_gas.to_string(),
            r.category_gas_share.to_string(),
            opt(r.single_swap_fraction),
            opt(r.single_swap_fraction.map(|f| f >= SINGLE_SWAP_CORROBORATION)),
        ])?;
    }
    wtr.flush()
}
