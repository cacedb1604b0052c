//! Automated screening of detected candidates.
//!
//! Each candidate is scored on four signals: an external exclusion label,
//! the share of its non-trading transactions that touch a DEX pool, its
//! caller profile, and the distribution of swaps per trading transaction.
//! Candidates are reviewed in descending gas order until the validated ones
//! account for more than the coverage target of the non-excluded candidate
//! gas. Candidates below that line are kept as `Unreviewed`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};

use crate::ingest::{SwapIndex, TraceIndex, TransactionRecord};
use crate::rank::percentile_sorted;
use crate::types::Address;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidateError {
    #[error("contract {0} has no transactions with swaps; swap-count screen is inapplicable")]
    NoTradingTxs(Address),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatorConfig {
    pub dex_interaction_min: f64,
    /// More distinct callers than this, at a human-plausible frequency, excludes.
    pub eoa_max: usize,
    pub human: HumanThresholds,
    pub gas_coverage: f64,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        Self { dex_interaction_min: 0.6, eoa_max: 3, human: HumanThresholds::default(), gas_coverage: 0.8 }
    }
}

/// A call pattern is human-plausible when the median gap between calls
/// exceeds `min_median_gap_secs` and no rolling window of `burst_window_secs`
/// holds more than `max_burst` calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HumanThresholds {
    pub min_median_gap_secs: i64,
    pub burst_window_secs: i64,
    pub max_burst: usize,
}

impl Default for HumanThresholds {
    fn default() -> Self {
        Self { min_median_gap_secs: 30, burst_window_secs: 60, max_burst: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallerProfile {
    pub distinct_eoas: usize,
    pub human_plausible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapPercentiles {
    pub p10: usize,
    pub p25: usize,
    pub p50: usize,
    pub p75: usize,
    pub p90: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Validated,
    Excluded,
    Unreviewed,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Validated => "validated",
            Verdict::Excluded => "excluded",
            Verdict::Unreviewed => "unreviewed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub address: Address,
    pub dex_interaction_rate: f64,
    pub distinct_eoas: usize,
    pub human_plausible: bool,
    /// `None` when the contract has no trading transactions.
    pub swap_percentiles: Option<SwapPercentiles>,
    pub gas_used_total: u128,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOutcome {
    /// Validated and unreviewed candidates: the final bot set.
    pub bots: BTreeSet<Address>,
    /// One report per candidate, in descending gas order.
    pub reports: Vec<ValidationReport>,
    /// Validated gas over non-excluded candidate gas.
    pub coverage: f64,
}

pub const REASON_SINGLE_SWAP: &str = "single-swap percentile screen";

fn contract_txs<'a>(contract: &Address, txs: &'a [TransactionRecord]) -> Vec<&'a TransactionRecord> {
    txs.iter().filter(|t| t.to_addr.as_ref() == Some(contract)).collect()
}

fn has_swaps(tx: &TransactionRecord, swaps: &SwapIndex) -> bool {
    swaps.get(&tx.hash).is_some_and(|g| !g.is_empty())
}

fn touches_pool(tx: &TransactionRecord, traces: &TraceIndex, pools: &BTreeSet<Address>) -> bool {
    traces
        .get(&tx.hash)
        .is_some_and(|calls| calls.iter().any(|c| c.callee.is_some_and(|a| pools.contains(&a))))
}

fn interaction_rate_of(
    txs: &[&TransactionRecord],
    swaps: &SwapIndex,
    traces: &TraceIndex,
    pools: &BTreeSet<Address>,
) -> f64 {
    let non_trading: Vec<_> = txs.iter().filter(|t| !has_swaps(t, swaps)).collect();
    if non_trading.is_empty() {
        return 1.0;
    }
    let touching = non_trading.iter().filter(|t| touches_pool(t, traces, pools)).count();
    touching as f64 / non_trading.len() as f64
}

/// Share of the contract's swap-less transactions whose trace touches a
/// registered pool. 1.0 when the contract has no swap-less transactions.
pub fn dex_interaction_rate(
    contract: &Address,
    txs: &[TransactionRecord],
    swaps: &SwapIndex,
    traces: &TraceIndex,
    pools: &BTreeSet<Address>,
) -> f64 {
    interaction_rate_of(&contract_txs(contract, txs), swaps, traces, pools)
}

fn caller_profile_of(txs: &[&TransactionRecord], th: &HumanThresholds) -> CallerProfile {
    let distinct_eoas = txs.iter().map(|t| t.from_addr).collect::<BTreeSet<_>>().len();
    let mut times: Vec<i64> = txs.iter().map(|t| t.timestamp).collect();
    times.sort_unstable();
    let human_plausible = match times.len() {
        0 => false,
        1 => true,
        _ => {
            let mut gaps: Vec<i64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            gaps.sort_unstable();
            let median = *percentile_sorted(&gaps, 50).expect("non-empty gaps");
            median > th.min_median_gap_secs && max_in_window(&times, th.burst_window_secs) <= th.max_burst
        }
    };
    CallerProfile { distinct_eoas, human_plausible }
}

/// Largest number of sorted timestamps inside any half-open window of width
/// `window`.
fn max_in_window(sorted: &[i64], window: i64) -> usize {
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] >= window {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

pub fn caller_profile(contract: &Address, txs: &[TransactionRecord], th: &HumanThresholds) -> CallerProfile {
    caller_profile_of(&contract_txs(contract, txs), th)
}

fn swap_percentiles_of(
    contract: &Address,
    txs: &[&TransactionRecord],
    swaps: &SwapIndex,
) -> Result<SwapPercentiles, ValidateError> {
    let mut counts: Vec<usize> = txs
        .iter()
        .filter_map(|t| swaps.get(&t.hash).map(Vec::len))
        .filter(|n| *n > 0)
        .collect();
    if counts.is_empty() {
        return Err(ValidateError::NoTradingTxs(*contract));
    }
    counts.sort_unstable();
    let p = |q| *percentile_sorted(&counts, q).expect("non-empty");
    Ok(SwapPercentiles { p10: p(10), p25: p(25), p50: p(50), p75: p(75), p90: p(90) })
}

/// Nearest-rank percentiles of swaps per transaction, over the contract's
/// transactions that carry at least one swap.
pub fn swap_count_percentiles(
    contract: &Address,
    txs: &[TransactionRecord],
    swaps: &SwapIndex,
) -> Result<SwapPercentiles, ValidateError> {
    swap_percentiles_of(contract, &contract_txs(contract, txs), swaps)
}

pub struct ValidationInputs<'a> {
    pub txs: &'a [TransactionRecord],
    pub traces: &'a TraceIndex,
    pub swaps: &'a SwapIndex,
    pub pools: &'a BTreeSet<Address>,
    pub exclusions: &'a BTreeMap<Address, String>,
}

fn score(
    address: Address,
    txs: &[&TransactionRecord],
    inputs: &ValidationInputs<'_>,
    config: &ValidatorConfig,
) -> ValidationReport {
    let rate = interaction_rate_of(txs, inputs.swaps, inputs.traces, inputs.pools);
    let profile = caller_profile_of(txs, &config.human);
    let percentiles = swap_percentiles_of(&address, txs, inputs.swaps).ok();
    ValidationReport {
        address,
        dex_interaction_rate: rate,
        distinct_eoas: profile.distinct_eoas,
        human_plausible: profile.human_plausible,
        swap_percentiles: percentiles,
        gas_used_total: txs.iter().map(|t| t.gas_used as u128).sum(),
        verdict: Verdict::Unreviewed,
        reasons: Vec::new(),
    }
}

fn exclusion_reasons(
    report: &ValidationReport,
    exclusions: &BTreeMap<Address, String>,
    config: &ValidatorConfig,
) -> Vec<String> {
    let mut reasons = Vec::new();
    if let Some(label) = exclusions.get(&report.address) {
        reasons.push(format!("exclusion label: {label}"));
    }
    if report.dex_interaction_rate < config.dex_interaction_min {
        reasons.push(format!(
            "dex interaction rate {:.4} below {}",
            report.dex_interaction_rate, config.dex_interaction_min
        ));
    }
    if report.distinct_eoas > config.eoa_max && report.human_plausible {
        reasons.push(format!(
            "caller profile: {} distinct EOAs at human-plausible frequency",
            report.distinct_eoas
        ));
    }
    if let Some(p) = report.swap_percentiles {
        if p.p10 == 1 || p.p25 == 1 {
            reasons.push(REASON_SINGLE_SWAP.to_string());
        }
    }
    reasons
}

/// Scores candidates in descending gas order (ties by address) until the
/// validated gas exceeds `gas_coverage` of the non-excluded candidate gas.
pub fn validate(
    candidates: &BTreeSet<Address>,
    inputs: &ValidationInputs<'_>,
    config: &ValidatorConfig,
) -> ValidationOutcome {
    let mut by_contract: HashMap<Address, Vec<&TransactionRecord>> =
        candidates.iter().map(|a| (*a, Vec::new())).collect();
    for tx in inputs.txs {
        if let Some(list) = tx.to_addr.and_then(|to| by_contract.get_mut(&to)) {
            list.push(tx);
        }
    }

    let mut reports: Vec<ValidationReport> = {
        use rayon::prelude::*;
        let cands: Vec<Address> = candidates.iter().copied().collect();
        cands.par_iter().map(|a| score(*a, &by_contract[a], inputs, config)).collect()
    };
    reports.sort_by(|a, b| b.gas_used_total.cmp(&a.gas_used_total).then(a.address.cmp(&b.address)));

    let mut denominator: u128 = reports.iter().map(|r| r.gas_used_total).sum();
    let mut validated_gas: u128 = 0;
    let covered = |v: u128, d: u128| d > 0 && v as f64 / d as f64 > config.gas_coverage;
    for report in &mut reports {
        if covered(validated_gas, denominator) {
            break;
        }
        let reasons = exclusion_reasons(report, inputs.exclusions, config);
        if reasons.is_empty() {
            report.verdict = Verdict::Validated;
            validated_gas += report.gas_used_total;
        } else {
            report.verdict = Verdict::Excluded;
            report.reasons = reasons;
            denominator -= report.gas_used_total;
        }
    }

    let bots = reports.iter().filter(|r| r.verdict != Verdict::Excluded).map(|r| r.address).collect();
    let coverage = if denominator == 0 { 0.0 } else { validated_gas as f64 / denominator as f64 };
    ValidationOutcome { bots, reports, coverage }
}

pub const REPORT_HEADER: [&str; 12] = [
    "address",
    "verdict",
    "dex_interaction_rate",
    "distinct_eoas",
    "human_plausible",
    "p10",
    "p25",
    "p50",
    "p75",
    "p90",
    "gas_used_total",
    "reasons",
];

/// Writes `validation_report.csv`. The last row carries `#coverage` in the
/// address column and the coverage fraction in the second column.
pub fn write_report<W: Write>(w: W, outcome: &ValidationOutcome) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REPORT_HEADER)?;
    for r in &outcome.reports {
        let pct = |f: fn(&SwapPercentiles) -> usize| r.swap_percentiles.as_ref().map(f).map(|v| v.to_string()).unwrap_or_default();
        wtr.write_record([
            r.address.to_string(),
            r.verdict.to_string(),
            r.dex_interaction_rate.to_string(),
            r.distinct_eoas.to_string(),
            r.human_plausible.to_string(),
            pct(|p| p.p10),
            pct(|p| p.p25),
            pct(|p| p.p50),
            pct(|p| p.p75),
            pct(|p| p.p90),
            r.gas_used_total.to_string(),
            r.reasons.join("; "),
        ])?;
    }
    let mut footer = vec![String::new(); REPORT_HEADER.len()];
    footer[0] = "#coverage".into();
    footer[1] = outcome.coverage.to_string();
    wtr.write_record(&footer)?;
    wtr.flush()
}

/// Writes the final bot set as a sorted JSON array of addresses.
pub fn write_bots<W: Write>(mut w: W, bots: &BTreeSet<Address>) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, bots)?;
    writeln!(w)
}

pub fn read_bots<R: io::Read>(r: R) -> serde_json::Result<BTreeSet<Address>> {
    serde_json::from_reader(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CallType, SwapEvent, TraceCall, TxStatus};
    use crate::types::{Chain, TxHash};

    fn addr(n: u8) -> Address {
        let mut b = [0u8; 20];
        b[0] = 0xc0;
        b[19] = n;
        Address(b)
    }

    fn hash(n: u32) -> TxHash {
        let mut b = [0u8; 32];
        b[..4].copy_from_slice(&n.to_be_bytes());
        TxHash(b)
    }

    fn tx(n: u32, to: Address, from: Address, ts: i64, gas: u64) -> TransactionRecord {
        TransactionRecord {
            hash: hash(n),
            from_addr: from,
            to_addr: Some(to),
            block_number: n as u64,
            timestamp: ts,
            gas_used: gas,
            gas_price: 1u32.into(),
            calldata: vec![],
            status: TxStatus::Success,
            chain: Chain::Base,
        }
    }

    fn add_swaps(swaps: &mut SwapIndex, h: TxHash, k: usize) {
        let g = (0..k)
            .map(|i| SwapEvent {
                tx_hash: h,
                token_sold: addr(100 + i as u8),
                token_bought: addr(101 + i as u8),
                amount_sold: 1u32.into(),
                amount_bought: 1u32.into(),
                evt_index: i as u64,
            })
            .collect();
        swaps.insert(h, g);
    }

    fn add_pool_call(traces: &mut TraceIndex, h: TxHash, callee: Address) {
        traces.insert(
            h,
            vec![TraceCall { tx_hash: h, call_type: CallType::StaticCall, callee: Some(callee), selector: vec![], depth_order: 0 }],
        );
    }

    const POOL: u8 = 200;

    #[test]
    fn interaction_rate_ratio_and_vacuous() {
        let bot = addr(1);
        let pools: BTreeSet<_> = [addr(POOL)].into();
        let txs: Vec<_> = (0..10).map(|i| tx(i, bot, addr(9), i as i64, 1)).collect();
        let mut traces = TraceIndex::new();
        for i in 0..8 {
            add_pool_call(&mut traces, hash(i), addr(POOL));
        }
        add_pool_call(&mut traces, hash(8), addr(77));
        let swaps = SwapIndex::new();
        assert_eq!(dex_interaction_rate(&bot, &txs, &swaps, &traces, &pools), 0.8);
        assert_eq!(dex_interaction_rate(&bot, &txs, &swaps, &TraceIndex::new(), &pools), 0.0);

        let mut all_trading = SwapIndex::new();
        for t in &txs {
            add_swaps(&mut all_trading, t.hash, 2);
        }
        assert_eq!(dex_interaction_rate(&bot, &txs, &all_trading, &TraceIndex::new(), &pools), 1.0);
    }

    #[test]
    fn caller_profiles() {
        let bot = addr(1);
        let th = HumanThresholds::default();
        let machine: Vec<_> = (0..20).map(|i| tx(i, bot, addr(9), 2 * i as i64, 1)).collect();
        assert_eq!(caller_profile(&bot, &machine, &th), CallerProfile { distinct_eoas: 1, human_plausible: false });

        // 5 EOAs; timestamps 0, 300, 600, 620, 1220, 1520: gaps sorted
        // [20, 300, 300, 300, 600], nearest-rank median (pos 3) = 300 > 30;
        // densest 60 s window holds {600, 620} = 2 calls.
        let times = [0, 300, 600, 620, 1220, 1520];
        let human: Vec<_> = times.iter().enumerate().map(|(i, t)| tx(i as u32, bot, addr(10 + (i % 5) as u8), *t, 1)).collect();
        assert_eq!(caller_profile(&bot, &human, &th), CallerProfile { distinct_eoas: 5, human_plausible: true });

        assert_eq!(caller_profile(&bot, &[], &th), CallerProfile { distinct_eoas: 0, human_plausible: false });
    }

    #[test]
    fn burst_window_counts() {
        assert_eq!(max_in_window(&[0, 10, 59, 60, 61], 60), 4);
        assert_eq!(max_in_window(&[0, 10, 59, 60, 61, 130], 60), 4);
        assert_eq!(max_in_window(&[0, 100, 200], 60), 1);
        assert_eq!(max_in_window(&[], 60), 0);
    }

    #[test]
    fn swap_percentile_cases() {
        let bot = addr(1);
        let mk = |counts: &[usize]| {
            let txs: Vec<_> = (0..counts.len() as u32).map(|i| tx(i, bot, addr(9), 0, 1)).collect();
            let mut swaps = SwapIndex::new();
            for (i, k) in counts.iter().enumerate() {
                add_swaps(&mut swaps, hash(i as u32), *k);
            }
            swap_count_percentiles(&bot, &txs, &swaps)
        };
        assert_eq!(mk(&[2, 2, 3, 3, 5]).unwrap(), SwapPercentiles { p10: 2, p25: 2, p50: 3, p75: 3, p90: 5 });
        assert_eq!(mk(&[1, 1, 1, 1]).unwrap(), SwapPercentiles { p10: 1, p25: 1, p50: 1, p75: 1, p90: 1 });
        assert_eq!(mk(&[2]).unwrap(), SwapPercentiles { p10: 2, p25: 2, p50: 2, p75: 2, p90: 2 });
        assert_eq!(mk(&[]), Err(ValidateError::NoTradingTxs(bot)));
    }

    struct World {
        txs: Vec<TransactionRecord>,
        swaps: SwapIndex,
        traces: TraceIndex,
        pools: BTreeSet<Address>,
    }

    /// One trading tx of `gas` per contract, two swaps each.
    fn world(gas: &[(Address, u64)]) -> World {
        let mut w = World { txs: vec![], swaps: SwapIndex::new(), traces: TraceIndex::new(), pools: [addr(POOL)].into() };
        for (i, (a, g)) in gas.iter().enumerate() {
            let t = tx(i as u32, *a, addr(9), 0, *g);
            add_swaps(&mut w.swaps, t.hash, 2);
            w.txs.push(t);
        }
        w
    }

    #[test]
    fn coverage_loop_stops_after_threshold() {
        let (a, b, c) = (addr(1), addr(2), addr(3));
        let w = world(&[(a, 70), (b, 20), (c, 10)]);
        let cands: BTreeSet<_> = [a, b, c].into();
        let none = BTreeMap::new();
        let inputs = ValidationInputs { txs: &w.txs, traces: &w.traces, swaps: &w.swaps, pools: &w.pools, exclusions: &none };
        let out = validate(&cands, &inputs, &ValidatorConfig::default());
        let verdicts: Vec<_> = out.reports.iter().map(|r| (r.address, r.verdict)).collect();
        assert_eq!(verdicts, vec![(a, Verdict::Validated), (b, Verdict::Validated), (c, Verdict::Unreviewed)]);
        assert_eq!(out.bots, cands);
        assert!((out.coverage - 0.9).abs() < 1e-12);
    }

    #[test]
    fn labeled_top_candidate_is_excluded_from_denominator() {
        let (a, b, c) = (addr(1), addr(2), addr(3));
        let w = world(&[(a, 70), (b, 20), (c, 10)]);
        let cands: BTreeSet<_> = [a, b, c].into();
        let excl: BTreeMap<_, _> = [(a, "router".to_string())].into();
        let inputs = ValidationInputs { txs: &w.txs, traces: &w.traces, swaps: &w.swaps, pools: &w.pools, exclusions: &excl };
        let out = validate(&cands, &inputs, &ValidatorConfig::default());
        assert_eq!(out.reports[0].verdict, Verdict::Excluded);
        assert_eq!(out.reports[0].reasons, vec!["exclusion label: router".to_string()]);
        // 20/30 then 30/30.
        assert_eq!(out.reports[1].verdict, Verdict::Validated);
        assert_eq!(out.reports[2].verdict, Verdict::Validated);
        assert_eq!(out.coverage, 1.0);
        assert_eq!(out.bots, [b, c].into());
    }

    #[test]
    fn single_swap_candidate_excluded() {
        let a = addr(1);
        let mut w = world(&[(a, 50)]);
        for i in 10..14 {
            let t = tx(i, a, addr(9), 0, 5);
            add_swaps(&mut w.swaps, t.hash, 1);
            w.txs.push(t);
        }
        let cands: BTreeSet<_> = [a].into();
        let none = BTreeMap::new();
        let inputs = ValidationInputs { txs: &w.txs, traces: &w.traces, swaps: &w.swaps, pools: &w.pools, exclusions: &none };
        let out = validate(&cands, &inputs, &ValidatorConfig::default());
        assert_eq!(out.reports[0].verdict, Verdict::Excluded);
        assert_eq!(out.reports[0].reasons, vec![REASON_SINGLE_SWAP.to_string()]);
        assert!(out.bots.is_empty());
    }

    #[test]
    fn report_csv_has_footer() {
        let a = addr(1);
        let w = world(&[(a, 50)]);
        let none = BTreeMap::new();
        let inputs = ValidationInputs { txs: &w.txs, traces: &w.traces, swaps: &w.swaps, pools: &w.pools, exclusions: &none };
        let out = validate(&[a].into(), &inputs, &ValidatorConfig::default());
        let mut buf = Vec::new();
        write_report(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with(&format!("{a},validated,1,1,true,2,2,2,2,2,50,")));
        assert!(lines[2].starts_with("#coverage,1,"));
    }
}
