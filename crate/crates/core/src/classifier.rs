//! Per-transaction labels along three axes: purpose (is the first callee a
//! known bot), DEX involvement (trade, pool interaction, or neither), and
//! receipt outcome.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{SwapIndex, TraceIndex, TransactionRecord, TxStatus};
use crate::types::{Address, TxHash};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifyError {
    #[error("transaction {0} reverted but carries swap events")]
    RevertedTrade(TxHash),
    #[error("classified.jsonl line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Purpose {
    #[serde(rename = "cyclicArb")]
    CyclicArb,
    #[serde(rename = "other")]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Involvement {
    Trade,
    Interaction,
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Revert,
}

impl Purpose {
    pub const ALL: [Purpose; 2] = [Purpose::CyclicArb, Purpose::Other];
    pub fn as_str(&self) -> &'static str {
        match self {
            Purpose::CyclicArb => "cyclicArb",
            Purpose::Other => "other",
        }
    }
}

impl Involvement {
    pub const ALL: [Involvement; 3] = [Involvement::Trade, Involvement::Interaction, Involvement::Residual];
    pub fn as_str(&self) -> &'static str {
        match self {
            Involvement::Trade => "trade",
            Involvement::Interaction => "interaction",
            Involvement::Residual => "residual",
        }
    }
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::Success, Outcome::Revert];
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Revert => "revert",
        }
    }
}

macro_rules! display_and_parse {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                Self::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| format!("unknown label `{s}`"))
            }
        }
    )*};
}
display_and_parse!(Purpose, Involvement, Outcome);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassifiedTx {
    pub hash: TxHash,
    pub purpose: Purpose,
    pub involvement: Involvement,
    pub outcome: Outcome,
}

impl ClassifiedTx {
    pub fn triple(&self) -> (Purpose, Involvement, Outcome) {
        (self.purpose, self.involvement, self.outcome)
    }
}

pub fn classify_purpose(tx: &TransactionRecord, bots: &BTreeSet<Address>) -> Purpose {
    match tx.to_addr {
        Some(to) if bots.contains(&to) => Purpose::CyclicArb,
        _ => Purpose::Other,
    }
}

/// Involvement plus whether the trace was missing for a swap-less tx.
fn involvement_of(
    tx: &TransactionRecord,
    swaps: &SwapIndex,
    traces: &TraceIndex,
    pools: &BTreeSet<Address>,
) -> (Involvement, bool) {
    if swaps.get(&tx.hash).is_some_and(|g| !g.is_empty()) {
        return (Involvement::Trade, false);
    }
    match traces.get(&tx.hash) {
        None => (Involvement::Residual, true),
        Some(calls) if calls.iter().any(|c| c.callee.is_some_and(|a| pools.contains(&a))) => {
            (Involvement::Interaction, false)
        }
        Some(_) => (Involvement::Residual, false),
    }
}

/// Any emitted swap makes a trade; otherwise any trace call to a registered
/// pool makes an interaction. Swap-less transactions without a trace are
/// residual.
pub fn classify_involvement(
    tx: &TransactionRecord,
    swaps: &SwapIndex,
    traces: &TraceIndex,
    pools: &BTreeSet<Address>,
) -> Involvement {
    involvement_of(tx, swaps, traces, pools).0
}

pub fn classify_outcome(tx: &TransactionRecord) -> Outcome {
    match tx.status {
        TxStatus::Success => Outcome::Success,
        TxStatus::Revert => Outcome::Revert,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Classification {
    /// Same order as the input transactions.
    pub txs: Vec<ClassifiedTx>,
    /// Swap-less transactions that had no trace and fell back to residual.
    pub missing_traces: usize,
}

pub fn classify_all(
    txs: &[TransactionRecord],
    swaps: &SwapIndex,
    traces: &TraceIndex,
    pools: &BTreeSet<Address>,
    bots: &BTreeSet<Address>,
) -> Result<Classification, ClassifyError> {
    let labeled: Vec<(ClassifiedTx, bool)> = txs
        .par_iter()
        .map(|tx| {
            let (involvement, missing) = involvement_of(tx, swaps, traces, pools);
            let outcome = classify_outcome(tx);
            if involvement == Involvement::Trade && outcome == Outcome::Revert {
                return Err(ClassifyError::RevertedTrade(tx.hash));
            }
            let c = ClassifiedTx { hash: tx.hash, purpose: classify_purpose(tx, bots), involvement, outcome };
            Ok((c, missing))
        })
        .collect::<Result<_, _>>()?;
    let missing_traces = labeled.iter().filter(|(_, m)| *m).count();
    if missing_traces > 0 {
        log::warn!("{missing_traces} swap-less transactions had no trace; labeled residual");
    }
    Ok(Classification { txs: labeled.into_iter().map(|(c, _)| c).collect(), missing_traces })
}

pub fn write_classified<W: Write>(mut w: W, classified: &[ClassifiedTx]) -> io::Result<()> {
    for c in classified {
        serde_json::to_writer(&mut w, c)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_classified<R: BufRead>(r: R) -> Result<Vec<ClassifiedTx>, ClassifyError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| ClassifyError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let c: ClassifiedTx = serde_json::from_str(&line)
            .map_err(|e| ClassifyError::Parse { line: i + 1, message: e.to_string() })?;
        if c.involvement == Involvement::Trade && c.outcome == Outcome::Revert {
            return Err(ClassifyError::RevertedTrade(c.hash));
        }
        out.push(c);
    }
    Ok(out)
}
